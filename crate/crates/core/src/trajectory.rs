//! Reference trajectories for both endpoints.
//!
//! A reference is described as a formation: a center point, the horizontal
//! endpoint distance `d`, the yaw `ψ` of the bending plane and a height
//! offset per endpoint. With `u(ψ) = (cos ψ, sin ψ, 0)`:
//!
//! ```text
//! p1 = c − (d/2) u(ψ) + h1 z
//! p2 = c + (d/2) u(ψ) + h2 z
//! ```
//!
//! Every scalar channel is a [`Signal`] that evaluates to its value and first
//! two derivatives in closed form, so velocities and accelerations are exact.

use crate::{world_z, Vec3};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("t = {t} s is outside the scenario [0, {duration}] s")]
    PhaseOutOfRange { t: f64, duration: f64 },
    #[error("endpoint distance {distance:.4} m at t = {t:.3} s leaves [{min}, {max}] m")]
    DistanceBoundViolation { t: f64, distance: f64, min: f64, max: f64 },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Desired position, velocity and acceleration of one endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub p: Vec3,
    pub v: Vec3,
    pub a: Vec3,
}

/// Value with its first and second time derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub f: f64,
    pub df: f64,
    pub ddf: f64,
}

impl Jet {
    fn constant(f: f64) -> Self {
        Self { f, df: 0.0, ddf: 0.0 }
    }

    fn add(self, o: Jet) -> Jet {
        Jet {
            f: self.f + o.f,
            df: self.df + o.df,
            ddf: self.ddf + o.ddf,
        }
    }

    fn mul(self, o: Jet) -> Jet {
        Jet {
            f: self.f * o.f,
            df: self.df * o.f + self.f * o.df,
            ddf: self.ddf * o.f + 2.0 * self.df * o.df + self.f * o.ddf,
        }
    }
}

/// Quintic smoothstep `10s³ − 15s⁴ + 6s⁵` on [0, 1] with derivatives in `s`.
fn smoothstep(s: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if s >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let s2 = s * s;
    let s3 = s2 * s;
    (
        s3 * (10.0 - 15.0 * s + 6.0 * s2),
        30.0 * s2 * (1.0 - s) * (1.0 - s),
        60.0 * s * (1.0 - 3.0 * s + 2.0 * s2),
    )
}

/// Scalar time signal with closed-form derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Signal {
    Const {
        value: f64,
    },
    /// `amplitude · sin(2π t / period + phase)`.
    Sine {
        amplitude: f64,
        period: f64,
        phase: f64,
    },
    /// Quintic transition from `from` to `to` over `[t0, t1]`.
    Step {
        from: f64,
        to: f64,
        t0: f64,
        t1: f64,
    },
    /// Distance covered when speed rises smoothly from 0 to `speed` over
    /// `[t0, t1]` and stays there.
    Travel {
        speed: f64,
        t0: f64,
        t1: f64,
    },
    Sum {
        terms: Vec<Signal>,
    },
    Product {
        factors: Vec<Signal>,
    },
}

impl Signal {
    pub fn constant(value: f64) -> Self {
        Signal::Const { value }
    }

    pub fn sine(amplitude: f64, period: f64, phase: f64) -> Self {
        Signal::Sine {
            amplitude,
            period,
            phase,
        }
    }

    pub fn cosine(amplitude: f64, period: f64) -> Self {
        Signal::sine(amplitude, period, FRAC_PI_2)
    }

    pub fn step(from: f64, to: f64, t0: f64, t1: f64) -> Self {
        Signal::Step { from, to, t0, t1 }
    }

    pub fn travel(speed: f64, t0: f64, t1: f64) -> Self {
        Signal::Travel { speed, t0, t1 }
    }

    /// 1 before `t0`, 0 after `t1`.
    pub fn fade_out(t0: f64, t1: f64) -> Self {
        Signal::step(1.0, 0.0, t0, t1)
    }

    pub fn sum(terms: Vec<Signal>) -> Self {
        Signal::Sum { terms }
    }

    pub fn product(factors: Vec<Signal>) -> Self {
        Signal::Product { factors }
    }

    pub fn eval(&self, t: f64) -> Jet {
        match self {
            Signal::Const { value } => Jet::constant(*value),
            Signal::Sine {
                amplitude,
                period,
                phase,
            } => {
                let w = TAU / period;
                let (s, c) = (w * t + phase).sin_cos();
                Jet {
                    f: amplitude * s,
                    df: amplitude * w * c,
                    ddf: -amplitude * w * w * s,
                }
            }
            Signal::Step { from, to, t0, t1 } => {
                let dur = t1 - t0;
                let (s, ds, dds) = smoothstep((t - t0) / dur);
                let delta = to - from;
                Jet {
                    f: from + delta * s,
                    df: delta * ds / dur,
                    ddf: delta * dds / (dur * dur),
                }
            }
            Signal::Travel { speed, t0, t1 } => {
                let dur = t1 - t0;
                if t <= *t0 {
                    Jet::default()
                } else if t >= *t1 {
                    Jet {
                        f: speed * (0.5 * dur + (t - t1)),
                        df: *speed,
                        ddf: 0.0,
                    }
                } else {
                    let s = (t - t0) / dur;
                    let (v, dv, _) = smoothstep(s);
                    // ∫₀ˢ smoothstep = 2.5s⁴ − 3s⁵ + s⁶
                    let integral = s.powi(4) * (2.5 - 3.0 * s + s * s);
                    Jet {
                        f: speed * dur * integral,
                        df: speed * v,
                        ddf: speed * dv / dur,
                    }
                }
            }
            Signal::Sum { terms } => terms.iter().fold(Jet::default(), |acc, s| acc.add(s.eval(t))),
            Signal::Product { factors } => factors.iter().fold(Jet::constant(1.0), |acc, s| acc.mul(s.eval(t))),
        }
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let bad = |m: &str| Err(TrajectoryError::Invalid(m.to_string()));
        match self {
            Signal::Const { value } if !value.is_finite() => bad("non-finite constant"),
            Signal::Sine {
                period,
                amplitude,
                phase,
            } if !(period.is_finite() && *period > 0.0 && amplitude.is_finite() && phase.is_finite()) => {
                bad("sine needs a finite amplitude and a positive period")
            }
            Signal::Step { t0, t1, from, to } if !(t1 > t0 && from.is_finite() && to.is_finite()) => {
                bad("step needs t1 > t0")
            }
            Signal::Travel { t0, t1, speed } if !(t1 > t0 && speed.is_finite()) => bad("travel needs t1 > t0"),
            Signal::Sum { terms } => terms.iter().try_for_each(Signal::validate),
            Signal::Product { factors } => factors.iter().try_for_each(Signal::validate),
            _ => Ok(()),
        }
    }
}

/// Center, distance, yaw and per-endpoint height offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Formation {
    pub center: [Signal; 3],
    pub distance: Signal,
    pub yaw: Signal,
    pub height1: Signal,
    pub height2: Signal,
}

impl Formation {
    pub fn eval(&self, t: f64) -> (TrajectoryPoint, TrajectoryPoint) {
        let c: Vec<Jet> = self.center.iter().map(|s| s.eval(t)).collect();
        let d = self.distance.eval(t);
        let psi = self.yaw.eval(t);
        let h1 = self.height1.eval(t);
        let h2 = self.height2.eval(t);
        let (sin, cos) = psi.f.sin_cos();
        let u = Vec3::new(cos, sin, 0.0);
        let u_perp = Vec3::new(-sin, cos, 0.0);
        // q = (d/2) u(ψ) and its derivatives
        let q = u * (0.5 * d.f);
        let dq = u * (0.5 * d.df) + u_perp * (0.5 * d.f * psi.df);
        let ddq =
            u * (0.5 * d.ddf) + u_perp * (d.df * psi.df) + (u_perp * psi.ddf - u * (psi.df * psi.df)) * (0.5 * d.f);
        let cp = Vec3::new(c[0].f, c[1].f, c[2].f);
        let cv = Vec3::new(c[0].df, c[1].df, c[2].df);
        let ca = Vec3::new(c[0].ddf, c[1].ddf, c[2].ddf);
        let z = world_z();
        (
            TrajectoryPoint {
                p: cp - q + z * h1.f,
                v: cv - dq + z * h1.df,
                a: ca - ddq + z * h1.ddf,
            },
            TrajectoryPoint {
                p: cp + q + z * h2.f,
                v: cv + dq + z * h2.df,
                a: ca + ddq + z * h2.ddf,
            },
        )
    }

    fn validate(&self) -> Result<(), TrajectoryError> {
        self.center
            .iter()
            .chain([&self.distance, &self.yaw, &self.height1, &self.height2])
            .try_for_each(Signal::validate)
    }
}

/// One sinusoid added to an endpoint, per world axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub amplitude: [f64; 3],
    pub period: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Multi-sine perturbation superimposed on the base reference.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Excitation {
    pub vehicle1: Vec<Tone>,
    pub vehicle2: Vec<Tone>,
}

impl Excitation {
    pub fn is_empty(&self) -> bool {
        self.vehicle1.is_empty() && self.vehicle2.is_empty()
    }

    fn apply(tones: &[Tone], base: &TrajectoryPoint, t: f64) -> TrajectoryPoint {
        let mut out = *base;
        for tone in tones {
            let j = Signal::sine(1.0, tone.period, tone.phase).eval(t);
            let a = Vec3::from(tone.amplitude);
            out.p += a * j.f;
            out.v += a * j.df;
            out.a += a * j.ddf;
        }
        out
    }

    fn validate(&self) -> Result<(), TrajectoryError> {
        for tone in self.vehicle1.iter().chain(&self.vehicle2) {
            if !(tone.period > 0.0 && tone.amplitude.iter().all(|a| a.is_finite())) {
                return Err(TrajectoryError::Invalid(
                    "excitation tones need positive periods".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Adds the excitation tones to a reference pair and checks the resulting
/// endpoint distance against `bounds`.
pub fn superimpose_excitation(
    base: &(TrajectoryPoint, TrajectoryPoint),
    excitation: &Excitation,
    t: f64,
    bounds: (f64, f64),
) -> Result<(TrajectoryPoint, TrajectoryPoint), TrajectoryError> {
    let out = (
        Excitation::apply(&excitation.vehicle1, &base.0, t),
        Excitation::apply(&excitation.vehicle2, &base.1, t),
    );
    let distance = (out.1.p - out.0.p).norm();
    if distance < bounds.0 || distance > bounds.1 {
        return Err(TrajectoryError::DistanceBoundViolation {
            t,
            distance,
            min: bounds.0,
            max: bounds.1,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum Aperture {
    Rectangle { half_width: f64, half_height: f64 },
    Circle { radius: f64 },
}

/// Virtual opening in the plane `x = center.x`, traversed in +x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub name: String,
    pub center: [f64; 3],
    pub aperture: Aperture,
    /// Only crossings inside this time interval count.
    pub active: [f64; 2],
}

impl Window {
    /// Distance from a point on the window plane to the edge of the opening,
    /// negative outside.
    pub fn clearance(&self, p: &Vec3) -> f64 {
        let dy = p.y - self.center[1];
        let dz = p.z - self.center[2];
        match self.aperture {
            Aperture::Rectangle {
                half_width,
                half_height,
            } => (half_width - dy.abs()).min(half_height - dz.abs()),
            Aperture::Circle { radius } => radius - dy.hypot(dz),
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.clearance(p) >= 0.0
    }
}

/// Named time interval used for per-phase statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    pub start: f64,
    pub end: f64,
}

impl Phase {
    fn new(name: &str, start: f64, end: f64) -> Self {
        Self {
            name: name.to_string(),
            start,
            end,
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }
}

/// Fully resolved scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub duration: f64,
    pub formation: Formation,
    #[serde(default)]
    pub excitation: Excitation,
    #[serde(default)]
    pub windows: Vec<Window>,
    #[serde(default)]
    pub phases: Vec<Phase>,
}

impl Scenario {
    pub fn reference(&self, t: f64) -> Result<(TrajectoryPoint, TrajectoryPoint), TrajectoryError> {
        if !(t >= 0.0 && t <= self.duration + 1e-9) {
            return Err(TrajectoryError::PhaseOutOfRange {
                t,
                duration: self.duration,
            });
        }
        let base = self.formation.eval(t);
        Ok((
            Excitation::apply(&self.excitation.vehicle1, &base.0, t),
            Excitation::apply(&self.excitation.vehicle2, &base.1, t),
        ))
    }

    pub fn phase(&self, name: &str) -> Option<&Phase> {
        self.phases.iter().find(|p| p.name == name)
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(TrajectoryError::Invalid("duration must be non-negative".into()));
        }
        self.formation.validate()?;
        self.excitation.validate()
    }

    /// Samples the reference every `step` seconds and checks the endpoint
    /// distance against `[min, max]`.
    pub fn check_distance_bounds(&self, min: f64, max: f64, step: f64) -> Result<(), TrajectoryError> {
        let n = (self.duration / step).ceil() as usize;
        for k in 0..=n {
            let t = (k as f64 * step).min(self.duration);
            let base = self.formation.eval(t);
            superimpose_excitation(&base, &self.excitation, t, (min, max))?;
        }
        Ok(())
    }
}

/// Smallest and largest endpoint distance of the reference, sampled.
pub fn distance_range(scenario: &Scenario, step: f64) -> (f64, f64) {
    let n = (scenario.duration / step).ceil() as usize;
    (0..=n)
        .map(|k| (k as f64 * step).min(scenario.duration))
        .filter_map(|t| scenario.reference(t).ok())
        .map(|(a, b)| (b.p - a.p).norm())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)))
}

/// Constant-speed translation with an oscillating endpoint distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaryingDistanceParams {
    pub duration: f64,
    pub speed: f64,
    /// Time to reach cruise speed from rest.
    pub speed_ramp: f64,
    pub altitude: f64,
    /// The distance oscillates between these two values, starting at `distance_max`.
    pub distance_min: f64,
    pub distance_max: f64,
    pub distance_period: f64,
    pub height_amplitude: f64,
    pub height_periods: [f64; 2],
    pub yaw: f64,
    pub excitation: Excitation,
}

impl Default for VaryingDistanceParams {
    fn default() -> Self {
        Self {
            duration: 40.0,
            speed: 0.1,
            speed_ramp: 2.0,
            altitude: 1.0,
            distance_min: 0.4,
            distance_max: 0.8,
            distance_period: 10.0,
            height_amplitude: 0.05,
            height_periods: [7.0, 5.0],
            yaw: FRAC_PI_2,
            excitation: Excitation::default(),
        }
    }
}

impl VaryingDistanceParams {
    pub fn build(&self) -> Scenario {
        let mid = 0.5 * (self.distance_min + self.distance_max);
        let amp = 0.5 * (self.distance_max - self.distance_min);
        Scenario {
            duration: self.duration,
            formation: Formation {
                center: [
                    Signal::travel(self.speed, 0.0, self.speed_ramp),
                    Signal::constant(0.0),
                    Signal::constant(self.altitude),
                ],
                distance: Signal::sum(vec![Signal::constant(mid), Signal::cosine(amp, self.distance_period)]),
                yaw: Signal::constant(self.yaw),
                height1: Signal::sine(self.height_amplitude, self.height_periods[0], 0.0),
                height2: Signal::sine(self.height_amplitude, self.height_periods[1], 0.0),
            },
            excitation: self.excitation.clone(),
            windows: Vec::new(),
            phases: vec![Phase::new("all", 0.0, self.duration)],
        }
    }
}

/// Climb, descend, pass one window, hold, recover and land.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowPassParams {
    pub duration: f64,
    pub speed: f64,
    pub speed_ramp: f64,
    pub start_altitude: f64,
    pub peak_altitude: f64,
    pub climb_end: f64,
    pub pass_altitude: f64,
    pub descend_end: f64,
    /// Distance during descent, pass and hold.
    pub pass_distance: f64,
    /// Distance at take-off and after recovery; the climb oscillates
    /// between this and `pass_distance`.
    pub takeoff_distance: f64,
    pub distance_period: f64,
    pub height_amplitude: f64,
    pub height_periods: [f64; 2],
    /// Forward motion decelerates to rest over this interval.
    pub stop: [f64; 2],
    pub hold_end: f64,
    pub recover_end: f64,
    pub land_start: f64,
    pub land_end: f64,
    pub land_altitude: f64,
    pub yaw: f64,
    /// Time at which the formation center reaches the window plane.
    pub window_time: f64,
    pub window_half_width: f64,
    pub window_half_height: f64,
    pub excitation: Excitation,
}

impl Default for WindowPassParams {
    fn default() -> Self {
        Self {
            duration: 60.0,
            speed: 0.1,
            speed_ramp: 2.0,
            start_altitude: 0.5,
            peak_altitude: 1.8,
            climb_end: 20.0,
            pass_altitude: 0.7,
            descend_end: 28.0,
            pass_distance: 0.6,
            takeoff_distance: 1.1,
            distance_period: 8.0,
            height_amplitude: 0.05,
            height_periods: [7.0, 5.0],
            stop: [33.0, 36.0],
            hold_end: 46.0,
            recover_end: 50.0,
            land_start: 50.0,
            land_end: 58.0,
            land_altitude: 0.2,
            yaw: FRAC_PI_2,
            window_time: 32.0,
            window_half_width: 0.355,
            window_half_height: 0.25,
            excitation: Excitation::default(),
        }
    }
}

impl WindowPassParams {
    pub fn build(&self) -> Scenario {
        let taper = Signal::fade_out(self.climb_end - 4.0, self.climb_end);
        let swing = 0.5 * (self.takeoff_distance - self.pass_distance);
        let x = Signal::sum(vec![
            Signal::travel(self.speed, 0.0, self.speed_ramp),
            Signal::travel(-self.speed, self.stop[0], self.stop[1]),
        ]);
        let distance = Signal::sum(vec![
            Signal::constant(self.pass_distance),
            Signal::product(vec![
                Signal::sum(vec![
                    Signal::constant(swing),
                    Signal::cosine(swing, self.distance_period),
                ]),
                taper.clone(),
            ]),
            Signal::step(
                0.0,
                self.takeoff_distance - self.pass_distance,
                self.hold_end,
                self.recover_end,
            ),
        ]);
        let z = Signal::sum(vec![
            Signal::step(self.start_altitude, self.peak_altitude, 0.0, self.climb_end),
            Signal::step(
                0.0,
                self.pass_altitude - self.peak_altitude,
                self.climb_end,
                self.descend_end,
            ),
            Signal::step(
                0.0,
                self.land_altitude - self.pass_altitude,
                self.land_start,
                self.land_end,
            ),
        ]);
        let height =
            |period: f64| Signal::product(vec![Signal::sine(self.height_amplitude, period, 0.0), taper.clone()]);
        let window_x = x.eval(self.window_time).f;
        Scenario {
            duration: self.duration,
            formation: Formation {
                center: [x, Signal::constant(0.0), z],
                distance,
                yaw: Signal::constant(self.yaw),
                height1: height(self.height_periods[0]),
                height2: height(self.height_periods[1]),
            },
            excitation: self.excitation.clone(),
            windows: vec![Window {
                name: "window".into(),
                center: [window_x, 0.0, self.pass_altitude],
                aperture: Aperture::Rectangle {
                    half_width: self.window_half_width,
                    half_height: self.window_half_height,
                },
                active: [self.descend_end, self.stop[1]],
            }],
            phases: vec![
                Phase::new("climb", 0.0, self.climb_end),
                Phase::new("descend", self.climb_end, self.descend_end),
                Phase::new("pass", self.descend_end, self.stop[1]),
                Phase::new("hold", self.stop[1], self.hold_end),
                Phase::new("recover", self.hold_end, self.duration),
            ],
        }
    }
}

/// Persistently exciting free flight followed by two window passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualWindowParams {
    pub duration: f64,
    /// Length of the free-flight excitation phase.
    pub excitation_duration: f64,
    /// Oscillations fade out over this many seconds before the phase ends.
    pub taper: f64,
    pub altitude: f64,
    pub distance_min: f64,
    pub distance_max: f64,
    pub distance_period: f64,
    pub height_amplitude: f64,
    pub height_periods: [f64; 2],
    /// Half of the peak-to-peak x excursion.
    pub x_amplitude: f64,
    pub x_period: f64,
    pub y_amplitude: f64,
    pub y_period: f64,
    pub yaw: f64,
    /// Distance while traversing both windows.
    pub bend_distance: f64,
    pub takeoff_distance: f64,
    pub circle_x: f64,
    pub circle_radius: f64,
    pub square_x: f64,
    pub square_half_size: f64,
    /// Yaw change used to narrow the footprint at the square window.
    pub square_yaw_offset: f64,
    pub land_altitude: f64,
    pub excitation: Excitation,
}

impl Default for DualWindowParams {
    fn default() -> Self {
        Self {
            duration: 120.0,
            excitation_duration: 60.0,
            taper: 4.0,
            altitude: 1.0,
            distance_min: 0.4,
            distance_max: 1.0,
            distance_period: 9.0,
            height_amplitude: 0.1,
            height_periods: [6.3, 4.1],
            x_amplitude: 2.0,
            x_period: 30.0,
            y_amplitude: 0.1,
            y_period: 7.0,
            yaw: FRAC_PI_2,
            bend_distance: 0.55,
            takeoff_distance: 1.0,
            circle_x: 1.5,
            circle_radius: 0.35,
            square_x: 4.0,
            square_half_size: 0.2,
            square_yaw_offset: PI / 3.0,
            land_altitude: 0.3,
            excitation: Excitation::default(),
        }
    }
}

impl DualWindowParams {
    pub fn build(&self) -> Scenario {
        let t0 = self.excitation_duration;
        let taper = Signal::fade_out(t0 - self.taper, t0);
        let faded = |s: Signal| Signal::product(vec![s, taper.clone()]);
        let mid = 0.5 * (self.distance_min + self.distance_max);
        let amp = 0.5 * (self.distance_max - self.distance_min);
        let x = Signal::sum(vec![
            faded(Signal::sine(self.x_amplitude, self.x_period, 0.0)),
            Signal::step(0.0, 2.5, t0 + 2.0, t0 + 16.0),
            Signal::step(0.0, 2.5, t0 + 20.0, t0 + 36.0),
        ]);
        let distance = Signal::sum(vec![
            Signal::constant(mid),
            faded(Signal::cosine(amp, self.distance_period)),
            Signal::step(0.0, self.bend_distance - mid, t0, t0 + 4.0),
            Signal::step(0.0, self.takeoff_distance - self.bend_distance, t0 + 44.0, t0 + 50.0),
        ]);
        let yaw = Signal::sum(vec![
            Signal::step(self.yaw, self.yaw + TAU, 0.0, t0),
            Signal::step(0.0, self.square_yaw_offset, t0 + 18.0, t0 + 26.0),
            Signal::step(0.0, -self.square_yaw_offset, t0 + 38.0, t0 + 44.0),
        ]);
        let z = Signal::step(self.altitude, self.land_altitude, t0 + 52.0, t0 + 58.0);
        Scenario {
            duration: self.duration,
            formation: Formation {
                center: [x, faded(Signal::sine(self.y_amplitude, self.y_period, 0.0)), z],
                distance,
                yaw,
                height1: faded(Signal::sine(self.height_amplitude, self.height_periods[0], 0.0)),
                height2: faded(Signal::sine(self.height_amplitude, self.height_periods[1], 0.0)),
            },
            excitation: self.excitation.clone(),
            windows: vec![
                Window {
                    name: "circle".into(),
                    center: [self.circle_x, 0.0, self.altitude],
                    aperture: Aperture::Circle {
                        radius: self.circle_radius,
                    },
                    active: [t0, t0 + 18.0],
                },
                Window {
                    name: "square".into(),
                    center: [self.square_x, 0.0, self.altitude],
                    aperture: Aperture::Rectangle {
                        half_width: self.square_half_size,
                        half_height: self.square_half_size,
                    },
                    active: [t0 + 18.0, t0 + 40.0],
                },
            ],
            phases: vec![
                Phase::new("excitation", 0.0, t0),
                Phase::new("windows", t0, t0 + 40.0),
                Phase::new("recover", t0 + 40.0, self.duration),
            ],
        }
    }
}

/// Scenario selection as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScenarioSpec {
    VaryingDistance(VaryingDistanceParams),
    WindowPass(WindowPassParams),
    DualWindow(DualWindowParams),
    Custom(Scenario),
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec::VaryingDistance(VaryingDistanceParams::default())
    }
}

impl ScenarioSpec {
    pub fn build(&self) -> Result<Scenario, TrajectoryError> {
        let s = match self {
            ScenarioSpec::VaryingDistance(p) => p.build(),
            ScenarioSpec::WindowPass(p) => p.build(),
            ScenarioSpec::DualWindow(p) => p.build(),
            ScenarioSpec::Custom(s) => s.clone(),
        };
        s.validate()?;
        Ok(s)
    }

    /// Short name used in output file names.
    pub fn label(&self) -> &'static str {
        match self {
            ScenarioSpec::VaryingDistance(_) => "varying-distance",
            ScenarioSpec::WindowPass(_) => "window-pass",
            ScenarioSpec::DualWindow(_) => "dual-window",
            ScenarioSpec::Custom(_) => "custom",
        }
    }

    pub fn duration(&self) -> f64 {
        match self {
            ScenarioSpec::VaryingDistance(p) => p.duration,
            ScenarioSpec::WindowPass(p) => p.duration,
            ScenarioSpec::DualWindow(p) => p.duration,
            ScenarioSpec::Custom(s) => s.duration,
        }
    }

    pub fn set_duration(&mut self, duration: f64) {
        match self {
            ScenarioSpec::VaryingDistance(p) => p.duration = duration,
            ScenarioSpec::WindowPass(p) => p.duration = duration,
            ScenarioSpec::DualWindow(p) => p.duration = duration,
            ScenarioSpec::Custom(s) => s.duration = duration,
        }
    }
}

fn eval_checked(s: Scenario, t: f64) -> Result<(TrajectoryPoint, TrajectoryPoint), TrajectoryError> {
    s.reference(t)
}

pub fn exp1_varying_distance(
    t: f64,
    params: &VaryingDistanceParams,
) -> Result<(TrajectoryPoint, TrajectoryPoint), TrajectoryError> {
    eval_checked(params.build(), t)
}

pub fn exp2_window_pass(
    t: f64,
    params: &WindowPassParams,
) -> Result<(TrajectoryPoint, TrajectoryPoint), TrajectoryError> {
    eval_checked(params.build(), t)
}

pub fn exp3_dual_window(
    t: f64,
    params: &DualWindowParams,
) -> Result<(TrajectoryPoint, TrajectoryPoint), TrajectoryError> {
    eval_checked(params.build(), t)
}

/// Per-axis tones that give each endpoint its own frequency content, used to
/// enrich the excitation for identification runs.
pub fn identification_tones() -> Excitation {
    Excitation {
        vehicle1: vec![
            Tone {
                amplitude: [0.06, 0.06, 0.0],
                period: 3.7,
                phase: 1.0,
            },
            Tone {
                amplitude: [0.0, 0.0, 0.08],
                period: 2.3,
                phase: 0.3,
            },
        ],
        vehicle2: vec![
            Tone {
                amplitude: [0.05, -0.05, 0.0],
                period: 1.9,
                phase: 2.0,
            },
            Tone {
                amplitude: [0.0, 0.0, 0.06],
                period: 3.1,
                phase: 0.7,
            },
        ],
    }
}
