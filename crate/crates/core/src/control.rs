//! Force-level tracking controllers for one vehicle.
//!
//! Both laws are PD tracking with gravity and acceleration feedforward. The
//! adaptive law subtracts the estimated object force; the PID baseline adds
//! an integral term instead.

use crate::sim::VehicleState;
use crate::trajectory::TrajectoryPoint;
use crate::{world_z, Vec3, GRAVITY};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Derivative gain bound under which the tracking Lyapunov function is
/// guaranteed to decrease (N·s/m).
pub const KD_LYAPUNOV_BOUND: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("invalid gains: {0}")]
    InvalidGains(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    /// N/m
    pub k_p: f64,
    /// N·s/m
    pub k_d: f64,
    /// N/(m·s); ignored by the adaptive law.
    #[serde(default)]
    pub k_i: f64,
    /// Command norm limit [N].
    pub u_max: f64,
    /// Per-axis clamp on the error integral [m·s].
    #[serde(default = "default_i_max")]
    pub i_max: f64,
}

fn default_i_max() -> f64 {
    1.0
}

impl Gains {
    /// Checks the bounds common to both laws for a vehicle of mass `m`.
    pub fn validate(&self, m: f64) -> Result<(), ControlError> {
        let bad = |msg: String| Err(ControlError::InvalidGains(msg));
        if !(self.k_p > 0.0 && self.k_p.is_finite()) {
            return bad(format!("k_p must be positive, got {}", self.k_p));
        }
        if !(self.k_d > 0.0 && self.k_d.is_finite()) {
            return bad(format!("k_d must be positive, got {}", self.k_d));
        }
        if !(self.k_i >= 0.0 && self.k_i.is_finite()) {
            return bad(format!("k_i must be non-negative, got {}", self.k_i));
        }
        if !(self.i_max > 0.0 && self.i_max.is_finite()) {
            return bad(format!("i_max must be positive, got {}", self.i_max));
        }
        if !(self.u_max > m * GRAVITY) {
            return bad(format!(
                "u_max = {} N cannot hold the vehicle weight {:.4} N",
                self.u_max,
                m * GRAVITY
            ));
        }
        Ok(())
    }

    /// As [`Gains::validate`], plus the derivative-gain bound of the adaptive law.
    pub fn validate_adaptive(&self, m: f64) -> Result<(), ControlError> {
        // `!(>)` so that NaN is caught here too.
        if !(self.k_d > KD_LYAPUNOV_BOUND) {
            return Err(ControlError::InvalidGains(format!(
                "k_d must exceed {KD_LYAPUNOV_BOUND} N·s/m for the adaptive law, got {}",
                self.k_d
            )));
        }
        self.validate(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlCommand {
    /// World-frame force command after saturation [N].
    pub u: Vec3,
    /// Object-force compensation that was applied (zero for PID) [N].
    pub f_hat_o: Vec3,
    pub saturated: bool,
}

/// Scales `u` down to norm `u_max` if needed, keeping its direction.
pub fn saturate(u: Vec3, u_max: f64) -> (Vec3, bool) {
    let n = u.norm();
    if n > u_max {
        (u * (u_max / n), true)
    } else {
        (u, false)
    }
}

fn pd_feedforward(state: &VehicleState, reference: &TrajectoryPoint, gains: &Gains, m: f64) -> Vec3 {
    let e = reference.p - state.p;
    let de = reference.v - state.v;
    e * gains.k_p + de * gains.k_d + world_z() * (m * GRAVITY) + reference.a * m
}

/// `u = k_p e + k_d ė + m g z + m p̈ᵈ − f̂_o`, saturated.
pub fn adaptive_control(
    state: &VehicleState,
    reference: &TrajectoryPoint,
    f_hat_o: &Vec3,
    gains: &Gains,
    m: f64,
) -> ControlCommand {
    let (u, saturated) = saturate(pd_feedforward(state, reference, gains, m) - f_hat_o, gains.u_max);
    ControlCommand {
        u,
        f_hat_o: *f_hat_o,
        saturated,
    }
}

/// `u = k_p e + k_d ė + k_i ∫e + m g z + m p̈ᵈ`, saturated. Returns the
/// command and the updated, clamped integral.
pub fn pid_control(
    state: &VehicleState,
    reference: &TrajectoryPoint,
    integral: &Vec3,
    gains: &Gains,
    m: f64,
    dt: f64,
) -> (ControlCommand, Vec3) {
    let e = reference.p - state.p;
    let integral = (integral + e * dt).map(|x| x.clamp(-gains.i_max, gains.i_max));
    let raw = pd_feedforward(state, reference, gains, m) + integral * gains.k_i;
    let (u, saturated) = saturate(raw, gains.u_max);
    (
        ControlCommand {
            u,
            f_hat_o: Vec3::zeros(),
            saturated,
        },
        integral,
    )
}

/// First-order lag on the applied force, emulating thrust-vectoring delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThrustLag {
    pub tau: f64,
    state: Option<Vec3>,
}

impl ThrustLag {
    pub fn new(tau: f64) -> Self {
        Self { tau, state: None }
    }

    /// Advances the filter by `dt` towards `command` and returns the output.
    /// The first call passes the command through.
    pub fn apply(&mut self, command: &Vec3, dt: f64) -> Vec3 {
        let out = match self.state {
            None => *command,
            Some(prev) => {
                let a = (-dt / self.tau).exp();
                prev * a + command * (1.0 - a)
            }
        };
        self.state = Some(out);
        out
    }
}
