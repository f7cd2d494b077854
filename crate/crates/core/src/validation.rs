//! Validation-mode property checks.
//!
//! With the strip replaced by a force exactly linear in the features, the
//! estimator's consistency and the decrease of the closed-loop Lyapunov
//! function become directly testable. Observer exactness is checked against
//! the real strip.

use crate::control::KD_LYAPUNOV_BOUND;
use crate::estimator::{Discretization, FeatureKind};
use crate::sim::{lyapunov_trace, run_trial, synthetic_force, worst_increase, Method, ObjectKind, SimConfig, SimError};
use crate::trajectory::{identification_tones, DualWindowParams, ScenarioSpec, VaryingDistanceParams};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Weight error accepted by the consistency check (Frobenius norm).
pub const CONSISTENCY_TOLERANCE: f64 = 1e-3;
/// Control steps allowed for convergence.
pub const CONSISTENCY_STEPS: usize = 2000;
/// Prior covariance of the consistency runs. Large enough that the prior
/// pull `P P0⁻¹ (Ŵ0 − W)` is negligible after the excitation phase.
pub const CONSISTENCY_PRIOR: f64 = 5e8;
/// Time steps of the Lyapunov dt-halving study.
pub const LYAPUNOV_STEPS: [f64; 2] = [1e-3, 5e-4];
/// Largest accepted ratio of worst violations after halving dt. Exact
/// `O(dt²)` scaling gives 0.25; `O(dt)` gives 0.5.
pub const LYAPUNOV_RATIO_LIMIT: f64 = 0.3;
pub const LYAPUNOV_DURATION: f64 = 10.0;
/// Observer residual accepted on noiseless data [N].
pub const OBSERVER_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Failed outside the conditions the property is claimed for.
    ExpectedFail,
    Skipped,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::ExpectedFail => "XFAIL",
            Verdict::Skipped => "SKIP",
        }
    }

    /// Whether the verdict counts against the suite.
    pub fn is_failure(&self) -> bool {
        *self == Verdict::Fail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub verdict: Verdict,
    /// `None` when the property was skipped.
    pub measured: Option<f64>,
    pub threshold: f64,
    pub detail: String,
    pub seconds: f64,
}

impl PropertyResult {
    /// One-line description without the verdict.
    pub fn describe(&self) -> String {
        format!(
            "{}: measured {} (threshold {:.1e}) {} [{:.2} s]",
            self.name,
            self.measured.map_or("-".into(), |m| format!("{m:.3e}")),
            self.threshold,
            self.detail,
            self.seconds
        )
    }
}

impl std::fmt::Display for PropertyResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}", self.verdict.label(), self.describe())
    }
}

fn method_for(kind: FeatureKind) -> Method {
    match kind {
        FeatureKind::PlanePolynomial => Method::AdaptivePhi,
        FeatureKind::PhysicalInsight => Method::AdaptivePhib,
    }
}

/// Identification flight: the excitation phase of the dual-window scenario
/// with ±0.4 m height swings and per-endpoint tones, without windows. A
/// single-frequency distance alone leaves the plane features collinear.
pub fn identification_scenario(duration: f64) -> ScenarioSpec {
    let mut s = DualWindowParams {
        duration,
        height_amplitude: 0.4,
        excitation: identification_tones(),
        ..Default::default()
    }
    .build();
    s.windows.clear();
    ScenarioSpec::Custom(s)
}

/// `base` switched to validation mode: synthetic force, no noise, no
/// observer delay, one trial on the identification flight.
pub fn validation_config(base: &SimConfig, duration: f64) -> SimConfig {
    let mut c = base.clone();
    c.object = ObjectKind::Synthetic;
    c.noise_sigma = 0.0;
    c.observer_delay = 0;
    c.trials = 1;
    c.perfect_injection = false;
    c.thrust_lag = None;
    c.snapshot_interval = 0.0;
    c.scenario = identification_scenario(duration);
    c
}

/// ‖Ŵ − W‖_F after [`CONSISTENCY_STEPS`] control steps, worst vehicle.
pub fn rls_consistency(base: &SimConfig, kind: FeatureKind, order: usize) -> Result<PropertyResult, SimError> {
    let start = Instant::now();
    let mut c = validation_config(base, CONSISTENCY_STEPS as f64 * base.dt_control);
    c.estimator.order = order;
    c.estimator.discretization = Discretization::Exact;
    c.estimator.initial_covariance = CONSISTENCY_PRIOR;
    let method = method_for(kind);
    let (report, est) = run_trial(&c, method, 1, None)?;
    let truth = synthetic_force(&c, method);
    let err = (0..2)
        .map(|i| (&est[i].w_hat - &truth.weights[i]).norm())
        .fold(0.0, f64::max);
    let ok = report.summary.success && err < CONSISTENCY_TOLERANCE;
    let mut detail = format!("after {} steps, lambda = {}", report.records.len(), c.estimator.lambda);
    if let Some(f) = &report.summary.failure {
        detail.push_str(&format!(", run failed: {f}"));
    }
    Ok(PropertyResult {
        name: format!("rls-consistency {} n={order}", kind.label()),
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        measured: Some(err),
        threshold: CONSISTENCY_TOLERANCE,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Worst one-step increase of `V = Σ V^p + V^W` at each of
/// [`LYAPUNOV_STEPS`], with control and physics at the same rate.
pub fn lyapunov_violations(base: &SimConfig, kind: FeatureKind, k_d: f64) -> Result<Vec<(f64, f64)>, SimError> {
    LYAPUNOV_STEPS
        .iter()
        .map(|&dt| {
            let mut c = validation_config(base, LYAPUNOV_DURATION);
            c.dt_control = dt;
            c.dt_physics = dt;
            c.estimator.discretization = Discretization::ForwardEuler;
            c.gains.adaptive.k_d = k_d;
            let (report, _) = run_trial(&c, method_for(kind), 1, None)?;
            if let Some(f) = report.summary.failure {
                return Err(SimError::Config(format!("Lyapunov run failed: {f}")));
            }
            Ok((dt, worst_increase(&lyapunov_trace(&report)?)))
        })
        .collect()
}

/// Lyapunov decrease up to `O(dt²)` discretization error: halving dt must
/// cut the worst violation by at least [`LYAPUNOV_RATIO_LIMIT`]. Below the
/// gain bound a failure is expected; with forgetting the check is skipped.
pub fn lyapunov_decrease(base: &SimConfig, kind: FeatureKind, k_d: f64) -> Result<PropertyResult, SimError> {
    let start = Instant::now();
    let name = format!("lyapunov {} k_d={k_d}", kind.label());
    if base.estimator.lambda > 0.0 {
        return Ok(PropertyResult {
            name,
            verdict: Verdict::Skipped,
            measured: None,
            threshold: LYAPUNOV_RATIO_LIMIT,
            detail: "forgetting factor > 0: the decrease only holds for lambda = 0".into(),
            seconds: 0.0,
        });
    }
    let v = lyapunov_violations(base, kind, k_d)?;
    let (w0, w1) = (v[0].1, v[1].1);
    let ratio = if w0 == 0.0 && w1 == 0.0 { 0.0 } else { w1 / w0 };
    let c: Vec<String> = v.iter().map(|(dt, w)| format!("{:.3e}", w / (dt * dt))).collect();
    let ok = ratio <= LYAPUNOV_RATIO_LIMIT;
    let verdict = match (ok, k_d > KD_LYAPUNOV_BOUND) {
        (true, _) => Verdict::Pass,
        (false, true) => Verdict::Fail,
        (false, false) => Verdict::ExpectedFail,
    };
    Ok(PropertyResult {
        name,
        verdict,
        measured: Some(ratio),
        threshold: LYAPUNOV_RATIO_LIMIT,
        detail: format!("worst increase {w0:.3e} -> {w1:.3e}, C = [{}]", c.join(", ")),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Largest `|f_o − f_true|` over a noiseless, zero-delay flight of the
/// varying-distance scenario with the strip attached.
pub fn observer_exactness(base: &SimConfig, duration: f64) -> Result<PropertyResult, SimError> {
    let start = Instant::now();
    let mut c = base.clone();
    c.object = ObjectKind::Rod;
    c.noise_sigma = 0.0;
    c.observer_delay = 0;
    c.trials = 1;
    c.snapshot_interval = 0.0;
    c.scenario = ScenarioSpec::VaryingDistance(VaryingDistanceParams {
        duration,
        ..Default::default()
    });
    let (report, _) = run_trial(&c, Method::AdaptivePhib, 1, None)?;
    let residual = report
        .records
        .iter()
        .flat_map(|r| r.vehicles.iter().map(|v| (v.f_o - v.f_true).amax()))
        .fold(0.0, f64::max);
    let ok = report.summary.success && residual <= OBSERVER_TOLERANCE;
    Ok(PropertyResult {
        name: "observer-exactness".into(),
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        measured: Some(residual),
        threshold: OBSERVER_TOLERANCE,
        detail: format!("over {} steps", report.records.len()),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// The property suite run by `bendlift validate`.
pub fn validation_suite(base: &SimConfig) -> Result<Vec<PropertyResult>, SimError> {
    let kinds = [FeatureKind::PlanePolynomial, FeatureKind::PhysicalInsight];
    let mut out = Vec::new();
    for kind in kinds {
        out.push(rls_consistency(base, kind, base.estimator.order)?);
    }
    for kind in kinds {
        out.push(lyapunov_decrease(base, kind, base.gains.adaptive.k_d)?);
    }
    out.push(observer_exactness(base, 40.0)?);
    Ok(out)
}
