//! Online approximation of the strip's endpoint force.
//!
//! Each vehicle keeps a weight matrix `Ŵ` ((4n+1)×3) and covariance `P`.
//! The force in the estimation frame is modelled as `Ŵᵀφ`, where `φ` is
//! either a polynomial of the in-plane displacement and its rate, or the
//! distance/leaning-angle feature set. Observations come from inverting the
//! translational dynamics with the measured acceleration.

use crate::geom::{displacement_frame, plane_frame, project_to_plane, GeomError};
use crate::{world_z, Rot3, Vec3, GRAVITY};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ceiling on covariance entries before an update is rejected.
pub const COVARIANCE_CEILING: f64 = 1e9;
/// Floor on covariance eigenvalues after each update.
pub const COVARIANCE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("feature kind {got:?} does not match estimator kind {expected:?}")]
    KindMismatch { expected: FeatureKind, got: FeatureKind },
    #[error("feature length {got} does not match estimator dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    /// Covariance grew past the ceiling; the input is not exciting enough
    /// for the chosen forgetting factor.
    #[error("covariance entry {max:.3e} exceeds {COVARIANCE_CEILING:e}")]
    CovarianceBlowup { max: f64 },
    #[error("non-finite estimator state")]
    NonFinite,
    #[error("invalid estimator setting: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    /// Powers of the in-plane displacement and its rate, plane frame.
    PlanePolynomial,
    /// Powers of distance and its rate plus harmonics of the leaning angle,
    /// displacement frame.
    PhysicalInsight,
}

impl FeatureKind {
    /// Short name: `phi` for the plane polynomial, `phib` for the physical set.
    pub fn label(&self) -> &'static str {
        match self {
            FeatureKind::PlanePolynomial => "phi",
            FeatureKind::PhysicalInsight => "phib",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: DVector<f64>,
    pub kind: FeatureKind,
    pub order: usize,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Feature dimension `4n + 1`.
pub fn feature_dim(order: usize) -> usize {
    4 * order + 1
}

/// Pushes `x^n, x^(n-1), …, x`.
fn push_powers(out: &mut Vec<f64>, x: f64, n: usize) {
    let start = out.len();
    let mut p = x;
    for _ in 0..n {
        out.push(p);
        p *= x;
    }
    out[start..].reverse();
}

/// `[r_xⁿ…r_x, r_zⁿ…r_z, ṙ_xⁿ…ṙ_x, ṙ_zⁿ…ṙ_z, 1]` from plane-frame inputs.
/// The y components are ignored.
pub fn features_plane(r_p: &Vec3, rdot_p: &Vec3, order: usize) -> FeatureVector {
    let mut v = Vec::with_capacity(feature_dim(order));
    push_powers(&mut v, r_p.x, order);
    push_powers(&mut v, r_p.z, order);
    push_powers(&mut v, rdot_p.x, order);
    push_powers(&mut v, rdot_p.z, order);
    v.push(1.0);
    FeatureVector {
        values: DVector::from_vec(v),
        kind: FeatureKind::PlanePolynomial,
        order,
    }
}

/// `[rⁿ…r, ṙⁿ…ṙ, cos nα…cos α, sin nα…sin α, 1]`.
pub fn features_physical(r_mag: f64, rdot: f64, alpha: f64, order: usize) -> FeatureVector {
    let mut v = Vec::with_capacity(feature_dim(order));
    push_powers(&mut v, r_mag, order);
    push_powers(&mut v, rdot, order);
    v.extend((1..=order).rev().map(|k| (k as f64 * alpha).cos()));
    v.extend((1..=order).rev().map(|k| (k as f64 * alpha).sin()));
    v.push(1.0);
    FeatureVector {
        values: DVector::from_vec(v),
        kind: FeatureKind::PhysicalInsight,
        order,
    }
}

/// Estimation frame and features for one instant, shared by both vehicles.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureContext {
    pub frame: Rot3,
    pub phi: FeatureVector,
}

pub fn feature_context(
    kind: FeatureKind,
    order: usize,
    p1: &Vec3,
    p2: &Vec3,
    v1: &Vec3,
    v2: &Vec3,
) -> Result<FeatureContext, GeomError> {
    let r = p2 - p1;
    let rdot = v2 - v1;
    match kind {
        FeatureKind::PlanePolynomial => {
            let plane = plane_frame(&r)?;
            let phi = features_plane(&project_to_plane(&plane, &r), &project_to_plane(&plane, &rdot), order);
            Ok(FeatureContext {
                frame: plane.rotation,
                phi,
            })
        }
        FeatureKind::PhysicalInsight => {
            let d = displacement_frame(p1, p2)?;
            let r_mag = r.norm();
            let rate = rdot.dot(&r) / r_mag;
            Ok(FeatureContext {
                frame: d.rotation,
                phi: features_physical(r_mag, rate, d.alpha, order),
            })
        }
    }
}

/// Force observation from inverted translational dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceObservation {
    pub force: Vec3,
    pub timestamp: f64,
}

/// `f_o = m p̈ + m g z − u`.
pub fn observe_force(mass: f64, acc_measured: &Vec3, u_applied: &Vec3) -> Vec3 {
    acc_measured * mass + world_z() * (mass * GRAVITY) - u_applied
}

impl ForceObservation {
    pub fn new(timestamp: f64, mass: f64, acc_measured: &Vec3, u_applied: &Vec3) -> Self {
        Self {
            force: observe_force(mass, acc_measured, u_applied),
            timestamp,
        }
    }
}

/// How the continuous-time update is advanced over one control period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discretization {
    /// `Ŵ += dt Pφεᵀ`, `P += dt(λP − PφφᵀP)`.
    #[default]
    ForwardEuler,
    /// Exact integral of the information-form dynamics with `φ` held over
    /// the period; stable for any initial covariance.
    Exact,
}

fn default_order() -> usize {
    3
}

fn default_p0() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub kind: FeatureKind,
    #[serde(default = "default_order")]
    pub order: usize,
    /// Forgetting factor λ ≥ 0.
    #[serde(default)]
    pub lambda: f64,
    /// Initial covariance scale, `P(0) = p0·I`.
    #[serde(default = "default_p0")]
    pub initial_covariance: f64,
    #[serde(default)]
    pub discretization: Discretization,
}

impl EstimatorConfig {
    pub fn new(kind: FeatureKind) -> Self {
        Self {
            kind,
            order: default_order(),
            lambda: 0.0,
            initial_covariance: default_p0(),
            discretization: Discretization::ForwardEuler,
        }
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        if self.order < 1 {
            return Err(EstimatorError::Invalid("order must be at least 1".into()));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(EstimatorError::Invalid("lambda must be non-negative".into()));
        }
        if !(self.initial_covariance > 0.0 && self.initial_covariance <= COVARIANCE_CEILING) {
            return Err(EstimatorError::Invalid(format!(
                "initial_covariance must lie in (0, {COVARIANCE_CEILING:e}]"
            )));
        }
        Ok(())
    }
}

/// Weight matrix, covariance and settings of one vehicle's estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorState {
    pub w_hat: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub lambda: f64,
    pub kind: FeatureKind,
    pub order: usize,
    pub discretization: Discretization,
}

impl EstimatorState {
    /// Zero weights and `P(0) = p0·I`.
    pub fn new(cfg: &EstimatorConfig) -> Self {
        let d = feature_dim(cfg.order);
        Self {
            w_hat: DMatrix::zeros(d, 3),
            p: DMatrix::identity(d, d) * cfg.initial_covariance,
            lambda: cfg.lambda,
            kind: cfg.kind,
            order: cfg.order,
            discretization: cfg.discretization,
        }
    }

    pub fn dim(&self) -> usize {
        self.w_hat.nrows()
    }

    fn check(&self, phi: &FeatureVector) -> Result<(), EstimatorError> {
        if phi.kind != self.kind {
            return Err(EstimatorError::KindMismatch {
                expected: self.kind,
                got: phi.kind,
            });
        }
        if phi.len() != self.dim() {
            return Err(EstimatorError::DimensionMismatch {
                expected: self.dim(),
                got: phi.len(),
            });
        }
        Ok(())
    }

    /// `Ŵᵀφ` in the estimation frame.
    pub fn frame_estimate(&self, phi: &FeatureVector) -> Result<Vec3, EstimatorError> {
        self.check(phi)?;
        let f = self.w_hat.tr_mul(&phi.values);
        Ok(Vec3::new(f[0], f[1], f[2]))
    }

    /// In-place update; returns the innovation `ε = f − Ŵᵀφ` (before update).
    pub fn update(&mut self, phi: &FeatureVector, f_frame: &Vec3, dt: f64) -> Result<Vec3, EstimatorError> {
        if !(dt > 0.0) {
            return Err(EstimatorError::Invalid(format!("dt must be positive, got {dt}")));
        }
        let eps = f_frame - self.frame_estimate(phi)?;
        let phi = &phi.values;
        let eps_row = nalgebra::RowVector3::new(eps.x, eps.y, eps.z);
        let p_phi = &self.p * phi;
        match self.discretization {
            Discretization::ForwardEuler => {
                self.w_hat += (&p_phi * eps_row) * dt;
                let outer = &p_phi * p_phi.transpose();
                self.p = &self.p + (&self.p * self.lambda - outer) * dt;
            }
            Discretization::Exact => {
                let (a, b) = if self.lambda > 0.0 {
                    let a = (-self.lambda * dt).exp();
                    (a, (1.0 - a) / self.lambda)
                } else {
                    (1.0, dt)
                };
                let c = b / a;
                let denom = 1.0 + c * phi.dot(&p_phi);
                let outer = &p_phi * p_phi.transpose();
                self.p = (&self.p - outer * (c / denom)) / a;
                let gain = &self.p * phi;
                self.w_hat += (gain * eps_row) * b;
            }
        }
        self.condition_covariance()?;
        if self.w_hat.iter().any(|x| !x.is_finite()) {
            return Err(EstimatorError::NonFinite);
        }
        Ok(eps)
    }

    fn condition_covariance(&mut self) -> Result<(), EstimatorError> {
        let sym = (&self.p + self.p.transpose()) * 0.5;
        self.p = sym;
        if self.p.iter().any(|x| !x.is_finite()) {
            return Err(EstimatorError::NonFinite);
        }
        let max = self.p.amax();
        if max > COVARIANCE_CEILING {
            return Err(EstimatorError::CovarianceBlowup { max });
        }
        let d = self.dim();
        let shifted = &self.p - DMatrix::identity(d, d) * COVARIANCE_FLOOR;
        if shifted.cholesky().is_none() {
            let mut eig = self.p.clone().symmetric_eigen();
            eig.eigenvalues.iter_mut().for_each(|l| *l = l.max(COVARIANCE_FLOOR));
            let p = eig.recompose();
            self.p = (&p + p.transpose()) * 0.5;
        }
        Ok(())
    }

    /// Smallest eigenvalue of `P` and its symmetry defect.
    pub fn covariance_health(&self) -> (f64, f64) {
        let defect = (&self.p - self.p.transpose()).amax();
        let min = self.p.clone().symmetric_eigen().eigenvalues.min();
        (min, defect)
    }

    /// `tr(W̃ᵀ P⁻¹ W̃)` against known true weights.
    pub fn weight_error_energy(&self, truth: &DMatrix<f64>) -> f64 {
        let err = truth - &self.w_hat;
        match self.p.clone().cholesky() {
            Some(ch) => {
                let x = ch.solve(&err);
                err.component_mul(&x).sum()
            }
            None => f64::NAN,
        }
    }
}

/// Pure form of [`EstimatorState::update`].
pub fn rls_step(
    state: &EstimatorState,
    phi: &FeatureVector,
    f_frame: &Vec3,
    dt: f64,
) -> Result<EstimatorState, EstimatorError> {
    let mut next = state.clone();
    next.update(phi, f_frame, dt)?;
    Ok(next)
}

/// World-frame force estimate `R (Ŵᵀφ)`.
pub fn predict_force(state: &EstimatorState, phi: &FeatureVector, frame: &Rot3) -> Result<Vec3, EstimatorError> {
    Ok(frame * state.frame_estimate(phi)?)
}

/// Smallest eigenvalue of `Σ φφᵀ / N` over a window; positive means the
/// window is persistently exciting.
pub fn excitation_metric<'a, I>(window: I) -> f64
where
    I: IntoIterator<Item = &'a FeatureVector>,
{
    let mut sum: Option<DMatrix<f64>> = None;
    let mut count = 0usize;
    for phi in window {
        let outer = &phi.values * phi.values.transpose();
        match sum.as_mut() {
            Some(s) => *s += outer,
            None => sum = Some(outer),
        }
        count += 1;
    }
    match sum {
        Some(s) if count > 0 => (s / count as f64).symmetric_eigen().eigenvalues.min().max(0.0),
        _ => 0.0,
    }
}
