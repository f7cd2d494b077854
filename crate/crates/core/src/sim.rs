//! Fixed-step closed loop: two point-mass vehicles coupled through the object
//! force, controllers and estimators at the control rate, physics substeps in
//! between, and the multi-trial protocol on top.

use crate::control::{adaptive_control, pid_control, ControlCommand, ControlError, Gains, ThrustLag};
use crate::estimator::{
    feature_context, observe_force, Discretization, EstimatorConfig, EstimatorError, EstimatorState, FeatureContext,
    FeatureKind,
};
use crate::rod::{RodError, RodSolver, StripModel};
use crate::stats;
use crate::trajectory::{Scenario, ScenarioSpec, TrajectoryError, TrajectoryPoint};
use crate::{world_z, Vec3, GRAVITY};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

/// Position and speed limits past which a run counts as crashed.
pub const DIVERGENCE_POSITION: f64 = 100.0;
pub const DIVERGENCE_SPEED: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("object solver failed: {0}")]
    SolverFailure(#[from] RodError),
    #[error("vehicle state diverged at t = {t:.3} s")]
    DivergenceDetected { t: f64 },
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("true weights are only known in validation mode")]
    UnavailableGroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub p: Vec3,
    pub v: Vec3,
    pub a_true: Vec3,
    pub m: f64,
}

impl VehicleState {
    pub fn at_rest(p: Vec3, m: f64) -> Self {
        Self {
            p,
            v: Vec3::zeros(),
            a_true: Vec3::zeros(),
            m,
        }
    }

    pub fn on_reference(r: &TrajectoryPoint, m: f64) -> Self {
        Self {
            p: r.p,
            v: r.v,
            a_true: Vec3::zeros(),
            m,
        }
    }

    fn is_diverged(&self) -> bool {
        !(self.p.norm() <= DIVERGENCE_POSITION && self.v.norm() <= DIVERGENCE_SPEED)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    PidLow,
    PidHigh,
    AdaptivePhi,
    AdaptivePhib,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::PidLow,
        Method::PidHigh,
        Method::AdaptivePhi,
        Method::AdaptivePhib,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Method::PidLow => "pid-low",
            Method::PidHigh => "pid-high",
            Method::AdaptivePhi => "adaptive-phi",
            Method::AdaptivePhib => "adaptive-phib",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.label() == s)
    }

    pub fn feature_kind(&self) -> Option<FeatureKind> {
        match self {
            Method::AdaptivePhi => Some(FeatureKind::PlanePolynomial),
            Method::AdaptivePhib => Some(FeatureKind::PhysicalInsight),
            _ => None,
        }
    }

    pub fn is_adaptive(&self) -> bool {
        self.feature_kind().is_some()
    }
}

/// Gain profiles. The high-integral PID profile is the low one with `k_i`
/// doubled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSet {
    pub adaptive: Gains,
    pub pid: Gains,
}

impl GainSet {
    pub fn for_method(&self, method: Method) -> Gains {
        match method {
            Method::PidLow => self.pid,
            Method::PidHigh => Gains {
                k_i: 2.0 * self.pid.k_i,
                ..self.pid
            },
            Method::AdaptivePhi | Method::AdaptivePhib => self.adaptive,
        }
    }

    pub fn defaults(mass: f64) -> Self {
        let u_max = 2.0 * mass * GRAVITY;
        Self {
            adaptive: Gains {
                k_p: 1.5,
                k_d: 0.6,
                k_i: 0.0,
                u_max,
                i_max: 1.0,
            },
            pid: Gains {
                k_p: 1.5,
                k_d: 0.6,
                k_i: 0.1,
                u_max,
                i_max: 10.0,
            },
        }
    }
}

/// Estimator settings shared by both adaptive methods; the feature kind
/// follows the method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSettings {
    pub order: usize,
    pub lambda: f64,
    pub initial_covariance: f64,
    pub discretization: Discretization,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            order: 3,
            lambda: 0.0,
            initial_covariance: 3.0,
            discretization: Discretization::ForwardEuler,
        }
    }
}

impl EstimatorSettings {
    pub fn config(&self, kind: FeatureKind) -> EstimatorConfig {
        EstimatorConfig {
            kind,
            order: self.order,
            lambda: self.lambda,
            initial_covariance: self.initial_covariance,
            discretization: self.discretization,
        }
    }
}

/// What produces the object force on the vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectKind {
    /// The elastic strip described by `rod`.
    #[default]
    Rod,
    /// A force exactly linear in the method's features with randomly drawn
    /// weights (validation mode). PID methods see the plane-polynomial form.
    Synthetic,
    /// No object.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt_physics: f64,
    pub dt_control: f64,
    /// Vehicle mass [kg].
    pub mass: f64,
    /// Standard deviation of the acceleration measurement noise per axis [m/s²].
    pub noise_sigma: f64,
    pub seed: u64,
    pub trials: usize,
    /// Control periods between a force acting and its use by the estimator.
    pub observer_delay: usize,
    pub methods: Vec<Method>,
    pub object: ObjectKind,
    /// Scale of the synthetic weights in validation mode.
    pub synthetic_scale: f64,
    /// Feed the true object force to the controller instead of the estimate.
    pub perfect_injection: bool,
    /// First-order lag on the applied force [s]; off when absent.
    pub thrust_lag: Option<f64>,
    /// Command change per control period above which a jump is flagged [N].
    pub command_jump_limit: f64,
    /// Minimum endpoint distance accepted in scenarios [m].
    pub min_distance: f64,
    /// Margin kept below the strip's curve length [m].
    pub length_margin: f64,
    /// Interval between estimator snapshots in trial reports [s]; 0 disables.
    pub snapshot_interval: f64,
    pub rod: StripModel,
    pub gains: GainSet,
    pub estimator: EstimatorSettings,
    pub scenario: ScenarioSpec,
}

impl Default for SimConfig {
    fn default() -> Self {
        let mass = 0.135;
        Self {
            dt_physics: 1e-3,
            dt_control: 1e-2,
            mass,
            noise_sigma: 0.05,
            seed: 0,
            trials: 10,
            observer_delay: 1,
            methods: Method::ALL.to_vec(),
            object: ObjectKind::Rod,
            synthetic_scale: 0.1,
            perfect_injection: false,
            thrust_lag: None,
            command_jump_limit: 0.5,
            min_distance: 0.1,
            length_margin: 0.05,
            snapshot_interval: 10.0,
            rod: StripModel::default(),
            gains: GainSet::defaults(mass),
            estimator: EstimatorSettings::default(),
            scenario: ScenarioSpec::default(),
        }
    }
}

impl SimConfig {
    /// Physics substeps per control period.
    pub fn substeps(&self) -> usize {
        (self.dt_control / self.dt_physics).round() as usize
    }

    pub fn control_steps(&self, duration: f64) -> usize {
        (duration / self.dt_control + 1e-9).floor() as usize
    }

    fn check_rates(&self) -> Result<(), SimError> {
        if !(self.dt_physics > 0.0 && self.dt_control > 0.0) {
            return Err(SimError::Config("time steps must be positive".into()));
        }
        let ratio = self.dt_control / self.dt_physics;
        if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(SimError::Config(format!(
                "dt_control = {} is not an integer multiple of dt_physics = {}",
                self.dt_control, self.dt_physics
            )));
        }
        if !(self.mass > 0.0) {
            return Err(SimError::Config("mass must be positive".into()));
        }
        Ok(())
    }

    /// Checks every setting used by a run, including gain bounds and the
    /// scenario's endpoint distances against the strip length.
    pub fn validate(&self) -> Result<(), SimError> {
        self.check_rates()?;
        if self.trials == 0 {
            return Err(SimError::Config("trials must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(SimError::Config("no methods selected".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(SimError::Config("noise_sigma must be non-negative".into()));
        }
        if let Some(tau) = self.thrust_lag {
            if !(tau > 0.0) {
                return Err(SimError::Config("thrust_lag must be positive".into()));
            }
        }
        self.gains.pid.validate(self.mass)?;
        self.gains.adaptive.validate_adaptive(self.mass)?;
        self.estimator.config(FeatureKind::PlanePolynomial).validate()?;
        let scenario = self.scenario.build()?;
        if self.object == ObjectKind::Rod {
            let rod = self.rod.spec();
            rod.validate()?;
            scenario.check_distance_bounds(
                self.min_distance,
                rod.curve_length - self.length_margin,
                self.dt_control,
            )?;
        }
        Ok(())
    }
}

/// Force exactly linear in one feature family, per vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticForce {
    pub kind: FeatureKind,
    pub order: usize,
    pub weights: [DMatrix<f64>; 2],
}

impl SyntheticForce {
    pub fn random(kind: FeatureKind, order: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, scale).expect("finite scale");
        let d = crate::estimator::feature_dim(order);
        let mut draw = || DMatrix::from_fn(d, 3, |_, _| normal.sample(&mut rng));
        let w1 = draw();
        let w2 = draw();
        Self {
            kind,
            order,
            weights: [w1, w2],
        }
    }

    fn forces(&self, ctx: &FeatureContext) -> [Vec3; 2] {
        let f = |w: &DMatrix<f64>| {
            let v = w.tr_mul(&ctx.phi.values);
            ctx.frame * Vec3::new(v[0], v[1], v[2])
        };
        [f(&self.weights[0]), f(&self.weights[1])]
    }
}

#[derive(Debug, Clone)]
pub enum ObjectModel {
    Rod(RodSolver),
    Synthetic(SyntheticForce),
    Free,
}

impl ObjectModel {
    pub fn forces(
        &mut self,
        v: &[VehicleState; 2],
        last_ctx: &mut Option<FeatureContext>,
    ) -> Result<[Vec3; 2], SimError> {
        match self {
            ObjectModel::Rod(solver) => {
                let r = solver.forces(&v[0].p, &v[1].p, &v[0].v, &v[1].v)?;
                Ok([r.f1, r.f2])
            }
            ObjectModel::Synthetic(s) => {
                let ctx = context_or_last(s.kind, s.order, v, last_ctx)?;
                Ok(s.forces(&ctx))
            }
            ObjectModel::Free => Ok([Vec3::zeros(); 2]),
        }
    }
}

/// Feature context at the current state, falling back to the last valid one
/// when the displacement is degenerate.
fn context_or_last(
    kind: FeatureKind,
    order: usize,
    v: &[VehicleState; 2],
    last: &mut Option<FeatureContext>,
) -> Result<FeatureContext, SimError> {
    match feature_context(kind, order, &v[0].p, &v[1].p, &v[0].v, &v[1].v) {
        Ok(ctx) => {
            *last = Some(ctx.clone());
            Ok(ctx)
        }
        Err(e) => last.clone().ok_or(SimError::SolverFailure(RodError::Geometry(e))),
    }
}

/// Two vehicles and the object between them.
#[derive(Debug, Clone)]
pub struct World {
    pub t: f64,
    pub vehicles: [VehicleState; 2],
    pub object: ObjectModel,
    /// Force currently applied by each vehicle [N].
    pub u: [Vec3; 2],
    /// Object force at the current state [N].
    pub f_obj: [Vec3; 2],
    synthetic_ctx: Option<FeatureContext>,
}

impl World {
    pub fn new(vehicles: [VehicleState; 2], object: ObjectModel) -> Result<Self, SimError> {
        let mut w = Self {
            t: 0.0,
            vehicles,
            object,
            u: [Vec3::zeros(); 2],
            f_obj: [Vec3::zeros(); 2],
            synthetic_ctx: None,
        };
        w.f_obj = w.object.forces(&w.vehicles, &mut w.synthetic_ctx)?;
        w.refresh_acceleration();
        Ok(w)
    }

    pub fn set_command(&mut self, u: [Vec3; 2]) {
        self.u = u;
        self.refresh_acceleration();
    }

    fn refresh_acceleration(&mut self) {
        for i in 0..2 {
            let m = self.vehicles[i].m;
            self.vehicles[i].a_true = (self.u[i] + self.f_obj[i]) / m - world_z() * GRAVITY;
        }
    }

    /// Semi-implicit Euler under `u + f_obj − m g z`, then re-solves the
    /// object at the new positions.
    pub fn step(&mut self, dt: f64) -> Result<(), SimError> {
        for veh in self.vehicles.iter_mut() {
            veh.v += veh.a_true * dt;
            veh.p += veh.v * dt;
        }
        self.t += dt;
        if self.vehicles.iter().any(VehicleState::is_diverged) {
            return Err(SimError::DivergenceDetected { t: self.t });
        }
        self.f_obj = self.object.forces(&self.vehicles, &mut self.synthetic_ctx)?;
        self.refresh_acceleration();
        Ok(())
    }
}

/// Per-vehicle quantities logged every control step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub p: Vec3,
    pub p_d: Vec3,
    pub e: Vec3,
    pub u: Vec3,
    /// Observed object force [N, world].
    pub f_o: Vec3,
    /// Object-force compensation applied [N, world].
    pub f_hat: Vec3,
    /// True object force [N, world].
    pub f_true: Vec3,
    /// Innovation of this step's estimator update [N, estimation frame].
    pub eps: Vec3,
    pub v_p: f64,
    /// Weight-error energy; NaN outside validation mode.
    pub v_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub distance: f64,
    /// Average endpoint position error `(‖e1‖ + ‖e2‖)/2` [m].
    pub error: f64,
    pub saturated: bool,
    pub vehicles: [VehicleRecord; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub name: String,
    pub passed: bool,
    /// Crossing time per vehicle, if it reached the window plane.
    pub crossings: [Option<f64>; 2],
    /// Smallest distance to the aperture edge over all crossings, negative
    /// when a crossing was outside; `None` without crossings [m].
    pub min_clearance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSnapshot {
    pub t: f64,
    pub vehicle: usize,
    pub w_hat: Vec<f64>,
    pub p_trace: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub method: Method,
    pub trial: usize,
    pub steps: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub success: bool,
    pub failure: Option<String>,
    pub windows: Vec<WindowResult>,
    pub phases: Vec<PhaseStats>,
    pub saturation_steps: usize,
    pub max_command_jump: f64,
    pub command_jump_exceeded: bool,
    pub degenerate_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub summary: TrialSummary,
    pub validation: bool,
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<EstimatorSnapshot>,
}

impl TrialReport {
    /// Mean and STD of the average endpoint error recomputed from the records.
    pub fn recompute_error_stats(&self) -> (f64, f64) {
        error_stats(self.records.iter().map(|r| r.error))
    }
}

fn error_stats(errors: impl Iterator<Item = f64>) -> (f64, f64) {
    let xs: Vec<f64> = errors.collect();
    if xs.is_empty() {
        (0.0, 0.0)
    } else {
        (stats::mean(&xs), stats::std_dev(&xs))
    }
}

/// Estimator pair carried from one trial to the next.
pub type EstimatorPair = [EstimatorState; 2];

struct Pending {
    ctx: FeatureContext,
    f_o: [Vec3; 2],
}

fn window_crossings(
    scenario: &Scenario,
    prev: &[VehicleState; 2],
    next: &[VehicleState; 2],
    t_prev: f64,
    dt: f64,
    results: &mut [WindowResult],
) {
    for (w, res) in scenario.windows.iter().zip(results.iter_mut()) {
        if t_prev + dt < w.active[0] || t_prev > w.active[1] {
            continue;
        }
        for i in 0..2 {
            let (a, b) = (prev[i].p, next[i].p);
            let x = w.center[0];
            if a.x < x && b.x >= x {
                let s = (x - a.x) / (b.x - a.x);
                let hit = a + (b - a) * s;
                let clearance = w.clearance(&hit);
                res.min_clearance = Some(res.min_clearance.map_or(clearance, |c| c.min(clearance)));
                res.crossings[i] = Some(t_prev + s * dt);
                if clearance < 0.0 {
                    res.passed = false;
                }
            }
        }
    }
}

fn snapshot(t: f64, est: &EstimatorPair) -> Vec<EstimatorSnapshot> {
    est.iter()
        .enumerate()
        .map(|(i, e)| EstimatorSnapshot {
            t,
            vehicle: i + 1,
            w_hat: e.w_hat.as_slice().to_vec(),
            p_trace: e.p.trace(),
        })
        .collect()
}

fn fresh_estimators(config: &SimConfig, method: Method) -> EstimatorPair {
    let kind = method.feature_kind().unwrap_or(FeatureKind::PlanePolynomial);
    let cfg = config.estimator.config(kind);
    [EstimatorState::new(&cfg), EstimatorState::new(&cfg)]
}

/// Synthetic force used for `method` in validation mode.
pub fn synthetic_force(config: &SimConfig, method: Method) -> SyntheticForce {
    let kind = method.feature_kind().unwrap_or(FeatureKind::PlanePolynomial);
    SyntheticForce::random(kind, config.estimator.order, config.synthetic_scale, config.seed)
}

fn build_object(config: &SimConfig, method: Method) -> Result<ObjectModel, SimError> {
    Ok(match config.object {
        ObjectKind::Rod => ObjectModel::Rod(RodSolver::new(config.rod.spec())?),
        ObjectKind::Synthetic => ObjectModel::Synthetic(synthetic_force(config, method)),
        ObjectKind::None => ObjectModel::Free,
    })
}

/// Runs one trial of `method`. Adaptive methods start from `estimators` when
/// given (and fresh weights otherwise) and return the updated pair.
///
/// Divergence, solver failures and estimator faults end the trial early and
/// are reported in the summary rather than as errors.
pub fn run_trial(
    config: &SimConfig,
    method: Method,
    trial: usize,
    estimators: Option<EstimatorPair>,
) -> Result<(TrialReport, EstimatorPair), SimError> {
    config.check_rates()?;
    let scenario = config.scenario.build()?;
    let gains = config.gains.for_method(method);
    let m = config.mass;
    let dt = config.dt_control;
    let sub = config.substeps();
    let dt_phys = dt / sub as f64;
    let n_steps = config.control_steps(scenario.duration);
    let order = config.estimator.order;
    let kind = method.feature_kind();

    let mut est = match estimators {
        Some(e) if kind.is_none_or(|k| e[0].kind == k) => e,
        _ => fresh_estimators(config, method),
    };
    let synthetic = match config.object {
        ObjectKind::Synthetic => Some(synthetic_force(config, method)),
        _ => None,
    };
    let validation = synthetic.is_some() && kind.is_some();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(trial as u64);
    let noise = if config.noise_sigma > 0.0 {
        Some(Normal::new(0.0, config.noise_sigma).map_err(|e| SimError::Config(e.to_string()))?)
    } else {
        None
    };

    let mut summary = TrialSummary {
        method,
        trial,
        steps: 0,
        mean_error: 0.0,
        std_error: 0.0,
        success: true,
        failure: None,
        windows: scenario
            .windows
            .iter()
            .map(|w| WindowResult {
                name: w.name.clone(),
                passed: true,
                crossings: [None, None],
                min_clearance: None,
            })
            .collect(),
        phases: Vec::new(),
        saturation_steps: 0,
        max_command_jump: 0.0,
        command_jump_exceeded: false,
        degenerate_frames: 0,
    };
    let mut records = Vec::with_capacity(n_steps);
    let mut snapshots = Vec::new();

    let (r1, r2) = scenario.reference(0.0)?;
    let mut world = World::new(
        [VehicleState::on_reference(&r1, m), VehicleState::on_reference(&r2, m)],
        build_object(config, method)?,
    )?;
    let mut lags = config.thrust_lag.map(|tau| [ThrustLag::new(tau), ThrustLag::new(tau)]);
    let mut integral = [Vec3::zeros(); 2];
    let mut pending: VecDeque<Pending> = VecDeque::with_capacity(config.observer_delay + 1);
    let mut last_ctx: Option<FeatureContext> = None;
    let mut have_command = false;
    let mut prev_u: Option<[Vec3; 2]> = None;
    let mut next_snapshot = 0.0;

    let outcome: Result<(), SimError> = (|| {
        for k in 0..n_steps {
            let t = k as f64 * dt;
            let refs = scenario.reference(t)?;
            let refs = [refs.0, refs.1];

            // Observation of the object force at the current state.
            let mut f_o = [Vec3::zeros(); 2];
            for i in 0..2 {
                let mut acc = world.vehicles[i].a_true;
                if let Some(n) = &noise {
                    acc += Vec3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng));
                }
                f_o[i] = observe_force(m, &acc, &world.u[i]);
            }

            let mut eps = [Vec3::zeros(); 2];
            let mut v_w = [f64::NAN; 2];
            let mut f_hat = [Vec3::zeros(); 2];
            if let Some(kind) = kind {
                let ctx = {
                    let v = &world.vehicles;
                    match feature_context(kind, order, &v[0].p, &v[1].p, &v[0].v, &v[1].v) {
                        Ok(c) => {
                            last_ctx = Some(c.clone());
                            c
                        }
                        Err(e) => {
                            summary.degenerate_frames += 1;
                            last_ctx.clone().ok_or(SimError::SolverFailure(RodError::Geometry(e)))?
                        }
                    }
                };
                if let Some(s) = &synthetic {
                    for i in 0..2 {
                        v_w[i] = est[i].weight_error_energy(&s.weights[i]);
                    }
                }
                if have_command {
                    pending.push_back(Pending { ctx: ctx.clone(), f_o });
                }
                if pending.len() > config.observer_delay {
                    let obs = pending.pop_front().expect("non-empty");
                    for i in 0..2 {
                        let f_frame = obs.ctx.frame.inverse_transform_vector(&obs.f_o[i]);
                        eps[i] = est[i].update(&obs.ctx.phi, &f_frame, dt)?;
                    }
                }
                for i in 0..2 {
                    f_hat[i] = ctx.frame * est[i].frame_estimate(&ctx.phi)?;
                }
            }
            if config.perfect_injection {
                f_hat = world.f_obj;
            }

            if config.snapshot_interval > 0.0 && kind.is_some() && t + 1e-9 >= next_snapshot {
                snapshots.extend(snapshot(t, &est));
                next_snapshot += config.snapshot_interval;
            }

            let mut cmd = [ControlCommand::default(); 2];
            for i in 0..2 {
                cmd[i] = if kind.is_some() || config.perfect_injection {
                    adaptive_control(&world.vehicles[i], &refs[i], &f_hat[i], &gains, m)
                } else {
                    let (c, next) = pid_control(&world.vehicles[i], &refs[i], &integral[i], &gains, m, dt);
                    integral[i] = next;
                    c
                };
            }
            let u = [cmd[0].u, cmd[1].u];
            let saturated = cmd[0].saturated || cmd[1].saturated;
            if saturated {
                summary.saturation_steps += 1;
            }
            if let Some(p) = prev_u {
                let jump = (u[0] - p[0]).norm().max((u[1] - p[1]).norm());
                summary.max_command_jump = summary.max_command_jump.max(jump);
            }
            prev_u = Some(u);

            let mut vehicles = [VehicleRecord::default(); 2];
            for i in 0..2 {
                let veh = &world.vehicles[i];
                let e = refs[i].p - veh.p;
                let de = refs[i].v - veh.v;
                vehicles[i] = VehicleRecord {
                    p: veh.p,
                    p_d: refs[i].p,
                    e,
                    u: u[i],
                    f_o: f_o[i],
                    f_hat: cmd[i].f_hat_o,
                    f_true: world.f_obj[i],
                    eps: eps[i],
                    v_p: 0.5 * m * de.norm_squared() + 0.5 * gains.k_p * e.norm_squared(),
                    v_w: v_w[i],
                };
            }
            records.push(StepRecord {
                t,
                distance: (world.vehicles[1].p - world.vehicles[0].p).norm(),
                error: 0.5 * (vehicles[0].e.norm() + vehicles[1].e.norm()),
                saturated,
                vehicles,
            });

            for _ in 0..sub {
                let applied = match lags.as_mut() {
                    Some(l) => [l[0].apply(&u[0], dt_phys), l[1].apply(&u[1], dt_phys)],
                    None => u,
                };
                world.set_command(applied);
                let before = world.vehicles;
                let t_before = world.t;
                world.step(dt_phys)?;
                window_crossings(
                    &scenario,
                    &before,
                    &world.vehicles,
                    t_before,
                    dt_phys,
                    &mut summary.windows,
                );
            }
            // Keep the simulation clock on the control grid.
            world.t = (k + 1) as f64 * dt;
            have_command = true;
        }
        Ok(())
    })();

    if let Err(e) = outcome {
        match e {
            SimError::DivergenceDetected { .. } | SimError::SolverFailure(_) | SimError::Estimator(_) => {
                summary.success = false;
                summary.failure = Some(e.to_string());
            }
            other => return Err(other),
        }
    }

    summary.steps = records.len();
    let (mean, std) = error_stats(records.iter().map(|r| r.error));
    summary.mean_error = mean;
    summary.std_error = std;
    summary.phases = scenario
        .phases
        .iter()
        .map(|ph| {
            let (mean, std) = error_stats(records.iter().filter(|r| ph.contains(r.t)).map(|r| r.error));
            PhaseStats {
                name: ph.name.clone(),
                mean,
                std,
            }
        })
        .collect();
    summary.command_jump_exceeded = summary.max_command_jump > config.command_jump_limit;
    if summary.success && !records.is_empty() {
        for w in summary.windows.iter_mut() {
            if w.crossings.iter().any(Option::is_none) {
                w.passed = false;
            }
        }
        if summary.windows.iter().any(|w| !w.passed) {
            summary.success = false;
            summary.failure = Some("window clearance failed".into());
        }
    }
    if kind.is_some() && config.snapshot_interval > 0.0 && !records.is_empty() {
        snapshots.extend(snapshot(scenario.duration, &est));
    }

    Ok((
        TrialReport {
            summary,
            validation,
            records,
            snapshots,
        },
        est,
    ))
}

/// Runs `config.trials` trials of one method, carrying the estimators over.
/// Each finished report is handed to `sink`; only summaries are kept.
pub fn run_method<F>(config: &SimConfig, method: Method, mut sink: F) -> Result<Vec<TrialSummary>, SimError>
where
    F: FnMut(&TrialReport),
{
    let mut est = None;
    let mut out = Vec::with_capacity(config.trials);
    for trial in 1..=config.trials {
        let (report, next) = run_trial(config, method, trial, est)?;
        sink(&report);
        out.push(report.summary);
        est = Some(next);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub trials: Vec<TrialSummary>,
    pub trial_means: Vec<f64>,
    pub trial_stds: Vec<f64>,
    /// Spearman correlation of trial means against trial index; `None` for
    /// fewer than two trials or constant means.
    pub trend: Option<f64>,
    pub all_succeeded: bool,
}

impl MethodSummary {
    pub fn new(method: Method, trials: Vec<TrialSummary>) -> Self {
        let trial_means: Vec<f64> = trials.iter().map(|t| t.mean_error).collect();
        let trial_stds = trials.iter().map(|t| t.std_error).collect();
        let trend = Some(stats::trend(&trial_means)).filter(|t| trial_means.len() > 1 && t.is_finite());
        let all_succeeded = trials.iter().all(|t| t.success);
        Self {
            method,
            trials,
            trial_means,
            trial_stds,
            trend,
            all_succeeded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub scenario: String,
    pub seed: u64,
    pub methods: Vec<MethodSummary>,
}

impl BatchReport {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

/// Runs every configured method in parallel, each on its own world.
pub fn run_batch_with<F>(config: &SimConfig, sink: F) -> Result<BatchReport, SimError>
where
    F: Fn(&TrialReport) + Sync,
{
    config.check_rates()?;
    let methods: Vec<MethodSummary> = config
        .methods
        .par_iter()
        .map(|&m| run_method(config, m, &sink).map(|t| MethodSummary::new(m, t)))
        .collect::<Result<_, _>>()?;
    Ok(BatchReport {
        scenario: config.scenario.label().to_string(),
        seed: config.seed,
        methods,
    })
}

pub fn run_batch(config: &SimConfig) -> Result<BatchReport, SimError> {
    run_batch_with(config, |_| {})
}

/// `V = Σᵢ (V^p_i + V^W_i)` per control step. Needs validation-mode records.
pub fn lyapunov_trace(report: &TrialReport) -> Result<Vec<(f64, f64)>, SimError> {
    if !report.validation {
        return Err(SimError::UnavailableGroundTruth);
    }
    Ok(report
        .records
        .iter()
        .map(|r| (r.t, r.vehicles.iter().map(|v| v.v_p + v.v_w).sum()))
        .collect())
}

/// Largest one-step increase of a Lyapunov trace (0 if it never increases).
pub fn worst_increase(trace: &[(f64, f64)]) -> f64 {
    trace.windows(2).map(|w| w[1].1 - w[0].1).fold(0.0, f64::max)
}
