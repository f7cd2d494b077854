//! Ground-truth physics of the carried strip.
//!
//! The strip is a planar discrete elastica: `N` rigid segments of length
//! `L0/N` joined by torsional springs, hanging in the vertical bending plane
//! between two moment-free endpoints. Its unloaded shape is a uniform arc
//! whose chord equals the natural endpoint distance `r0`.
//!
//! Nothing in this module is visible to the estimator or the controllers;
//! the simulator only hands them the resulting endpoint forces through the
//! observer.
//!
//! In-plane coordinates are `(X, Z)` along the plane frame's `x_p` and world
//! `z`. Segment `k` has heading `θ_k`, so the chain from `p1` ends at
//! `p1 + ℓ Σ (cos θ_k, sin θ_k)`. With the plane-frame convention the chord
//! always points towards `-X`.

use crate::geom::{plane_frame, GeomError, EPS_GEOM};
use crate::{Vec3, GRAVITY};
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RodError {
    #[error("invalid rod spec: {0}")]
    InvalidSpec(String),
    #[error("endpoint distance {distance:.4} m reaches the curve length {length:.4} m")]
    TautRod { distance: f64, length: f64 },
    #[error("equilibrium solve did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Geometry(#[from] GeomError),
}

fn default_rate_damping() -> f64 {
    0.05
}

/// Physical description of the strip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RodSpec {
    /// Curve length `L0` [m].
    pub curve_length: f64,
    /// Unloaded, gravity-free endpoint distance `r0` [m].
    pub natural_distance: f64,
    /// Torsional stiffness of each interior joint [N·m/rad], length `N - 1`.
    pub joint_stiffness: Vec<f64>,
    /// Mass of each segment [kg], length `N`.
    pub segment_mass: Vec<f64>,
    /// Axial viscous coefficient on the endpoint separation rate [N·s/m].
    #[serde(default = "default_rate_damping")]
    pub rate_damping: f64,
}

impl RodSpec {
    pub fn uniform(
        curve_length: f64,
        natural_distance: f64,
        segments: usize,
        joint_stiffness: f64,
        total_mass: f64,
    ) -> Self {
        Self {
            curve_length,
            natural_distance,
            joint_stiffness: vec![joint_stiffness; segments.saturating_sub(1)],
            segment_mass: vec![total_mass / segments as f64; segments],
            rate_damping: default_rate_damping(),
        }
    }

    /// Two material zones split at `split` (fraction of the length from
    /// endpoint 1). Stiffness and mass are given per joint and per segment.
    pub fn two_zone(
        curve_length: f64,
        natural_distance: f64,
        segments: usize,
        split: f64,
        stiffness: (f64, f64),
        segment_mass: (f64, f64),
    ) -> Self {
        let cut = (split * segments as f64).round() as usize;
        Self {
            curve_length,
            natural_distance,
            joint_stiffness: (1..segments)
                .map(|j| if j < cut { stiffness.0 } else { stiffness.1 })
                .collect(),
            segment_mass: (0..segments)
                .map(|j| if j < cut { segment_mass.0 } else { segment_mass.1 })
                .collect(),
            rate_damping: default_rate_damping(),
        }
    }

    /// Default test strip: 1.2 m long, relaxing to 1.05 m, with a stiffer,
    /// heavier first zone.
    pub fn default_strip() -> Self {
        StripModel::default().spec()
    }

    pub fn segments(&self) -> usize {
        self.segment_mass.len()
    }

    pub fn segment_length(&self) -> f64 {
        self.curve_length / self.segments() as f64
    }

    pub fn total_mass(&self) -> f64 {
        self.segment_mass.iter().sum()
    }

    pub fn validate(&self) -> Result<(), RodError> {
        let n = self.segments();
        let bad = |m: String| Err(RodError::InvalidSpec(m));
        if n < 8 {
            return bad(format!("segment count {n} is below 8"));
        }
        if self.joint_stiffness.len() != n - 1 {
            return bad(format!(
                "expected {} joint stiffnesses for {n} segments, got {}",
                n - 1,
                self.joint_stiffness.len()
            ));
        }
        if !(self.curve_length.is_finite() && self.curve_length > 0.0) {
            return bad("curve_length must be positive".into());
        }
        if !(self.natural_distance > 0.0 && self.natural_distance <= self.curve_length) {
            return bad("natural_distance must satisfy 0 < r0 <= L0".into());
        }
        if self.joint_stiffness.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return bad("joint stiffness must be positive".into());
        }
        if self.segment_mass.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return bad("segment mass must be non-negative".into());
        }
        if !(self.rate_damping.is_finite() && self.rate_damping >= 0.0) {
            return bad("rate_damping must be non-negative".into());
        }
        Ok(())
    }
}

/// Parameters of [`RodSpec::two_zone`], the compact form used in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoZoneStrip {
    pub curve_length: f64,
    pub natural_distance: f64,
    pub segments: usize,
    /// Zone boundary as a fraction of the length from endpoint 1.
    pub split: f64,
    /// Joint stiffness in each zone [N·m/rad].
    pub stiffness: [f64; 2],
    /// Segment mass in each zone [kg].
    pub segment_mass: [f64; 2],
    pub rate_damping: f64,
}

impl Default for TwoZoneStrip {
    fn default() -> Self {
        Self {
            curve_length: 1.2,
            natural_distance: 1.05,
            segments: 20,
            split: 0.45,
            stiffness: [1.8, 1.2],
            segment_mass: [0.0024, 0.0016],
            rate_damping: default_rate_damping(),
        }
    }
}

/// Strip as written in a config file: the two-zone shorthand or every joint
/// and segment spelled out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum StripModel {
    TwoZone(TwoZoneStrip),
    Explicit(RodSpec),
}

impl Default for StripModel {
    fn default() -> Self {
        StripModel::TwoZone(TwoZoneStrip::default())
    }
}

impl StripModel {
    pub fn spec(&self) -> RodSpec {
        match self {
            StripModel::TwoZone(z) => RodSpec {
                rate_damping: z.rate_damping,
                ..RodSpec::two_zone(
                    z.curve_length,
                    z.natural_distance,
                    z.segments,
                    z.split,
                    (z.stiffness[0], z.stiffness[1]),
                    (z.segment_mass[0], z.segment_mass[1]),
                )
            },
            StripModel::Explicit(spec) => spec.clone(),
        }
    }
}

/// Equilibrium shape of the strip for given endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RodConfig {
    /// Segment headings relative to the plane-frame x axis [rad].
    pub angles: Vec<f64>,
    /// Constraint multipliers `(μ_X, μ_Z)` of the endpoint closure.
    pub multipliers: [f64; 2],
    pub p1: Vec3,
    pub p2: Vec3,
    /// Constrained minimum energy including gravity [J].
    pub energy: f64,
    /// Projected-gradient norm at the returned shape.
    pub residual: f64,
    pub iterations: usize,
}

impl RodConfig {
    /// Vertex positions in world coordinates, from `p1` to (approximately) `p2`.
    pub fn vertices(&self, spec: &RodSpec) -> Result<Vec<Vec3>, RodError> {
        let frame = plane_frame(&(self.p2 - self.p1))?;
        let (x, z) = (frame.x_axis(), frame.z_axis());
        let l = spec.segment_length();
        let mut out = Vec::with_capacity(self.angles.len() + 1);
        let mut v = self.p1;
        out.push(v);
        for th in &self.angles {
            v += (x * th.cos() + z * th.sin()) * l;
            out.push(v);
        }
        Ok(out)
    }
}

/// Forces exerted by the strip on the two vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RodReaction {
    pub f1: Vec3,
    pub f2: Vec3,
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Tolerance on the projected-gradient norm.
    pub gradient_tol: f64,
    /// Tolerance on the endpoint closure error [m].
    pub closure_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tol: 1e-8,
            closure_tol: 1e-12,
        }
    }
}

/// Chord of an `n`-segment polygonal arc with uniform turning `delta`.
fn arc_chord(n: usize, seg: f64, delta: f64) -> f64 {
    if delta.abs() < 1e-12 {
        return n as f64 * seg;
    }
    seg * (0.5 * n as f64 * delta).sin() / (0.5 * delta).sin()
}

/// Uniform turning angle whose polygonal arc has the requested chord.
fn turning_for_chord(n: usize, seg: f64, chord: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 2.0 * std::f64::consts::PI / n as f64);
    if chord >= n as f64 * seg {
        return 0.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if arc_chord(n, seg, mid) > chord {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Precomputed per-spec quantities of the elastica energy.
#[derive(Debug, Clone)]
pub struct Elastica {
    spec: RodSpec,
    seg: f64,
    /// Natural turning at each interior joint (index j = 1..N-1 stored at j-1).
    rest_turn: Vec<f64>,
    /// Gravity lever weights: `m_k/2 + Σ_{j>k} m_j`.
    lever: Vec<f64>,
    options: SolverOptions,
}

struct Boundary {
    x_axis: Vec3,
    target: Vector2<f64>,
    z1: f64,
}

impl Elastica {
    pub fn new(spec: RodSpec) -> Result<Self, RodError> {
        spec.validate()?;
        let n = spec.segments();
        let seg = spec.segment_length();
        // Downward-bowing natural arc: headings decrease along the chain.
        let delta0 = turning_for_chord(n, seg, spec.natural_distance);
        let rest_turn = vec![-delta0; n - 1];
        let mut lever = vec![0.0; n];
        let mut tail = 0.0;
        for k in (0..n).rev() {
            lever[k] = 0.5 * spec.segment_mass[k] + tail;
            tail += spec.segment_mass[k];
        }
        Ok(Self {
            spec,
            seg,
            rest_turn,
            lever,
            options: SolverOptions::default(),
        })
    }

    pub fn with_options(mut self, options: SolverOptions) -> Self {
        self.options = options;
        self
    }

    pub fn spec(&self) -> &RodSpec {
        &self.spec
    }

    /// Natural (stress-free) turning angle per joint.
    pub fn rest_turning(&self) -> f64 {
        -self.rest_turn[0]
    }

    fn boundary(&self, p1: &Vec3, p2: &Vec3) -> Result<Boundary, RodError> {
        let r = p2 - p1;
        let dist = r.norm();
        if dist >= self.spec.curve_length - EPS_GEOM {
            return Err(RodError::TautRod {
                distance: dist,
                length: self.spec.curve_length,
            });
        }
        let frame = plane_frame(&r)?;
        let x_axis = frame.x_axis();
        Ok(Boundary {
            x_axis,
            target: Vector2::new(r.dot(&x_axis), r.z),
            z1: p1.z,
        })
    }

    fn energy(&self, th: &[f64], z1: f64) -> f64 {
        let mut e = 0.0;
        for j in 1..th.len() {
            let s = th[j] - th[j - 1] - self.rest_turn[j - 1];
            e += 0.5 * self.spec.joint_stiffness[j - 1] * s * s;
        }
        let grav: f64 = th.iter().zip(&self.lever).map(|(t, w)| w * t.sin()).sum();
        e + GRAVITY * (self.spec.total_mass() * z1 + self.seg * grav)
    }

    fn gradient(&self, th: &[f64]) -> DVector<f64> {
        let n = th.len();
        let mut g = DVector::zeros(n);
        for j in 1..n {
            let m = self.spec.joint_stiffness[j - 1] * (th[j] - th[j - 1] - self.rest_turn[j - 1]);
            g[j] += m;
            g[j - 1] -= m;
        }
        for k in 0..n {
            g[k] += GRAVITY * self.seg * self.lever[k] * th[k].cos();
        }
        g
    }

    fn closure(&self, th: &[f64], target: &Vector2<f64>) -> Vector2<f64> {
        let (mut cx, mut cz) = (0.0, 0.0);
        for t in th {
            cx += t.cos();
            cz += t.sin();
        }
        Vector2::new(self.seg * cx, self.seg * cz) - target
    }

    fn jacobian(&self, th: &[f64]) -> DMatrix<f64> {
        let n = th.len();
        DMatrix::from_fn(2, n, |i, k| {
            if i == 0 {
                -self.seg * th[k].sin()
            } else {
                self.seg * th[k].cos()
            }
        })
    }

    /// Hessian of the Lagrangian `E + μᵀc`.
    fn lagrangian_hessian(&self, th: &[f64], mu: &Vector2<f64>) -> DMatrix<f64> {
        let n = th.len();
        let mut h = DMatrix::zeros(n, n);
        for j in 1..n {
            let k = self.spec.joint_stiffness[j - 1];
            h[(j, j)] += k;
            h[(j - 1, j - 1)] += k;
            h[(j, j - 1)] -= k;
            h[(j - 1, j)] -= k;
        }
        for k in 0..n {
            let (s, c) = th[k].sin_cos();
            h[(k, k)] += -GRAVITY * self.seg * self.lever[k] * s - self.seg * (mu.x * c + mu.y * s);
        }
        h
    }

    /// Least-squares multipliers: minimize `‖g + Jᵀμ‖`.
    fn ls_multipliers(g: &DVector<f64>, jac: &DMatrix<f64>) -> Vector2<f64> {
        let jjt = jac * jac.transpose();
        let rhs = -(jac * g);
        let m = Matrix2::new(jjt[(0, 0)], jjt[(0, 1)], jjt[(1, 0)], jjt[(1, 1)]);
        m.try_inverse()
            .map(|inv| inv * Vector2::new(rhs[0], rhs[1]))
            .unwrap_or_else(Vector2::zeros)
    }

    /// Checks positive definiteness of `H` on the null space of `J` using a
    /// variable-reduction basis.
    fn reduced_positive_definite(h: &DMatrix<f64>, jac: &DMatrix<f64>) -> bool {
        let n = h.nrows();
        // Basic pair with the best-conditioned 2×2 block.
        let (mut bi, mut bj, mut best) = (0, 1, -1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                let det = (jac[(0, i)] * jac[(1, j)] - jac[(0, j)] * jac[(1, i)]).abs();
                if det > best {
                    best = det;
                    bi = i;
                    bj = j;
                }
            }
        }
        let b = Matrix2::new(jac[(0, bi)], jac[(0, bj)], jac[(1, bi)], jac[(1, bj)]);
        let Some(binv) = b.try_inverse() else {
            return false;
        };
        let free: Vec<usize> = (0..n).filter(|&k| k != bi && k != bj).collect();
        let mut z = DMatrix::zeros(n, free.len());
        for (c, &q) in free.iter().enumerate() {
            let w = binv * Vector2::new(jac[(0, q)], jac[(1, q)]);
            z[(q, c)] = 1.0;
            z[(bi, c)] = -w.x;
            z[(bj, c)] = -w.y;
        }
        let reduced = z.transpose() * h * &z;
        reduced.cholesky().is_some()
    }

    /// Polygonal arc through the boundary, bowing downward.
    fn arc_guess(&self, target: &Vector2<f64>) -> Vec<f64> {
        let n = self.spec.segments();
        let chord = target.norm();
        let delta = turning_for_chord(n, self.seg, chord);
        let psi = target.y.atan2(target.x);
        (0..n)
            .map(|j| psi + (0.5 * (n as f64 - 1.0) - j as f64) * delta)
            .collect()
    }

    fn merit(&self, th: &[f64], b: &Boundary, rho: f64) -> f64 {
        let c = self.closure(th, &b.target);
        self.energy(th, b.z1) + rho * (c.x.abs() + c.y.abs())
    }

    /// Local minimizer of the elastica energy with both endpoints pinned.
    pub fn solve_equilibrium(
        &self,
        p1: &Vec3,
        p2: &Vec3,
        warm_start: Option<&RodConfig>,
    ) -> Result<RodConfig, RodError> {
        let b = self.boundary(p1, p2)?;
        let n = self.spec.segments();
        let mut th: Vec<f64> = match warm_start {
            Some(w) if w.angles.len() == n => w.angles.clone(),
            _ => self.arc_guess(&b.target),
        };
        let opts = self.options;
        let mut rho = 0.0_f64;
        let mut residual = f64::INFINITY;

        for iter in 0..=opts.max_iterations {
            let g = self.gradient(&th);
            let jac = self.jacobian(&th);
            let c = self.closure(&th, &b.target);
            let mu = Self::ls_multipliers(&g, &jac);
            residual = (&g + jac.transpose() * mu).norm();
            if residual <= opts.gradient_tol && c.amax() <= opts.closure_tol {
                return Ok(RodConfig {
                    energy: self.energy(&th, b.z1),
                    angles: th,
                    multipliers: [mu.x, mu.y],
                    p1: *p1,
                    p2: *p2,
                    residual,
                    iterations: iter,
                });
            }
            if iter == opts.max_iterations {
                break;
            }

            let mut h = self.lagrangian_hessian(&th, &mu);
            let scale = h.diagonal().amax().max(1e-12);
            let mut shift = 0.0;
            while !Self::reduced_positive_definite(&h, &jac) {
                let next = if shift == 0.0 { 1e-8 * scale } else { 10.0 * shift };
                for k in 0..n {
                    h[(k, k)] += next - shift;
                }
                shift = next;
                if shift > 1e12 * scale {
                    return Err(RodError::NoConvergence {
                        iterations: iter,
                        residual,
                    });
                }
            }

            let mut kkt = DMatrix::zeros(n + 2, n + 2);
            kkt.view_mut((0, 0), (n, n)).copy_from(&h);
            kkt.view_mut((0, n), (n, 2)).copy_from(&jac.transpose());
            kkt.view_mut((n, 0), (2, n)).copy_from(&jac);
            let mut rhs = DVector::zeros(n + 2);
            rhs.rows_mut(0, n).copy_from(&(-&g));
            rhs[n] = -c.x;
            rhs[n + 1] = -c.y;
            let Some(sol) = kkt.lu().solve(&rhs) else {
                return Err(RodError::NoConvergence {
                    iterations: iter,
                    residual,
                });
            };
            let step = sol.rows(0, n).into_owned();
            let mu_next = Vector2::new(sol[n], sol[n + 1]);

            rho = rho.max(2.0 * mu_next.amax() + 1e-6);
            let m0 = self.merit(&th, &b, rho);
            let slope = g.dot(&step) - rho * (c.x.abs() + c.y.abs());
            let mut alpha = 1.0;
            let mut accepted = false;
            let mut trial = th.clone();
            for _ in 0..40 {
                for k in 0..n {
                    trial[k] = th[k] + alpha * step[k];
                }
                let m1 = self.merit(&trial, &b, rho);
                let slack = 1e-14 * (1.0 + m0.abs());
                if m1 <= m0 + 1e-4 * alpha * slope.min(0.0) + slack {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                // Near a solution, rounding can defeat the merit test; take
                // the full step if it improves the optimality residual.
                for k in 0..n {
                    trial[k] = th[k] + step[k];
                }
                let g1 = self.gradient(&trial);
                let j1 = self.jacobian(&trial);
                let r1 = (&g1 + j1.transpose() * Self::ls_multipliers(&g1, &j1)).norm();
                if r1 >= residual {
                    return Err(RodError::NoConvergence {
                        iterations: iter,
                        residual,
                    });
                }
            }
            th.copy_from_slice(&trial);
        }
        Err(RodError::NoConvergence {
            iterations: opts.max_iterations,
            residual,
        })
    }

    /// Endpoint forces from the closure multipliers: `f_i = -∂E*/∂p_i`.
    pub fn endpoint_reactions(&self, config: &RodConfig) -> Result<RodReaction, RodError> {
        let b = self.boundary(&config.p1, &config.p2)?;
        let [mx, mz] = config.multipliers;
        let f2 = b.x_axis * mx + Vec3::z() * mz;
        let f1 = -f2 - Vec3::z() * (GRAVITY * self.spec.total_mass());
        Ok(RodReaction {
            f1,
            f2,
            energy: config.energy,
        })
    }

    /// Constrained minimum energy `E*(p1, p2)` from a cold start.
    pub fn min_energy(&self, p1: &Vec3, p2: &Vec3, warm: Option<&RodConfig>) -> Result<f64, RodError> {
        Ok(self.solve_equilibrium(p1, p2, warm)?.energy)
    }
}

pub fn solve_equilibrium(
    spec: &RodSpec,
    p1: &Vec3,
    p2: &Vec3,
    warm_start: Option<&RodConfig>,
) -> Result<RodConfig, RodError> {
    Elastica::new(spec.clone())?.solve_equilibrium(p1, p2, warm_start)
}

pub fn endpoint_reactions(spec: &RodSpec, config: &RodConfig) -> Result<RodReaction, RodError> {
    Elastica::new(spec.clone())?.endpoint_reactions(config)
}

/// Stateful solver for one simulated strip: keeps the last equilibrium as a
/// warm start and adds the axial rate damping to the elastic reaction.
#[derive(Debug, Clone)]
pub struct RodSolver {
    model: Elastica,
    cache: Option<RodConfig>,
}

impl RodSolver {
    pub fn new(spec: RodSpec) -> Result<Self, RodError> {
        Ok(Self {
            model: Elastica::new(spec)?,
            cache: None,
        })
    }

    pub fn model(&self) -> &Elastica {
        &self.model
    }

    pub fn last_config(&self) -> Option<&RodConfig> {
        self.cache.as_ref()
    }

    pub fn reset(&mut self) {
        self.cache = None;
    }

    pub fn solve(&mut self, p1: &Vec3, p2: &Vec3) -> Result<&RodConfig, RodError> {
        let cfg = match self.model.solve_equilibrium(p1, p2, self.cache.as_ref()) {
            Ok(c) => c,
            // A stale warm start can sit near a different branch; retry cold.
            Err(RodError::NoConvergence { .. }) if self.cache.is_some() => {
                self.model.solve_equilibrium(p1, p2, None)?
            }
            Err(e) => return Err(e),
        };
        Ok(self.cache.insert(cfg))
    }

    /// Total force on each vehicle, including axial damping `-c (ṙ·r̂) r̂`
    /// on vehicle 2 and its opposite on vehicle 1.
    pub fn forces(&mut self, p1: &Vec3, p2: &Vec3, v1: &Vec3, v2: &Vec3) -> Result<RodReaction, RodError> {
        let cfg = self.solve(p1, p2)?.clone();
        let mut reaction = self.model.endpoint_reactions(&cfg)?;
        let r = p2 - p1;
        let axis = r / r.norm();
        let damp = axis * (self.model.spec().rate_damping * (v2 - v1).dot(&axis));
        reaction.f1 += damp;
        reaction.f2 -= damp;
        Ok(reaction)
    }
}
