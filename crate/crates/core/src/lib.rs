//! # bendlift
//!
//! Desk-scale simulator and controller library for two aerial vehicles
//! carrying a bendable strip between them.
//!
//! The vehicles are force-actuated point masses. The strip is an unknown
//! load to the controllers: they see only endpoint positions, velocities,
//! commanded forces and (noisy) accelerations. Ground truth comes from a
//! quasi-static planar elastica solved at every physics step.
//!
//! ## Modules
//!
//! - [`geom`]: bending-plane and displacement frames, leaning angle
//! - [`rod`]: discrete elastica equilibrium and endpoint reactions
//! - [`estimator`]: feature maps, force observer, recursive least squares
//! - [`control`]: adaptive tracking law and PID baseline
//! - [`trajectory`]: reference generators for the three scenarios
//! - [`sim`]: fixed-step closed loop, trials, batches, Lyapunov traces
//! - [`stats`]: summary statistics used by reports and comparisons
//! - [`validation`]: property checks against a synthetic linear force

pub mod control;
pub mod estimator;
pub mod geom;
pub mod rod;
pub mod sim;
pub mod stats;
pub mod trajectory;
pub mod validation;

use nalgebra::{Matrix3, Rotation3, Vector3};

/// 3-vector in world or frame coordinates (m, m/s, m/s², N by context).
pub type Vec3 = Vector3<f64>;

/// Rotation whose columns are the basis vectors of a frame in world coordinates.
pub type Rot3 = Rotation3<f64>;

/// Plain 3×3 matrix.
pub type Mat3 = Matrix3<f64>;

/// Gravitational acceleration [m/s²].
pub const GRAVITY: f64 = 9.81;

/// World vertical (z up).
pub fn world_z() -> Vec3 {
    Vec3::z()
}
