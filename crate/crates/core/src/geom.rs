//! Frames derived from the endpoint displacement `r = p2 - p1`.
//!
//! The bending plane is vertical and contains `r`. Its frame is
//! `[x_p, y_p, z]` with `y_p = (r × z)/|r × z|` and `x_p = y_p × z`.
//! With this convention `x_p` points opposite to the horizontal part of `r`,
//! so a level displacement along +x has in-plane coordinates `(-|r|, 0, 0)`
//! and leaning angle `π`.
//!
//! Vehicle 1 is always the reference endpoint; swapping the endpoints flips
//! `y_p`.

use crate::{world_z, Mat3, Rot3, Vec3};
use thiserror::Error;

/// Degeneracy threshold for displacement-based frames [m].
pub const EPS_GEOM: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeomError {
    /// `r` is (nearly) vertical, so the plane normal is undefined.
    #[error("displacement is vertical (|r × z| = {0:.3e}); bending plane undefined")]
    DegenerateDisplacement(f64),
    #[error("endpoints coincide (|r| = {0:.3e})")]
    CoincidentEndpoints(f64),
}

/// Orientation of the vertical bending plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneFrame {
    pub rotation: Rot3,
    pub valid: bool,
}

impl PlaneFrame {
    pub fn x_axis(&self) -> Vec3 {
        self.rotation.matrix().column(0).into_owned()
    }

    /// Plane normal `y_p`.
    pub fn y_axis(&self) -> Vec3 {
        self.rotation.matrix().column(1).into_owned()
    }

    pub fn z_axis(&self) -> Vec3 {
        self.rotation.matrix().column(2).into_owned()
    }
}

/// Frame `{O}`: x along `r`, y the plane normal, origin at vehicle 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementFrame {
    pub rotation: Rot3,
    pub origin: Vec3,
    /// Leaning angle of `r` measured in the plane frame, in (-π, π].
    pub alpha: f64,
}

fn rot_from_columns(x: Vec3, y: Vec3, z: Vec3) -> Rot3 {
    Rot3::from_matrix_unchecked(Mat3::from_columns(&[x, y, z]))
}

pub fn plane_frame(r: &Vec3) -> Result<PlaneFrame, GeomError> {
    let z = world_z();
    let n = r.cross(&z);
    let norm = n.norm();
    if norm <= EPS_GEOM {
        return Err(GeomError::DegenerateDisplacement(norm));
    }
    let y = n / norm;
    let x = y.cross(&z);
    Ok(PlaneFrame {
        rotation: rot_from_columns(x, y, z),
        valid: true,
    })
}

/// Coordinates of `v` in the plane frame, `R_pᵀ v`.
pub fn project_to_plane(frame: &PlaneFrame, v: &Vec3) -> Vec3 {
    frame.rotation.inverse_transform_vector(v)
}

/// Rotation of `v` by -π/2 about the unit `axis` (Rodrigues, closed form).
///
/// With `cos = 0` and `sin = -1` the formula reduces to
/// `v × axis + axis (axis·v)`.
pub fn rotate_minus_quarter_turn(axis: &Vec3, v: &Vec3) -> Vec3 {
    v.cross(axis) + axis * axis.dot(v)
}

/// Leaning angle of `r` in the plane frame, `atan2(r·z_p, r·x_p)`.
pub fn leaning_angle(frame: &PlaneFrame, r: &Vec3) -> f64 {
    let a = r.dot(&frame.z_axis()).atan2(r.dot(&frame.x_axis()));
    // atan2 already lands in [-π, π]; fold -π onto π.
    if a <= -std::f64::consts::PI {
        a + 2.0 * std::f64::consts::PI
    } else {
        a
    }
}

pub fn displacement_frame(p1: &Vec3, p2: &Vec3) -> Result<DisplacementFrame, GeomError> {
    let r = p2 - p1;
    let len = r.norm();
    if len <= EPS_GEOM {
        return Err(GeomError::CoincidentEndpoints(len));
    }
    let plane = plane_frame(&r)?;
    let y = plane.y_axis();
    let x_r = r / len;
    let z_r = rotate_minus_quarter_turn(&y, &x_r);
    Ok(DisplacementFrame {
        rotation: rot_from_columns(x_r, y, z_r),
        origin: *p1,
        alpha: leaning_angle(&plane, &r),
    })
}

/// Orthonormality defect `‖RᵀR − I‖_max` and determinant, for invariant checks.
pub fn rotation_defect(rot: &Rot3) -> (f64, f64) {
    let m = rot.matrix();
    let defect = (m.transpose() * m - Mat3::identity()).abs().max();
    (defect, m.determinant())
}
