use approx::assert_abs_diff_eq;
use bendlift::geom::*;
use bendlift::*;
use proptest::prelude::*;
use std::f64::consts::PI;

/// Gram-Schmidt construction of the same frame, used as an oracle.
fn gram_schmidt_frame(r: &Vec3) -> (Vec3, Vec3, Vec3) {
    let z = Vec3::z();
    // Horizontal direction inside the plane, orthogonalized against z.
    let h = r - z * r.dot(&z);
    let h = h / h.norm();
    // x_p is anti-parallel to the horizontal projection of r.
    let x = -h;
    let y = z.cross(&x);
    (x, y, z)
}

#[test]
fn plane_frame_axis_aligned() {
    let f = plane_frame(&Vec3::new(1.0, 0.0, 0.0)).unwrap();
    assert_abs_diff_eq!(f.y_axis(), Vec3::new(0.0, -1.0, 0.0), epsilon = 1e-15);
    assert_abs_diff_eq!(f.x_axis(), Vec3::new(-1.0, 0.0, 0.0), epsilon = 1e-15);
    assert_abs_diff_eq!(f.z_axis(), Vec3::z(), epsilon = 0.0);

    let f = plane_frame(&Vec3::new(0.0, 1.0, 0.0)).unwrap();
    assert_abs_diff_eq!(f.y_axis(), Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
    assert_abs_diff_eq!(f.x_axis(), Vec3::new(0.0, -1.0, 0.0), epsilon = 1e-15);
}

#[test]
fn plane_frame_generic_matches_gram_schmidt() {
    let r = Vec3::new(1.0, 1.0, 0.5);
    let f = plane_frame(&r).unwrap();
    let (x, y, z) = gram_schmidt_frame(&r);
    assert_abs_diff_eq!(f.x_axis(), x, epsilon = 1e-12);
    assert_abs_diff_eq!(f.y_axis(), y, epsilon = 1e-12);
    assert_abs_diff_eq!(f.z_axis(), z, epsilon = 1e-12);
    assert_abs_diff_eq!(f.y_axis().dot(&r), 0.0, epsilon = 1e-12);
    let (defect, det) = rotation_defect(&f.rotation);
    assert!(defect < 1e-9);
    assert_abs_diff_eq!(det, 1.0, epsilon = 1e-9);
}

#[test]
fn vertical_displacement_is_degenerate() {
    let err = plane_frame(&Vec3::new(0.0, 0.0, 1.0)).unwrap_err();
    assert!(matches!(err, GeomError::DegenerateDisplacement(_)));
    let err = displacement_frame(&Vec3::zeros(), &Vec3::new(1e-8, 0.0, 1.0)).unwrap_err();
    assert!(matches!(err, GeomError::DegenerateDisplacement(_)));
}

#[test]
fn coincident_endpoints() {
    let p = Vec3::new(0.3, 0.2, 1.0);
    let err = displacement_frame(&p, &p).unwrap_err();
    assert!(matches!(err, GeomError::CoincidentEndpoints(_)));
}

#[test]
fn projection_examples() {
    let r = Vec3::new(0.4, -0.3, 0.2);
    let f = plane_frame(&r).unwrap();
    assert_abs_diff_eq!(project_to_plane(&f, &r).y, 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(project_to_plane(&f, &Vec3::z()), Vec3::z(), epsilon = 1e-15);
}

#[test]
fn displacement_frame_level_along_x() {
    let d = displacement_frame(&Vec3::zeros(), &Vec3::new(1.0, 0.0, 0.0)).unwrap();
    let m = d.rotation.matrix();
    assert_abs_diff_eq!(m.column(0).into_owned(), Vec3::x(), epsilon = 1e-15);
    assert_abs_diff_eq!(m.column(1).into_owned(), -Vec3::y(), epsilon = 1e-15);
    assert_abs_diff_eq!(m.column(2).into_owned(), -Vec3::z(), epsilon = 1e-15);
    assert_abs_diff_eq!(d.alpha, PI, epsilon = 1e-15);
}

#[test]
fn quarter_turn_matches_general_rodrigues() {
    let axis = Vec3::new(0.3, -0.5, 0.8).normalize();
    let v = Vec3::new(-0.2, 0.9, 0.4);
    let theta = -PI / 2.0;
    let general = v * theta.cos() + axis.cross(&v) * theta.sin() + axis * axis.dot(&v) * (1.0 - theta.cos());
    assert_abs_diff_eq!(rotate_minus_quarter_turn(&axis, &v), general, epsilon = 1e-15);
}

#[test]
fn leaning_angle_is_angularly_continuous() {
    // α wraps at ±π when r crosses the horizontal; its direction
    // (cos α, sin α) must still move continuously along the path.
    let mut prev: Option<(f64, f64)> = None;
    for k in 0..=400 {
        let s = -1.0 + 2.0 * k as f64 / 400.0;
        let p2 = Vec3::new(0.8 * (1.0 + 0.2 * s), 0.3 * s, 0.25 * s);
        let d = displacement_frame(&Vec3::zeros(), &p2).unwrap();
        let c = (d.alpha.cos(), d.alpha.sin());
        if let Some(p) = prev {
            let jump = ((c.0 - p.0).powi(2) + (c.1 - p.1).powi(2)).sqrt();
            assert!(jump < 0.01, "jump {jump} at s = {s}");
        }
        assert!(d.alpha > -PI && d.alpha <= PI);
        prev = Some(c);
    }
}

fn arb_vec() -> impl Strategy<Value = Vec3> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

proptest! {
    #[test]
    fn plane_frame_is_proper_rotation(r in arb_vec(), v in arb_vec()) {
        prop_assume!(r.cross(&Vec3::z()).norm() > 1e-3);
        let f = plane_frame(&r).unwrap();
        let (defect, det) = rotation_defect(&f.rotation);
        prop_assert!(defect < 1e-9);
        prop_assert!((det - 1.0).abs() < 1e-9);
        prop_assert!(f.y_axis().dot(&r).abs() < 1e-9);
        prop_assert!(f.y_axis().dot(&Vec3::z()).abs() < 1e-9);
        prop_assert_eq!(f.z_axis(), Vec3::z());
        let back = f.rotation * project_to_plane(&f, &v);
        prop_assert!((back - v).norm() < 1e-9);
    }

    #[test]
    fn displacement_frame_is_proper_rotation(p1 in arb_vec(), p2 in arb_vec()) {
        prop_assume!((p2 - p1).cross(&Vec3::z()).norm() > 1e-3);
        let d = displacement_frame(&p1, &p2).unwrap();
        let (defect, det) = rotation_defect(&d.rotation);
        prop_assert!(defect < 1e-9);
        prop_assert!((det - 1.0).abs() < 1e-9);
        let m = d.rotation.matrix();
        prop_assert!(m.column(0).dot(&m.column(2)).abs() < 1e-9);
        let plane = plane_frame(&(p2 - p1)).unwrap();
        prop_assert!((m.column(1).into_owned() - plane.y_axis()).norm() < 1e-12);
        prop_assert!(d.alpha > -PI && d.alpha <= PI);
    }
}
