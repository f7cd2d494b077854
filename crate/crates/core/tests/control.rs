use approx::assert_abs_diff_eq;
use bendlift::control::*;
use bendlift::sim::VehicleState;
use bendlift::trajectory::TrajectoryPoint;
use bendlift::*;

const M: f64 = 0.135;

fn gains() -> Gains {
    Gains {
        k_p: 8.0,
        k_d: 1.0,
        k_i: 0.5,
        u_max: 2.0 * M * GRAVITY,
        i_max: 1.0,
    }
}

fn at(p: Vec3) -> VehicleState {
    VehicleState::at_rest(p, M)
}

#[test]
fn hover_when_on_reference() {
    let r = TrajectoryPoint {
        p: Vec3::new(0.0, 0.0, 1.0),
        ..Default::default()
    };
    let c = adaptive_control(&at(r.p), &r, &Vec3::zeros(), &gains(), M);
    assert_abs_diff_eq!(c.u, Vec3::new(0.0, 0.0, M * GRAVITY), epsilon = 1e-15);
    assert!(!c.saturated);
}

#[test]
fn proportional_and_compensation_terms() {
    let r = TrajectoryPoint {
        p: Vec3::new(0.1, 0.0, 1.0),
        ..Default::default()
    };
    let s = at(Vec3::new(0.0, 0.0, 1.0));
    let c = adaptive_control(&s, &r, &Vec3::zeros(), &gains(), M);
    assert_abs_diff_eq!(
        c.u - Vec3::z() * (M * GRAVITY),
        Vec3::new(0.8, 0.0, 0.0),
        epsilon = 1e-12
    );
    // The estimated object force is cancelled.
    let f = Vec3::new(0.1, -0.2, -0.15);
    let c2 = adaptive_control(&s, &r, &f, &gains(), M);
    assert_abs_diff_eq!(c2.u, c.u - f, epsilon = 1e-15);
    assert_eq!(c2.f_hat_o, f);
}

#[test]
fn saturation_preserves_direction() {
    let r = TrajectoryPoint {
        p: Vec3::new(10.0, 0.0, 1.0),
        ..Default::default()
    };
    let c = adaptive_control(&at(Vec3::new(0.0, 0.0, 1.0)), &r, &Vec3::zeros(), &gains(), M);
    assert!(c.saturated);
    assert_abs_diff_eq!(c.u.norm(), gains().u_max, epsilon = 1e-12);
    let raw = Vec3::new(80.0, 0.0, M * GRAVITY);
    assert_abs_diff_eq!(c.u.normalize(), raw.normalize(), epsilon = 1e-12);
}

#[test]
fn pid_integral_stays_zero_on_reference_and_clamps() {
    let r = TrajectoryPoint {
        p: Vec3::new(0.0, 0.0, 1.0),
        ..Default::default()
    };
    let mut i = Vec3::zeros();
    for _ in 0..1000 {
        let (c, next) = pid_control(&at(r.p), &r, &i, &gains(), M, 0.01);
        i = next;
        assert_abs_diff_eq!(c.u, Vec3::z() * (M * GRAVITY), epsilon = 1e-15);
    }
    assert_eq!(i, Vec3::zeros());
    let off = at(Vec3::new(-1.0, 2.0, 1.0));
    for _ in 0..1000 {
        i = pid_control(&off, &r, &i, &gains(), M, 0.01).1;
    }
    assert_eq!(i, Vec3::new(1.0, -1.0, 0.0));
}

/// PI loop against a constant disturbance on a double integrator: the
/// integral term converges to the disturbance and the error to zero.
#[test]
fn pid_rejects_constant_disturbance() {
    let g = Gains {
        k_p: 3.0,
        k_d: 0.9,
        k_i: 1.0,
        ..gains()
    };
    let d = Vec3::new(-0.2, 0.1, -0.3);
    let r = TrajectoryPoint {
        p: Vec3::new(0.0, 0.0, 1.0),
        ..Default::default()
    };
    let mut s = at(r.p);
    let mut i = Vec3::zeros();
    let dt = 0.001;
    for _ in 0..60_000 {
        let (c, next) = pid_control(&s, &r, &i, &g, M, dt);
        i = next;
        let acc = (c.u + d) / M - Vec3::z() * GRAVITY;
        s.v += acc * dt;
        s.p += s.v * dt;
    }
    assert_abs_diff_eq!(i * g.k_i, -d, epsilon = 1e-4);
    assert!((s.p - r.p).norm() < 1e-5);
}

#[test]
fn gain_validation() {
    assert!(gains().validate_adaptive(M).is_ok());
    let err = Gains { k_d: -1.0, ..gains() }.validate(M).unwrap_err();
    assert!(err.to_string().contains("k_d"));
    assert!(Gains { k_d: 0.2, ..gains() }.validate(M).is_ok());
    assert!(Gains { k_d: 0.2, ..gains() }.validate_adaptive(M).is_err());
    assert!(Gains { u_max: 1.0, ..gains() }.validate(M).is_err());
}

#[test]
fn thrust_lag_approaches_command() {
    let mut lag = ThrustLag::new(0.03);
    let a = Vec3::new(0.0, 0.0, 1.0);
    assert_eq!(lag.apply(&a, 0.001), a);
    let b = Vec3::new(1.0, 0.0, 1.0);
    let mut out = a;
    for _ in 0..30 {
        out = lag.apply(&b, 0.001);
    }
    // One time constant: 1 − e⁻¹ of the step.
    assert_abs_diff_eq!(out.x, 1.0 - (-1.0f64).exp(), epsilon = 1e-9);
}
