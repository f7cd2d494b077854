use approx::assert_abs_diff_eq;
use bendlift::estimator::{EstimatorState, FeatureKind};
use bendlift::sim::*;
use bendlift::trajectory::VaryingDistanceParams;
use bendlift::trajectory::{ScenarioSpec, TrajectoryError};
use bendlift::*;

const M: f64 = 0.135;

#[test]
fn hover_is_stationary() {
    let p = Vec3::new(0.0, 0.0, 1.0);
    let mut w = World::new(
        [VehicleState::at_rest(p, M), VehicleState::at_rest(p + Vec3::x(), M)],
        ObjectModel::Free,
    )
    .unwrap();
    let hover = Vec3::z() * (M * GRAVITY);
    w.set_command([hover, hover]);
    for _ in 0..10_000 {
        w.step(1e-3).unwrap();
    }
    assert!((w.vehicles[0].p - p).norm() < 1e-9);
    assert!(w.vehicles[0].v.norm() < 1e-9);
}

#[test]
fn constant_push_accelerates() {
    let p = Vec3::new(0.0, 0.0, 1.0);
    let mut w = World::new(
        [VehicleState::at_rest(p, M), VehicleState::at_rest(p + Vec3::x(), M)],
        ObjectModel::Free,
    )
    .unwrap();
    let u = Vec3::z() * (M * GRAVITY) + Vec3::new(0.135, 0.0, 0.0);
    w.set_command([u, u]);
    for _ in 0..1000 {
        w.step(1e-3).unwrap();
    }
    assert_abs_diff_eq!(w.vehicles[0].v.x, 1.0, epsilon = 1e-9);
    // Semi-implicit Euler overshoots the exact ½at² by ½a·dt·T.
    assert_abs_diff_eq!(w.vehicles[0].p.x, 0.5 + 0.5e-3, epsilon = 1e-9);
}

#[test]
fn divergence_is_detected() {
    let p = Vec3::new(0.0, 0.0, 1.0);
    let mut w = World::new(
        [VehicleState::at_rest(p, M), VehicleState::at_rest(p + Vec3::x(), M)],
        ObjectModel::Free,
    )
    .unwrap();
    w.set_command([Vec3::new(100.0, 0.0, 0.0); 2]);
    let mut err = None;
    for _ in 0..100_000 {
        if let Err(e) = w.step(1e-3) {
            err = Some(e);
            break;
        }
    }
    assert!(matches!(err, Some(SimError::DivergenceDetected { .. })));
}

#[test]
fn config_checks() {
    let mut c = SimConfig::default();
    assert!(c.validate().is_ok());
    c.dt_control = 0.0105;
    assert!(matches!(c.validate(), Err(SimError::Config(_))));
    let mut c = SimConfig::default();
    c.gains.adaptive.k_d = -1.0;
    let msg = c.validate().unwrap_err().to_string();
    assert!(msg.contains("k_d"), "{msg}");
    let mut c = SimConfig::default();
    if let ScenarioSpec::VaryingDistance(p) = &mut c.scenario {
        p.distance_max = 1.3;
    }
    assert!(matches!(
        c.validate(),
        Err(SimError::Trajectory(TrajectoryError::DistanceBoundViolation { .. }))
    ));
}

#[test]
fn zero_duration_trial_is_empty() {
    let mut c = SimConfig::default();
    c.scenario = ScenarioSpec::VaryingDistance(VaryingDistanceParams {
        duration: 0.0,
        ..Default::default()
    });
    let cfg = c.estimator.config(FeatureKind::PhysicalInsight);
    let start = [EstimatorState::new(&cfg), EstimatorState::new(&cfg)];
    let (rep, est) = run_trial(&c, Method::AdaptivePhib, 1, Some(start.clone())).unwrap();
    assert!(rep.records.is_empty());
    assert_eq!(est, start);
    assert!(rep.summary.success);
}

#[test]
fn method_labels_round_trip() {
    for m in Method::ALL {
        assert_eq!(Method::parse(m.label()), Some(m));
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, format!("\"{}\"", m.label()));
    }
    let g = GainSet::defaults(M);
    assert_eq!(
        g.for_method(Method::PidHigh).k_i,
        2.0 * g.for_method(Method::PidLow).k_i
    );
}

#[test]
fn lyapunov_needs_validation_mode() {
    let mut c = SimConfig::default();
    c.scenario.set_duration(0.1);
    let (rep, _) = run_trial(&c, Method::AdaptivePhi, 1, None).unwrap();
    assert!(matches!(lyapunov_trace(&rep), Err(SimError::UnavailableGroundTruth)));
}
