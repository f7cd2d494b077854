use approx::assert_abs_diff_eq;
use bendlift::estimator::*;
use bendlift::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use std::f64::consts::PI;

fn independent_plane(r: [f64; 2], rd: [f64; 2], n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for x in [r[0], r[1], rd[0], rd[1]] {
        for k in (1..=n).rev() {
            out.push(x.powi(k as i32));
        }
    }
    out.push(1.0);
    out
}

#[test]
fn plane_features_examples() {
    let f = features_plane(&Vec3::zeros(), &Vec3::zeros(), 2);
    assert_eq!(f.values.as_slice(), &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    let f = features_plane(&Vec3::new(2.0, 0.0, 1.0), &Vec3::zeros(), 2);
    assert_eq!(f.values.as_slice(), &[4.0, 2.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    let f = features_plane(&Vec3::new(-1.0, 7.0, 0.5), &Vec3::new(0.1, -3.0, 0.0), 3);
    let oracle = independent_plane([-1.0, 0.5], [0.1, 0.0], 3);
    assert_eq!(f.len(), 13);
    for (a, b) in f.values.iter().zip(&oracle) {
        assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
    }
}

#[test]
fn physical_features_examples() {
    let f = features_physical(0.0, 0.0, 0.0, 2);
    assert_eq!(f.values.as_slice(), &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
    let f = features_physical(1.0, 0.0, PI / 2.0, 1);
    let want = [1.0, 0.0, 0.0, 1.0, 1.0];
    for (a, b) in f.values.iter().zip(want) {
        assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
    }
    let (r, rd, a) = (0.73, -0.21, 2.4);
    let f = features_physical(r, rd, a, 3);
    let oracle = [
        r * r * r,
        r * r,
        r,
        rd * rd * rd,
        rd * rd,
        rd,
        (3.0 * a).cos(),
        (2.0 * a).cos(),
        a.cos(),
        (3.0 * a).sin(),
        (2.0 * a).sin(),
        a.sin(),
        1.0,
    ];
    for (x, y) in f.values.iter().zip(oracle) {
        assert_abs_diff_eq!(*x, y, epsilon = 1e-14);
    }
}

#[test]
fn observer_examples() {
    let m = 0.135;
    let hover = Vec3::z() * (m * GRAVITY);
    assert_abs_diff_eq!(observe_force(m, &Vec3::zeros(), &hover), Vec3::zeros(), epsilon = 1e-15);
    let f = observe_force(m, &Vec3::new(1.0, 0.0, 0.0), &hover);
    assert_abs_diff_eq!(f, Vec3::new(0.135, 0.0, 0.0), epsilon = 1e-15);
}

#[test]
fn zero_innovation_keeps_weights_and_shrinks_covariance() {
    let cfg = EstimatorConfig {
        order: 1,
        ..EstimatorConfig::new(FeatureKind::PhysicalInsight)
    };
    let mut s = EstimatorState::new(&cfg);
    s.w_hat[(0, 0)] = 0.4;
    let phi = features_physical(0.8, 0.1, 2.0, 1);
    let f = s.frame_estimate(&phi).unwrap();
    let before = s.clone();
    let eps = s.update(&phi, &f, 0.01).unwrap();
    assert_eq!(eps, Vec3::zeros());
    assert_eq!(s.w_hat, before.w_hat);
    let q_before = phi.values.dot(&(&before.p * &phi.values));
    let q_after = phi.values.dot(&(&s.p * &phi.values));
    assert!(q_after < q_before);
}

/// Scalar regression `y = 2x − 1` on each axis, checked against the batch
/// normal equations on the same samples (with the same prior).
#[test]
fn converges_to_batch_least_squares() {
    let cfg = EstimatorConfig {
        order: 1,
        ..EstimatorConfig::new(FeatureKind::PlanePolynomial)
    };
    let dt = 0.01;
    for disc in [Discretization::ForwardEuler, Discretization::Exact] {
        let mut s = EstimatorState::new(&EstimatorConfig {
            discretization: disc,
            ..cfg
        });
        let mut gram = DMatrix::<f64>::identity(5, 5);
        let mut rhs = DMatrix::<f64>::zeros(5, 3);
        for k in 0..500 {
            let x = (0.37 * k as f64).sin() + 0.5 * (1.3 * k as f64).cos();
            let phi = features_plane(&Vec3::new(x, 0.0, 0.0), &Vec3::zeros(), 1);
            let y = 2.0 * x - 1.0;
            let f = Vec3::new(y, 0.5 * y, -y);
            s.update(&phi, &f, dt).unwrap();
            gram += &phi.values * phi.values.transpose() * dt;
            rhs += &phi.values * nalgebra::RowVector3::new(f.x, f.y, f.z) * dt;
        }
        let batch = gram.clone().cholesky().unwrap().solve(&rhs);
        // The prior keeps the unexcited directions at zero in both.
        // Forward Euler differs from the batch solution by O(dt).
        let tol = match disc {
            Discretization::Exact => 1e-9,
            Discretization::ForwardEuler => 1e-2,
        };
        let gap = (&s.w_hat - &batch).amax();
        assert!(gap < tol, "{disc:?}: {gap}");
        let held_out = features_plane(&Vec3::new(0.3, 0.0, 0.0), &Vec3::zeros(), 1);
        let pred = predict_force(&s, &held_out, &Rot3::identity()).unwrap();
        let oracle = batch.tr_mul(&held_out.values);
        assert!((pred.x - oracle[0]).abs() < 1e-2);
    }
}

#[test]
fn constant_features_stall_updates() {
    let cfg = EstimatorConfig {
        order: 1,
        ..EstimatorConfig::new(FeatureKind::PlanePolynomial)
    };
    let mut s = EstimatorState::new(&cfg);
    let phi = features_plane(&Vec3::new(0.6, 0.0, 0.2), &Vec3::zeros(), 1);
    let dt = 0.01;
    let q0 = phi.values.dot(&phi.values);
    let steps = 5000;
    for _ in 0..steps {
        s.update(&phi, &Vec3::new(1.0, 0.0, 0.0), dt).unwrap();
    }
    // Along φ the scalar q = φᵀPφ obeys q⁺ = q − dt q², so q ≈ 1/(1/q0 + k dt).
    let q = phi.values.dot(&(&s.p * &phi.values));
    let closed = 1.0 / (1.0 / q0 + steps as f64 * dt);
    assert!((q - closed).abs() / closed < 0.05, "q {q} vs {closed}");
    assert!((&s.p * &phi.values).norm() < 0.1);
}

#[test]
fn weight_error_energy_drops_by_dt_eps_squared() {
    // Forward Euler satisfies V⁺ = V − dt‖ε‖² exactly when data are linear in φ.
    let cfg = EstimatorConfig {
        order: 2,
        ..EstimatorConfig::new(FeatureKind::PhysicalInsight)
    };
    let mut s = EstimatorState::new(&cfg);
    let truth = DMatrix::from_fn(9, 3, |i, j| ((i * 3 + j) as f64 * 0.7).sin() * 0.3);
    let dt = 0.01;
    for k in 0..400 {
        let t = k as f64 * dt;
        let phi = features_physical(
            0.6 + 0.2 * (1.1 * t).sin(),
            0.2 * (1.1 * t).cos(),
            3.0 + 0.4 * (0.7 * t).sin(),
            2,
        );
        let f = truth.tr_mul(&phi.values);
        let v0 = s.weight_error_energy(&truth);
        let eps = s.update(&phi, &Vec3::new(f[0], f[1], f[2]), dt).unwrap();
        let v1 = s.weight_error_energy(&truth);
        let drop = v0 - v1;
        assert!(v1 <= v0 + 1e-12);
        assert!((drop - dt * eps.norm_squared()).abs() <= 1e-9 + 1e-6 * v0, "k {k}");
    }
}

#[test]
fn kind_mismatch_is_reported() {
    let s = EstimatorState::new(&EstimatorConfig::new(FeatureKind::PlanePolynomial));
    let phi = features_physical(0.5, 0.0, 1.0, 3);
    assert!(matches!(
        rls_step(&s, &phi, &Vec3::zeros(), 0.01),
        Err(EstimatorError::KindMismatch { .. })
    ));
}

#[test]
fn forgetting_without_excitation_blows_up() {
    let cfg = EstimatorConfig {
        order: 1,
        lambda: 0.5,
        ..EstimatorConfig::new(FeatureKind::PlanePolynomial)
    };
    let mut s = EstimatorState::new(&cfg);
    let phi = features_plane(&Vec3::zeros(), &Vec3::zeros(), 1);
    let mut res = Ok(Vec3::zeros());
    for _ in 0..20_000 {
        res = s.update(&phi, &Vec3::zeros(), 0.01);
        if res.is_err() {
            break;
        }
    }
    assert!(matches!(res, Err(EstimatorError::CovarianceBlowup { .. })));
}

#[test]
fn predictions() {
    let s = EstimatorState::new(&EstimatorConfig::new(FeatureKind::PhysicalInsight));
    let phi = features_physical(0.7, 0.1, 3.0, 3);
    assert_eq!(predict_force(&s, &phi, &Rot3::identity()).unwrap(), Vec3::zeros());
    let mut s = s;
    s.w_hat[(12, 0)] = 1.0;
    s.w_hat[(12, 1)] = 2.0;
    s.w_hat[(12, 2)] = 3.0;
    assert_abs_diff_eq!(
        predict_force(&s, &phi, &Rot3::identity()).unwrap(),
        Vec3::new(1.0, 2.0, 3.0),
        epsilon = 1e-15
    );
}

#[test]
fn excitation_metric_examples() {
    let phi = features_plane(&Vec3::new(0.5, 0.0, 0.1), &Vec3::zeros(), 1);
    let window = vec![phi; 50];
    assert_abs_diff_eq!(excitation_metric(&window), 0.0, epsilon = 1e-12);
    let basis: Vec<FeatureVector> = (0..5)
        .map(|i| FeatureVector {
            values: DVector::from_fn(5, |j, _| if i == j { 2.0 } else { 0.0 }),
            kind: FeatureKind::PlanePolynomial,
            order: 1,
        })
        .collect();
    // Each direction carries energy 4 over 5 samples.
    assert_abs_diff_eq!(excitation_metric(&basis), 4.0 / 5.0, epsilon = 1e-12);
}

#[test]
fn equivariance_under_frame_rotation() {
    // Same regression data expressed in two frames: once converged, the
    // world-frame predictions agree.
    let cfg = EstimatorConfig {
        order: 1,
        initial_covariance: 1e4,
        discretization: Discretization::Exact,
        ..EstimatorConfig::new(FeatureKind::PlanePolynomial)
    };
    let rot = Rot3::from_euler_angles(0.3, -0.2, 1.1);
    let truth = |x: f64| Vec3::new(2.0 * x - 1.0, 0.0, 0.5 * x + 0.2);
    let mut a = EstimatorState::new(&cfg);
    let mut b = EstimatorState::new(&cfg);
    for k in 0..2000 {
        let x = (0.37 * k as f64).sin();
        let phi = features_plane(&Vec3::new(x, 0.0, 0.0), &Vec3::zeros(), 1);
        let f_world = truth(x);
        a.update(&phi, &f_world, 0.01).unwrap();
        b.update(&phi, &rot.inverse_transform_vector(&f_world), 0.01).unwrap();
    }
    let phi = features_plane(&Vec3::new(0.25, 0.0, 0.0), &Vec3::zeros(), 1);
    let pa = predict_force(&a, &phi, &Rot3::identity()).unwrap();
    let pb = predict_force(&b, &phi, &rot).unwrap();
    assert_abs_diff_eq!(pa, pb, epsilon = 1e-9);
    assert_abs_diff_eq!(pa, truth(0.25), epsilon = 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn covariance_stays_symmetric_positive_definite(
        seed in 0u64..1000,
        lambda in prop_oneof![Just(0.0), 0.0..0.1f64],
        exact in any::<bool>(),
    ) {
        let cfg = EstimatorConfig {
            order: 2,
            lambda,
            discretization: if exact { Discretization::Exact } else { Discretization::ForwardEuler },
            ..EstimatorConfig::new(FeatureKind::PhysicalInsight)
        };
        let mut s = EstimatorState::new(&cfg);
        let w = 0.3 + seed as f64 * 1e-3;
        for k in 0..600 {
            let t = k as f64 * 0.01;
            let phi = features_physical(
                0.7 + 0.25 * (w * 3.0 * t).sin(),
                0.3 * (w * 5.0 * t).cos(),
                3.1 + 0.6 * (w * 2.0 * t + 1.0).sin(),
                2,
            );
            let f = Vec3::new((t * 1.7).sin(), 0.0, (t * 0.9).cos());
            s.update(&phi, &f, 0.01).unwrap();
            let (min_eig, defect) = s.covariance_health();
            prop_assert!(min_eig > 0.0);
            prop_assert!(defect < 1e-9);
            prop_assert!(s.p.iter().all(|x| x.is_finite()));
        }
    }
}
