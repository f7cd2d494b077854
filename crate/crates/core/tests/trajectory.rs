use approx::assert_abs_diff_eq;
use bendlift::trajectory::*;
use bendlift::*;
use std::f64::consts::{FRAC_PI_2, TAU};

fn all_scenarios() -> Vec<(&'static str, Scenario)> {
    vec![
        ("exp1", VaryingDistanceParams::default().build()),
        ("exp2", WindowPassParams::default().build()),
        ("exp3", DualWindowParams::default().build()),
        (
            "exp3+tones",
            DualWindowParams {
                excitation: identification_tones(),
                ..Default::default()
            }
            .build(),
        ),
    ]
}

#[test]
fn derivatives_match_finite_differences() {
    let h = 1e-4;
    for (name, s) in all_scenarios() {
        let mut t = h;
        while t < s.duration - h {
            let (a0, b0) = s.reference(t).unwrap();
            let (am, bm) = s.reference(t - h).unwrap();
            let (ap, bp) = s.reference(t + h).unwrap();
            for (c, m, p) in [(a0, am, ap), (b0, bm, bp)] {
                let v_fd = (p.p - m.p) / (2.0 * h);
                let a_fd = (p.v - m.v) / (2.0 * h);
                assert!((v_fd - c.v).norm() < 1e-6, "{name} velocity at t={t}");
                assert!((a_fd - c.a).norm() < 1e-6, "{name} acceleration at t={t}");
            }
            t += 0.173;
        }
    }
}

#[test]
fn smoothstep_pieces_are_c2() {
    for s in [Signal::step(0.3, -1.2, 2.0, 5.0), Signal::travel(0.4, 1.0, 3.0)] {
        for edge in [1.0, 2.0, 3.0, 5.0] {
            let l = s.eval(edge - 1e-9);
            let r = s.eval(edge + 1e-9);
            assert!((l.f - r.f).abs() < 1e-8);
            assert!((l.df - r.df).abs() < 1e-7);
            assert!((l.ddf - r.ddf).abs() < 1e-6);
        }
    }
    let j = Signal::travel(0.4, 1.0, 3.0).eval(10.0);
    assert_abs_diff_eq!(j.f, 0.4 * (1.0 + 7.0), epsilon = 1e-12);
    assert_abs_diff_eq!(j.df, 0.4, epsilon = 0.0);
}

#[test]
fn varying_distance_range() {
    let s = VaryingDistanceParams::default().build();
    let (a, b) = s.reference(0.0).unwrap();
    assert_abs_diff_eq!((b.p - a.p).norm(), 0.8, epsilon = 1e-12);
    // One full period of the horizontal distance.
    let d: Vec<f64> = (0..=1000)
        .map(|k| s.formation.distance.eval(k as f64 * 0.01).f)
        .collect();
    let mean = d[..1000].iter().sum::<f64>() / 1000.0;
    assert_abs_diff_eq!(mean, 0.6, epsilon = 1e-9);
    assert_abs_diff_eq!(d.iter().cloned().fold(f64::INFINITY, f64::min), 0.4, epsilon = 1e-9);
    assert_abs_diff_eq!(d.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 0.8, epsilon = 1e-9);
    // Cruise speed after the ramp.
    let (a, b) = s.reference(20.0).unwrap();
    assert_abs_diff_eq!(0.5 * (a.v.x + b.v.x), 0.1, epsilon = 1e-12);
}

#[test]
fn window_pass_profile() {
    let p = WindowPassParams::default();
    let s = p.build();
    let peak = (0..=6000)
        .map(|k| s.formation.center[2].eval(k as f64 * 0.01).f)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_abs_diff_eq!(peak, 1.8, epsilon = 1e-12);
    // Static hold: 10 s with zero velocity and acceleration.
    let hold = s.phase("hold").unwrap();
    assert_abs_diff_eq!(hold.end - hold.start, 10.0, epsilon = 1e-12);
    let mut t = hold.start;
    while t <= hold.end {
        let (a, b) = s.reference(t).unwrap();
        assert_eq!(a.v.norm() + b.v.norm() + a.a.norm() + b.a.norm(), 0.0, "t = {t}");
        assert_abs_diff_eq!((b.p - a.p).norm(), 0.6, epsilon = 1e-12);
        t += 0.05;
    }
    // Descent at the pass distance and altitude.
    let (a, b) = s.reference(p.descend_end).unwrap();
    assert_abs_diff_eq!((b.p - a.p).norm(), 0.6, epsilon = 1e-12);
    assert_abs_diff_eq!(a.p.z, 0.7, epsilon = 1e-12);
    // Recovery back to the take-off distance.
    let (a, b) = s.reference(p.recover_end + 1.0).unwrap();
    assert_abs_diff_eq!((b.p - a.p).norm(), p.takeoff_distance, epsilon = 1e-12);
    assert!(matches!(
        s.reference(61.0),
        Err(TrajectoryError::PhaseOutOfRange { .. })
    ));
}

#[test]
fn phase_boundaries_are_continuous() {
    let p = WindowPassParams::default();
    let s = p.build();
    for tb in [
        p.climb_end,
        p.descend_end,
        p.stop[1],
        p.hold_end,
        p.recover_end,
        p.land_end,
    ] {
        let (a0, b0) = s.reference(tb - 1e-6).unwrap();
        let (a1, b1) = s.reference(tb + 1e-6).unwrap();
        let (am, bm) = s.reference(tb).unwrap();
        // Remove the smooth change over the 2 µs gap; what remains is the jump.
        for (l, r, m) in [(a0, a1, am), (b0, b1, bm)] {
            assert!((r.v - l.v - m.a * 2e-6).norm() < 1e-9, "velocity jump at {tb}");
            assert!((r.p - l.p - m.v * 2e-6).norm() < 1e-9, "position jump at {tb}");
        }
    }
}

#[test]
fn dual_window_profile() {
    let p = DualWindowParams::default();
    let s = p.build();
    let yaw0 = s.formation.yaw.eval(0.0).f;
    let yaw1 = s.formation.yaw.eval(p.excitation_duration).f;
    assert_abs_diff_eq!(yaw1 - yaw0, TAU, epsilon = 1e-12);
    let d: Vec<f64> = (0..=6000)
        .map(|k| s.formation.distance.eval(k as f64 * 0.01).f)
        .collect();
    let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_abs_diff_eq!(lo, 0.4, epsilon = 1e-6);
    assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-6);
}

#[test]
fn shipped_scenarios_respect_distance_bounds() {
    let (min, max) = (0.1, 1.2 - 0.05);
    for (name, s) in all_scenarios() {
        s.check_distance_bounds(min, max, 0.01)
            .unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn excitation_identity_and_single_tone() {
    let s = VaryingDistanceParams::default().build();
    let base = s.formation.eval(3.3);
    let same = superimpose_excitation(&base, &Excitation::default(), 3.3, (0.0, 10.0)).unwrap();
    assert_eq!(same, base);
    let (amp, period) = (0.02, 2.0);
    let w = TAU / period;
    let ex = Excitation {
        vehicle1: vec![Tone {
            amplitude: [amp, 0.0, 0.0],
            period,
            phase: 0.0,
        }],
        vehicle2: vec![],
    };
    let t = 3.3;
    let out = superimpose_excitation(&base, &ex, t, (0.0, 10.0)).unwrap();
    assert_abs_diff_eq!(out.0.p.x - base.0.p.x, amp * (w * t).sin(), epsilon = 1e-14);
    assert_abs_diff_eq!(out.0.a.x - base.0.a.x, -amp * w * w * (w * t).sin(), epsilon = 1e-13);
    assert_eq!(out.1, base.1);
    let big = Excitation {
        vehicle1: vec![Tone {
            amplitude: [0.0, 5.0, 0.0],
            period: 1.0,
            phase: FRAC_PI_2,
        }],
        vehicle2: vec![],
    };
    assert!(matches!(
        superimpose_excitation(&base, &big, 0.0, (0.1, 1.15)),
        Err(TrajectoryError::DistanceBoundViolation { .. })
    ));
}

#[test]
fn scenario_spec_round_trips_through_json() {
    for spec in [
        ScenarioSpec::default(),
        ScenarioSpec::WindowPass(WindowPassParams::default()),
        ScenarioSpec::Custom(DualWindowParams::default().build()),
    ] {
        let text = serde_json::to_string(&spec).unwrap();
        let back: ScenarioSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
    let partial: ScenarioSpec = serde_json::from_str(r#"{"kind":"varying-distance","speed":0.2}"#).unwrap();
    match partial {
        ScenarioSpec::VaryingDistance(p) => {
            assert_eq!(p.speed, 0.2);
            assert_eq!(p.duration, 40.0);
        }
        _ => panic!("wrong kind"),
    }
}

#[test]
fn windows() {
    let w = Window {
        name: "w".into(),
        center: [1.0, 0.0, 1.0],
        aperture: Aperture::Circle { radius: 0.3 },
        active: [0.0, 1.0],
    };
    assert!(w.contains(&Vec3::new(1.0, 0.2, 1.2)));
    assert!(!w.contains(&Vec3::new(1.0, 0.25, 1.2)));
    assert_abs_diff_eq!(w.clearance(&Vec3::new(1.0, 0.0, 1.1)), 0.2, epsilon = 1e-12);
    let r = Window {
        aperture: Aperture::Rectangle {
            half_width: 0.3,
            half_height: 0.2,
        },
        ..w
    };
    assert_abs_diff_eq!(r.clearance(&Vec3::new(1.0, -0.25, 1.1)), 0.05, epsilon = 1e-12);
    assert_abs_diff_eq!(r.clearance(&Vec3::new(1.0, 0.35, 1.0)), -0.05, epsilon = 1e-12);
}
