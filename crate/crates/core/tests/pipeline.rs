//! End-to-end paths through the library: generate, estimate, monitor,
//! checkpoint and resume.

use nalgebra::DMatrix;

use seqmon::covest::{apply_threshold_rule, estimate_moments, precision_estimate, ThresholdKind, ThresholdRule, ThresholdValue};
use seqmon::critval::{brownian_path, openend_sup_of_path, refine_brownian_path, CriticalValueTable};
use seqmon::datagen::{generate, generate_regression63_with, GeneratorSpec, REG63_BREAKS};
use seqmon::projection::min_variance_portfolio;
use seqmon::rng;
use seqmon::{
    replay, run_closed_end, BoundaryConfig, DetectorKind, Horizon, LrvConfig, MonitorConfig, MonitorState,
    ObservationStream, ProjectionVector, Weighting,
};

fn break_stream(d: usize, n: usize, k_star: usize, factor: f64, seed: u64) -> ObservationStream {
    let eye = DMatrix::identity(d, d);
    generate(&GeneratorSpec::covariance_break(eye.clone(), eye * factor, k_star, seed), n).unwrap()
}

#[test]
fn datagen_is_reproducible() {
    let spec = GeneratorSpec::vector_ma(4, 3.0, 10, 11);
    let a = generate(&spec, 500).unwrap();
    let b = generate(&spec, 500).unwrap();
    assert_eq!(a.as_flat(), b.as_flat());
    let c = generate(&GeneratorSpec::vector_ma(4, 3.0, 10, 12), 500).unwrap();
    assert_ne!(a.as_flat(), c.as_flat());
    let r1 = generate_regression63_with(4, 5000, false).unwrap();
    let r2 = generate_regression63_with(4, 5000, false).unwrap();
    assert_eq!(r1.response(), r2.response());
}

#[test]
fn regression_regressor_law_switches_at_first_break() {
    let s = generate_regression63_with(9, 4000, false).unwrap();
    let before = (0..REG63_BREAKS[0]).map(|i| s.row(i)[0]);
    let after = (REG63_BREAKS[0]..4000).map(|i| s.row(i)[0]);
    assert!(before.clone().all(|x| (-0.5..=0.5).contains(&x)));
    assert!(before.clone().any(|x| x < 0.0));
    assert!(after.into_iter().all(|x| (0.0..=1.0).contains(&x)));
}

#[test]
fn checkpoint_resume_matches_uninterrupted_run() {
    let m = 200;
    let s = break_stream(3, 800, 600, 2.5, 21);
    let train: Vec<&[f64]> = (0..m).map(|i| s.row(i)).collect();
    let fresh = || {
        MonitorState::from_training(
            &train,
            None,
            ProjectionVector::unit(3, 0),
            &LrvConfig::default(),
            2.37,
            BoundaryConfig::open_end(0.25, 0.1),
            DetectorKind::Projection,
        )
        .unwrap()
    };
    let full = replay(fresh(), (m..800).map(|i| (s.row(i), None))).unwrap();

    let split = 350;
    let first = replay(fresh(), (m..split).map(|i| (s.row(i), None))).unwrap();
    assert!(first.signal.is_none());
    let json = first.final_state.to_json().unwrap();
    let resumed = MonitorState::from_json(&json).unwrap();
    let second = replay(resumed, (split..800).map(|i| (s.row(i), None))).unwrap();

    assert_eq!(full.signal, second.signal);
    let mut joined = first.trajectory.clone();
    joined.extend(second.trajectory);
    assert_eq!(full.trajectory, joined);
    assert_eq!(full.final_state, second.final_state);
}

#[test]
fn closed_end_run_stops_at_horizon_without_change() {
    let m = 300;
    let mut s = break_stream(2, 2000, 2000, 1.0, 5);
    s.set_train_len(m);
    let c = CriticalValueTable::shipped()
        .lookup(0.25, 0.1, Horizon::ClosedEnd(2.0), Weighting::Paper, 0.01)
        .unwrap();
    let cfg = MonitorConfig {
        boundary: BoundaryConfig::closed_end(0.25, 0.1, 2.0),
        c,
        lrv: LrvConfig::default(),
        kind: DetectorKind::Projection,
    };
    let rep = run_closed_end(&s, ProjectionVector::unit(2, 1), &cfg).unwrap();
    if rep.signal.is_none() {
        assert!(!rep.truncated);
        assert_eq!(rep.final_state.k, 2 * m);
        assert_eq!(rep.trajectory.last().unwrap().k, 2 * m);
    }
    assert_eq!(rep.trajectory.first().unwrap().k, 30);
}

#[test]
fn strong_break_is_detected_after_it_happens() {
    let m = 400;
    let mut s = break_stream(5, 2000, 600, 4.0, 8);
    s.set_train_len(m);
    let cfg = MonitorConfig {
        boundary: BoundaryConfig::open_end(0.25, 0.1),
        c: CriticalValueTable::shipped()
            .lookup(0.25, 0.1, Horizon::OpenEnd, Weighting::Paper, 0.05)
            .unwrap(),
        lrv: LrvConfig::default(),
        kind: DetectorKind::Projection,
    };
    // Estimated min-variance weights as the projection vector.
    let est = estimate_moments(&s.training_matrix().unwrap()).unwrap();
    let rule = ThresholdRule::new(ThresholdKind::Hard, ThresholdValue::paper_default());
    let sigma = apply_threshold_rule(&est.sigma_hat, &rule, m).unwrap();
    let p = precision_estimate(&sigma, 1e-4).unwrap();
    let v = min_variance_portfolio(&p.precision).unwrap();
    let rep = run_closed_end(&s, v, &cfg).unwrap();
    let e = rep.signal.expect("a fourfold variance increase is detected");
    assert!(e.time > 600 && e.time < 1200, "signal at {}", e.time);
}

#[test]
fn refined_paths_have_larger_suprema() {
    let mut r = rng::derive(77, &[0]);
    for _ in 0..50 {
        let coarse = brownian_path(200, &mut r);
        let fine = refine_brownian_path(&coarse, &mut r);
        assert_eq!(fine.len(), 401);
        for (i, x) in coarse.iter().enumerate() {
            assert_eq!(fine[2 * i], *x);
        }
        let a = openend_sup_of_path(&coarse, 0.0, 0.0);
        let b = openend_sup_of_path(&fine, 0.0, 0.0);
        assert!(b >= a);
    }
}

#[test]
fn shipped_table_is_monotone_in_alpha() {
    let table = CriticalValueTable::shipped();
    for gamma in [0.0, 0.25, 0.45] {
        for delta in [0.05, 0.1, 0.25] {
            for h in [Horizon::OpenEnd, Horizon::ClosedEnd(2.0), Horizon::ClosedEnd(4.0)] {
                let cs: Vec<f64> = [0.01, 0.05, 0.1]
                    .iter()
                    .map(|&a| table.lookup(gamma, delta, h, Weighting::Paper, a).unwrap())
                    .collect();
                assert!(cs[0] > cs[1] && cs[1] > cs[2], "{gamma} {delta} {h:?}: {cs:?}");
            }
            let open = table.lookup(gamma, delta, Horizon::OpenEnd, Weighting::Paper, 0.05).unwrap();
            let short = table.lookup(gamma, delta, Horizon::ClosedEnd(2.0), Weighting::Paper, 0.05).unwrap();
            assert!(short < open);
        }
    }
}
