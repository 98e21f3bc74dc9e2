//! Property tests for invariants of the estimators and the detector.

use nalgebra::DMatrix;
use proptest::prelude::*;

use seqmon::covest::ThresholdKind;
use seqmon::critval::{quantile, quantiles};
use seqmon::lrv::block_sums;
use seqmon::projection::min_variance_portfolio;
use seqmon::{
    boundary_g, lrv_estimate, replay, BoundaryConfig, DetectorKind, LrvConfig, MonitorState, ProjectionVector,
};

fn kinds() -> impl Strategy<Value = ThresholdKind> {
    prop_oneof![
        Just(ThresholdKind::Hard),
        Just(ThresholdKind::Lasso),
        (2.1f64..6.0).prop_map(|a| ThresholdKind::Scad { a }),
    ]
}

fn two_pass(xs: &[f64], b: usize) -> f64 {
    let sums: Vec<f64> = xs.windows(b).map(|w| w.iter().sum::<f64>() / (b as f64).sqrt()).collect();
    let n = sums.len() as f64;
    let mean = sums.iter().sum::<f64>() / n;
    sums.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n
}

proptest! {
    #[test]
    fn threshold_axioms(kind in kinds(), x in -10.0f64..10.0, t in 0.0f64..5.0) {
        let s = kind.apply(x, t);
        prop_assert!(s.abs() <= x.abs());
        prop_assert!((s - x).abs() <= t + 1e-12);
        let zeroed = match kind {
            ThresholdKind::Hard => x.abs() < t,
            _ => x.abs() <= t,
        };
        if zeroed {
            prop_assert_eq!(s, 0.0);
        }
    }

    #[test]
    fn threshold_is_odd(kind in kinds(), x in -10.0f64..10.0, t in 0.0f64..5.0) {
        prop_assert_eq!(kind.apply(-x, t), -kind.apply(x, t));
    }

    #[test]
    fn threshold_shrinks_more_with_larger_t(kind in kinds(), x in -10.0f64..10.0, t in 0.0f64..5.0, dt in 0.0f64..2.0) {
        prop_assert!(kind.apply(x, t + dt).abs() <= kind.apply(x, t).abs() + 1e-12);
    }

    #[test]
    fn lrv_matches_two_pass_and_is_shift_invariant(
        xs in prop::collection::vec(-5.0f64..5.0, 20..300),
        shift in -100.0f64..100.0,
        scale in 0.1f64..10.0,
    ) {
        let cfg = LrvConfig::default();
        let b = cfg.bandwidth(xs.len());
        let base = lrv_estimate(&xs, &cfg);
        // Constant series are rejected; otherwise compare against the oracle.
        if let Ok(est) = base {
            prop_assert!((est - two_pass(&xs, b)).abs() <= 1e-9 * est.max(1.0));
            let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
            let est_shift = lrv_estimate(&shifted, &cfg).unwrap();
            prop_assert!((est_shift - est).abs() <= 1e-7 * (1.0 + shift * shift) * est.max(1.0));
            let scaled: Vec<f64> = xs.iter().map(|x| x * scale).collect();
            let est_scale = lrv_estimate(&scaled, &cfg).unwrap();
            prop_assert!((est_scale - scale * scale * est).abs() <= 1e-9 * est_scale.max(1.0));
        }
        prop_assert_eq!(block_sums(&xs, b).len(), xs.len() - b + 1);
    }

    #[test]
    fn boundary_increases_in_k(m in 2usize..5000, k in 1usize..10_000, gamma in 0.0f64..0.49) {
        let a = boundary_g(m, k, gamma).unwrap();
        let b = boundary_g(m, k + 1, gamma).unwrap();
        prop_assert!(b > a);
    }

    /// Scaling every observation by `lambda` scales the projected squares
    /// by `lambda^2`, which cancels in `Q / sigma`; the signal time is
    /// unchanged.
    #[test]
    fn detector_is_scale_equivariant(
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 60..160),
        lambda in 0.1f64..20.0,
        c in 0.2f64..3.0,
    ) {
        let m = 40;
        let v = ProjectionVector::new(vec![0.5, -1.0, 0.25]);
        let run = |scale: f64| {
            let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| x * scale).collect()).collect();
            let train: Vec<&[f64]> = rows[..m].iter().map(Vec::as_slice).collect();
            let state = MonitorState::from_training(
                &train, None, v.clone(), &LrvConfig::default(), c,
                BoundaryConfig::open_end(0.25, 0.1), DetectorKind::Projection,
            )?;
            let rep = replay(state, rows[m..].iter().map(|r| (r.as_slice(), None)))?;
            Ok::<_, seqmon::Error>((rep.signal.map(|e| e.time), rep.trajectory))
        };
        if let (Ok((ta, pa)), Ok((tb, pb))) = (run(1.0), run(lambda)) {
            prop_assert_eq!(ta, tb);
            for (a, b) in pa.iter().zip(&pb) {
                prop_assert!((a.stat - b.stat).abs() <= 1e-8 * a.stat.max(1.0));
            }
        }
    }

    #[test]
    fn min_variance_is_scale_invariant(
        entries in prop::collection::vec(-1.0f64..1.0, 16),
        a in 0.01f64..100.0,
    ) {
        let b = DMatrix::from_vec(4, 4, entries);
        let p = &b * b.transpose() + DMatrix::identity(4, 4);
        let w1 = min_variance_portfolio(&p).unwrap();
        let w2 = min_variance_portfolio(&(p * a)).unwrap();
        for (x, y) in w1.entries.iter().zip(&w2.entries) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
        prop_assert!((w1.entries.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn monitor_state_json_round_trip(
        v in prop::collection::vec(-1e3f64..1e3, 1..6),
        sigma in 1e-6f64..1e6,
        train_sum in -1e9f64..1e9,
        m in 2usize..100_000,
        c in 0.01f64..10.0,
        gamma in 0.0f64..0.49,
        delta in 0.0f64..1.0,
        t in prop::option::of(1.0f64..10.0),
    ) {
        let boundary = match t {
            Some(t) => BoundaryConfig::closed_end(gamma, delta, t),
            None => BoundaryConfig::open_end(gamma, delta),
        };
        let s = MonitorState::new(ProjectionVector::new(v), sigma, train_sum, m, c, boundary, DetectorKind::Residual).unwrap();
        let back = MonitorState::from_json(&s.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn quantiles_are_ordered_and_in_range(
        sample in prop::collection::vec(-100.0f64..100.0, 1..500),
    ) {
        let qs = quantiles(&sample, &[0.01, 0.05, 0.1, 0.5]).unwrap();
        for w in qs.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        let lo = sample.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let q = quantile(&sample, 0.05).unwrap();
        prop_assert!(q >= lo && q <= hi);
    }
}
