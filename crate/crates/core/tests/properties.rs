use proptest::prelude::*;

use voicerisk::evaluation::balanced_accuracy;
use voicerisk::normalization::fit_global;
use voicerisk::stats::{cles, mann_whitney_u, spearman};

fn sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-20i32..20).prop_map(f64::from), 1..12)
}

proptest! {
    #[test]
    fn u_test_swap_symmetry(low in sample(), high in sample()) {
        let a = mann_whitney_u(&low, &high).unwrap();
        let b = mann_whitney_u(&high, &low).unwrap();
        let pairs = (low.len() * high.len()) as f64;
        prop_assert!((a.u_statistic + b.u_statistic - pairs).abs() < 1e-9);
        prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a.p_value));
        prop_assert!((cles(&low, &high).unwrap() + cles(&high, &low).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn u_test_shift_invariance(low in sample(), high in sample(), c in -100i32..100) {
        let shift = |v: &[f64]| v.iter().map(|x| x + f64::from(c)).collect::<Vec<_>>();
        let a = mann_whitney_u(&low, &high).unwrap();
        let b = mann_whitney_u(&shift(&low), &shift(&high)).unwrap();
        prop_assert_eq!(a.u_statistic, b.u_statistic);
        prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
    }

    #[test]
    fn spearman_bounded_and_monotone_invariant(x in prop::collection::vec(-1e3f64..1e3, 3..30)) {
        let y: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0).collect();
        let r = spearman(&x, &y);
        prop_assert!(r.is_nan() || (r - 1.0).abs() < 1e-12);
        let z: Vec<f64> = x.iter().rev().copied().collect();
        let s = spearman(&x, &z);
        prop_assert!(s.is_nan() || (-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
    }

    #[test]
    fn balanced_accuracy_complement(truth in prop::collection::vec(any::<bool>(), 2..40)) {
        prop_assume!(truth.iter().any(|&t| t) && truth.iter().any(|&t| !t));
        let inverted: Vec<bool> = truth.iter().map(|t| !t).collect();
        prop_assert_eq!(balanced_accuracy(&truth, &truth).unwrap(), 1.0);
        prop_assert_eq!(balanced_accuracy(&truth, &inverted).unwrap(), 0.0);
        let constant = vec![true; truth.len()];
        prop_assert_eq!(balanced_accuracy(&truth, &constant).unwrap(), 0.5);
    }

    #[test]
    fn global_scaler_standardises(rows in prop::collection::vec(prop::collection::vec(-50f64..50.0, 3), 2..20)) {
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let s = fit_global(&refs).unwrap();
        let out: Vec<Vec<f64>> = refs.iter().map(|r| s.transform_row(r).unwrap()).collect();
        for j in 0..3 {
            let m = out.iter().map(|r| r[j]).sum::<f64>() / out.len() as f64;
            prop_assert!(m.abs() < 1e-9);
        }
    }
}
