use msarobust_core::metrics::{binary_f1, mae_acc2, pearson_corr};
use proptest::prelude::*;

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-3.0f64..3.0, n),
            prop::collection::vec(-3.0f64..3.0, n),
        )
    })
}

proptest! {
    #[test]
    fn corr_invariant_under_positive_affine((pred, gold) in pair(), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let base = pearson_corr(&pred, &gold).unwrap();
        let moved: Vec<f64> = pred.iter().map(|p| a * p + b).collect();
        let r = pearson_corr(&moved, &gold).unwrap();
        prop_assert!((base - r).abs() < 1e-12, "{} vs {}", base, r);
        prop_assert!((-1.0..=1.0).contains(&r));
    }

    #[test]
    fn binary_metrics_depend_only_on_signs((pred, gold) in pair(), scale in 0.01f64..100.0) {
        // x -> scale * x^3 keeps every sign, and zero stays zero
        let warp = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| scale * x * x * x).collect() };
        let (p2, g2) = (warp(&pred), warp(&gold));
        prop_assert_eq!(binary_f1(&pred, &gold).unwrap(), binary_f1(&p2, &g2).unwrap());
        prop_assert_eq!(mae_acc2(&pred, &gold).unwrap().1, mae_acc2(&p2, &g2).unwrap().1);
    }

    #[test]
    fn ranges_hold((pred, gold) in pair()) {
        let f1 = binary_f1(&pred, &gold).unwrap();
        let (mae, acc) = mae_acc2(&pred, &gold).unwrap();
        prop_assert!((0.0..=100.0).contains(&f1));
        prop_assert!((0.0..=100.0).contains(&acc));
        prop_assert!(mae >= 0.0);
    }
}
