use coop_pliable::eval::{mean_sd, selection_curve, selection_scores_from_masks, summarize_experiment, EffectCounts, ReplicateResult};
use coop_pliable::Method;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn selection_scores_are_monotone(
        seed in 0u64..100_000,
        reps in 1usize..12,
        p in 1usize..40,
    ) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<bool> = (0..p).map(|_| r.gen_bool(0.3)).collect();
        let masks: Vec<Vec<bool>> = (0..reps).map(|_| (0..p).map(|_| r.gen_bool(0.5)).collect()).collect();
        let curve = selection_curve(&masks, &truth).unwrap();
        prop_assert_eq!(curve.len(), reps + 1);
        let relevant = truth.iter().filter(|&&t| t).count();
        for s in &curve {
            prop_assert_eq!(s.true_positives + s.false_negatives, relevant);
            prop_assert_eq!(s.true_negatives + s.false_positives, p - relevant);
            for v in [s.sensitivity, s.specificity].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
        for w in curve.windows(2) {
            if let (Some(a), Some(b)) = (w[0].sensitivity, w[1].sensitivity) {
                prop_assert!(b <= a);
            }
            if let (Some(a), Some(b)) = (w[0].specificity, w[1].specificity) {
                prop_assert!(b >= a);
            }
        }
        if relevant < p {
            prop_assert_eq!(curve[reps].specificity, Some(1.0));
        }
    }
}

#[test]
fn two_of_three_is_selected_at_cutoff_one() {
    let masks = vec![vec![true], vec![true], vec![false]];
    let s = selection_scores_from_masks(&masks, &[true], 1).unwrap();
    assert_eq!(s.true_positives, 1);
    let s = selection_scores_from_masks(&masks, &[true], 2).unwrap();
    assert_eq!(s.true_positives, 0);
}

#[test]
fn summary_matches_recomputation() {
    let mut r = ChaCha8Rng::seed_from_u64(10);
    let mut results = Vec::new();
    for rep in 0..10 {
        for method in [Method::Early, Method::Coop] {
            results.push(ReplicateResult {
                method,
                replicate: rep,
                test_mse: r.gen_range(1.0..3.0),
                counts: EffectCounts { main: r.gen_range(0..20), interaction: r.gen_range(0..10) },
                rho: method.is_cooperative().then(|| f64::from(r.gen_range(0..4u8))),
                lambda: 0.1,
            });
        }
    }
    let report = summarize_experiment(&results).unwrap();
    assert_eq!(report.rows.len(), 2);
    for method in [Method::Early, Method::Coop] {
        let row = report.row(method).unwrap();
        let runs: Vec<&ReplicateResult> = results.iter().filter(|x| x.method == method).collect();
        let mses: Vec<f64> = runs.iter().map(|x| x.test_mse).collect();
        let mean = mses.iter().sum::<f64>() / 10.0;
        let sd = (mses.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / 9.0).sqrt();
        assert!((row.mean_mse - mean).abs() < 1e-12);
        assert!((row.sd_mse - sd).abs() < 1e-12);
        let main = runs.iter().map(|x| x.counts.main).sum::<usize>() as f64 / 10.0;
        assert_eq!(row.rounded_main, (main + 0.5).floor() as u64);
        let hist_total: usize = row.rho_histogram.iter().map(|(_, c)| c).sum();
        assert_eq!(hist_total, if method.is_cooperative() { 10 } else { 0 });
    }
    assert_eq!(mean_sd(&[2.0]).1, 0.0);
}

#[test]
fn empty_results_are_rejected() {
    assert!(summarize_experiment(&[]).is_err());
}
