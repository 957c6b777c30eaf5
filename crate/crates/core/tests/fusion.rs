mod common;

use common::*;
use coop_pliable::baselines::{combine_predictions, early_problem, fit_early_fusion, fit_late_fusion, fit_single};
use coop_pliable::coop::{build_augmented_weighted, cv_over_grid};
use coop_pliable::cv::cv_fit_with_lambdas;
use coop_pliable::*;
use ndarray::{Array1, Axis};
use rand::Rng;

fn small_config() -> SolverConfig {
    SolverConfig {
        n_lambda: 20,
        ..SolverConfig::default()
    }
}

#[test]
fn leave_one_out_matches_manual_refits() {
    let problem = random_problem(40, 15, 3, 2, 0.5);
    let config = small_config();
    let folds = Folds::from_assignment((0..15).collect(), 15).unwrap();
    let lambdas = lambda_path(&problem, &config).unwrap();
    let cv = cv_fit_with_lambdas(&problem, &folds, &lambdas, &config).unwrap();
    for (l, &lambda) in lambdas.iter().enumerate() {
        let mut total = 0.0;
        for i in 0..15 {
            let keep: Vec<usize> = (0..15).filter(|&r| r != i).collect();
            let sub = problem.subset(&keep);
            let fit = fit_path(&sub, &lambdas, &config).unwrap();
            let c = fit.coefs(l);
            let x = problem.x();
            let z = problem.z();
            let mut pred = 0.0;
            for j in 0..3 {
                let mut m = c.beta[j];
                for k in 0..2 {
                    m += z[[i, k]] * c.theta[[j, k]];
                }
                pred += x[[i, j]] * m;
            }
            total += (problem.y()[i] - pred).powi(2);
        }
        let expected = total / 15.0;
        assert!((cv.mean_error[l] - expected).abs() < 1e-9 * (1.0 + expected), "lambda {lambda}");
        assert!(cv.lambdas[l] == lambda);
    }
    assert_eq!(cv.lambda_min_index, coop_pliable::cv::argmin_first(&cv.mean_error));
}

#[test]
fn cv_standard_error_recomputed() {
    let problem = random_problem(41, 40, 4, 2, 0.5);
    let folds = make_folds(40, &FoldSpec::default()).unwrap();
    let cv = cv_fit(&problem, &folds, &small_config()).unwrap();
    for l in 0..cv.lambdas.len() {
        let errs: Vec<f64> = cv.fold_errors.column(l).to_vec();
        let mean = errs.iter().sum::<f64>() / 5.0;
        let sd = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((cv.mean_error[l] - mean).abs() < 1e-12 * (1.0 + mean));
        assert!((cv.se_error[l] - sd / 5f64.sqrt()).abs() < 1e-12 * (1.0 + sd));
    }
}

#[test]
fn noise_only_response_prefers_sparse_models() {
    let mut hits = 0;
    for seed in 0..5 {
        let mut r = rng(500 + seed);
        let x = normal(&mut r, 60, 8);
        let z = normal(&mut r, 60, 2);
        let y = centered(Array1::from_shape_simple_fn(60, || r.sample(rand_distr::StandardNormal)));
        let problem = PliableProblem::new(x, z, y, Array1::ones(8), 0.5).unwrap();
        let folds = make_folds(60, &FoldSpec { seed, ..FoldSpec::default() }).unwrap();
        let cv = cv_fit(&problem, &folds, &small_config()).unwrap();
        if cv.lambda_min_index <= 3 {
            hits += 1;
        }
    }
    assert!(hits >= 4, "noise-only data picked small lambdas: {hits}/5");
}

#[test]
fn rho_zero_reproduces_early_fusion_exactly() {
    let data = random_data(3, 50, 6, 5, 2);
    let prepared = prepare(&data, PrepareOptions::default());
    let config = small_config();
    let folds = make_folds(50, &FoldSpec::default()).unwrap();
    let early = fit_early_fusion(&prepared, &config, &folds).unwrap();
    let coop = cv_over_grid(&prepared.data, &RhoGrid::new(vec![0.0]).unwrap(), &config, &folds, 1.0).unwrap();
    let c = &coop[0];
    assert_eq!(c.lambdas, early.cv.lambdas);
    assert_eq!(c.mean_error, early.cv.mean_error);
    for (a, b) in c.full.path.iter().zip(&early.cv.full.path) {
        assert_eq!(a.coefs, b.coefs);
    }
    let fit = fit_coop(&prepared, &RhoGrid::new(vec![0.0]).unwrap(), &config, &folds).unwrap();
    assert_eq!(fit.stacked(), *early.coefs());
}

#[test]
fn augmented_subset_keeps_twins() {
    let data = random_data(6, 20, 3, 3, 2);
    let aug = build_augmented(&data, 2.0, 0.5).unwrap();
    let rows = [1usize, 4, 7, 19];
    let sub = aug.subset(&rows);
    let direct = build_augmented(&data.select_rows(&rows), 2.0, 0.5).unwrap();
    assert_eq!(sub.x(), direct.x());
    assert_eq!(sub.z(), direct.z());
    assert_eq!(sub.y(), direct.y());
    assert_eq!(sub.n_obs(), 4);
}

#[test]
fn coop_grid_shares_folds_and_breaks_ties_low() {
    let data = random_data(12, 60, 5, 5, 2);
    let prepared = prepare(&data, PrepareOptions::default());
    let folds = make_folds(60, &FoldSpec { seed: 3, ..FoldSpec::default() }).unwrap();
    let grid = RhoGrid::new(vec![0.0, 1.0, 1.0, 3.0]).unwrap();
    let fit = fit_coop(&prepared, &grid, &small_config(), &folds).unwrap();
    assert_eq!(fit.folds, folds);
    assert_eq!(fit.cv_surface.nrows(), 4);
    // duplicated rho gives the same surface row; the first copy wins
    assert_eq!(fit.cv_surface.row(1), fit.cv_surface.row(2));
    assert_ne!(fit.rho_index, 2);
    let best = fit
        .cv_surface
        .axis_iter(Axis(0))
        .map(|r| r.iter().copied().fold(f64::INFINITY, f64::min))
        .collect::<Vec<_>>();
    let m = best.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(fit.rho_index, best.iter().position(|&v| v == m).unwrap());
    assert!(fit.stacked().satisfies_hierarchy());
}

#[test]
fn unit_ratio_adaptive_equals_plain() {
    let data = random_data(14, 30, 4, 4, 2);
    let plain = build_augmented(&data, 2.0, 0.5).unwrap();
    let weighted = build_augmented_weighted(&data, 2.0, 0.5, 1.0).unwrap();
    assert_eq!(plain, weighted);
    let config = small_config();
    let folds = make_folds(30, &FoldSpec::default()).unwrap();
    let grid = RhoGrid::new(vec![0.0, 2.0]).unwrap();
    let prepared = prepare(&data, PrepareOptions::default());
    let a = cv_over_grid(&prepared.data, &grid, &config, &folds, 1.0).unwrap();
    let b = fit_coop(&prepared, &grid, &config, &folds).unwrap();
    assert_eq!(a[b.rho_index].selected_coefs().split(4).0, b.coefs1);
}

#[test]
fn heavier_second_penalty_delays_its_entry() {
    let data = random_data(15, 80, 5, 5, 2);
    let config = small_config();
    let plain = build_augmented(&data, 1.0, 0.5).unwrap();
    let heavy = build_augmented_weighted(&data, 1.0, 0.5, 4.0).unwrap();
    let lambdas = lambda_path(&plain, &config).unwrap();
    let entry = |p: &PliableProblem| {
        let fit = fit_path(p, &lambdas, &config).unwrap();
        fit.path
            .iter()
            .position(|pt| (5..10).any(|j| pt.coefs.beta[j] != 0.0))
            .unwrap_or(usize::MAX)
    };
    assert!(entry(&heavy) > entry(&plain));
}

#[test]
fn adaptive_fit_records_source_lambdas() {
    let data = random_data(16, 60, 4, 4, 2);
    let prepared = prepare(&data, PrepareOptions::default());
    let config = small_config();
    let folds = make_folds(60, &FoldSpec::default()).unwrap();
    let fit = fit_adaptive_coop(&prepared, &RhoGrid::integers(0, 2).unwrap(), &config, &folds).unwrap();
    let (l1, l2) = fit.source_lambdas.unwrap();
    let s1 = fit_single(&prepared, Source::One, &config, &folds).unwrap();
    let s2 = fit_single(&prepared, Source::Two, &config, &folds).unwrap();
    assert_eq!((l1, l2), (s1.lambda(), s2.lambda()));
    assert_eq!(fit.source2_factor, l2 / l1);
    assert_eq!(fit.to_model().method, Method::AdaptiveCoop);
}

#[test]
fn late_fusion_weights_solve_normal_equations() {
    let mut r = rng(20);
    for _ in 0..20 {
        let y: Array1<f64> = Array1::from_shape_simple_fn(30, || r.gen_range(-2.0..2.0));
        let f1: Array1<f64> = Array1::from_shape_simple_fn(30, || r.gen_range(-2.0..2.0));
        let f2: Array1<f64> = Array1::from_shape_simple_fn(30, || r.gen_range(-2.0..2.0));
        let (w, fallback) = combine_predictions(y.view(), f1.view(), f2.view());
        assert!(!fallback);
        let (a, b, c) = (f1.dot(&f1), f1.dot(&f2), f2.dot(&f2));
        let (u, v) = (f1.dot(&y), f2.dot(&y));
        let det = a * c - b * b;
        let expected = [(c * u - b * v) / det, (a * v - b * u) / det];
        assert!((w[0] - expected[0]).abs() < 1e-10);
        assert!((w[1] - expected[1]).abs() < 1e-10);
        // residual orthogonal to both regressors
        let res = &y - &(&f1 * w[0]) - &(&f2 * w[1]);
        assert!(res.dot(&f1).abs() < 1e-9 && res.dot(&f2).abs() < 1e-9);
    }
}

#[test]
fn late_fusion_uses_out_of_fold_predictions() {
    let data = random_data(21, 60, 4, 4, 2);
    let prepared = prepare(&data, PrepareOptions::default());
    let config = small_config();
    let folds = make_folds(60, &FoldSpec::default()).unwrap();
    let late = fit_late_fusion(&prepared, &config, &folds).unwrap();
    assert!(late.fit_on_out_of_fold);
    let (w, _) = combine_predictions(prepared.data.y(), late.first.out_of_fold(), late.second.out_of_fold());
    assert_eq!(w, late.weights);
    let model = late.to_model(&prepared);
    let pred = model.predict(&data).unwrap();
    let manual = late.first.cv.full.predict(late.first.cv.lambda_min_index, data.x1(), data.z()).unwrap() * w[0]
        + late.second.cv.full.predict(late.second.cv.lambda_min_index, data.x2(), data.z()).unwrap() * w[1];
    // the per-source predictions each carry the response center once
    let center = prepared.record.y_center;
    let expected = manual - center * (w[0] + w[1]) + center;
    for (a, b) in pred.iter().zip(expected.iter()) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn early_problem_concatenates_sources() {
    let data = random_data(22, 10, 2, 3, 1);
    let p = early_problem(&data, 0.5).unwrap();
    assert_eq!(p.x(), data.concatenated());
    assert_eq!(p.p(), 5);
}

#[test]
fn grouped_cv_never_splits_a_group() {
    let groups: Vec<String> = (0..40).map(|i| format!("g{}", i / 4)).collect();
    let folds = make_folds(40, &FoldSpec { n_folds: 5, seed: 9, grouping: Some(groups.clone()) }).unwrap();
    for g in 0..10 {
        let f: std::collections::BTreeSet<usize> = (0..40).filter(|i| i / 4 == g).map(|i| folds.assignment()[i]).collect();
        assert_eq!(f.len(), 1);
    }
    let problem = random_problem(23, 40, 4, 2, 0.5);
    assert!(cv_fit(&problem, &folds, &small_config()).is_ok());
}
