//! Fold construction and cross-validated λ selection.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PliableCoefs, PliableProblem};
use crate::solver::{fit_path, lambda_path, PliableFit, SolverConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub n_folds: usize,
    pub seed: u64,
    /// Rows sharing an id are always held out together.
    pub grouping: Option<Vec<String>>,
}

impl Default for FoldSpec {
    fn default() -> Self {
        Self {
            n_folds: 5,
            seed: 0,
            grouping: None,
        }
    }
}

/// Fold index per observed row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Folds {
    assignment: Vec<usize>,
    n_folds: usize,
}

impl Folds {
    pub fn from_assignment(assignment: Vec<usize>, n_folds: usize) -> Result<Self> {
        if n_folds < 2 {
            return Err(Error::invalid("need at least 2 folds"));
        }
        let mut sizes = vec![0usize; n_folds];
        for &f in &assignment {
            if f >= n_folds {
                return Err(Error::invalid(format!("fold index {f} out of range")));
            }
            sizes[f] += 1;
        }
        if sizes.contains(&0) {
            return Err(Error::invalid("every fold must be nonempty"));
        }
        Ok(Self { assignment, n_folds })
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn n_folds(&self) -> usize {
        self.n_folds
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn held_out(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn held_in(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles rows (or groups) with a seeded generator and deals them round-robin.
pub fn make_folds(n: usize, spec: &FoldSpec) -> Result<Folds> {
    let k = spec.n_folds;
    if k < 2 {
        return Err(Error::invalid("need at least 2 folds"));
    }
    if n < k {
        return Err(Error::invalid(format!("{k} folds requested for {n} rows")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let assignment = match &spec.grouping {
        None => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut a = vec![0; n];
            for (pos, &row) in order.iter().enumerate() {
                a[row] = pos % k;
            }
            a
        }
        Some(groups) => {
            if groups.len() != n {
                return Err(Error::Dimension {
                    what: "group ids",
                    expected: n,
                    found: groups.len(),
                });
            }
            let mut ids: Vec<&String> = groups.iter().collect();
            ids.sort();
            ids.dedup();
            if ids.len() < k {
                return Err(Error::invalid(format!(
                    "{k} folds requested but only {} groups",
                    ids.len()
                )));
            }
            ids.shuffle(&mut rng);
            groups
                .iter()
                .map(|g| ids.iter().position(|id| *id == g).expect("known id") % k)
                .collect()
        }
    };
    Folds::from_assignment(assignment, k)
}

/// Cross-validation summary along one λ path.
#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub lambdas: Vec<f64>,
    pub mean_error: Vec<f64>,
    pub se_error: Vec<f64>,
    /// Mean squared held-out error, folds × λ.
    pub fold_errors: Array2<f64>,
    pub lambda_min_index: usize,
    /// Held-out predictions on the fitting scale, observed rows × λ.
    pub out_of_fold: Array2<f64>,
    /// Full-data fit over the same path.
    pub full: PliableFit,
}

impl CvResult {
    pub fn lambda_min(&self) -> f64 {
        self.lambdas[self.lambda_min_index]
    }

    pub fn min_error(&self) -> f64 {
        self.mean_error[self.lambda_min_index]
    }

    /// Full-data coefficients at the selected λ.
    pub fn selected_coefs(&self) -> &PliableCoefs {
        self.full.coefs(self.lambda_min_index)
    }
}

/// Index of the smallest value; ties go to the earliest (largest λ).
pub fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Cross-validates on the λ path of the full problem.
pub fn cv_fit(problem: &PliableProblem, folds: &Folds, config: &SolverConfig) -> Result<CvResult> {
    let lambdas = lambda_path(problem, config)?;
    cv_fit_with_lambdas(problem, folds, &lambdas, config)
}

/// Cross-validates over a fixed λ sequence. Fold membership is defined on
/// observed rows; agreement rows follow their twins and never enter the
/// held-out error.
pub fn cv_fit_with_lambdas(
    problem: &PliableProblem,
    folds: &Folds,
    lambdas: &[f64],
    config: &SolverConfig,
) -> Result<CvResult> {
    if folds.len() != problem.n_obs() {
        return Err(Error::Dimension {
            what: "fold assignment",
            expected: problem.n_obs(),
            found: folds.len(),
        });
    }
    let k = folds.n_folds();
    let n_lambda = lambdas.len();

    let per_fold: Vec<(Vec<usize>, Array2<f64>)> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let held_in = folds.held_in(fold);
            let held_out = folds.held_out(fold);
            if held_out.is_empty() {
                return Err(Error::invalid("empty held-out set").in_fold(fold));
            }
            debug_assert!(held_out.iter().all(|&i| i < problem.n_obs()));
            let sub = problem.subset(&held_in);
            let fit = fit_path(&sub, lambdas, config).map_err(|e| e.in_fold(fold))?;
            let x = problem.x().select(Axis(0), &held_out);
            let z = problem.z().select(Axis(0), &held_out);
            let mut preds = Array2::zeros((held_out.len(), n_lambda));
            for (l, point) in fit.path.iter().enumerate() {
                let p = point.coefs.linear_predictor(x.view(), z.view())?;
                preds.column_mut(l).assign(&p);
            }
            Ok((held_out, preds))
        })
        .collect::<Result<_>>()?;

    let full = fit_path(problem, lambdas, config)?;

    let y = problem.y();
    let mut fold_errors = Array2::zeros((k, n_lambda));
    let mut out_of_fold = Array2::zeros((problem.n_obs(), n_lambda));
    for (fold, (rows, preds)) in per_fold.iter().enumerate() {
        for (r, &i) in rows.iter().enumerate() {
            out_of_fold.row_mut(i).assign(&preds.row(r));
        }
        for l in 0..n_lambda {
            let sse: f64 = rows
                .iter()
                .enumerate()
                .map(|(r, &i)| (y[i] - preds[[r, l]]).powi(2))
                .sum();
            fold_errors[[fold, l]] = sse / rows.len() as f64;
        }
    }
    let mean: Array1<f64> = fold_errors.mean_axis(Axis(0)).expect("k >= 2");
    let se: Vec<f64> = (0..n_lambda)
        .map(|l| {
            let col = fold_errors.column(l);
            let m = mean[l];
            let var = col.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (k as f64 - 1.0);
            (var / k as f64).sqrt()
        })
        .collect();
    let mean_error = mean.to_vec();
    let lambda_min_index = argmin_first(&mean_error);
    Ok(CvResult {
        lambdas: lambdas.to_vec(),
        mean_error,
        se_error: se,
        fold_errors,
        lambda_min_index,
        out_of_fold,
        full,
    })
}
