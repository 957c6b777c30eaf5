//! Cooperative pliable lasso: the augmented-design reduction and the two
//! grid-search fitting procedures over the agreement weight ρ.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_single, SingleFit};
use crate::cv::{cv_fit, CvResult, Folds};
use crate::error::{Error, Result};
use crate::fitted::{FusionModel, Method};
use crate::model::{MultiViewData, PliableCoefs, PliableProblem, PreparedData, Preprocessing, Source};
use crate::solver::{PliableFit, SolverConfig};

/// Agreement weights to search, nondecreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoGrid(Vec<f64>);

impl RhoGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("rho grid is empty"));
        }
        if values.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::invalid("rho values must be finite and nonnegative"));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("rho grid must be nondecreasing"));
        }
        Ok(Self(values))
    }

    /// Integers `from..=to`.
    pub fn integers(from: u32, to: u32) -> Result<Self> {
        Self::new((from..=to).map(f64::from).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for RhoGrid {
    fn default() -> Self {
        Self::integers(0, 9).expect("static grid")
    }
}

/// The stacked problem
///
/// ```text
/// X~ = [ X1        X2      ]   Z~ = [ Z ]   y~ = [ y ]
///      [ -√ρ X1    √ρ X2   ]        [ 0 ]        [ 0 ]
/// ```
///
/// whose pliable objective equals the cooperative objective at the split
/// coefficients. All penalty factors are 1.
pub fn build_augmented(data: &MultiViewData, rho: f64, alpha: f64) -> Result<PliableProblem> {
    build_augmented_weighted(data, rho, alpha, 1.0)
}

/// As [`build_augmented`], with penalty factor `source2_factor` on the
/// second source's features.
pub fn build_augmented_weighted(
    data: &MultiViewData,
    rho: f64,
    alpha: f64,
    source2_factor: f64,
) -> Result<PliableProblem> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::invalid(format!("rho must be finite and nonnegative, got {rho}")));
    }
    let (n, p1, p2, k) = (data.n(), data.p1(), data.p2(), data.k());
    let root = rho.sqrt();
    let mut x = Array2::zeros((2 * n, p1 + p2));
    x.slice_mut(s![..n, ..p1]).assign(&data.x1());
    x.slice_mut(s![..n, p1..]).assign(&data.x2());
    x.slice_mut(s![n.., ..p1]).assign(&data.x1().mapv(|v| -root * v));
    x.slice_mut(s![n.., p1..]).assign(&data.x2().mapv(|v| root * v));
    let z = concatenate![Axis(0), data.z(), Array2::zeros((n, k))];
    let y = concatenate![Axis(0), data.y(), Array1::zeros(n)];
    let mut pf = Array1::ones(p1 + p2);
    pf.slice_mut(s![p1..]).fill(source2_factor);
    PliableProblem::with_agreement_rows(x, z, y, pf, alpha, n)
}

/// Result of a cooperative fit.
#[derive(Debug, Clone, PartialEq)]
pub struct CoopFit {
    pub coefs1: PliableCoefs,
    pub coefs2: PliableCoefs,
    pub rho: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub rho_grid: Vec<f64>,
    /// Mean CV error, ρ × λ (each ρ has its own λ path, see `cv_lambdas`).
    pub cv_surface: Array2<f64>,
    pub cv_se: Array2<f64>,
    pub cv_lambdas: Array2<f64>,
    pub rho_index: usize,
    pub lambda_index: usize,
    /// Fold assignment shared by every ρ.
    pub folds: Folds,
    /// Penalty factor on source 2 (1 unless adaptive).
    pub source2_factor: f64,
    /// Single-source CV λs (adaptive fits only).
    pub source_lambdas: Option<(f64, f64)>,
    pub adaptive: bool,
    pub preprocessing: Preprocessing,
    /// Full-data path at each ρ, on the prepared scale.
    pub paths: Vec<PliableFit>,
}

impl CoopFit {
    pub fn to_model(&self) -> FusionModel {
        FusionModel {
            method: if self.adaptive { Method::AdaptiveCoop } else { Method::Coop },
            alpha: self.alpha,
            rho: Some(self.rho),
            lambda: self.lambda,
            coefs1: self.coefs1.clone(),
            coefs2: self.coefs2.clone(),
            weights: [1.0, 1.0],
            late: None,
            preprocessing: self.preprocessing.clone(),
        }
    }

    pub fn stacked(&self) -> PliableCoefs {
        PliableCoefs::stack(&self.coefs1, &self.coefs2).expect("same K")
    }
}

/// Cross-validates the augmented problem at every ρ on shared folds.
pub fn cv_over_grid(
    data: &MultiViewData,
    grid: &RhoGrid,
    config: &SolverConfig,
    folds: &Folds,
    source2_factor: f64,
) -> Result<Vec<CvResult>> {
    grid.values()
        .par_iter()
        .map(|&rho| {
            let problem = build_augmented_weighted(data, rho, config.alpha, source2_factor)?;
            cv_fit(&problem, folds, config).map_err(|e| e.at_rho(rho))
        })
        .collect()
}

fn assemble(
    prepared: &PreparedData,
    grid: &RhoGrid,
    config: &SolverConfig,
    folds: &Folds,
    results: Vec<CvResult>,
    source2_factor: f64,
    source_lambdas: Option<(f64, f64)>,
) -> CoopFit {
    // smallest ρ wins ties: scan in grid order, replace only on strict improvement
    let mut best = 0;
    for (i, r) in results.iter().enumerate().skip(1) {
        if r.min_error() < results[best].min_error() {
            best = i;
        }
    }
    let n_lambda = results.iter().map(|r| r.lambdas.len()).max().unwrap_or(0);
    let mut surface = Array2::from_elem((results.len(), n_lambda), f64::NAN);
    let mut se = surface.clone();
    let mut lambdas = surface.clone();
    for (i, r) in results.iter().enumerate() {
        for l in 0..r.lambdas.len() {
            surface[[i, l]] = r.mean_error[l];
            se[[i, l]] = r.se_error[l];
            lambdas[[i, l]] = r.lambdas[l];
        }
    }
    let chosen = &results[best];
    let paths = results.iter().map(|r| r.full.clone()).collect();
    let (coefs1, coefs2) = chosen.selected_coefs().split(prepared.data.p1());
    CoopFit {
        coefs1,
        coefs2,
        rho: grid.values()[best],
        lambda: chosen.lambda_min(),
        alpha: config.alpha,
        rho_grid: grid.values().to_vec(),
        cv_surface: surface,
        cv_se: se,
        cv_lambdas: lambdas,
        rho_index: best,
        lambda_index: chosen.lambda_min_index,
        folds: folds.clone(),
        source2_factor,
        source_lambdas,
        adaptive: source_lambdas.is_some(),
        preprocessing: prepared.record.clone(),
        paths,
    }
}

/// Grid search over ρ with a single λ shared by both sources.
pub fn fit_coop(prepared: &PreparedData, grid: &RhoGrid, config: &SolverConfig, folds: &Folds) -> Result<CoopFit> {
    let results = cv_over_grid(&prepared.data, grid, config, folds, 1.0)?;
    Ok(assemble(prepared, grid, config, folds, results, 1.0, None))
}

/// Grid search over ρ with source 2 penalized by `λ2 / λ1`, the ratio of the
/// single-source CV choices. The single-source fits use the same folds.
pub fn fit_adaptive_coop(
    prepared: &PreparedData,
    grid: &RhoGrid,
    config: &SolverConfig,
    folds: &Folds,
) -> Result<CoopFit> {
    let (first, second) = rayon::join(
        || fit_single(prepared, Source::One, config, folds),
        || fit_single(prepared, Source::Two, config, folds),
    );
    fit_adaptive_coop_from_singles(prepared, grid, config, folds, &first?, &second?)
}

/// As [`fit_adaptive_coop`], reusing single-source fits made on `folds`.
pub fn fit_adaptive_coop_from_singles(
    prepared: &PreparedData,
    grid: &RhoGrid,
    config: &SolverConfig,
    folds: &Folds,
    first: &SingleFit,
    second: &SingleFit,
) -> Result<CoopFit> {
    let (lambda1, lambda2) = (first.lambda(), second.lambda());
    let factor = adaptive_factor(lambda1, lambda2)?;
    let results = cv_over_grid(&prepared.data, grid, config, folds, factor)?;
    Ok(assemble(
        prepared,
        grid,
        config,
        folds,
        results,
        factor,
        Some((lambda1, lambda2)),
    ))
}

/// `λ2 / λ1`, rejecting a degenerate denominator.
pub fn adaptive_factor(lambda1: f64, lambda2: f64) -> Result<f64> {
    if !(lambda1 > 0.0 && lambda1.is_finite()) {
        return Err(Error::invalid(format!("source-1 lambda is {lambda1}; ratio undefined")));
    }
    let f = lambda2 / lambda1;
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::invalid(format!("penalty ratio {f} is not positive and finite")));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny() -> MultiViewData {
        MultiViewData::new(
            Array2::from_shape_fn((7, 3), |(i, j)| (i * 3 + j) as f64 * 0.1 - 1.0),
            Array2::from_shape_fn((7, 4), |(i, j)| ((i + j) % 3) as f64 - 1.0),
            Array2::from_shape_fn((7, 2), |(i, j)| (i % 2 + j) as f64),
            array![1.0, -1.0, 0.5, 0.0, 2.0, -2.0, -0.5],
        )
        .unwrap()
    }

    #[test]
    fn augmented_shapes() {
        let p = build_augmented(&tiny(), 2.0, 0.5).unwrap();
        assert_eq!((p.n_rows(), p.p(), p.k()), (14, 7, 2));
        assert_eq!(p.n_obs(), 7);
        assert!(p.z().slice(s![7.., ..]).iter().all(|&v| v == 0.0));
        assert!(p.y().slice(s![7..]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rho_zero_leaves_bottom_block_empty() {
        let p = build_augmented(&tiny(), 0.0, 0.5).unwrap();
        assert!(p.x().slice(s![7.., ..]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn negative_rho_rejected() {
        assert!(build_augmented(&tiny(), -0.1, 0.5).is_err());
    }

    #[test]
    fn grid_validation() {
        assert_eq!(RhoGrid::default().values(), &[0., 1., 2., 3., 4., 5., 6., 7., 8., 9.]);
        assert!(RhoGrid::new(vec![]).is_err());
        assert!(RhoGrid::new(vec![1.0, 0.5]).is_err());
        assert!(RhoGrid::new(vec![-1.0]).is_err());
    }

    #[test]
    fn adaptive_factor_rejects_zero_lambda() {
        assert!(adaptive_factor(0.0, 1.0).is_err());
        assert_eq!(adaptive_factor(2.0, 8.0).unwrap(), 4.0);
    }
}
