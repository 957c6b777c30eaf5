//! Comparison methods: one source alone, early fusion (concatenated design)
//! and late fusion (stacked per-source predictions).

use ndarray::{Array1, ArrayView1};

use crate::cv::{cv_fit, CvResult, Folds};
use crate::error::Result;
use crate::fitted::{FusionModel, LateCombiner, Method};
use crate::model::{MultiViewData, PliableCoefs, PliableProblem, PreparedData, Source, ViewScaling};
use crate::solver::SolverConfig;

/// `(X_source, Z, y)` with unit penalty factors.
pub fn single_problem(data: &MultiViewData, source: Source, alpha: f64) -> Result<PliableProblem> {
    let x = data.source(source).to_owned();
    let p = x.ncols();
    PliableProblem::new(x, data.z().to_owned(), data.y().to_owned(), Array1::ones(p), alpha)
}

/// `([X1 X2], Z, y)` with unit penalty factors.
pub fn early_problem(data: &MultiViewData, alpha: f64) -> Result<PliableProblem> {
    let x = data.concatenated();
    let p = x.ncols();
    PliableProblem::new(x, data.z().to_owned(), data.y().to_owned(), Array1::ones(p), alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleFit {
    pub source: Source,
    pub cv: CvResult,
    pub scaling: ViewScaling,
}

impl SingleFit {
    pub fn lambda(&self) -> f64 {
        self.cv.lambda_min()
    }

    pub fn coefs(&self) -> &PliableCoefs {
        self.cv.selected_coefs()
    }

    /// Out-of-fold predictions at the selected λ.
    pub fn out_of_fold(&self) -> ArrayView1<'_, f64> {
        self.cv.out_of_fold.column(self.cv.lambda_min_index)
    }
}

pub fn fit_single(prepared: &PreparedData, source: Source, config: &SolverConfig, folds: &Folds) -> Result<SingleFit> {
    let problem = single_problem(&prepared.data, source, config.alpha)?;
    let cv = cv_fit(&problem, folds, config)?;
    let scaling = prepared.record.view(source);
    let full = cv.full.clone().with_scaling(scaling.clone());
    Ok(SingleFit {
        source,
        cv: CvResult { full, ..cv },
        scaling,
    })
}

impl SingleFit {
    pub fn to_model(&self, prepared: &PreparedData) -> FusionModel {
        let d = &prepared.data;
        let (coefs1, coefs2) = match self.source {
            Source::One => (self.coefs().clone(), PliableCoefs::zeros(d.p2(), d.k())),
            Source::Two => (PliableCoefs::zeros(d.p1(), d.k()), self.coefs().clone()),
        };
        FusionModel {
            method: match self.source {
                Source::One => Method::OnlyX1,
                Source::Two => Method::OnlyX2,
            },
            alpha: self.cv.full.alpha,
            rho: None,
            lambda: self.lambda(),
            coefs1,
            coefs2,
            weights: [1.0, 1.0],
            late: None,
            preprocessing: prepared.record.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EarlyFusionFit {
    pub cv: CvResult,
    pub p1: usize,
}

impl EarlyFusionFit {
    pub fn lambda(&self) -> f64 {
        self.cv.lambda_min()
    }

    pub fn coefs(&self) -> &PliableCoefs {
        self.cv.selected_coefs()
    }

    pub fn to_model(&self, prepared: &PreparedData) -> FusionModel {
        let (coefs1, coefs2) = self.coefs().split(self.p1);
        FusionModel {
            method: Method::Early,
            alpha: self.cv.full.alpha,
            rho: None,
            lambda: self.lambda(),
            coefs1,
            coefs2,
            weights: [1.0, 1.0],
            late: None,
            preprocessing: prepared.record.clone(),
        }
    }
}

pub fn fit_early_fusion(prepared: &PreparedData, config: &SolverConfig, folds: &Folds) -> Result<EarlyFusionFit> {
    let problem = early_problem(&prepared.data, config.alpha)?;
    let cv = cv_fit(&problem, folds, config)?;
    let full = cv.full.clone().with_scaling(prepared.record.concatenated());
    Ok(EarlyFusionFit {
        cv: CvResult { full, ..cv },
        p1: prepared.data.p1(),
    })
}

/// Least-squares weights for `y ~ w1 f1 + w2 f2` without intercept (all three
/// vectors live on the centered scale). Returns the weights and whether the
/// collinear fallback `(0.5, 0.5)` was used.
pub fn combine_predictions(y: ArrayView1<'_, f64>, f1: ArrayView1<'_, f64>, f2: ArrayView1<'_, f64>) -> ([f64; 2], bool) {
    let g11 = f1.dot(&f1);
    let g22 = f2.dot(&f2);
    let g12 = f1.dot(&f2);
    let r1 = f1.dot(&y);
    let r2 = f2.dot(&y);
    match (g11 > 0.0, g22 > 0.0) {
        (false, false) => ([0.5, 0.5], true),
        (true, false) => ([r1 / g11, 0.0], false),
        (false, true) => ([0.0, r2 / g22], false),
        (true, true) => {
            let det = g11 * g22 - g12 * g12;
            if det <= 1e-10 * g11 * g22 {
                ([0.5, 0.5], true)
            } else {
                ([(g22 * r1 - g12 * r2) / det, (g11 * r2 - g12 * r1) / det], false)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LateFusionFit {
    pub first: SingleFit,
    pub second: SingleFit,
    pub weights: [f64; 2],
    pub collinear_fallback: bool,
    /// The combiner only ever sees out-of-fold predictions.
    pub fit_on_out_of_fold: bool,
}

impl LateFusionFit {
    pub fn to_model(&self, prepared: &PreparedData) -> FusionModel {
        FusionModel {
            method: Method::Late,
            alpha: self.first.cv.full.alpha,
            rho: None,
            lambda: self.first.lambda(),
            coefs1: self.first.coefs().clone(),
            coefs2: self.second.coefs().clone(),
            weights: self.weights,
            late: Some(LateCombiner {
                lambda2: self.second.lambda(),
                collinear_fallback: self.collinear_fallback,
            }),
            preprocessing: prepared.record.clone(),
        }
    }
}

pub fn fit_late_fusion(prepared: &PreparedData, config: &SolverConfig, folds: &Folds) -> Result<LateFusionFit> {
    let (first, second) = rayon::join(
        || fit_single(prepared, Source::One, config, folds),
        || fit_single(prepared, Source::Two, config, folds),
    );
    Ok(LateFusionFit::from_singles(prepared, first?, second?))
}

impl LateFusionFit {
    /// Combines two single-source fits made on the same folds.
    pub fn from_singles(prepared: &PreparedData, first: SingleFit, second: SingleFit) -> Self {
        let (weights, collinear_fallback) =
            combine_predictions(prepared.data.y(), first.out_of_fold(), second.out_of_fold());
        Self {
            first,
            second,
            weights,
            collinear_fallback,
            fit_on_out_of_fold: true,
        }
    }
}
