//! Cooperative pliable lasso.
//!
//! Penalized linear regression over two feature views `X1`, `X2` whose main
//! effects may be modified by a shared set of variables `Z`, with an agreement
//! penalty tying the two views' main-effect predictions together. Fitting goes
//! through a single-view pliable lasso solver (blockwise coordinate descent)
//! applied to a stacked design.

pub mod baselines;
pub mod coop;
pub mod cv;
pub mod error;
pub mod eval;
pub mod fitted;
pub mod model;
pub mod oracle;
pub mod simgen;
pub mod solver;

pub use coop::{build_augmented, fit_adaptive_coop, fit_coop, CoopFit, RhoGrid};
pub use cv::{cv_fit, make_folds, CvResult, FoldSpec, Folds};
pub use error::{Error, Result};
pub use fitted::{FusionModel, Method};
pub use model::{
    coop_objective, pliable_objective, predict, prepare, MultiViewData, PliableCoefs, PliableProblem,
    PrepareOptions, PreparedData, Preprocessing, Source,
};
pub use solver::{fit_path, kkt_check, lambda_path, soft_threshold, PliableFit, SolverConfig};
