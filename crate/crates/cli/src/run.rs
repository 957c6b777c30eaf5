//! Method dispatch: one fitted model plus its cross-validation surface.

use anyhow::Result;
use coop_pliable::baselines::{fit_early_fusion, fit_late_fusion, fit_single};
use coop_pliable::{fit_adaptive_coop, fit_coop, CvResult, Folds, FusionModel, Method, PreparedData, RhoGrid, SolverConfig, Source};
use serde::{Deserialize, Serialize};

/// One λ path's CV curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub label: String,
    pub rho: Option<f64>,
    pub lambdas: Vec<f64>,
    pub mean_error: Vec<f64>,
    pub se_error: Vec<f64>,
    pub selected: usize,
}

impl SurfaceRow {
    fn from_cv(label: &str, rho: Option<f64>, cv: &CvResult) -> Self {
        Self {
            label: label.to_string(),
            rho,
            lambdas: cv.lambdas.clone(),
            mean_error: cv.mean_error.clone(),
            se_error: cv.se_error.clone(),
            selected: cv.lambda_min_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSurface {
    pub rows: Vec<SurfaceRow>,
}

pub fn fit_method(
    prepared: &PreparedData,
    method: Method,
    grid: &RhoGrid,
    config: &SolverConfig,
    folds: &Folds,
) -> Result<(FusionModel, CvSurface)> {
    Ok(match method {
        Method::OnlyX1 | Method::OnlyX2 => {
            let source = if method == Method::OnlyX1 { Source::One } else { Source::Two };
            let fit = fit_single(prepared, source, config, folds)?;
            let row = SurfaceRow::from_cv(method.as_str(), None, &fit.cv);
            (fit.to_model(prepared), CvSurface { rows: vec![row] })
        }
        Method::Early => {
            let fit = fit_early_fusion(prepared, config, folds)?;
            let row = SurfaceRow::from_cv("early", None, &fit.cv);
            (fit.to_model(prepared), CvSurface { rows: vec![row] })
        }
        Method::Late => {
            let fit = fit_late_fusion(prepared, config, folds)?;
            let rows = vec![
                SurfaceRow::from_cv("only-x1", None, &fit.first.cv),
                SurfaceRow::from_cv("only-x2", None, &fit.second.cv),
            ];
            (fit.to_model(prepared), CvSurface { rows })
        }
        Method::Coop | Method::AdaptiveCoop => {
            let fit = if method == Method::Coop {
                fit_coop(prepared, grid, config, folds)?
            } else {
                fit_adaptive_coop(prepared, grid, config, folds)?
            };
            let rows = fit
                .rho_grid
                .iter()
                .enumerate()
                .map(|(i, &rho)| SurfaceRow {
                    label: format!("rho={rho}"),
                    rho: Some(rho),
                    lambdas: fit.cv_lambdas.row(i).to_vec(),
                    mean_error: fit.cv_surface.row(i).to_vec(),
                    se_error: fit.cv_se.row(i).to_vec(),
                    selected: if i == fit.rho_index {
                        fit.lambda_index
                    } else {
                        coop_pliable::cv::argmin_first(&fit.cv_surface.row(i).to_vec())
                    },
                })
                .collect();
            (fit.to_model(), CvSurface { rows })
        }
    })
}
