//! A single prediction-ready representation shared by every method, so that
//! metrics and serialization treat baselines and cooperative fits alike.

use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MultiViewData, PliableCoefs, Preprocessing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    OnlyX1,
    OnlyX2,
    Early,
    Late,
    Coop,
    AdaptiveCoop,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::OnlyX1,
        Method::OnlyX2,
        Method::Early,
        Method::Late,
        Method::Coop,
        Method::AdaptiveCoop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::OnlyX1 => "only-x1",
            Method::OnlyX2 => "only-x2",
            Method::Early => "early",
            Method::Late => "late",
            Method::Coop => "coop",
            Method::AdaptiveCoop => "adaptive-coop",
        }
    }

    pub fn is_cooperative(self) -> bool {
        matches!(self, Method::Coop | Method::AdaptiveCoop)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))
    }
}

/// Late-fusion combiner details.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LateCombiner {
    pub lambda2: f64,
    /// True when the out-of-fold predictions were collinear and equal
    /// weights were used instead of least squares.
    pub collinear_fallback: bool,
}

/// Per-source coefficients plus the weights applied to each source's
/// prediction: `y_center + w1 f1(X1, Z) + w2 f2(X2, Z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub method: Method,
    pub alpha: f64,
    pub rho: Option<f64>,
    pub lambda: f64,
    pub coefs1: PliableCoefs,
    pub coefs2: PliableCoefs,
    pub weights: [f64; 2],
    pub late: Option<LateCombiner>,
    pub preprocessing: Preprocessing,
}

impl FusionModel {
    /// Predictions for raw (unprocessed) inputs.
    pub fn predict(&self, raw: &MultiViewData) -> Result<Array1<f64>> {
        let data = self.preprocessing.transform(raw)?;
        self.predict_prepared(&data)
    }

    /// Predictions for inputs already on the fitting scale.
    pub fn predict_prepared(&self, data: &MultiViewData) -> Result<Array1<f64>> {
        let f1 = self.coefs1.linear_predictor(data.x1(), data.z())?;
        let f2 = self.coefs2.linear_predictor(data.x2(), data.z())?;
        Ok(f1 * self.weights[0] + f2 * self.weights[1] + self.preprocessing.y_center)
    }

    /// Main-effect selection mask over `[X1 X2]`.
    pub fn main_selected(&self) -> Vec<bool> {
        let active = |c: &PliableCoefs, w: f64| -> Vec<bool> { c.beta.iter().map(|&b| b != 0.0 && w != 0.0).collect() };
        let mut mask = active(&self.coefs1, self.weights[0]);
        mask.extend(active(&self.coefs2, self.weights[1]));
        mask
    }

    /// Interaction selection mask over `[theta1; theta2]`, row-major.
    pub fn interaction_selected(&self) -> Vec<bool> {
        let active = |c: &PliableCoefs, w: f64| -> Vec<bool> { c.theta.iter().map(|&t| t != 0.0 && w != 0.0).collect() };
        let mut mask = active(&self.coefs1, self.weights[0]);
        mask.extend(active(&self.coefs2, self.weights[1]));
        mask
    }
}
