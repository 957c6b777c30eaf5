//! The on-disk model format.

use std::path::Path;

use anyhow::{bail, Context, Result};
use coop_pliable::fitted::LateCombiner;
use coop_pliable::{FusionModel, Method, PliableCoefs, Preprocessing};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::io::ZEncoding;
use crate::run::CvSurface;

pub const FORMAT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Coefficients as plain nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub beta1: Vec<f64>,
    pub theta1: Vec<Vec<f64>>,
    pub beta2: Vec<f64>,
    pub theta2: Vec<Vec<f64>>,
}

fn rows(theta: &Array2<f64>) -> Vec<Vec<f64>> {
    theta.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn to_coefs(beta: &[f64], theta: &[Vec<f64>], what: &str) -> Result<PliableCoefs> {
    let k = theta.first().map_or(0, Vec::len);
    if theta.len() != beta.len() || theta.iter().any(|r| r.len() != k) {
        bail!("{what}: theta must have one row of equal length per main effect");
    }
    let flat: Vec<f64> = theta.iter().flatten().copied().collect();
    Ok(PliableCoefs::new(
        Array1::from(beta.to_vec()),
        Array2::from_shape_vec((beta.len(), k), flat)?,
    )?)
}

impl Coefficients {
    pub fn from_model(model: &FusionModel) -> Self {
        Self {
            beta1: model.coefs1.beta.to_vec(),
            theta1: rows(&model.coefs1.theta),
            beta2: model.coefs2.beta.to_vec(),
            theta2: rows(&model.coefs2.theta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: String,
    pub method: Method,
    pub alpha: f64,
    pub rho: Option<f64>,
    pub lambda: f64,
    #[serde(flatten)]
    pub coefficients: Coefficients,
    /// Multipliers on each source's prediction.
    pub weights: [f64; 2],
    pub late: Option<LateCombiner>,
    pub preprocessing: Preprocessing,
    pub z_encoding: ZEncoding,
    pub cv_surface: CvSurface,
    pub config: RunConfig,
    /// SHA-256 of the training predictions as little-endian f64 bytes.
    pub train_prediction_sha256: String,
}

impl ModelFile {
    pub fn to_model(&self) -> Result<FusionModel> {
        let c = &self.coefficients;
        Ok(FusionModel {
            method: self.method,
            alpha: self.alpha,
            rho: self.rho,
            lambda: self.lambda,
            coefs1: to_coefs(&c.beta1, &c.theta1, "source 1")?,
            coefs2: to_coefs(&c.beta2, &c.theta2, "source 2")?,
            weights: self.weights,
            late: self.late.clone(),
            preprocessing: self.preprocessing.clone(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("malformed model file {}", path.display()))
    }
}

pub fn prediction_hash(pred: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in pred {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
