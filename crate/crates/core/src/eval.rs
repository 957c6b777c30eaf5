//! Test error, sparsity counts, selection sensitivity/specificity across
//! replicates, and per-method experiment summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitted::{FusionModel, Method};
use crate::model::{MultiViewData, PliableCoefs};
use crate::simgen::SimTruth;

pub fn test_mse(model: &FusionModel, test: &MultiViewData) -> Result<f64> {
    let yhat = model.predict(test)?;
    mse(test.y().as_slice().expect("contiguous"), yhat.as_slice().expect("contiguous"))
}

pub fn mse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    if y.len() != yhat.len() {
        return Err(Error::Dimension {
            what: "predictions",
            expected: y.len(),
            found: yhat.len(),
        });
    }
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EffectCounts {
    pub main: usize,
    pub interaction: usize,
}

impl EffectCounts {
    pub fn total(&self) -> usize {
        self.main + self.interaction
    }
}

impl std::ops::Add for EffectCounts {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            main: self.main + rhs.main,
            interaction: self.interaction + rhs.interaction,
        }
    }
}

/// Nonzero main effects and nonzero interaction entries; exact zero test.
pub fn count_effects(coefs: &PliableCoefs) -> EffectCounts {
    EffectCounts {
        main: coefs.beta.iter().filter(|&&b| b != 0.0).count(),
        interaction: coefs.theta.iter().filter(|&&t| t != 0.0).count(),
    }
}

/// Counts summed over both sources; a source with zero weight contributes
/// nothing.
pub fn count_model_effects(model: &FusionModel) -> EffectCounts {
    let part = |c: &PliableCoefs, w: f64| if w == 0.0 { EffectCounts::default() } else { count_effects(c) };
    part(&model.coefs1, model.weights[0]) + part(&model.coefs2, model.weights[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionLevel {
    Main,
    Interaction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionScores {
    pub cutoff: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    /// `None` when the truth has no relevant variables.
    pub sensitivity: Option<f64>,
    /// `None` when every variable is relevant.
    pub specificity: Option<f64>,
}

/// A variable counts as selected when it is active in strictly more than
/// `cutoff` of the replicate masks.
pub fn selection_scores_from_masks(masks: &[Vec<bool>], truth: &[bool], cutoff: usize) -> Result<SelectionScores> {
    if cutoff > masks.len() {
        return Err(Error::invalid(format!(
            "cutoff {cutoff} exceeds the {} replicates",
            masks.len()
        )));
    }
    if let Some(m) = masks.iter().find(|m| m.len() != truth.len()) {
        return Err(Error::Dimension {
            what: "selection mask",
            expected: truth.len(),
            found: m.len(),
        });
    }
    let (mut tp, mut fp, mut tn, mut fneg) = (0, 0, 0, 0);
    for (v, &relevant) in truth.iter().enumerate() {
        let hits = masks.iter().filter(|m| m[v]).count();
        match (hits > cutoff, relevant) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fneg += 1,
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(SelectionScores {
        cutoff,
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fneg,
        sensitivity: ratio(tp, tp + fneg),
        specificity: ratio(tn, tn + fp),
    })
}

/// Pooled over both sources.
pub fn selection_scores(
    fits: &[FusionModel],
    truth: &SimTruth,
    cutoff: usize,
    level: SelectionLevel,
) -> Result<SelectionScores> {
    let (masks, reference): (Vec<Vec<bool>>, Vec<bool>) = match level {
        SelectionLevel::Main => (fits.iter().map(FusionModel::main_selected).collect(), truth.main_mask()),
        SelectionLevel::Interaction => (
            fits.iter().map(FusionModel::interaction_selected).collect(),
            truth.interaction_mask(),
        ),
    };
    selection_scores_from_masks(&masks, &reference, cutoff)
}

/// Scores at every cutoff `0..=replicates`.
pub fn selection_curve(masks: &[Vec<bool>], truth: &[bool]) -> Result<Vec<SelectionScores>> {
    (0..=masks.len()).map(|c| selection_scores_from_masks(masks, truth, c)).collect()
}

/// One method's outcome on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub method: Method,
    pub replicate: usize,
    pub test_mse: f64,
    pub counts: EffectCounts,
    pub rho: Option<f64>,
    pub lambda: f64,
}

impl ReplicateResult {
    pub fn from_model(model: &FusionModel, replicate: usize, test: &MultiViewData) -> Result<Self> {
        Ok(Self {
            method: model.method,
            replicate,
            test_mse: test_mse(model, test)?,
            counts: count_model_effects(model),
            rho: model.rho,
            lambda: model.lambda,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub replicates: usize,
    pub mean_mse: f64,
    /// Sample standard deviation; 0 for a single replicate.
    pub sd_mse: f64,
    pub mean_main: f64,
    pub mean_interaction: f64,
    /// Rounded half-up.
    pub rounded_main: u64,
    pub rounded_interaction: u64,
    /// `(rho, count)` pairs, ascending in rho; empty for non-cooperative methods.
    pub rho_histogram: Vec<(f64, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<MethodSummary>,
}

impl ExperimentReport {
    pub fn row(&self, method: Method) -> Option<&MethodSummary> {
        self.rows.iter().find(|r| r.method == method)
    }
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn round_half_up(x: f64) -> u64 {
    (x + 0.5).floor().max(0.0) as u64
}

/// Per-method rows in [`Method::ALL`] order.
pub fn summarize_experiment(results: &[ReplicateResult]) -> Result<ExperimentReport> {
    if results.is_empty() {
        return Err(Error::invalid("no replicate results to summarize"));
    }
    let mut rows = Vec::new();
    for method in Method::ALL {
        let runs: Vec<&ReplicateResult> = results.iter().filter(|r| r.method == method).collect();
        if runs.is_empty() {
            continue;
        }
        let mses: Vec<f64> = runs.iter().map(|r| r.test_mse).collect();
        let (mean_mse, sd_mse) = mean_sd(&mses);
        let n = runs.len() as f64;
        let mean_main = runs.iter().map(|r| r.counts.main as f64).sum::<f64>() / n;
        let mean_interaction = runs.iter().map(|r| r.counts.interaction as f64).sum::<f64>() / n;
        let mut hist: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
        for rho in runs.iter().filter_map(|r| r.rho) {
            hist.entry(rho.to_bits()).or_insert((rho, 0)).1 += 1;
        }
        let mut rho_histogram: Vec<(f64, usize)> = hist.into_values().collect();
        rho_histogram.sort_by(|a, b| a.0.total_cmp(&b.0));
        rows.push(MethodSummary {
            method,
            replicates: runs.len(),
            mean_mse,
            sd_mse,
            mean_main,
            mean_interaction,
            rounded_main: round_half_up(mean_main),
            rounded_interaction: round_half_up(mean_interaction),
            rho_histogram,
        });
    }
    Ok(ExperimentReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn mse_cases() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!(mse(&[], &[]).is_err());
        assert_eq!(mse(&[1.0, 3.0], &[0.0, 0.0]).unwrap(), 5.0);
    }

    #[test]
    fn counts_effects() {
        assert_eq!(count_effects(&PliableCoefs::zeros(3, 2)), EffectCounts::default());
        let mut theta = ndarray::Array2::zeros((3, 2));
        theta[[0, 0]] = 0.5;
        let c = PliableCoefs::new(array![1.0, 0.0, 2.0], theta).unwrap();
        assert_eq!(count_effects(&c), EffectCounts { main: 2, interaction: 1 });
    }

    #[test]
    fn hand_enumerated_confusion_matrix() {
        // truth: variables 0 and 1 relevant out of 5
        let truth = [true, true, false, false, false];
        let masks = vec![
            vec![true, false, true, false, false],
            vec![true, true, false, false, false],
            vec![false, true, true, false, true],
        ];
        // hits per variable: 2, 2, 2, 0, 1; cutoff 1 keeps hits > 1
        let s = selection_scores_from_masks(&masks, &truth, 1).unwrap();
        assert_eq!(
            (s.true_positives, s.false_positives, s.true_negatives, s.false_negatives),
            (2, 1, 2, 0)
        );
        assert_eq!(s.sensitivity, Some(1.0));
        assert_eq!(s.specificity, Some(2.0 / 3.0));
    }

    #[test]
    fn full_cutoff_selects_nothing() {
        let truth = [true, false, false];
        let masks = vec![vec![true, true, true]; 4];
        let s = selection_scores_from_masks(&masks, &truth, 4).unwrap();
        assert_eq!(s.specificity, Some(1.0));
        assert_eq!(s.sensitivity, Some(0.0));
        assert!(selection_scores_from_masks(&masks, &truth, 5).is_err());
    }

    #[test]
    fn empty_truth_has_no_sensitivity() {
        let s = selection_scores_from_masks(&[vec![false, true]], &[false, false], 0).unwrap();
        assert_eq!(s.sensitivity, None);
        assert_eq!(s.specificity, Some(0.5));
    }

    #[test]
    fn rounding_and_spread() {
        assert_eq!(round_half_up((3.0 + 4.0 + 4.0) / 3.0), 4);
        assert_eq!(round_half_up(2.5), 3);
        assert_eq!(mean_sd(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
