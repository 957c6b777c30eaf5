//! Latent-factor benchmark generator.
//!
//! Features and modifiers start as i.i.d. standard normals. For the first
//! `p_u` feature indices a shared latent column `u_i` is mixed into both views
//! (weights `t1`, `t2`) and, for `i < K` (1-based), into modifier `z_i`. The
//! response is the pliable signal of both views plus Gaussian noise.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MultiViewData, PliableCoefs};

/// How the latent factor enters the second view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SecondViewRule {
    /// `x2_i := x2_i + t2 u_i`.
    #[default]
    Symmetric,
    /// `x2_i := x1_i + t2 u_i`, applied after the first view's update.
    CopyFirst,
}

/// Sparse coefficient pattern for one source: `n_main` leading main effects
/// of magnitude `main_value` with alternating signs, and the first
/// `n_interacting` of them interacting with the first `n_modifiers`
/// modifiers, magnitude `interaction_value`, signs alternating over modifiers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefPattern {
    pub n_main: usize,
    pub main_value: f64,
    pub n_interacting: usize,
    pub n_modifiers: usize,
    pub interaction_value: f64,
}

impl Default for CoefPattern {
    fn default() -> Self {
        Self {
            n_main: 10,
            main_value: 2.0,
            n_interacting: 4,
            n_modifiers: 2,
            interaction_value: 2.0,
        }
    }
}

impl CoefPattern {
    fn realize(&self, p: usize, k: usize) -> Result<PliableCoefs> {
        if self.n_main > p || self.n_interacting > self.n_main || self.n_modifiers > k {
            return Err(Error::invalid(format!(
                "coefficient pattern {self:?} does not fit p = {p}, K = {k}"
            )));
        }
        let mut c = PliableCoefs::zeros(p, k);
        for j in 0..self.n_main {
            c.beta[j] = if j % 2 == 0 { self.main_value } else { -self.main_value };
        }
        for j in 0..self.n_interacting {
            for kk in 0..self.n_modifiers {
                c.theta[[j, kk]] = if kk % 2 == 0 {
                    self.interaction_value
                } else {
                    -self.interaction_value
                };
            }
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthSpec {
    /// `None` means the source carries no signal.
    Pattern {
        source1: Option<CoefPattern>,
        source2: Option<CoefPattern>,
    },
    Explicit {
        beta1: Vec<f64>,
        theta1: Vec<Vec<f64>>,
        beta2: Vec<f64>,
        theta2: Vec<Vec<f64>>,
    },
}

impl Default for TruthSpec {
    fn default() -> Self {
        TruthSpec::Pattern {
            source1: Some(CoefPattern::default()),
            source2: Some(CoefPattern::default()),
        }
    }
}

fn explicit_coefs(beta: &[f64], theta: &[Vec<f64>], p: usize, k: usize) -> Result<PliableCoefs> {
    if beta.len() != p || theta.len() != p || theta.iter().any(|r| r.len() != k) {
        return Err(Error::invalid(format!("explicit coefficients must be {p} x {k}")));
    }
    let flat: Vec<f64> = theta.iter().flatten().copied().collect();
    let theta = Array2::from_shape_vec((p, k), flat).expect("checked shape");
    PliableCoefs::new(Array1::from(beta.to_vec()), theta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub name: String,
    pub n: usize,
    pub n_test: usize,
    pub p1: usize,
    pub p2: usize,
    pub k: usize,
    pub p_u: usize,
    pub t1: f64,
    pub t2: f64,
    /// Noise standard deviation, used when `target_snr` is unset.
    pub sigma: f64,
    /// When set, σ is calibrated on each generated sample so the realized
    /// signal-to-noise ratio equals this value.
    pub target_snr: Option<f64>,
    pub truth: TruthSpec,
    #[serde(default)]
    pub second_view: SecondViewRule,
    pub seed: u64,
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.n_test < 2 {
            return Err(Error::invalid("train and test sizes must be at least 2"));
        }
        if self.p1 == 0 || self.p2 == 0 || self.k == 0 {
            return Err(Error::invalid("p1, p2 and K must be positive"));
        }
        if self.p_u >= self.p1 || self.p_u >= self.p2 {
            return Err(Error::invalid(format!(
                "latent factor count {} must be below p1 = {} and p2 = {}",
                self.p_u, self.p1, self.p2
            )));
        }
        if !(self.t1 >= 0.0 && self.t2 >= 0.0 && self.t1.is_finite() && self.t2.is_finite()) {
            return Err(Error::invalid("t1, t2 must be finite and nonnegative"));
        }
        match self.target_snr {
            Some(s) if !(s > 0.0 && s.is_finite()) => {
                return Err(Error::invalid(format!("target SNR must be positive, got {s}")))
            }
            None if !(self.sigma > 0.0 && self.sigma.is_finite()) => {
                return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)))
            }
            _ => {}
        }
        self.true_coefs().map(|_| ())
    }

    pub fn true_coefs(&self) -> Result<(PliableCoefs, PliableCoefs)> {
        match &self.truth {
            TruthSpec::Pattern { source1, source2 } => {
                let realize = |pat: &Option<CoefPattern>, p: usize| match pat {
                    Some(pat) => pat.realize(p, self.k),
                    None => Ok(PliableCoefs::zeros(p, self.k)),
                };
                Ok((realize(source1, self.p1)?, realize(source2, self.p2)?))
            }
            TruthSpec::Explicit {
                beta1,
                theta1,
                beta2,
                theta2,
            } => Ok((
                explicit_coefs(beta1, theta1, self.p1, self.k)?,
                explicit_coefs(beta2, theta2, self.p2, self.k)?,
            )),
        }
    }

    /// Same scenario at a different size; the latent count is capped below `p`.
    pub fn scaled(mut self, n: usize, p: usize, n_test: usize) -> Self {
        self.n = n;
        self.n_test = n_test;
        self.p1 = p;
        self.p2 = p;
        self.p_u = self.p_u.min(p.saturating_sub(1));
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Ground truth for one generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub coefs1: PliableCoefs,
    pub coefs2: PliableCoefs,
    pub main_support1: Vec<usize>,
    pub main_support2: Vec<usize>,
    pub interaction_support1: Vec<(usize, usize)>,
    pub interaction_support2: Vec<(usize, usize)>,
    pub sigma: f64,
    /// Signal variance over noise variance on the joint train + test sample.
    pub realized_snr: f64,
}

impl SimTruth {
    fn new(coefs1: PliableCoefs, coefs2: PliableCoefs, sigma: f64, realized_snr: f64) -> Self {
        let main = |c: &PliableCoefs| (0..c.p()).filter(|&j| c.beta[j] != 0.0).collect();
        let inter = |c: &PliableCoefs| c.theta.indexed_iter().filter(|(_, &t)| t != 0.0).map(|(ix, _)| ix).collect();
        Self {
            main_support1: main(&coefs1),
            main_support2: main(&coefs2),
            interaction_support1: inter(&coefs1),
            interaction_support2: inter(&coefs2),
            coefs1,
            coefs2,
            sigma,
            realized_snr,
        }
    }

    /// Main-effect truth mask over `[X1 X2]`.
    pub fn main_mask(&self) -> Vec<bool> {
        self.coefs1.beta.iter().chain(self.coefs2.beta.iter()).map(|&b| b != 0.0).collect()
    }

    /// Interaction truth mask over `[theta1; theta2]`, row-major.
    pub fn interaction_mask(&self) -> Vec<bool> {
        self.coefs1.theta.iter().chain(self.coefs2.theta.iter()).map(|&t| t != 0.0).collect()
    }

    /// Noiseless response for `data`.
    pub fn signal(&self, data: &MultiViewData) -> Result<Array1<f64>> {
        Ok(self.coefs1.linear_predictor(data.x1(), data.z())? + self.coefs2.linear_predictor(data.x2(), data.z())?)
    }
}

fn sample_variance(v: ArrayView1<'_, f64>) -> f64 {
    let n = v.len() as f64;
    let mean = v.sum() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Variance of the noiseless signal over `data` divided by `sigma^2`.
pub fn compute_snr(data: &MultiViewData, truth: &SimTruth, sigma: f64) -> Result<f64> {
    let signal = truth.signal(data)?;
    Ok(sample_variance(signal.view()) / (sigma * sigma))
}

/// One generated benchmark dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub train: MultiViewData,
    pub test: MultiViewData,
    pub truth: SimTruth,
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Draws one joint sample of `n + n_test` rows and splits it into train and
/// test without overlap. Deterministic in the scenario seed.
pub fn generate(scenario: &SimScenario) -> Result<SimData> {
    scenario.validate()?;
    let (coefs1, coefs2) = scenario.true_coefs()?;
    let total = scenario.n + scenario.n_test;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut x1 = normal_matrix(&mut rng, total, scenario.p1);
    let mut x2 = normal_matrix(&mut rng, total, scenario.p2);
    let mut z = normal_matrix(&mut rng, total, scenario.k);
    for i in 0..scenario.p_u {
        let u: Array1<f64> = Array1::from_shape_simple_fn(total, || rng.sample(StandardNormal));
        let mut c1 = x1.column_mut(i);
        c1.scaled_add(scenario.t1, &u);
        let base = match scenario.second_view {
            SecondViewRule::Symmetric => x2.column(i).to_owned(),
            SecondViewRule::CopyFirst => x1.column(i).to_owned(),
        };
        let mut c2 = x2.column_mut(i);
        c2.assign(&base);
        c2.scaled_add(scenario.t2, &u);
        // 1-based i < K
        if i + 1 < scenario.k {
            z.column_mut(i).scaled_add(1.0, &u);
        }
    }
    let signal = coefs1.linear_predictor(x1.view(), z.view())? + coefs2.linear_predictor(x2.view(), z.view())?;
    let signal_var = sample_variance(signal.view());
    let sigma = match scenario.target_snr {
        Some(snr) if signal_var > 0.0 => (signal_var / snr).sqrt(),
        _ => scenario.sigma,
    };
    let noise: Array1<f64> = Array1::from_shape_simple_fn(total, || rng.sample::<f64, _>(StandardNormal) * sigma);
    let y = &signal + &noise;
    let realized_snr = signal_var / (sigma * sigma);

    let train_rows: Vec<usize> = (0..scenario.n).collect();
    let test_rows: Vec<usize> = (scenario.n..total).collect();
    let split = |rows: &[usize]| {
        MultiViewData::new(
            x1.select(Axis(0), rows),
            x2.select(Axis(0), rows),
            z.select(Axis(0), rows),
            y.select(Axis(0), rows),
        )
    };
    Ok(SimData {
        train: split(&train_rows)?,
        test: split(&test_rows)?,
        truth: SimTruth::new(coefs1, coefs2, sigma, realized_snr),
    })
}

pub const PRESET_NAMES: [&str; 8] = [
    "lowdim-1", "lowdim-2", "lowdim-3", "lowdim-4", "highdim-1", "highdim-2", "highdim-3", "highdim-4",
];

/// Benchmark scenarios. Low-dimensional: 500 training rows, 100 features per
/// view. High-dimensional: 200 training rows, 500 features per view. Both use
/// 9800 test rows, K = 4 modifiers and 20 latent factors.
pub fn preset(name: &str) -> Result<SimScenario> {
    let (low, t1, t2, snr, x2_signal) = match name {
        "lowdim-1" => (true, 2.0, 2.0, 5.0, true),
        "lowdim-2" => (true, 4.0, 4.0, 1.7, true),
        "lowdim-3" => (true, 0.0, 0.0, 2.2, true),
        "lowdim-4" => (true, 2.0, 0.0, 3.1, false),
        "highdim-1" => (false, 2.0, 2.0, 2.4, true),
        "highdim-2" => (false, 6.0, 1.0, 1.6, true),
        "highdim-3" => (false, 0.0, 0.0, 2.1, true),
        "highdim-4" => (false, 2.0, 0.0, 3.5, false),
        other => return Err(Error::invalid(format!("unknown preset '{other}'"))),
    };
    let (n, p) = if low { (500, 100) } else { (200, 500) };
    Ok(SimScenario {
        name: name.to_string(),
        n,
        n_test: 9800,
        p1: p,
        p2: p,
        k: 4,
        p_u: 20,
        t1,
        t2,
        sigma: 1.0,
        target_snr: Some(snr),
        truth: TruthSpec::Pattern {
            source1: Some(CoefPattern::default()),
            source2: x2_signal.then(CoefPattern::default),
        },
        second_view: SecondViewRule::Symmetric,
        seed: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimScenario {
        preset("lowdim-1").unwrap().scaled(60, 12, 20)
    }

    #[test]
    fn unknown_preset() {
        assert!(preset("midrange-1").is_err());
    }

    #[test]
    fn latent_count_must_be_below_p() {
        let mut s = small();
        s.p_u = 12;
        assert!(s.validate().is_err());
    }

    #[test]
    fn zero_truth_gives_pure_noise() {
        let mut s = small();
        s.truth = TruthSpec::Pattern {
            source1: None,
            source2: None,
        };
        s.target_snr = None;
        s.sigma = 1.5;
        let d = generate(&s).unwrap();
        assert_eq!(d.truth.realized_snr, 0.0);
        assert_eq!(compute_snr(&d.train, &d.truth, 1.5).unwrap(), 0.0);
        assert!(d.truth.main_support1.is_empty());
    }

    #[test]
    fn truth_respects_hierarchy() {
        let d = generate(&small()).unwrap();
        assert!(d.truth.coefs1.satisfies_hierarchy());
        assert!(d.truth.coefs2.satisfies_hierarchy());
        assert_eq!(d.truth.main_support1, (0..10).collect::<Vec<_>>());
        assert_eq!(d.truth.interaction_support1.len(), 8);
    }

    #[test]
    fn snr_shrinks_with_sigma() {
        let d = generate(&small()).unwrap();
        let first = compute_snr(&d.train, &d.truth, 0.5).unwrap();
        let mut last = f64::INFINITY;
        for sigma in [0.5, 1.0, 2.0, 10.0, 1e3] {
            let s = compute_snr(&d.train, &d.truth, sigma).unwrap();
            assert!(s < last);
            last = s;
        }
        assert!(last < first * 1e-5);
    }

    #[test]
    fn copy_first_rule_couples_views() {
        let mut s = small();
        s.second_view = SecondViewRule::CopyFirst;
        s.t2 = 0.0;
        let d = generate(&s).unwrap();
        assert_eq!(d.train.x1().column(0), d.train.x2().column(0));
    }
}
