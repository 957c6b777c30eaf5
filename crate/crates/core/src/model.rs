//! Domain types shared by every fitting path: the two-view dataset, the
//! preprocessing record, pliable coefficients, the single-view problem and the
//! two objective functions.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two feature views, the shared modifying variables and the response.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewData {
    x1: Array2<f64>,
    x2: Array2<f64>,
    z: Array2<f64>,
    y: Array1<f64>,
}

impl MultiViewData {
    pub fn new(x1: Array2<f64>, x2: Array2<f64>, z: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 observations, got {n}")));
        }
        for (what, m) in [("x1", &x1), ("x2", &x2), ("z", &z)] {
            if m.nrows() != n {
                return Err(Error::Dimension {
                    what,
                    expected: n,
                    found: m.nrows(),
                });
            }
            if m.ncols() == 0 {
                return Err(Error::invalid(format!("{what} has no columns")));
            }
            check_finite(what, m.view())?;
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                matrix: "y",
                row: i,
                col: 0,
            });
        }
        Ok(Self { x1, x2, z, y })
    }

    pub fn x1(&self) -> ArrayView2<'_, f64> {
        self.x1.view()
    }

    pub fn x2(&self) -> ArrayView2<'_, f64> {
        self.x2.view()
    }

    pub fn z(&self) -> ArrayView2<'_, f64> {
        self.z.view()
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p1(&self) -> usize {
        self.x1.ncols()
    }

    pub fn p2(&self) -> usize {
        self.x2.ncols()
    }

    pub fn k(&self) -> usize {
        self.z.ncols()
    }

    /// Design of one source: 1 for `x1`, 2 for `x2`.
    pub fn source(&self, source: Source) -> ArrayView2<'_, f64> {
        match source {
            Source::One => self.x1.view(),
            Source::Two => self.x2.view(),
        }
    }

    /// `[X1 X2]`, the early-fusion design.
    pub fn concatenated(&self) -> Array2<f64> {
        concatenate![Axis(1), self.x1, self.x2]
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            x1: self.x1.select(Axis(0), rows),
            x2: self.x2.select(Axis(0), rows),
            z: self.z.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
        }
    }

    pub fn into_parts(self) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array1<f64>) {
        (self.x1, self.x2, self.z, self.y)
    }
}

/// Which feature view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    One,
    Two,
}

fn check_finite(matrix: &'static str, m: ArrayView2<'_, f64>) -> Result<()> {
    for ((row, col), v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { matrix, row, col });
        }
    }
    Ok(())
}

/// Per-column centers and scales applied to one matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
    /// Columns whose sample standard deviation is zero; they keep scale 1.
    pub zero_variance: Vec<usize>,
}

impl ColumnScaling {
    pub fn identity(p: usize) -> Self {
        Self {
            centers: vec![0.0; p],
            scales: vec![1.0; p],
            zero_variance: Vec::new(),
        }
    }

    /// Column means and sample standard deviations of `x`. With
    /// `standardize == false` the identity transform is returned.
    pub fn fit(x: ArrayView2<'_, f64>, standardize: bool) -> Self {
        let p = x.ncols();
        if !standardize {
            return Self::identity(p);
        }
        let n = x.nrows() as f64;
        let mut out = Self::identity(p);
        for (j, col) in x.columns().into_iter().enumerate() {
            let mean = col.sum() / n;
            let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
            let sd = (ss / (n - 1.0)).sqrt();
            out.centers[j] = mean;
            if sd > 1e-12 * (1.0 + mean.abs()) {
                out.scales[j] = sd;
            } else {
                out.zero_variance.push(j);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.len() {
            return Err(Error::Dimension {
                what: "columns to scale",
                expected: self.len(),
                found: x.ncols(),
            });
        }
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (c, s) = (self.centers[j], self.scales[j]);
            col.mapv_inplace(|v| (v - c) / s);
        }
        Ok(out)
    }

    pub fn invert(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.len() {
            return Err(Error::Dimension {
                what: "columns to unscale",
                expected: self.len(),
                found: x.ncols(),
            });
        }
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (c, s) = (self.centers[j], self.scales[j]);
            col.mapv_inplace(|v| v * s + c);
        }
        Ok(out)
    }

    pub fn concat(&self, other: &Self) -> Self {
        let offset = self.len();
        Self {
            centers: [self.centers.as_slice(), &other.centers].concat(),
            scales: [self.scales.as_slice(), &other.scales].concat(),
            zero_variance: self
                .zero_variance
                .iter()
                .copied()
                .chain(other.zero_variance.iter().map(|j| j + offset))
                .collect(),
        }
    }
}

/// Standardization flags for [`prepare`]. Features are standardized by
/// default; modifiers keep their coding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepareOptions {
    pub standardize_x: bool,
    pub standardize_z: bool,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            standardize_x: true,
            standardize_z: false,
        }
    }
}

/// Everything needed to map raw inputs onto the fitted scale and back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub x1: ColumnScaling,
    pub x2: ColumnScaling,
    pub z: ColumnScaling,
    pub y_center: f64,
}

impl Preprocessing {
    /// Scaling record for one source on its own.
    pub fn view(&self, source: Source) -> ViewScaling {
        let x = match source {
            Source::One => self.x1.clone(),
            Source::Two => self.x2.clone(),
        };
        ViewScaling {
            x,
            z: self.z.clone(),
            y_center: self.y_center,
        }
    }

    /// Scaling record for the concatenated `[X1 X2]` design.
    pub fn concatenated(&self) -> ViewScaling {
        ViewScaling {
            x: self.x1.concat(&self.x2),
            z: self.z.clone(),
            y_center: self.y_center,
        }
    }

    /// Applies the stored feature transforms to raw data. The response is
    /// left untouched.
    pub fn transform(&self, raw: &MultiViewData) -> Result<MultiViewData> {
        Ok(MultiViewData {
            x1: self.x1.apply(raw.x1())?,
            x2: self.x2.apply(raw.x2())?,
            z: self.z.apply(raw.z())?,
            y: raw.y.clone(),
        })
    }
}

/// Data on the fitting scale together with the record that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub data: MultiViewData,
    pub record: Preprocessing,
}

/// Centers `y` and optionally standardizes the columns of `X1`, `X2` and `Z`.
pub fn prepare(data: &MultiViewData, options: PrepareOptions) -> PreparedData {
    let x1 = ColumnScaling::fit(data.x1(), options.standardize_x);
    let x2 = ColumnScaling::fit(data.x2(), options.standardize_x);
    let z = ColumnScaling::fit(data.z(), options.standardize_z);
    let y_center = data.y.sum() / data.n() as f64;
    let record = Preprocessing { x1, x2, z, y_center };
    // dimensions were validated on construction, so apply cannot fail
    let prepared = MultiViewData {
        x1: record.x1.apply(data.x1()).expect("x1 scaling"),
        x2: record.x2.apply(data.x2()).expect("x2 scaling"),
        z: record.z.apply(data.z()).expect("z scaling"),
        y: data.y.mapv(|v| v - y_center),
    };
    PreparedData {
        data: prepared,
        record,
    }
}

/// Scaling for a single design matrix and its modifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewScaling {
    pub x: ColumnScaling,
    pub z: ColumnScaling,
    pub y_center: f64,
}

impl ViewScaling {
    pub fn identity(p: usize, k: usize) -> Self {
        Self {
            x: ColumnScaling::identity(p),
            z: ColumnScaling::identity(k),
            y_center: 0.0,
        }
    }
}

/// Main effects `beta` (length p) and interactions `theta` (p × K).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PliableCoefs {
    pub beta: Array1<f64>,
    pub theta: Array2<f64>,
}

impl PliableCoefs {
    pub fn zeros(p: usize, k: usize) -> Self {
        Self {
            beta: Array1::zeros(p),
            theta: Array2::zeros((p, k)),
        }
    }

    pub fn new(beta: Array1<f64>, theta: Array2<f64>) -> Result<Self> {
        if theta.nrows() != beta.len() {
            return Err(Error::Dimension {
                what: "theta rows",
                expected: beta.len(),
                found: theta.nrows(),
            });
        }
        Ok(Self { beta, theta })
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn k(&self) -> usize {
        self.theta.ncols()
    }

    pub fn block_is_zero(&self, j: usize) -> bool {
        self.beta[j] == 0.0 && self.theta.row(j).iter().all(|&t| t == 0.0)
    }

    pub fn is_zero(&self) -> bool {
        (0..self.p()).all(|j| self.block_is_zero(j))
    }

    /// Interactions only where the main effect is nonzero.
    pub fn satisfies_hierarchy(&self) -> bool {
        self.hierarchy_violations().is_empty()
    }

    pub fn hierarchy_violations(&self) -> Vec<usize> {
        (0..self.p())
            .filter(|&j| self.beta[j] == 0.0 && self.theta.row(j).iter().any(|&t| t != 0.0))
            .collect()
    }

    /// `sum_j X_j (beta_j + Z theta_j)` on the fitting scale.
    pub fn linear_predictor(&self, x: ArrayView2<'_, f64>, z: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.check_dims(x, z)?;
        let n = x.nrows();
        let mut out = Array1::zeros(n);
        for i in 0..n {
            let zi = z.row(i);
            let mut acc = 0.0;
            for j in 0..self.p() {
                let xij = x[[i, j]];
                if xij == 0.0 || self.block_is_zero(j) {
                    continue;
                }
                let mut coef = self.beta[j];
                for (t, zk) in self.theta.row(j).iter().zip(zi.iter()) {
                    coef += t * zk;
                }
                acc += xij * coef;
            }
            out[i] = acc;
        }
        Ok(out)
    }

    /// `X beta`, the main-effect part of the prediction.
    pub fn main_effect_predictor(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.p() {
            return Err(Error::Dimension {
                what: "design columns",
                expected: self.p(),
                found: x.ncols(),
            });
        }
        Ok(x.dot(&self.beta))
    }

    fn check_dims(&self, x: ArrayView2<'_, f64>, z: ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.p() {
            return Err(Error::Dimension {
                what: "design columns",
                expected: self.p(),
                found: x.ncols(),
            });
        }
        if z.ncols() != self.k() {
            return Err(Error::Dimension {
                what: "modifier columns",
                expected: self.k(),
                found: z.ncols(),
            });
        }
        if z.nrows() != x.nrows() {
            return Err(Error::Dimension {
                what: "modifier rows",
                expected: x.nrows(),
                found: z.nrows(),
            });
        }
        Ok(())
    }

    /// Splits the stacked coefficients into the first `p1` rows and the rest.
    pub fn split(&self, p1: usize) -> (Self, Self) {
        (
            Self {
                beta: self.beta.slice(s![..p1]).to_owned(),
                theta: self.theta.slice(s![..p1, ..]).to_owned(),
            },
            Self {
                beta: self.beta.slice(s![p1..]).to_owned(),
                theta: self.theta.slice(s![p1.., ..]).to_owned(),
            },
        )
    }

    pub fn stack(first: &Self, second: &Self) -> Result<Self> {
        if first.k() != second.k() {
            return Err(Error::Dimension {
                what: "modifier count",
                expected: first.k(),
                found: second.k(),
            });
        }
        Ok(Self {
            beta: concatenate![Axis(0), first.beta, second.beta],
            theta: concatenate![Axis(0), first.theta, second.theta],
        })
    }
}

/// Maps raw `x`, `z` through the scaling record, evaluates the pliable model
/// and shifts by the response center.
pub fn predict(
    coefs: &PliableCoefs,
    x: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    scaling: &ViewScaling,
) -> Result<Array1<f64>> {
    let xs = scaling.x.apply(x)?;
    let zs = scaling.z.apply(z)?;
    Ok(coefs.linear_predictor(xs.view(), zs.view())? + scaling.y_center)
}

/// One single-view pliable lasso instance.
///
/// Rows `0..n_obs` carry observed responses. Any rows after them are
/// agreement rows produced by [`crate::coop::build_augmented`]; row
/// `n_obs + i` is the twin of row `i`. The squared-error loss is always
/// normalized by `n_obs`.
#[derive(Debug, Clone, PartialEq)]
pub struct PliableProblem {
    x: Array2<f64>,
    z: Array2<f64>,
    y: Array1<f64>,
    penalty_factors: Array1<f64>,
    alpha: f64,
    n_obs: usize,
}

impl PliableProblem {
    pub fn new(
        x: Array2<f64>,
        z: Array2<f64>,
        y: Array1<f64>,
        penalty_factors: Array1<f64>,
        alpha: f64,
    ) -> Result<Self> {
        let n = y.len();
        Self::with_agreement_rows(x, z, y, penalty_factors, alpha, n)
    }

    pub(crate) fn with_agreement_rows(
        x: Array2<f64>,
        z: Array2<f64>,
        y: Array1<f64>,
        penalty_factors: Array1<f64>,
        alpha: f64,
        n_obs: usize,
    ) -> Result<Self> {
        let rows = y.len();
        if x.nrows() != rows {
            return Err(Error::Dimension {
                what: "design rows",
                expected: rows,
                found: x.nrows(),
            });
        }
        if z.nrows() != rows {
            return Err(Error::Dimension {
                what: "modifier rows",
                expected: rows,
                found: z.nrows(),
            });
        }
        if penalty_factors.len() != x.ncols() {
            return Err(Error::Dimension {
                what: "penalty factors",
                expected: x.ncols(),
                found: penalty_factors.len(),
            });
        }
        if penalty_factors.iter().any(|&f| !(f >= 0.0 && f.is_finite())) {
            return Err(Error::invalid("penalty factors must be finite and nonnegative"));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if n_obs == 0 || (rows != n_obs && rows != 2 * n_obs) {
            return Err(Error::invalid("row layout must be n or 2n with agreement twins"));
        }
        check_finite("x", x.view())?;
        check_finite("z", z.view())?;
        Ok(Self {
            x,
            z,
            y,
            penalty_factors,
            alpha,
            n_obs,
        })
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn z(&self) -> ArrayView2<'_, f64> {
        self.z.view()
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn penalty_factors(&self) -> ArrayView1<'_, f64> {
        self.penalty_factors.view()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn k(&self) -> usize {
        self.z.ncols()
    }

    /// Total number of rows, including agreement rows.
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    /// Number of rows with an observed response.
    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn has_agreement_rows(&self) -> bool {
        self.n_rows() != self.n_obs
    }

    /// Same problem with a different `alpha`.
    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        self.alpha = alpha;
        Ok(self)
    }

    /// Restricts to the given observed rows; agreement twins follow their rows.
    pub fn subset(&self, obs_rows: &[usize]) -> Self {
        let mut rows = obs_rows.to_vec();
        if self.has_agreement_rows() {
            rows.extend(obs_rows.iter().map(|i| i + self.n_obs));
        }
        Self {
            x: self.x.select(Axis(0), &rows),
            z: self.z.select(Axis(0), &rows),
            y: self.y.select(Axis(0), &rows),
            penalty_factors: self.penalty_factors.clone(),
            alpha: self.alpha,
            n_obs: obs_rows.len(),
        }
    }

    pub fn residual(&self, coefs: &PliableCoefs) -> Result<Array1<f64>> {
        Ok(&self.y - &coefs.linear_predictor(self.x(), self.z())?)
    }
}

/// Pliable penalty with per-feature factors multiplying every term of block j:
/// `lambda * pf_j * ((1-alpha) (||(beta_j, theta_j)|| + ||theta_j||) + alpha ||theta_j||_1)`.
pub fn pliable_penalty(coefs: &PliableCoefs, penalty_factors: ArrayView1<'_, f64>, alpha: f64, lambda: f64) -> f64 {
    let mut total = 0.0;
    for j in 0..coefs.p() {
        let pf = penalty_factors[j];
        if pf == 0.0 {
            continue;
        }
        let theta = coefs.theta.row(j);
        let theta_sq: f64 = theta.iter().map(|t| t * t).sum();
        let theta_l1: f64 = theta.iter().map(|t| t.abs()).sum();
        let group = (coefs.beta[j] * coefs.beta[j] + theta_sq).sqrt();
        total += pf * ((1.0 - alpha) * (group + theta_sq.sqrt()) + alpha * theta_l1);
    }
    lambda * total
}

/// `(1 / 2 n_obs) ||y - yhat||^2 + penalty`.
pub fn pliable_objective(problem: &PliableProblem, coefs: &PliableCoefs, lambda: f64) -> Result<f64> {
    if coefs.p() != problem.p() {
        return Err(Error::Dimension {
            what: "coefficient length",
            expected: problem.p(),
            found: coefs.p(),
        });
    }
    let r = problem.residual(coefs)?;
    let rss: f64 = r.iter().map(|v| v * v).sum();
    Ok(rss / (2.0 * problem.n_obs() as f64)
        + pliable_penalty(coefs, problem.penalty_factors(), problem.alpha(), lambda))
}

/// Cooperative objective on prepared data:
/// `(1/2n) ||y - f1 - f2||^2 + (rho/2n) ||X1 beta1 - X2 beta2||^2` plus both
/// pliable penalties. The agreement term involves main effects only.
pub fn coop_objective(
    data: &MultiViewData,
    coefs1: &PliableCoefs,
    coefs2: &PliableCoefs,
    rho: f64,
    lambda: f64,
    alpha: f64,
) -> Result<f64> {
    if rho < 0.0 {
        return Err(Error::invalid(format!("rho must be nonnegative, got {rho}")));
    }
    let f1 = coefs1.linear_predictor(data.x1(), data.z())?;
    let f2 = coefs2.linear_predictor(data.x2(), data.z())?;
    let r = &data.y - &f1 - &f2;
    let rss: f64 = r.iter().map(|v| v * v).sum();
    let m1 = coefs1.main_effect_predictor(data.x1())?;
    let m2 = coefs2.main_effect_predictor(data.x2())?;
    let agree: f64 = (&m1 - &m2).iter().map(|v| v * v).sum();
    let n = data.n() as f64;
    let ones1 = Array1::ones(coefs1.p());
    let ones2 = Array1::ones(coefs2.p());
    Ok(rss / (2.0 * n)
        + rho * agree / (2.0 * n)
        + pliable_penalty(coefs1, ones1.view(), alpha, lambda)
        + pliable_penalty(coefs2, ones2.view(), alpha, lambda))
}
