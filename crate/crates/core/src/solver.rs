//! Blockwise cyclical coordinate descent for the pliable lasso.
//!
//! Each feature `j` owns the block `(beta_j, theta_j)`. Given the gradient of
//! the squared-error loss at the block's zero point, a visit runs three tests
//! in order:
//!
//! 1. the whole block is zero;
//! 2. only the main effect is nonzero, with a closed-form soft-thresholded
//!    update;
//! 3. otherwise the block problem is solved by accelerated proximal gradient
//!    with backtracking on its exact quadratic.
//!
//! With `c = (1 - alpha) * lambda * pf_j` and `d = alpha * lambda * pf_j` and
//! `(a, b)` the negated block gradient at zero, the block is zero iff
//! `|a| <= c` and `||S(b, d)|| <= c + sqrt(c^2 - a^2)`. The main-effect-only
//! point `(S(a, c) / g, 0)` is optimal iff `||S(b - G_{theta,beta} beta, d)|| <= c`.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{pliable_penalty, PliableCoefs, PliableProblem, ViewScaling};

/// Path and convergence settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub n_lambda: usize,
    /// Smallest lambda as a fraction of lambda_max. `None` picks 0.01 when
    /// there are more observations than features and 0.05 otherwise.
    pub lambda_min_ratio: Option<f64>,
    pub alpha: f64,
    /// Cap on coordinate-descent sweeps per lambda.
    pub max_iter: usize,
    /// Relative objective change that ends a lambda.
    pub conv_tol: f64,
    pub kkt_tol: f64,
    pub inner_max_iter: usize,
    /// Stopping tolerance on the block iterate in the proximal-gradient solve.
    pub inner_tol: f64,
    /// Step multiplier applied on each failed backtracking test.
    pub backtrack_shrink: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n_lambda: 50,
            lambda_min_ratio: None,
            alpha: 0.5,
            max_iter: 10_000,
            conv_tol: 1e-5,
            kkt_tol: 1e-4,
            inner_max_iter: 5_000,
            inner_tol: 1e-12,
            backtrack_shrink: 0.5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_lambda == 0 || self.max_iter == 0 || self.inner_max_iter == 0 {
            return Err(Error::invalid("n_lambda, max_iter and inner_max_iter must be positive"));
        }
        if let Some(r) = self.lambda_min_ratio {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::invalid(format!("lambda_min_ratio must lie in (0, 1), got {r}")));
            }
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!(
                "alpha must lie in [0, 1) so main effects are penalized, got {}",
                self.alpha
            )));
        }
        if !(self.conv_tol > 0.0 && self.kkt_tol > 0.0 && self.inner_tol > 0.0) {
            return Err(Error::invalid("tolerances must be strictly positive"));
        }
        if !(self.backtrack_shrink > 0.0 && self.backtrack_shrink < 1.0) {
            return Err(Error::invalid("backtrack_shrink must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// `sign(x) * max(|x| - t, 0)`.
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Proximal operator of `group * ||(beta, theta)|| + inner * ||theta|| + l1 * ||theta||_1`
/// for one block, applied in place. The groups are nested, so composing the
/// three shrinkages from the innermost outwards is exact.
pub fn block_prox(beta: &mut f64, theta: &mut [f64], group: f64, inner: f64, l1: f64) {
    for t in theta.iter_mut() {
        *t = soft_threshold(*t, l1);
    }
    let tn = norm(theta);
    if tn <= inner {
        theta.iter_mut().for_each(|t| *t = 0.0);
    } else {
        let s = 1.0 - inner / tn;
        theta.iter_mut().for_each(|t| *t *= s);
    }
    let gn = (*beta * *beta + theta.iter().map(|t| t * t).sum::<f64>()).sqrt();
    if gn <= group {
        *beta = 0.0;
        theta.iter_mut().for_each(|t| *t = 0.0);
    } else {
        let s = 1.0 - group / gn;
        *beta *= s;
        theta.iter_mut().for_each(|t| *t *= s);
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `||S(b, d)||_2`.
fn soft_norm(b: &[f64], d: f64) -> f64 {
    b.iter()
        .map(|&x| {
            let s = soft_threshold(x, d);
            s * s
        })
        .sum::<f64>()
        .sqrt()
}

/// Group and l1 thresholds for block `j` at `lambda`.
fn thresholds(lambda: f64, pf: f64, alpha: f64) -> (f64, f64) {
    ((1.0 - alpha) * lambda * pf, alpha * lambda * pf)
}

/// The block is zero at the optimum iff this holds. Equality counts as zero.
fn zero_block_ok(a: f64, b: &[f64], c: f64, d: f64) -> bool {
    if a.abs() > c {
        return false;
    }
    soft_norm(b, d) <= c + (c * c - a * a).max(0.0).sqrt()
}

/// How far the zero block is from satisfying its stationarity inequalities.
fn zero_block_violation(a: f64, b: &[f64], c: f64, d: f64) -> f64 {
    let main = a.abs() - c;
    let inter = soft_norm(b, d) - c - (c * c - a * a).max(0.0).sqrt();
    main.max(inter).max(0.0)
}

/// One λ's worth of solver output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub coefs: PliableCoefs,
    pub objective: f64,
    pub sweeps: usize,
}

/// Coefficients along a decreasing λ path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PliableFit {
    pub path: Vec<PathPoint>,
    pub alpha: f64,
    /// Maps raw inputs onto the fitting scale; identity for a bare problem.
    pub scaling: ViewScaling,
}

impl PliableFit {
    pub fn lambdas(&self) -> Vec<f64> {
        self.path.iter().map(|p| p.lambda).collect()
    }

    pub fn coefs(&self, index: usize) -> &PliableCoefs {
        &self.path[index].coefs
    }

    pub fn with_scaling(mut self, scaling: ViewScaling) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn predict(&self, index: usize, x: ArrayView2<'_, f64>, z: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        crate::model::predict(self.coefs(index), x, z, &self.scaling)
    }
}

/// Result of solving at a single λ.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub coefs: PliableCoefs,
    pub objective: f64,
    pub sweeps: usize,
    /// Objective after the first full sweep, before any active-set passes.
    pub first_sweep_objective: f64,
}

/// Column-major copy of the design plus per-block Gram matrices of `[x_j, W_j]`.
struct BlockSystem<'a> {
    problem: &'a PliableProblem,
    /// Feature columns, each contiguous.
    cols: Vec<Vec<f64>>,
    /// Row-major modifiers.
    z: Vec<f64>,
    /// `(1 + K)^2` Gram entries per block, scaled by `1 / n_obs`.
    grams: Vec<Vec<f64>>,
    n_rows: usize,
    k: usize,
    inv_n: f64,
}

impl<'a> BlockSystem<'a> {
    fn new(problem: &'a PliableProblem) -> Self {
        let n_rows = problem.n_rows();
        let k = problem.k();
        let x = problem.x();
        let cols: Vec<Vec<f64>> = x.columns().into_iter().map(|c| c.to_vec()).collect();
        let z: Vec<f64> = problem.z().iter().copied().collect();
        let inv_n = 1.0 / problem.n_obs() as f64;
        let m = k + 1;
        let grams = cols
            .iter()
            .map(|col| {
                let mut g = vec![0.0; m * m];
                let mut w = vec![0.0; m];
                for (i, &xi) in col.iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    w[0] = xi;
                    for kk in 0..k {
                        w[kk + 1] = xi * z[i * k + kk];
                    }
                    for r in 0..m {
                        for c in r..m {
                            g[r * m + c] += w[r] * w[c];
                        }
                    }
                }
                for r in 0..m {
                    for c in r..m {
                        g[r * m + c] *= inv_n;
                        g[c * m + r] = g[r * m + c];
                    }
                }
                g
            })
            .collect();
        Self {
            problem,
            cols,
            z,
            grams,
            n_rows,
            k,
            inv_n,
        }
    }

    /// `(x_j^T r, W_j^T r) / n_obs`, written into `out` (length 1 + K).
    fn correlations(&self, j: usize, r: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let col = &self.cols[j];
        let k = self.k;
        for i in 0..self.n_rows {
            let xr = col[i] * r[i];
            out[0] += xr;
            let zi = &self.z[i * k..(i + 1) * k];
            for kk in 0..k {
                out[kk + 1] += xr * zi[kk];
            }
        }
        out.iter_mut().for_each(|v| *v *= self.inv_n);
    }

    /// `r -= x_j * (d_beta + Z d_theta)`.
    fn update_residual(&self, j: usize, delta: &[f64], r: &mut [f64]) {
        let col = &self.cols[j];
        let k = self.k;
        for i in 0..self.n_rows {
            let zi = &self.z[i * k..(i + 1) * k];
            let mut coef = delta[0];
            for kk in 0..k {
                coef += delta[kk + 1] * zi[kk];
            }
            r[i] -= col[i] * coef;
        }
    }

    fn lambda_max(&self) -> Result<f64> {
        let alpha = self.problem.alpha();
        let pf = self.problem.penalty_factors();
        let y: Vec<f64> = self.problem.y().to_vec();
        let mut ab = vec![0.0; self.k + 1];
        let mut best = 0.0_f64;
        let mut any_penalized = false;
        for j in 0..self.problem.p() {
            if pf[j] == 0.0 {
                continue;
            }
            any_penalized = true;
            self.correlations(j, &y, &mut ab);
            let (a, b) = (ab[0], &ab[1..]);
            let holds = |lambda: f64| {
                let (c, d) = thresholds(lambda, pf[j], alpha);
                zero_block_ok(a, b, c, d)
            };
            if holds(0.0) {
                continue;
            }
            let cw = (1.0 - alpha) * pf[j];
            let mut hi = a.abs().max(norm(b)) / cw;
            while !holds(hi) {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if holds(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            best = best.max(hi);
        }
        if !any_penalized {
            return Err(Error::DegeneratePath("no feature carries a positive penalty factor".into()));
        }
        Ok(best)
    }

    fn objective(&self, lambda: f64, coefs: &PliableCoefs, r: &[f64]) -> f64 {
        let rss: f64 = r.iter().map(|v| v * v).sum();
        rss * 0.5 * self.inv_n + pliable_penalty(coefs, self.problem.penalty_factors(), self.problem.alpha(), lambda)
    }

    /// Visits block `j` against the residual, returning whether it changed.
    fn update_block(
        &self,
        j: usize,
        lambda: f64,
        coefs: &mut PliableCoefs,
        r: &mut [f64],
        config: &SolverConfig,
        scratch: &mut Scratch,
    ) -> bool {
        let mut corr = std::mem::take(&mut scratch.corr);
        self.correlations(j, r, &mut corr);
        let changed = self.visit_block(j, lambda, coefs, &corr, config, scratch);
        scratch.corr = corr;
        if changed {
            self.update_residual(j, &scratch.delta, r);
        }
        changed
    }

    /// Cross-Gram `W_a^T W_b / n_obs`, row-major `(1 + K) x (1 + K)`.
    fn cross_gram(&self, a: usize, b: usize) -> Vec<f64> {
        let k = self.k;
        let m = k + 1;
        let (ca, cb) = (&self.cols[a], &self.cols[b]);
        let mut g = vec![0.0; m * m];
        let mut w = vec![0.0; m];
        w[0] = 1.0;
        for i in 0..self.n_rows {
            let s = ca[i] * cb[i];
            if s == 0.0 {
                continue;
            }
            w[1..].copy_from_slice(&self.z[i * k..(i + 1) * k]);
            for r in 0..m {
                let sr = s * w[r];
                for c in 0..m {
                    g[r * m + c] += sr * w[c];
                }
            }
        }
        g.iter_mut().for_each(|v| *v *= self.inv_n);
        g
    }

    /// Block update given `corr = W_j^T r / n_obs` at the current
    /// coefficients. Leaves the change in `scratch.delta`.
    fn visit_block(
        &self,
        j: usize,
        lambda: f64,
        coefs: &mut PliableCoefs,
        corr: &[f64],
        config: &SolverConfig,
        scratch: &mut Scratch,
    ) -> bool {
        let pf = self.problem.penalty_factors()[j];
        let (c, d) = thresholds(lambda, pf, self.problem.alpha());
        let m = self.k + 1;
        let g = &self.grams[j];

        let old = &mut scratch.old;
        old[0] = coefs.beta[j];
        for kk in 0..self.k {
            old[kk + 1] = coefs.theta[[j, kk]];
        }
        let was_zero = old.iter().all(|&v| v == 0.0);

        // negated gradient of the block loss at the zero point
        let ab = &mut scratch.ab;
        ab.copy_from_slice(corr);
        if !was_zero {
            for row in 0..m {
                let mut acc = 0.0;
                for col in 0..m {
                    acc += g[row * m + col] * old[col];
                }
                ab[row] += acc;
            }
        }

        let new = &mut scratch.new;
        if zero_block_ok(ab[0], &ab[1..], c, d) {
            new.iter_mut().for_each(|v| *v = 0.0);
        } else {
            let g00 = g[0];
            let beta_only = if g00 > 0.0 { soft_threshold(ab[0], c) / g00 } else { 0.0 };
            let mut accepted = false;
            if beta_only != 0.0 {
                let e = &mut scratch.tmp;
                for kk in 0..self.k {
                    e[kk] = ab[kk + 1] - g[(kk + 1) * m] * beta_only;
                }
                if soft_norm(&e[..self.k], d) <= c {
                    new[0] = beta_only;
                    new[1..].iter_mut().for_each(|v| *v = 0.0);
                    accepted = true;
                }
            }
            if !accepted {
                new.copy_from_slice(old);
                if was_zero {
                    new[0] = beta_only;
                }
                solve_block(g, ab, c, d, new, config, scratch.inner.as_mut_slice());
            }
        }

        let delta = &mut scratch.delta;
        let mut changed = false;
        for i in 0..m {
            delta[i] = new[i] - old[i];
            changed |= delta[i] != 0.0;
        }
        if changed {
            coefs.beta[j] = new[0];
            for kk in 0..self.k {
                coefs.theta[[j, kk]] = new[kk + 1];
            }
        }
        changed
    }

    fn kkt_violations(&self, lambda: f64, coefs: &PliableCoefs, r: &[f64], tol: f64) -> Vec<(usize, f64)> {
        let alpha = self.problem.alpha();
        let pf = self.problem.penalty_factors();
        let mut ab = vec![0.0; self.k + 1];
        let mut out = Vec::new();
        for j in 0..self.problem.p() {
            let (c, d) = thresholds(lambda, pf[j], alpha);
            self.correlations(j, r, &mut ab);
            let viol = if coefs.block_is_zero(j) {
                zero_block_violation(ab[0], &ab[1..], c, d)
            } else {
                let beta = coefs.beta[j];
                let theta: Vec<f64> = coefs.theta.row(j).to_vec();
                nonzero_block_violation(beta, &theta, ab[0], &ab[1..], c, d)
            };
            if viol > tol {
                out.push((j, viol));
            }
        }
        out
    }
}

/// Stationarity residual (max norm) of a nonzero block, with `(a, b)` the
/// negated loss gradient at the current coefficients.
fn nonzero_block_violation(beta: f64, theta: &[f64], a: f64, b: &[f64], c: f64, d: f64) -> f64 {
    let theta_norm = norm(theta);
    let group = (beta * beta + theta_norm * theta_norm).sqrt();
    let mut worst = (c * beta / group - a).abs();
    let e: Vec<f64> = b.iter().zip(theta).map(|(bk, tk)| bk - c * tk / group).collect();
    if theta_norm > 0.0 {
        for (ek, tk) in e.iter().zip(theta) {
            let rest = ek - c * tk / theta_norm;
            let r = if *tk != 0.0 {
                (rest - d * tk.signum()).abs()
            } else {
                (rest.abs() - d).max(0.0)
            };
            worst = worst.max(r);
        }
    } else {
        worst = worst.max((soft_norm(&e, d) - c).max(0.0));
    }
    worst
}

struct Scratch {
    old: Vec<f64>,
    new: Vec<f64>,
    ab: Vec<f64>,
    delta: Vec<f64>,
    tmp: Vec<f64>,
    corr: Vec<f64>,
    inner: Vec<f64>,
}

impl Scratch {
    fn new(k: usize) -> Self {
        let m = k + 1;
        Self {
            old: vec![0.0; m],
            new: vec![0.0; m],
            ab: vec![0.0; m],
            delta: vec![0.0; m],
            tmp: vec![0.0; m],
            corr: vec![0.0; m],
            inner: vec![0.0; 5 * m],
        }
    }
}

/// Block objective `0.5 v^T G v - q^T v + c ||v|| + c ||theta|| + d ||theta||_1`.
fn block_value(g: &[f64], q: &[f64], v: &[f64], c: f64, d: f64) -> f64 {
    let m = v.len();
    let mut quad = 0.0;
    for r in 0..m {
        let mut acc = 0.0;
        for col in 0..m {
            acc += g[r * m + col] * v[col];
        }
        quad += v[r] * (0.5 * acc - q[r]);
    }
    let theta = &v[1..];
    quad + c * norm(v) + c * norm(theta) + d * theta.iter().map(|t| t.abs()).sum::<f64>()
}

/// Accelerated proximal gradient with backtracking and monotone restarts on a
/// single block. `v` holds the starting point and receives the solution; the
/// returned point never has a larger block objective than the start.
fn solve_block(g: &[f64], q: &[f64], c: f64, d: f64, v: &mut [f64], config: &SolverConfig, work: &mut [f64]) {
    let m = v.len();
    let (y, rest) = work.split_at_mut(m);
    let (grad, rest) = rest.split_at_mut(m);
    let (cand, rest) = rest.split_at_mut(m);
    let (prev, _) = rest.split_at_mut(m);
    y.copy_from_slice(v);
    let mut fx = block_value(g, q, v, c, d);
    let mut lip = (0..m).map(|i| g[i * m + i]).fold(0.0, f64::max).max(1e-300);
    let mut momentum = 1.0_f64;
    let grow = 1.0 / config.backtrack_shrink;

    for _ in 0..config.inner_max_iter {
        for r in 0..m {
            let mut acc = -q[r];
            for col in 0..m {
                acc += g[r * m + col] * y[col];
            }
            grad[r] = acc;
        }
        loop {
            let step = 1.0 / lip;
            for i in 0..m {
                cand[i] = y[i] - step * grad[i];
            }
            let (b, t) = cand.split_at_mut(1);
            block_prox(&mut b[0], t, c * step, c * step, d * step);
            // quadratic loss: the majorization holds iff d^T G d <= lip ||d||^2
            let mut dgd = 0.0;
            let mut dd = 0.0;
            for r in 0..m {
                let dr = cand[r] - y[r];
                let mut acc = 0.0;
                for col in 0..m {
                    acc += g[r * m + col] * (cand[col] - y[col]);
                }
                dgd += dr * acc;
                dd += dr * dr;
            }
            if dgd <= lip * dd * (1.0 + 1e-12) || dd == 0.0 {
                break;
            }
            lip *= grow;
        }
        let fc = block_value(g, q, cand, c, d);
        if fc > fx {
            // restart from the incumbent
            if momentum == 1.0 {
                break;
            }
            y.copy_from_slice(v);
            momentum = 1.0;
            continue;
        }
        prev.copy_from_slice(v);
        v.copy_from_slice(cand);
        fx = fc;
        let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let w = (momentum - 1.0) / next;
        momentum = next;
        let mut change = 0.0_f64;
        let mut scale = 0.0_f64;
        for i in 0..m {
            let diff = v[i] - prev[i];
            change = change.max(diff.abs());
            scale = scale.max(v[i].abs());
            y[i] = v[i] + w * diff;
        }
        if change <= config.inner_tol * (1.0 + scale) {
            break;
        }
    }
}

/// Largest useful λ: the smallest value at which every penalized block is zero
/// at the zero solution.
pub fn lambda_max(problem: &PliableProblem) -> Result<f64> {
    BlockSystem::new(problem).lambda_max()
}

/// Log-spaced decreasing λ path from `lambda_max` down to
/// `lambda_max * lambda_min_ratio`.
pub fn lambda_path(problem: &PliableProblem, config: &SolverConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let top = lambda_max(problem)?;
    if !(top > 0.0 && top.is_finite()) {
        return Err(Error::DegeneratePath(format!(
            "lambda_max = {top}; the response carries no signal"
        )));
    }
    let ratio = config
        .lambda_min_ratio
        .unwrap_or(if problem.n_obs() > problem.p() { 0.01 } else { 0.05 });
    let n = config.n_lambda;
    if n == 1 {
        return Ok(vec![top]);
    }
    let step = ratio.ln() / (n - 1) as f64;
    Ok((0..n).map(|i| top * (step * i as f64).exp()).collect())
}

struct PathSolver<'a> {
    system: BlockSystem<'a>,
    config: &'a SolverConfig,
    /// Cross-Gram matrices for pairs `(a, b)` with `a <= b`, filled lazily.
    cross: HashMap<(usize, usize), Vec<f64>>,
}

impl<'a> PathSolver<'a> {
    fn new(problem: &'a PliableProblem, config: &'a SolverConfig) -> Self {
        Self {
            system: BlockSystem::new(problem),
            config,
            cross: HashMap::new(),
        }
    }

    /// `W_b^T W_j / n_obs` for every ordered pair of active blocks, laid out
    /// as `[b][j]` blocks of `m * m`.
    fn active_grams(&mut self, active: &[usize]) -> Vec<f64> {
        let m = self.system.k + 1;
        let a = active.len();
        let mut out = vec![0.0; a * a * m * m];
        for (ib, &b) in active.iter().enumerate() {
            for (ij, &j) in active.iter().enumerate() {
                let key = (b.min(j), b.max(j));
                let system = &self.system;
                let g = self.cross.entry(key).or_insert_with(|| system.cross_gram(key.0, key.1));
                let dst = &mut out[(ib * a + ij) * m * m..(ib * a + ij + 1) * m * m];
                if b <= j {
                    dst.copy_from_slice(g);
                } else {
                    for r in 0..m {
                        for c in 0..m {
                            dst[r * m + c] = g[c * m + r];
                        }
                    }
                }
            }
        }
        out
    }

    /// Cycles over the active blocks until the relative objective change
    /// drops below `tol`, tracking block gradients through cross-Grams
    /// instead of the residual. The residual is brought up to date on exit.
    #[allow(clippy::too_many_arguments)]
    fn active_loop(
        &mut self,
        lambda: f64,
        active: &[usize],
        coefs: &mut PliableCoefs,
        r: &mut [f64],
        obj: f64,
        tol: f64,
        sweeps: &mut usize,
        scratch: &mut Scratch,
    ) -> f64 {
        let m = self.system.k + 1;
        let a = active.len();
        let grams = self.active_grams(active);
        let system = &self.system;
        let mut corr = vec![0.0; a * m];
        for (ia, &j) in active.iter().enumerate() {
            system.correlations(j, r, &mut corr[ia * m..(ia + 1) * m]);
        }
        let mut pending = vec![0.0; a * m];
        let pf = system.problem.penalty_factors();
        let alpha = system.problem.alpha();
        let mut loss = obj - pliable_penalty(coefs, pf, alpha, lambda);
        let mut current = obj;
        loop {
            for ia in 0..a {
                let j = active[ia];
                let cj = &corr[ia * m..(ia + 1) * m];
                if !system.visit_block(j, lambda, coefs, cj, self.config, scratch) {
                    continue;
                }
                let delta = &scratch.delta;
                let gjj = &grams[(ia * a + ia) * m * m..(ia * a + ia + 1) * m * m];
                let mut dl = 0.0;
                for row in 0..m {
                    let mut acc = 0.0;
                    for col in 0..m {
                        acc += gjj[row * m + col] * delta[col];
                    }
                    dl += delta[row] * (0.5 * acc - cj[row]);
                }
                loss += dl;
                for (p, d) in pending[ia * m..(ia + 1) * m].iter_mut().zip(delta.iter()) {
                    *p += d;
                }
                for ib in 0..a {
                    let g = &grams[(ib * a + ia) * m * m..(ib * a + ia + 1) * m * m];
                    let cb = &mut corr[ib * m..(ib + 1) * m];
                    for row in 0..m {
                        let mut acc = 0.0;
                        for col in 0..m {
                            acc += g[row * m + col] * delta[col];
                        }
                        cb[row] -= acc;
                    }
                }
            }
            *sweeps += 1;
            let after = loss + pliable_penalty(coefs, pf, alpha, lambda);
            debug_assert!(after <= current + 1e-9 * (1.0 + current.abs()));
            let change = (current - after) / after.abs().max(f64::MIN_POSITIVE);
            current = after;
            if change < tol || *sweeps >= self.config.max_iter {
                break;
            }
        }
        for (ia, &j) in active.iter().enumerate() {
            let d = &pending[ia * m..(ia + 1) * m];
            if d.iter().any(|&v| v != 0.0) {
                system.update_residual(j, d, r);
            }
        }
        system.objective(lambda, coefs, r)
    }

    fn solve(&mut self, lambda: f64, coefs: &mut PliableCoefs, r: &mut [f64]) -> Result<(f64, usize, f64)> {
        let p = self.system.problem.p();
        let mut scratch = Scratch::new(self.system.k);
        let mut obj = self.system.objective(lambda, coefs, r);
        let mut tol = self.config.conv_tol;
        let mut sweeps = 0;
        let mut first_sweep = None;
        let mut active: Vec<usize> = Vec::with_capacity(p);

        let rel = |before: f64, after: f64| (before - after) / after.abs().max(f64::MIN_POSITIVE);

        loop {
            for j in 0..p {
                self.system.update_block(j, lambda, coefs, r, self.config, &mut scratch);
            }
            sweeps += 1;
            let after = self.system.objective(lambda, coefs, r);
            debug_assert!(
                after <= obj + 1e-10 * (1.0 + obj.abs()),
                "objective increased over a sweep: {obj} -> {after}"
            );
            first_sweep.get_or_insert(after);
            let change = rel(obj, after);
            obj = after;

            if change < tol {
                let violations = self.system.kkt_violations(lambda, coefs, r, self.config.kkt_tol);
                if violations.is_empty() {
                    return Ok((obj, sweeps, first_sweep.unwrap_or(obj)));
                }
                tol *= 0.1;
            } else {
                active.clear();
                active.extend((0..p).filter(|&j| !coefs.block_is_zero(j)));
                let after = self.active_loop(lambda, &active, coefs, r, obj, tol, &mut sweeps, &mut scratch);
                debug_assert!(after <= obj + 1e-9 * (1.0 + obj.abs()));
                obj = after;
            }
            if sweeps >= self.config.max_iter {
                return Err(Error::NotConverged {
                    lambda,
                    iterations: sweeps,
                });
            }
        }
    }
}

fn check_dims(problem: &PliableProblem, coefs: &PliableCoefs) -> Result<()> {
    if coefs.p() != problem.p() || coefs.k() != problem.k() {
        return Err(Error::Dimension {
            what: "coefficient shape",
            expected: problem.p() * problem.k(),
            found: coefs.p() * coefs.k(),
        });
    }
    Ok(())
}

/// Solves at one λ, starting from `start` (or zero).
pub fn solve_at(
    problem: &PliableProblem,
    lambda: f64,
    start: Option<&PliableCoefs>,
    config: &SolverConfig,
) -> Result<SolveReport> {
    config.validate()?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    let mut coefs = match start {
        Some(c) => {
            check_dims(problem, c)?;
            c.clone()
        }
        None => PliableCoefs::zeros(problem.p(), problem.k()),
    };
    let mut r = problem.residual(&coefs)?.to_vec();
    let mut solver = PathSolver::new(problem, config);
    let (objective, sweeps, first_sweep_objective) = solver.solve(lambda, &mut coefs, &mut r)?;
    Ok(SolveReport {
        coefs,
        objective,
        sweeps,
        first_sweep_objective,
    })
}

/// Fits the whole path with warm starts. `lambdas` must be strictly decreasing.
pub fn fit_path(problem: &PliableProblem, lambdas: &[f64], config: &SolverConfig) -> Result<PliableFit> {
    config.validate()?;
    if lambdas.is_empty() {
        return Err(Error::invalid("empty lambda sequence"));
    }
    if lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::invalid("lambdas must be positive and finite"));
    }
    if lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("lambda sequence must be strictly decreasing"));
    }
    let mut solver = PathSolver::new(problem, config);
    let mut coefs = PliableCoefs::zeros(problem.p(), problem.k());
    let mut r: Vec<f64> = problem.y().to_vec();
    let mut path = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let (objective, sweeps, _) = solver.solve(lambda, &mut coefs, &mut r)?;
        path.push(PathPoint {
            lambda,
            coefs: coefs.clone(),
            objective,
            sweeps,
        });
    }
    Ok(PliableFit {
        path,
        alpha: problem.alpha(),
        scaling: ViewScaling::identity(problem.p(), problem.k()),
    })
}

/// Blocks whose stationarity conditions fail by more than `config.kkt_tol`,
/// with the size of the failure. Empty means the point is certified.
pub fn kkt_check(problem: &PliableProblem, coefs: &PliableCoefs, lambda: f64, config: &SolverConfig) -> Vec<(usize, f64)> {
    let Ok(r) = problem.residual(coefs) else {
        return vec![(usize::MAX, f64::INFINITY)];
    };
    BlockSystem::new(problem).kkt_violations(lambda, coefs, r.as_slice().expect("contiguous"), config.kkt_tol)
}

/// Dense `W_j = X_j ∘ Z`, mostly for tests and diagnostics.
pub fn interaction_block(problem: &PliableProblem, j: usize) -> Array2<f64> {
    let x = problem.x();
    let mut w = problem.z().to_owned();
    for (i, mut row) in w.rows_mut().into_iter().enumerate() {
        row *= x[[i, j]];
    }
    w
}
