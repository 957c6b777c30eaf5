//! Slow reference solver for the pliable objective.
//!
//! Plain accelerated proximal gradient on the stacked coefficient vector, with
//! its own gradient, objective and proximal map. It shares nothing with the
//! coordinate-descent path beyond the problem type, so agreement between the
//! two is meaningful.

use ndarray::{Array1, Array2};

use crate::model::{PliableCoefs, PliableProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub max_iter: usize,
    /// Relative tolerance on successive iterates.
    pub tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            max_iter: 2_000_000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub coefs: PliableCoefs,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Dense<'a> {
    x: &'a Array2<f64>,
    z: &'a Array2<f64>,
    y: &'a Array1<f64>,
    pf: Vec<f64>,
    alpha: f64,
    n: f64,
}

impl Dense<'_> {
    fn fitted(&self, beta: &Array1<f64>, theta: &Array2<f64>) -> Array1<f64> {
        // x_ij * (beta_j + z_i . theta_j)
        let coef = self.z.dot(&theta.t()) + beta.view().insert_axis(ndarray::Axis(0));
        (self.x * &coef).sum_axis(ndarray::Axis(1))
    }

    fn loss(&self, beta: &Array1<f64>, theta: &Array2<f64>) -> f64 {
        let r = self.y - &self.fitted(beta, theta);
        r.dot(&r) / (2.0 * self.n)
    }

    fn grad(&self, beta: &Array1<f64>, theta: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
        let r = self.y - &self.fitted(beta, theta);
        let xr = self.x * &r.view().insert_axis(ndarray::Axis(1));
        let gb = xr.sum_axis(ndarray::Axis(0)).mapv(|v| -v / self.n);
        let gt = xr.t().dot(self.z).mapv(|v| -v / self.n);
        (gb, gt)
    }

    fn penalty(&self, beta: &Array1<f64>, theta: &Array2<f64>, lambda: f64) -> f64 {
        let mut total = 0.0;
        for j in 0..beta.len() {
            let row = theta.row(j);
            let tn = row.dot(&row).sqrt();
            let gn = (beta[j] * beta[j] + row.dot(&row)).sqrt();
            let l1: f64 = row.iter().map(|v| v.abs()).sum();
            total += self.pf[j] * ((1.0 - self.alpha) * (gn + tn) + self.alpha * l1);
        }
        lambda * total
    }

    fn prox(&self, beta: &mut Array1<f64>, theta: &mut Array2<f64>, lambda: f64, step: f64) {
        for j in 0..beta.len() {
            let g = (1.0 - self.alpha) * lambda * self.pf[j] * step;
            let l1 = self.alpha * lambda * self.pf[j] * step;
            let mut row = theta.row_mut(j);
            row.mapv_inplace(|v| v.signum() * (v.abs() - l1).max(0.0));
            let tn = row.dot(&row).sqrt();
            let s = if tn > g { 1.0 - g / tn } else { 0.0 };
            row *= s;
            let gn = (beta[j] * beta[j] + row.dot(&row)).sqrt();
            let s = if gn > g { 1.0 - g / gn } else { 0.0 };
            row *= s;
            beta[j] *= s;
        }
    }
}

/// Minimizes the pliable objective at `lambda` by FISTA with backtracking and
/// function-value restarts. Intended for small instances.
pub fn oracle_solve(problem: &PliableProblem, lambda: f64, config: &OracleConfig) -> OracleResult {
    let x = problem.x().to_owned();
    let z = problem.z().to_owned();
    let y = problem.y().to_owned();
    let dense = Dense {
        x: &x,
        z: &z,
        y: &y,
        pf: problem.penalty_factors().to_vec(),
        alpha: problem.alpha(),
        n: problem.n_obs() as f64,
    };
    let (p, k) = (problem.p(), problem.k());
    let mut beta = Array1::<f64>::zeros(p);
    let mut theta = Array2::<f64>::zeros((p, k));
    let mut yb = beta.clone();
    let mut yt = theta.clone();
    let mut fx = dense.loss(&beta, &theta) + dense.penalty(&beta, &theta, lambda);
    let mut lip = 1.0_f64;
    let mut t = 1.0_f64;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        iterations += 1;
        let (gb, gt) = dense.grad(&yb, &yt);
        let fy = dense.loss(&yb, &yt);
        let (nb, nt) = loop {
            let step = 1.0 / lip;
            let mut nb = &yb - &(&gb * step);
            let mut nt = &yt - &(&gt * step);
            dense.prox(&mut nb, &mut nt, lambda, step);
            let db = &nb - &yb;
            let dt = &nt - &yt;
            let lin = gb.dot(&db) + (&gt * &dt).sum();
            let sq = db.dot(&db) + (&dt * &dt).sum();
            if dense.loss(&nb, &nt) <= fy + lin + 0.5 * lip * sq + 1e-15 * fy.abs() {
                break (nb, nt);
            }
            lip *= 2.0;
        };
        let fnew = dense.loss(&nb, &nt) + dense.penalty(&nb, &nt, lambda);
        if fnew > fx {
            if t == 1.0 {
                converged = true;
                break;
            }
            yb.assign(&beta);
            yt.assign(&theta);
            t = 1.0;
            continue;
        }
        let change = (&nb - &beta)
            .iter()
            .chain((&nt - &theta).iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        let scale = nb.iter().chain(nt.iter()).fold(0.0_f64, |m, v| m.max(v.abs()));
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let w = (t - 1.0) / tn;
        yb = &nb + &((&nb - &beta) * w);
        yt = &nt + &((&nt - &theta) * w);
        beta = nb;
        theta = nt;
        fx = fnew;
        t = tn;
        // allow the step to grow back slowly
        lip *= 0.95;
        if change <= config.tol * 1e-2 * (1.0 + scale) {
            converged = true;
            break;
        }
    }
    OracleResult {
        coefs: PliableCoefs { beta, theta },
        objective: fx,
        iterations,
        converged,
    }
}
