#![allow(dead_code)]

use coop_pliable::{MultiViewData, PliableCoefs, PliableProblem};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

pub fn centered(mut y: Array1<f64>) -> Array1<f64> {
    let m = y.mean().unwrap();
    y.mapv_inplace(|v| v - m);
    y
}

/// Sparse pliable signal plus noise, response centered.
pub fn random_problem(seed: u64, n: usize, p: usize, k: usize, alpha: f64) -> PliableProblem {
    let mut r = rng(seed);
    let x = normal(&mut r, n, p);
    let z = normal(&mut r, n, k);
    let mut truth = PliableCoefs::zeros(p, k);
    truth.beta[0] = 1.5;
    if p > 1 {
        truth.beta[1] = -1.0;
    }
    if k > 0 {
        truth.theta[[0, 0]] = 0.8;
    }
    let signal = truth.linear_predictor(x.view(), z.view()).unwrap();
    let noise: Array1<f64> = Array1::from_shape_simple_fn(n, || r.sample::<f64, _>(StandardNormal) * 0.5);
    let y = centered(signal + noise);
    PliableProblem::new(x, z, y, Array1::ones(p), alpha).unwrap()
}

pub fn random_data(seed: u64, n: usize, p1: usize, p2: usize, k: usize) -> MultiViewData {
    let mut r = rng(seed);
    let x1 = normal(&mut r, n, p1);
    let x2 = normal(&mut r, n, p2);
    let z = normal(&mut r, n, k);
    let shared = &x1.column(0) + &x2.column(0);
    let noise: Array1<f64> = Array1::from_shape_simple_fn(n, || r.sample(StandardNormal));
    let y = centered(&shared * 1.5 + &(&x1.column(1) * &z.column(0)) + noise);
    MultiViewData::new(x1, x2, z, y).unwrap()
}

pub fn random_coefs(rng: &mut ChaCha8Rng, p: usize, k: usize) -> PliableCoefs {
    let mut c = PliableCoefs::zeros(p, k);
    for j in 0..p {
        if rng.gen_bool(0.6) {
            c.beta[j] = rng.sample(StandardNormal);
            for kk in 0..k {
                if rng.gen_bool(0.5) {
                    c.theta[[j, kk]] = rng.sample(StandardNormal);
                }
            }
        }
    }
    c
}
