//! Independent numerical oracles: Gauss–Hermite rules, a trapezoid rule and
//! batch-means standard errors. Nothing here calls into the library.
#![allow(dead_code)]

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, SymmetricEigen};

/// Orthonormal Hermite polynomials `p_0..p_m` at `x` for the weight `exp(-x^2)`.
fn hermite_orthonormal(m: usize, x: f64) -> Vec<f64> {
    let mut p = vec![PI.powf(-0.25)];
    if m >= 1 {
        p.push(2f64.sqrt() * x * p[0]);
    }
    for k in 1..m {
        let kf = k as f64;
        p.push(x * (2.0 / (kf + 1.0)).sqrt() * p[k] - (kf / (kf + 1.0)).sqrt() * p[k - 1]);
    }
    p
}

/// Nodes and log-weights for `int exp(-x^2) f(x) dx`.
///
/// Nodes start from the Golub-Welsch eigenvalues and are polished by Newton;
/// weights come from the Christoffel function `1 / sum_k p_k(x)^2`, which
/// stays accurate in the tails where eigenvector-based weights do not.
pub fn gauss_hermite_log(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(m, m);
    for k in 1..m {
        let b = (k as f64 / 2.0).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(j).eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    let mut log_w = Vec::with_capacity(m);
    for x in nodes.iter_mut() {
        for _ in 0..5 {
            let p = hermite_orthonormal(m, *x);
            *x -= p[m] / ((2.0 * m as f64).sqrt() * p[m - 1]);
        }
        let p = hermite_orthonormal(m, *x);
        log_w.push(-p[..m].iter().map(|v| v * v).sum::<f64>().ln());
    }
    (nodes, log_w)
}

/// Nodes and weights for `int exp(-x^2) f(x) dx`.
pub fn gauss_hermite(m: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, lw) = gauss_hermite_log(m);
    (x, lw.iter().map(|v| v.exp()).collect())
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log int exp(log_f(t)) dt` for a unimodal integrand, with the rule centred
/// at the mode and scaled by the curvature there.
pub fn log_integral_1d(log_f: impl Fn(f64) -> f64, m: usize) -> f64 {
    // Mode by Newton on finite differences, started from a coarse grid search.
    let mut t = (-400..=400)
        .map(|i| i as f64 * 0.05)
        .max_by(|a, b| log_f(*a).total_cmp(&log_f(*b)))
        .unwrap();
    let h = 1e-4;
    let d2 = |t: f64| (log_f(t + h) - 2.0 * log_f(t) + log_f(t - h)) / (h * h);
    for _ in 0..50 {
        let d1 = (log_f(t + h) - log_f(t - h)) / (2.0 * h);
        let step = d1 / d2(t);
        t -= step;
        if step.abs() < 1e-12 {
            break;
        }
    }
    let s = (-1.0 / d2(t)).sqrt();
    let (x, lw) = gauss_hermite_log(m);
    let terms: Vec<f64> = x
        .iter()
        .zip(&lw)
        .map(|(&xi, &lwi)| lwi + xi * xi + log_f(t + SQRT_2 * s * xi))
        .collect();
    (SQRT_2 * s).ln() + log_sum_exp(&terms)
}

/// Composite trapezoid rule on `[a, b]` with `m` panels.
pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let inner: f64 = (1..m).map(|i| f(a + i as f64 * h)).sum();
    h * (0.5 * (f(a) + f(b)) + inner)
}

/// Sample mean and its batch-means standard error.
pub fn batch_mean_se(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let bs = xs.len() / batches;
    let bm: Vec<f64> = (0..batches)
        .map(|b| xs[b * bs..(b + 1) * bs].iter().sum::<f64>() / bs as f64)
        .collect();
    let mb = bm.iter().sum::<f64>() / batches as f64;
    let var = bm.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

/// Sample mean and its i.i.d. standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
