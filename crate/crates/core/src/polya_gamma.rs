//! Exact sampling from the Pólya-gamma distribution `PG(1, z)`.
//!
//! Devroye-style alternating-series rejection sampler: the proposal mixes a
//! truncated inverse-Gaussian (left of the truncation point) with a truncated
//! exponential (right of it), and the Jacobi density is squeezed between
//! consecutive partial sums of its series representation.

use std::f64::consts::{FRAC_2_PI, PI};

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use statrs::function::erf::erfc;

const TRUNCATION: f64 = 0.64;
const PI2_8: f64 = PI * PI / 8.0;
const PI2_2: f64 = PI * PI / 2.0;

/// A positive draw from `PG(1, z)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PgDraw(pub f64);

impl PgDraw {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `log Phi(x)` without underflow in the lower tail.
fn log_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        (0.5 * erfc(-x / std::f64::consts::SQRT_2)).ln()
    } else {
        // Mills-ratio asymptotics.
        let x2 = x * x;
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * PI).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

/// n-th coefficient of the alternating series for the `J*(1, z)` density.
fn series_term(n: usize, x: f64) -> f64 {
    let a = n as f64 + 0.5;
    let log_term = if x <= TRUNCATION {
        PI.ln() + a.ln() + 1.5 * (FRAC_2_PI.ln() - x.ln()) - 2.0 * a * a / x
    } else {
        PI.ln() + a.ln() - x * PI2_2 * a * a
    };
    log_term.exp()
}

/// Inverse-Gaussian `IG(1/z, 1)` truncated to `(0, TRUNCATION)`.
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let t = TRUNCATION;
    let mu = 1.0 / z;
    if mu > t {
        loop {
            let u: f64 = rng.random();
            let e1 = loop {
                let e1: f64 = rng.sample(Exp1);
                let e2: f64 = rng.sample(Exp1);
                if e1 * e1 <= 2.0 * e2 / t {
                    break e1;
                }
            };
            let x = t / ((1.0 + t * e1) * (1.0 + t * e1));
            let alpha = (-0.5 * z * z * x).exp();
            if u <= alpha {
                return x;
            }
        }
    } else {
        loop {
            let n: f64 = rng.sample(StandardNormal);
            let y = n * n;
            let mut x = mu + 0.5 * mu * mu * y - 0.5 * mu * (4.0 * mu * y + (mu * y) * (mu * y)).sqrt();
            let u: f64 = rng.random();
            if u > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x < t {
                return x;
            }
        }
    }
}

/// Draw from `PG(1, z)`; the law depends on `|z|` only.
pub fn sample_pg1<R: Rng + ?Sized>(z: f64, rng: &mut R) -> PgDraw {
    // Sample J*(1, z/2) and rescale: PG(1, z) = J*(1, z/2) / 4.
    let z = 0.5 * z.abs();
    let t = TRUNCATION;
    let k = z * z / 2.0 + PI2_8;
    let log_a = 4f64.ln() - PI.ln() - z;
    let w = (PI / 2.0).sqrt();
    let log_k_t = k.ln() + k * t;
    let log_f1 = log_a + log_norm_cdf(w * (t * z - 1.0)) + log_k_t;
    let log_f2 = log_a + 2.0 * z + log_norm_cdf(-w * (t * z + 1.0)) + log_k_t;
    let p_over_q = log_f1.exp() + log_f2.exp();
    let ratio = 1.0 / (1.0 + p_over_q);
    loop {
        let x = if rng.random::<f64>() < ratio {
            t + rng.sample::<f64, _>(Exp1) / k
        } else {
            truncated_inverse_gaussian(z, rng)
        };
        let mut s = series_term(0, x);
        let u = rng.random::<f64>() * s;
        let mut n = 1;
        loop {
            if n % 2 == 1 {
                s -= series_term(n, x);
                if u <= s {
                    return PgDraw(0.25 * x);
                }
            } else {
                s += series_term(n, x);
                if u > s {
                    break;
                }
            }
            n += 1;
        }
    }
}

/// `E[PG(1, z)] = tanh(z/2) / (2z)`, with limit `1/4` at zero.
pub fn pg1_mean(z: f64) -> f64 {
    let z = z.abs();
    if z < 1e-6 {
        0.25 - z * z / 48.0
    } else {
        (0.5 * z).tanh() / (2.0 * z)
    }
}
