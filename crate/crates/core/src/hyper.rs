//! Random-walk Metropolis updates for the slab variance `g` and the Weibull shape `k`.
//!
//! Both run on the log scale with a proposal variance adapted towards an
//! acceptance rate of 0.234.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::marglik::MarglikResult;

/// Adaptive random-walk proposal scale.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveRwState {
    pub log_variance: f64,
    pub target_accept: f64,
    pub iteration: usize,
}

impl Default for AdaptiveRwState {
    fn default() -> Self {
        Self {
            log_variance: 0.0,
            target_accept: 0.234,
            iteration: 0,
        }
    }
}

impl AdaptiveRwState {
    pub fn variance(&self) -> f64 {
        self.log_variance.exp()
    }

    pub fn std_dev(&self) -> f64 {
        (0.5 * self.log_variance).exp()
    }

    /// `log sigma^2 += i^{-0.7} (alpha - tau)`
    pub fn adapt(&mut self, accept_prob: f64) {
        self.iteration += 1;
        let step = (self.iteration as f64).powf(-0.7);
        let alpha = if accept_prob.is_nan() { 0.0 } else { accept_prob };
        self.log_variance += step * (alpha - self.target_accept);
    }
}

/// Log density of `nu = log g` when `sqrt(g)` is half-Cauchy: `(1/pi) sqrt(g) / (1 + g)`.
pub fn log_density_log_g(nu: f64) -> f64 {
    let g = nu.exp();
    -PI.ln() + 0.5 * nu - g.ln_1p()
}

/// Log density of `s = log k` under `N(0, sigma_k_sq)`.
pub fn log_density_log_shape(s: f64, sigma_k_sq: f64) -> f64 {
    -0.5 * (2.0 * PI * sigma_k_sq).ln() - 0.5 * s * s / sigma_k_sq
}

/// Outcome of one random-walk update.
#[derive(Debug, Clone)]
pub struct HyperStep {
    /// New value on the natural scale (`g` or `k`).
    pub value: f64,
    pub accepted: bool,
    pub accept_prob: f64,
    /// Marginal-likelihood estimate at the new value when the move was accepted.
    pub marglik: Option<MarglikResult>,
}

/// One Metropolis step on `x = log(value)` with increment `sigma z`.
///
/// `log_prior` is the density of `x`; `marglik_fn` evaluates the marginal
/// likelihood at a natural-scale value. Failures reject the move.
pub fn log_scale_rw_step<F, R>(
    value: f64,
    current_log_marglik: f64,
    z: f64,
    rw: &mut AdaptiveRwState,
    log_prior: impl Fn(f64) -> f64,
    mut marglik_fn: F,
    rng: &mut R,
) -> HyperStep
where
    F: FnMut(f64) -> Result<MarglikResult>,
    R: Rng + ?Sized,
{
    let x = value.ln();
    let x_new = x + rw.std_dev() * z;
    let value_new = x_new.exp();
    let (log_alpha, marglik) = if x_new == x {
        (0.0, None)
    } else {
        match marglik_fn(value_new) {
            Ok(m) if m.log_value.is_finite() => {
                let la = m.log_value - current_log_marglik + log_prior(x_new) - log_prior(x);
                (la, Some(m))
            }
            Ok(_) => (f64::NEG_INFINITY, None),
            Err(e) => {
                log::debug!("hyper-parameter update rejected: {e}");
                (f64::NEG_INFINITY, None)
            }
        }
    };
    let accept_prob = log_alpha.min(0.0).exp();
    rw.adapt(accept_prob);
    let accepted = x_new == x || rng.random::<f64>().ln() < log_alpha;
    if accepted && x_new != x {
        HyperStep {
            value: value_new,
            accepted,
            accept_prob,
            marglik,
        }
    } else {
        HyperStep {
            value,
            accepted,
            accept_prob,
            marglik: None,
        }
    }
}

/// Random-walk update of `g` given the current model.
pub fn update_g<F, R>(
    g: f64,
    current_log_marglik: f64,
    rw: &mut AdaptiveRwState,
    marglik_fn: F,
    rng: &mut R,
) -> HyperStep
where
    F: FnMut(f64) -> Result<MarglikResult>,
    R: Rng + ?Sized,
{
    let z: f64 = rng.sample(StandardNormal);
    log_scale_rw_step(g, current_log_marglik, z, rw, log_density_log_g, marglik_fn, rng)
}

/// Random-walk update of the Weibull shape `k` given the current model.
pub fn update_weibull_shape<F, R>(
    k: f64,
    current_log_marglik: f64,
    sigma_k_sq: f64,
    rw: &mut AdaptiveRwState,
    marglik_fn: F,
    rng: &mut R,
) -> HyperStep
where
    F: FnMut(f64) -> Result<MarglikResult>,
    R: Rng + ?Sized,
{
    let z: f64 = rng.sample(StandardNormal);
    log_scale_rw_step(
        k,
        current_log_marglik,
        z,
        rw,
        |s| log_density_log_shape(s, sigma_k_sq),
        marglik_fn,
        rng,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marglik::Method;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat(_: f64) -> Result<MarglikResult> {
        Ok(MarglikResult {
            log_value: 0.0,
            method: Method::La,
            theta_hat: None,
            eta_hat: None,
            log_det: None,
        })
    }

    #[test]
    fn zero_increment_is_always_accepted() {
        let mut rw = AdaptiveRwState::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let step = log_scale_rw_step(2.5, -3.0, 0.0, &mut rw, log_density_log_g, |_| panic!("not evaluated"), &mut rng);
        assert!(step.accepted);
        assert_eq!(step.value, 2.5);
        assert_eq!(step.accept_prob, 1.0);
    }

    #[test]
    fn density_of_log_g_integrates_to_one() {
        // Trapezoid on nu in [-60, 60]; the tails decay like exp(nu/2) and exp(-nu/2).
        let m = 240_000;
        let h = 120.0 / m as f64;
        let total: f64 = (0..=m)
            .map(|i| {
                let w = if i == 0 || i == m { 0.5 } else { 1.0 };
                w * log_density_log_g(-60.0 + i as f64 * h).exp()
            })
            .sum::<f64>()
            * h;
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn flat_likelihood_shape_chain_is_gaussian() {
        let sigma_k_sq = 0.7;
        let mut rw = AdaptiveRwState::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut k = 1.0;
        let iters = 200_000;
        let burn = 5_000;
        let mut draws = Vec::with_capacity(iters);
        for _ in 0..iters + burn {
            k = update_weibull_shape(k, 0.0, sigma_k_sq, &mut rw, flat, &mut rng).value;
            draws.push(k.ln());
        }
        let s = &draws[burn..];
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        // Batch means to account for autocorrelation.
        let batches = 100;
        let bs = s.len() / batches;
        let bvars: Vec<f64> = (0..batches)
            .map(|b| {
                let chunk = &s[b * bs..(b + 1) * bs];
                chunk.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / bs as f64
            })
            .collect();
        let bmean = bvars.iter().sum::<f64>() / batches as f64;
        let se = (bvars.iter().map(|v| (v - bmean).powi(2)).sum::<f64>() / (batches - 1) as f64 / batches as f64).sqrt();
        assert!((var - sigma_k_sq).abs() < 4.0 * se, "var {var} se {se}");
    }
}
