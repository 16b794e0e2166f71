use std::f64::consts::PI;

use nalgebra::DVector;

use super::{MarglikResult, Method};
use crate::error::{Error, Result};
use crate::model::{eta_derivatives, Dataset, GlmDerivatives, ModelIndicator, PriorConfig};
use crate::numerics::{LocalQuadratic, Posterior, SpdFactor};

fn half_log_2pi(d: usize) -> f64 {
    0.5 * d as f64 * (2.0 * PI).ln()
}

/// ALA value from a local quadratic expansion:
/// `-f(theta0) + d/2 log 2pi - 1/2 log|H0| + 1/2 g0^T H0^{-1} g0`.
pub(crate) fn ala_from_local(local: &LocalQuadratic) -> Result<(f64, SpdFactor)> {
    let factor = SpdFactor::with_jitter(local.hess.clone())?;
    let d = local.theta.len();
    let value = -local.value + half_log_2pi(d) - 0.5 * factor.log_det() + 0.5 * factor.inv_quad(&local.grad);
    Ok((value, factor))
}

pub(crate) fn la_from_posterior(post: &Posterior<'_>, theta_init: Option<&DVector<f64>>) -> Result<(MarglikResult, crate::numerics::MapEstimate)> {
    let map = post.map_estimate(theta_init)?.require_converged()?;
    let d = post.dim();
    let log_value = -map.neg_log_post + half_log_2pi(d) - 0.5 * map.factor.log_det();
    if !log_value.is_finite() {
        return Err(Error::NoConvergence {
            iterations: map.iterations,
            grad_norm: map.grad_norm,
        });
    }
    let result = MarglikResult {
        log_value,
        method: Method::La,
        theta_hat: Some(map.theta.clone()),
        eta_hat: Some(map.eta.clone()),
        log_det: Some(map.factor.log_det()),
    };
    Ok((result, map))
}

/// Laplace approximation at the posterior mode.
pub fn log_marglik_la(
    data: &Dataset,
    gamma: &ModelIndicator,
    prior: &PriorConfig,
    theta_init: Option<&DVector<f64>>,
    shape: Option<f64>,
) -> Result<MarglikResult> {
    let post = Posterior::new(data, gamma, prior, shape)?;
    Ok(la_from_posterior(&post, theta_init)?.0)
}

/// Approximate Laplace approximation expanded at `theta0`.
pub fn log_marglik_ala(
    data: &Dataset,
    gamma: &ModelIndicator,
    prior: &PriorConfig,
    theta0: &DVector<f64>,
    shape: Option<f64>,
) -> Result<MarglikResult> {
    let post = Posterior::new(data, gamma, prior, shape)?;
    let local = post.local(theta0)?;
    let (log_value, factor) = ala_from_local(&local)?;
    finite(log_value)?;
    Ok(MarglikResult {
        log_value,
        method: Method::Ala,
        theta_hat: None,
        eta_hat: None,
        log_det: Some(factor.log_det()),
    })
}

fn finite(v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NotPositiveDefinite)
    }
}

/// A guessed linear predictor together with the likelihood derivatives at it.
///
/// The derivatives do not depend on the model, so one guess serves every
/// model scored within an iteration.
#[derive(Debug, Clone)]
pub struct EtaGuess {
    pub eta: DVector<f64>,
    pub derivatives: GlmDerivatives,
}

impl EtaGuess {
    pub fn new(data: &Dataset, eta: DVector<f64>, shape: Option<f64>) -> Result<Self> {
        let derivatives = eta_derivatives(data, &eta, shape)?;
        Ok(Self { eta, derivatives })
    }
}

/// Adaptive ALA using a precomputed guess.
pub fn log_marglik_adaptive_ala_with(post: &Posterior<'_>, guess: &EtaGuess) -> Result<MarglikResult> {
    let (theta_tilde, _) = post.irls_from_eta(&guess.eta, &guess.derivatives)?;
    let local = post.local(&theta_tilde)?;
    let (log_value, factor) = ala_from_local(&local)?;
    finite(log_value)?;
    Ok(MarglikResult {
        log_value,
        method: Method::AdaptiveAla,
        theta_hat: None,
        eta_hat: None,
        log_det: Some(factor.log_det()),
    })
}

/// ALA expanded at one working-response Newton step taken from a guessed linear predictor.
pub fn log_marglik_adaptive_ala(
    data: &Dataset,
    gamma: &ModelIndicator,
    prior: &PriorConfig,
    eta_guess: &DVector<f64>,
    shape: Option<f64>,
) -> Result<MarglikResult> {
    let post = Posterior::new(data, gamma, prior, shape)?;
    let guess = EtaGuess::new(data, eta_guess.clone(), shape)?;
    log_marglik_adaptive_ala_with(&post, &guess)
}
