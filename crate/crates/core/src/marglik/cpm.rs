use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::laplace::la_from_posterior;
use super::{MarglikResult, Method};
use crate::error::{Error, Result};
use crate::model::{log_likelihood_eta, Dataset, ModelIndicator, PriorConfig};
use crate::numerics::{MapEstimate, Posterior};

/// Standard-normal auxiliaries driving the importance sampler.
///
/// Row `i` holds the noise for importance sample `i`; a model of dimension `d`
/// reads the first `d` columns, so models of different sizes share noise.
#[derive(Debug, Clone, PartialEq)]
pub struct CpmAuxiliary {
    pub u: DMatrix<f64>,
    pub rho: f64,
}

impl CpmAuxiliary {
    pub fn new<R: Rng + ?Sized>(n_samples: usize, d_max: usize, rho: f64, rng: &mut R) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::InvalidConfig("CPM needs at least one importance sample".into()));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidConfig(format!("CPM correlation must lie in [0, 1), got {rho}")));
        }
        let u = DMatrix::from_fn(n_samples, d_max, |_, _| rng.sample(StandardNormal));
        Ok(Self { u, rho })
    }

    pub fn n_samples(&self) -> usize {
        self.u.nrows()
    }

    pub fn d_max(&self) -> usize {
        self.u.ncols()
    }
}

/// AR(1) refresh `u' = rho u + sqrt(1 - rho^2) eps`.
pub fn cpm_refresh<R: Rng + ?Sized>(aux: &CpmAuxiliary, rng: &mut R) -> CpmAuxiliary {
    let s = (1.0 - aux.rho * aux.rho).sqrt();
    let u = aux.u.map(|v| aux.rho * v + s * rng.sample::<f64, _>(StandardNormal));
    CpmAuxiliary { u, rho: aux.rho }
}

/// Importance-sampling estimate around an already computed mode.
pub fn log_marglik_cpm_from_map(
    post: &Posterior<'_>,
    map: &MapEstimate,
    aux: &CpmAuxiliary,
) -> Result<MarglikResult> {
    let d = post.dim();
    if d > aux.d_max() {
        return Err(Error::ModelTooLarge {
            size: d,
            cap: aux.d_max(),
        });
    }
    let n_samples = aux.n_samples();
    let log_det = map.factor.log_det();
    // log pi_LA(theta_i) = -d/2 log 2pi + 1/2 log|H| - 1/2 |u_i|^2
    let log_norm = -0.5 * d as f64 * (2.0 * PI).ln() + 0.5 * log_det;
    let mut thetas = DMatrix::zeros(d, n_samples);
    let mut log_weights = Vec::with_capacity(n_samples);
    let mut proposal = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let u = DVector::from_fn(d, |c, _| aux.u[(i, c)]);
        let theta = &map.theta + map.factor.inverse_sqrt_t(&u);
        thetas.set_column(i, &theta);
        proposal.push(log_norm - 0.5 * u.norm_squared());
    }
    let etas = if d == 0 {
        DMatrix::zeros(post.data().n(), n_samples)
    } else {
        post.design() * &thetas
    };
    for i in 0..n_samples {
        let theta = thetas.column(i).into_owned();
        let eta = etas.column(i).into_owned();
        let ll = log_likelihood_eta(post.data(), &eta, post.shape())?;
        let lw = ll + post.log_prior(&theta) - proposal[i];
        log_weights.push(if lw.is_nan() { f64::NEG_INFINITY } else { lw });
    }
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NoConvergence {
            iterations: map.iterations,
            grad_norm: map.grad_norm,
        });
    }
    let sum: f64 = log_weights.iter().map(|w| (w - max).exp()).sum();
    let log_value = max + sum.ln() - (n_samples as f64).ln();
    Ok(MarglikResult {
        log_value,
        method: Method::Cpm,
        theta_hat: Some(map.theta.clone()),
        eta_hat: Some(map.eta.clone()),
        log_det: Some(log_det),
    })
}

/// Unbiased importance-sampling estimate of `p(y | gamma)` with the Laplace
/// normal approximation as proposal.
pub fn log_marglik_cpm(
    data: &Dataset,
    gamma: &ModelIndicator,
    prior: &PriorConfig,
    aux: &CpmAuxiliary,
    shape: Option<f64>,
    theta_init: Option<&DVector<f64>>,
) -> Result<MarglikResult> {
    let post = Posterior::new(data, gamma, prior, shape)?;
    if post.dim() > aux.d_max() {
        return Err(Error::ModelTooLarge {
            size: post.dim(),
            cap: aux.d_max(),
        });
    }
    let (_, map) = la_from_posterior(&post, theta_init)?;
    log_marglik_cpm_from_map(&post, &map, aux)
}
