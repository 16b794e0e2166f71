use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{MarglikResult, Method};
use crate::error::{Error, Result};
use crate::model::{Curvature, Dataset, ModelIndicator, ModelKind, PriorConfig, Response};
use crate::numerics::SpdFactor;
use crate::polya_gamma::sample_pg1;

struct Conditional {
    design: DMatrix<f64>,
    factor: SpdFactor,
    xi: DVector<f64>,
    prior_var: DVector<f64>,
}

fn conditional(data: &Dataset, gamma: &ModelIndicator, prior: &PriorConfig, omega: &DVector<f64>) -> Result<Conditional> {
    let Response::Binary(y) = data.response() else {
        return Err(Error::InvalidConfig(
            "data augmentation is only available for logistic regression".into(),
        ));
    };
    debug_assert_eq!(data.kind(), ModelKind::Logistic);
    if omega.len() != data.n() {
        return Err(Error::DimensionMismatch {
            what: "Polya-gamma latent vector",
            expected: data.n(),
            actual: omega.len(),
        });
    }
    if let Some(i) = omega.iter().position(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidData(format!(
            "Polya-gamma latent {} must be positive, got {}",
            i, omega[i]
        )));
    }
    let design = data.design(gamma);
    let prior_var = prior.variances(data.q(), gamma.size());
    let kappa = DVector::from_fn(data.n(), |i, _| y[i] - 0.5);
    let xi = design.tr_mul(&kappa);
    let mut lambda = Curvature::Diagonal(omega.clone()).quad_form(&design);
    for i in 0..prior_var.len() {
        lambda[(i, i)] += 1.0 / prior_var[i];
    }
    let factor = SpdFactor::with_jitter(lambda)?;
    Ok(Conditional {
        design,
        factor,
        xi,
        prior_var,
    })
}

/// `log p(y | gamma, omega)` up to the `gamma`-free factor `prod_i p_PG(omega_i)`:
/// `-n log 2 - 1/2 log|V| - 1/2 log|Lambda| + 1/2 xi^T Lambda^{-1} xi`.
pub fn da_conditional_logmarglik(
    data: &Dataset,
    gamma: &ModelIndicator,
    prior: &PriorConfig,
    omega: &DVector<f64>,
) -> Result<MarglikResult> {
    let c = conditional(data, gamma, prior, omega)?;
    let log_det_v: f64 = c.prior_var.iter().map(|v| v.ln()).sum();
    let log_value = -(data.n() as f64) * 2f64.ln() - 0.5 * log_det_v - 0.5 * c.factor.log_det()
        + 0.5 * c.factor.inv_quad(&c.xi);
    let theta = c.factor.solve(&c.xi);
    let eta = if theta.is_empty() {
        DVector::zeros(data.n())
    } else {
        &c.design * &theta
    };
    Ok(MarglikResult {
        log_value,
        method: Method::DaConditional,
        theta_hat: Some(theta),
        eta_hat: Some(eta),
        log_det: Some(c.factor.log_det()),
    })
}

/// One Gibbs sweep: `theta ~ N(Lambda^{-1} xi, Lambda^{-1})`, then `omega_i ~ PG(1, eta_i)`.
pub fn da_gibbs_sweep<R: Rng + ?Sized>(
    data: &Dataset,
    gamma: &ModelIndicator,
    prior: &PriorConfig,
    omega: &DVector<f64>,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let c = conditional(data, gamma, prior, omega)?;
    let mean = c.factor.solve(&c.xi);
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let theta = mean + c.factor.inverse_sqrt_t(&z);
    let eta = if theta.is_empty() {
        DVector::zeros(data.n())
    } else {
        &c.design * &theta
    };
    let omega_new = eta.map(|e| sample_pg1(e, rng).value());
    Ok((theta, omega_new))
}
