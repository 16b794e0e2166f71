//! Exhaustive evaluation of every model under the Laplace approximation.

use crate::error::{Error, Result};
use crate::marglik::log_marglik_la;
use crate::model::{log_model_prior, Dataset, ModelIndicator, PriorConfig};

/// Largest `p` accepted by [`enumerate_exact`].
pub const MAX_ENUMERATION_P: usize = 20;

#[derive(Debug, Clone)]
pub struct Enumeration {
    /// Posterior model probabilities indexed by [`ModelIndicator::from_code`] order.
    pub pmp: Vec<f64>,
    pub pip: Vec<f64>,
    /// Unnormalised `log p_LA(y | gamma) + log p(gamma)`.
    pub log_post: Vec<f64>,
    pub p: usize,
}

impl Enumeration {
    pub fn model(&self, code: usize) -> ModelIndicator {
        ModelIndicator::from_code(self.p, code as u64)
    }

    /// Probability of a model under the enumerated posterior.
    pub fn prob(&self, gamma: &ModelIndicator) -> f64 {
        let code: usize = gamma.included().iter().map(|&j| 1usize << j).sum();
        self.pmp[code]
    }
}

/// Normalised LA posterior over all `2^p` models.
///
/// Models whose mode cannot be found get probability zero.
pub fn enumerate_exact(
    data: &Dataset,
    prior: &PriorConfig,
    shape: Option<f64>,
    max_p: usize,
) -> Result<Enumeration> {
    let p = data.p();
    let cap = max_p.min(MAX_ENUMERATION_P);
    if p > cap {
        return Err(Error::TooManyCovariates { p, max_p: cap });
    }
    let count = 1usize << p;
    let mut log_post = Vec::with_capacity(count);
    for code in 0..count {
        let gamma = ModelIndicator::from_code(p, code as u64);
        let v = match log_marglik_la(data, &gamma, prior, None, shape) {
            Ok(m) => m.log_value + log_model_prior(&gamma, prior),
            Err(e) => {
                log::warn!("model {gamma} dropped from enumeration: {e}");
                f64::NEG_INFINITY
            }
        };
        log_post.push(v);
    }
    let max = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::InvalidData("no model could be evaluated".into()));
    }
    let weights: Vec<f64> = log_post.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let pmp: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut pip = vec![0.0; p];
    for (code, &w) in pmp.iter().enumerate() {
        for (j, v) in pip.iter_mut().enumerate() {
            if (code >> j) & 1 == 1 {
                *v += w;
            }
        }
    }
    Ok(Enumeration { pmp, pip, log_post, p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn toy(p: usize, dup: bool) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 40;
        let mut x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        if dup {
            let c = x.column(0).into_owned();
            x.set_column(1, &c);
        }
        let y = (0..n).map(|i| f64::from(x[(i, 0)] + 0.5 * rng.sample::<f64, _>(StandardNormal) > 0.0)).collect();
        Dataset::logistic(x, DMatrix::zeros(n, 0), y).unwrap()
    }

    #[test]
    fn single_covariate_by_hand() {
        let data = toy(1, false);
        let prior = PriorConfig::default();
        let e = enumerate_exact(&data, &prior, None, 20).unwrap();
        let l0 = log_marglik_la(&data, &ModelIndicator::empty(1), &prior, None, None).unwrap().log_value;
        let l1 = log_marglik_la(&data, &ModelIndicator::full(1), &prior, None, None).unwrap().log_value;
        let odds = (l1 - l0).exp();
        assert!((e.pip[0] - odds / (1.0 + odds)).abs() < 1e-12);
    }

    #[test]
    fn normalised_and_symmetric() {
        let data = toy(4, true);
        let e = enumerate_exact(&data, &PriorConfig::default(), None, 20).unwrap();
        assert!((e.pmp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((e.pip[0] - e.pip[1]).abs() < 1e-12);
    }

    #[test]
    fn too_many_covariates() {
        let data = toy(4, false);
        assert!(matches!(
            enumerate_exact(&data, &PriorConfig::default(), None, 3),
            Err(Error::TooManyCovariates { p: 4, max_p: 3 })
        ));
    }
}
