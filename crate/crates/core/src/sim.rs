//! Simulated benchmark data: AR(1)-correlated Gaussian designs with logistic
//! or generalised-gamma accelerated-failure-time responses.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{Dataset, ModelIndicator, ModelKind, ModelPrior, PriorConfig};

/// Non-zero leading coefficients of the default simulation design.
pub const DEFAULT_BETA: [f64; 10] = [2.0, -3.0, 2.0, 2.0, -3.0, 3.0, -2.0, 3.0, -2.0, 3.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Censoring {
    None,
    /// Censor every time above the given empirical quantile of the simulated times.
    Administrative { quantile: f64 },
    /// Independent `C_i ~ U(0, c_max)` with `c_max` the given empirical quantile.
    Uniform { upper_quantile: f64 },
}

impl Default for Censoring {
    fn default() -> Self {
        Censoring::Administrative { quantile: 0.7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub ar_rho: f64,
    /// Defaults to [`DEFAULT_BETA`] followed by zeros.
    pub beta: Option<Vec<f64>>,
    pub kind: ModelKind,
    pub sigma: f64,
    pub q_shape: f64,
    pub censoring: Censoring,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 500,
            p: 500,
            ar_rho: 0.6,
            beta: None,
            kind: ModelKind::Logistic,
            sigma: 0.8,
            q_shape: -2.0,
            censoring: Censoring::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::InvalidConfig("simulation needs n >= 1 and p >= 1".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidConfig(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.ar_rho.abs() < 1.0) {
            return Err(Error::InvalidConfig(format!("AR correlation must lie in (-1, 1), got {}", self.ar_rho)));
        }
        if let Some(b) = &self.beta {
            if b.len() != self.p {
                return Err(Error::DimensionMismatch {
                    what: "coefficient vector",
                    expected: self.p,
                    actual: b.len(),
                });
            }
        }
        match self.censoring {
            Censoring::Administrative { quantile: v } | Censoring::Uniform { upper_quantile: v }
                if !(v > 0.0 && v <= 1.0) =>
            {
                Err(Error::InvalidConfig(format!("censoring quantile must lie in (0, 1], got {v}")))
            }
            _ => Ok(()),
        }
    }

    pub fn beta(&self) -> Vec<f64> {
        self.beta.clone().unwrap_or_else(|| {
            (0..self.p)
                .map(|j| DEFAULT_BETA.get(j).copied().unwrap_or(0.0))
                .collect()
        })
    }

    /// The model made of the non-zero coefficients.
    pub fn true_model(&self) -> ModelIndicator {
        ModelIndicator::from_bits(self.beta().iter().map(|&b| b != 0.0).collect())
    }

    /// `g = 1`, `h = 10 / p`, `sigma_alpha^2 = 100`.
    pub fn benchmark_prior(&self) -> PriorConfig {
        PriorConfig {
            g: 1.0,
            model_prior: ModelPrior::Fixed {
                h: (10.0 / self.p as f64).min(0.5),
            },
            ..Default::default()
        }
    }
}

/// Rows i.i.d. `N(0, Sigma)` with `Sigma_ij = rho^{|i-j|}`, via the AR(1) recursion.
pub fn gen_design<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> DMatrix<f64> {
    let rho = config.ar_rho;
    let s = (1.0 - rho * rho).sqrt();
    let mut x = DMatrix::zeros(config.n, config.p);
    for i in 0..config.n {
        let mut prev: f64 = rng.sample(StandardNormal);
        x[(i, 0)] = prev;
        for j in 1..config.p {
            let e: f64 = rng.sample(StandardNormal);
            prev = rho * prev + s * e;
            x[(i, j)] = prev;
        }
    }
    x
}

fn linear_predictor(x: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| beta.iter().enumerate().map(|(j, b)| b * x[(i, j)]).sum())
        .collect()
}

/// Logistic responses `y_i ~ Bernoulli(logistic(x_i^T beta))`.
pub fn gen_logistic<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<Dataset> {
    config.validate()?;
    let x = gen_design(config, rng);
    let eta = linear_predictor(&x, &config.beta());
    let y = eta
        .iter()
        .map(|e| f64::from(rng.random::<f64>() < 1.0 / (1.0 + (-e).exp())))
        .collect();
    Dataset::logistic(x, DMatrix::zeros(config.n, 0), y)
}

/// Standardised generalised-gamma error with shape `q`: `ln(q^2 G) / q`, `G ~ Gamma(q^-2, 1)`.
/// The `q -> 0` limit is the standard normal.
pub fn gen_gamma_error<R: Rng + ?Sized>(q: f64, rng: &mut R) -> f64 {
    if q.abs() < 1e-8 {
        return rng.sample(StandardNormal);
    }
    let a = 1.0 / (q * q);
    let g: f64 = Gamma::new(a, 1.0).expect("positive shape").sample(rng);
    (q * q * g).ln() / q
}

fn empirical_quantile(values: &[f64], prob: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let idx = ((prob * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

/// Survival times `log T = -x^T beta + sigma w` with censoring.
///
/// Weibull data sets get an intercept column as their only fixed covariate;
/// Cox partial likelihoods have none.
pub fn gen_survival<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<Dataset> {
    config.validate()?;
    if !config.kind.is_survival() {
        return Err(Error::InvalidConfig(format!(
            "survival simulation needs a survival model kind, got {}",
            config.kind.name()
        )));
    }
    let x = gen_design(config, rng);
    let eta = linear_predictor(&x, &config.beta());
    let latent: Vec<f64> = eta
        .iter()
        .map(|e| (-e + config.sigma * gen_gamma_error(config.q_shape, rng)).exp())
        .collect();
    let (time, event): (Vec<f64>, Vec<f64>) = match config.censoring {
        Censoring::None => (latent.clone(), vec![1.0; config.n]),
        Censoring::Administrative { quantile } => {
            let c = empirical_quantile(&latent, quantile);
            latent.iter().map(|&t| (t.min(c), f64::from(t <= c))).unzip()
        }
        Censoring::Uniform { upper_quantile } => {
            let c_max = empirical_quantile(&latent, upper_quantile);
            latent
                .iter()
                .map(|&t| {
                    let c = rng.random::<f64>() * c_max;
                    if t <= c {
                        (t, 1.0)
                    } else {
                        (c.max(f64::MIN_POSITIVE), 0.0)
                    }
                })
                .unzip()
        }
    };
    let z = if config.kind == ModelKind::Weibull {
        DMatrix::from_element(config.n, 1, 1.0)
    } else {
        DMatrix::zeros(config.n, 0)
    };
    Dataset::survival(config.kind, x, z, time, event)
}

/// Dispatches on `config.kind`.
pub fn simulate<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<Dataset> {
    match config.kind {
        ModelKind::Logistic => gen_logistic(config, rng),
        _ => gen_survival(config, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Response;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn corr(x: &DMatrix<f64>, a: usize, b: usize) -> f64 {
        let n = x.nrows() as f64;
        let ma = x.column(a).sum() / n;
        let mb = x.column(b).sum() / n;
        let cov: f64 = (0..x.nrows()).map(|i| (x[(i, a)] - ma) * (x[(i, b)] - mb)).sum();
        let va: f64 = (0..x.nrows()).map(|i| (x[(i, a)] - ma).powi(2)).sum();
        let vb: f64 = (0..x.nrows()).map(|i| (x[(i, b)] - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn design_correlation_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let config = SimConfig {
            n: 10_000,
            p: 5,
            ..Default::default()
        };
        let x = gen_design(&config, &mut rng);
        assert!((corr(&x, 0, 1) - 0.6).abs() < 0.05);
        assert!((corr(&x, 0, 3) - 0.216).abs() < 0.05);
        for j in 0..5 {
            let var = x.column(j).norm_squared() / 10_000.0;
            // Var of the sample variance of N(0,1) is 2/n.
            assert!((var - 1.0).abs() < 4.0 * (2.0f64 / 10_000.0).sqrt());
        }
        let indep = SimConfig {
            ar_rho: 0.0,
            ..config
        };
        let x = gen_design(&indep, &mut rng);
        for a in 0..5 {
            for b in a + 1..5 {
                assert!(corr(&x, a, b).abs() < 0.1);
            }
        }
    }

    #[test]
    fn logistic_defaults_and_null_mean() {
        let config = SimConfig {
            n: 4000,
            p: 12,
            beta: Some(vec![0.0; 12]),
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = gen_logistic(&config, &mut rng).unwrap();
        let Response::Binary(y) = data.response() else { unreachable!() };
        let mean = y.iter().sum::<f64>() / 4000.0;
        assert!((mean - 0.5).abs() < 4.0 * (0.25f64 / 4000.0).sqrt());
        let default = SimConfig { p: 12, ..Default::default() };
        assert_eq!(&default.beta()[..10], &DEFAULT_BETA);
        assert_eq!(default.beta()[10..], [0.0, 0.0]);
        assert_eq!(default.true_model().size(), 10);
    }

    #[test]
    fn survival_uncensored_and_positive() {
        let config = SimConfig {
            n: 300,
            p: 4,
            beta: Some(vec![0.0; 4]),
            kind: ModelKind::CoxPartial,
            censoring: Censoring::None,
            ..Default::default()
        };
        let data = gen_survival(&config, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let Response::Survival { time, event } = data.response() else { unreachable!() };
        assert!(event.iter().all(|&d| d == 1.0));
        assert!(time.iter().all(|&t| t > 0.0));
    }

    #[test]
    fn administrative_censoring_fraction() {
        let config = SimConfig {
            n: 2000,
            p: 10,
            kind: ModelKind::Weibull,
            ..Default::default()
        };
        let data = gen_survival(&config, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let Response::Survival { event, .. } = data.response() else { unreachable!() };
        let frac = event.iter().sum::<f64>() / 2000.0;
        assert!((frac - 0.7).abs() < 0.05);
        assert_eq!(data.q(), 1);
    }

    #[test]
    fn larger_predictor_means_shorter_times() {
        let config = SimConfig {
            n: 10_000,
            p: 1,
            beta: Some(vec![1.0]),
            kind: ModelKind::CoxPartial,
            censoring: Censoring::None,
            ..Default::default()
        };
        let data = gen_survival(&config, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let Response::Survival { time, .. } = data.response() else { unreachable!() };
        let x = data.x().column(0);
        let mut xs: Vec<(f64, f64)> = (0..10_000).map(|i| (x[i], time[i])).collect();
        xs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let low: f64 = xs[..5000].iter().map(|v| v.1.ln()).sum::<f64>() / 5000.0;
        let high: f64 = xs[5000..].iter().map(|v| v.1.ln()).sum::<f64>() / 5000.0;
        assert!(high < low);
    }

    #[test]
    fn gamma_error_normal_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 100_000;
        let mut w: Vec<f64> = (0..n).map(|_| gen_gamma_error(1e-4, &mut rng)).collect();
        w.sort_by(f64::total_cmp);
        let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        use statrs::distribution::ContinuousCDF;
        let ks = w
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let f = normal.cdf(v);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS {ks}");
    }

    #[test]
    fn deterministic_given_seed() {
        let config = SimConfig {
            n: 50,
            p: 6,
            kind: ModelKind::Weibull,
            ..Default::default()
        };
        let a = simulate(&config, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = simulate(&config, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.x(), b.x());
        assert_eq!(a.response(), b.response());
    }
}
