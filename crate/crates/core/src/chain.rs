//! Chain driver shared by the PARNI and add-delete-swap samplers.
//!
//! One iteration is: model move, then `g` (if hierarchical), then the Weibull
//! shape, then the Pólya-gamma latents (DA only), then adaptation.

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ads::ads_propose;
use crate::error::{Error, Result};
use crate::hyper::{update_g, update_weibull_shape, AdaptiveRwState};
use crate::marglik::{
    cpm_refresh, da_conditional_logmarglik, da_gibbs_sweep, log_marglik_cpm, warm_start_pips, CpmAuxiliary,
    MarglikResult,
};
use crate::model::{log_model_prior, Dataset, ModelIndicator, ModelKind, PriorConfig};
use crate::parni::{
    log_mask_prob, pointwise_propose, sample_mask, LaCache, ProposalScorer, TuningState,
};
use crate::polya_gamma::sample_pg1;

pub use crate::parni::ProposalEstimator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    Parni,
    Ads,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Parni => "parni",
            SamplerKind::Ads => "ads",
        }
    }
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "parni" => Ok(SamplerKind::Parni),
            "ads" => Ok(SamplerKind::Ads),
            other => Err(Error::InvalidConfig(format!("unknown sampler '{other}'"))),
        }
    }
}

impl std::str::FromStr for ProposalEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', ' '], "-").as_str() {
            "adaptive-ala" | "adaptiveala" => Ok(ProposalEstimator::AdaptiveAla),
            "ala" => Ok(ProposalEstimator::Ala),
            "la" => Ok(ProposalEstimator::La),
            "da" => Ok(ProposalEstimator::Da),
            other => Err(Error::InvalidConfig(format!("unknown proposal estimator '{other}'"))),
        }
    }
}

/// Estimator used in the Metropolis–Hastings ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AcceptanceEstimator {
    /// Deterministic Laplace approximation; the chain then targets the LA posterior.
    La,
    Cpm,
    Da,
}

impl AcceptanceEstimator {
    pub fn name(self) -> &'static str {
        match self {
            AcceptanceEstimator::La => "LA",
            AcceptanceEstimator::Cpm => "CPM",
            AcceptanceEstimator::Da => "DA",
        }
    }

    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Logistic => AcceptanceEstimator::Da,
            _ => AcceptanceEstimator::Cpm,
        }
    }

    /// Label of the distribution the chain targets.
    pub fn target_label(self) -> &'static str {
        match self {
            AcceptanceEstimator::La => "laplace-approximate posterior",
            _ => "exact posterior",
        }
    }
}

impl std::str::FromStr for AcceptanceEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "la" => Ok(AcceptanceEstimator::La),
            "cpm" => Ok(AcceptanceEstimator::Cpm),
            "da" => Ok(AcceptanceEstimator::Da),
            other => Err(Error::InvalidConfig(format!("unknown acceptance estimator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpmSettings {
    pub n_samples: usize,
    pub rho: f64,
    /// Largest model size the auxiliaries are sized for.
    pub max_model_size: usize,
}

impl Default for CpmSettings {
    fn default() -> Self {
        Self {
            n_samples: 64,
            rho: 0.99,
            max_model_size: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub sampler: SamplerKind,
    pub proposal: ProposalEstimator,
    pub acceptance: AcceptanceEstimator,
    /// Iteration cap `N`.
    pub iterations: usize,
    pub burn_in: usize,
    /// Record every `thin`-th iteration.
    pub thin: usize,
    /// Wall-clock budget; the chain stops at whichever of budget or `iterations` comes first.
    pub budget: Option<Duration>,
    /// Thin the stored samples down to about this many (used with a budget).
    pub keep: Option<usize>,
    pub cpm: CpmSettings,
    /// Clamp for tuning probabilities; `0.1 / p` when unset.
    pub epsilon: Option<f64>,
    pub zeta_init: f64,
    pub adapt_zeta: bool,
    pub initial_model: Option<ModelIndicator>,
    pub initial_shape: f64,
    /// Entries kept in the cross-iteration Laplace cache (0 disables it).
    pub la_cache_capacity: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerKind::Parni,
            proposal: ProposalEstimator::AdaptiveAla,
            acceptance: AcceptanceEstimator::La,
            iterations: 1000,
            burn_in: 100,
            thin: 1,
            budget: None,
            keep: None,
            cpm: CpmSettings::default(),
            epsilon: None,
            zeta_init: 0.5,
            adapt_zeta: true,
            initial_model: None,
            initial_shape: 1.0,
            la_cache_capacity: 50_000,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self, data: &Dataset, prior: &PriorConfig) -> Result<()> {
        prior.validate()?;
        let cfg = |m: String| Err(Error::InvalidConfig(m));
        if self.acceptance == AcceptanceEstimator::Da && data.kind() != ModelKind::Logistic {
            return cfg(format!(
                "data augmentation acceptance is only available for logistic regression, not {}",
                data.kind().name()
            ));
        }
        if self.sampler == SamplerKind::Parni
            && self.proposal == ProposalEstimator::Da
            && self.acceptance != AcceptanceEstimator::Da
        {
            return cfg("the DA proposal requires DA acceptance".into());
        }
        if self.iterations > 0 && self.burn_in >= self.iterations {
            return cfg(format!(
                "burn-in ({}) must be smaller than the iteration count ({})",
                self.burn_in, self.iterations
            ));
        }
        if self.thin == 0 {
            return cfg("thinning interval must be at least 1".into());
        }
        if self.keep == Some(0) {
            return cfg("number of kept samples must be at least 1".into());
        }
        if data.p() == 0 {
            return cfg("no free covariates to select from".into());
        }
        if !(self.initial_shape > 0.0 && self.initial_shape.is_finite()) {
            return Err(Error::InvalidShape(self.initial_shape));
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps < 0.5) {
                return cfg(format!("epsilon must lie in (0, 1/2), got {eps}"));
            }
        }
        if !(self.zeta_init > 0.0 && self.zeta_init < 1.0) {
            return cfg(format!("initial zeta must lie in (0, 1), got {}", self.zeta_init));
        }
        if let Some(g0) = &self.initial_model {
            if g0.p() != data.p() {
                return Err(Error::DimensionMismatch {
                    what: "initial model",
                    expected: data.p(),
                    actual: g0.p(),
                });
            }
        }
        Ok(())
    }

    pub fn epsilon_for(&self, p: usize) -> f64 {
        self.epsilon.unwrap_or(0.1 / p as f64).min(0.25)
    }
}

/// Reproducible per-chain generator: one seed, one stream per chain.
pub fn chain_rng(seed: u64, chain: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain);
    rng
}

/// Estimator-specific auxiliary state carried by the chain.
#[derive(Debug, Clone)]
pub enum ChainAux {
    None,
    Cpm(CpmAuxiliary),
    Da(DVector<f64>),
}

#[derive(Debug, Clone)]
pub struct ChainState {
    pub gamma: ModelIndicator,
    /// `log p_hat(y | gamma) + log p(gamma)`
    pub log_post: f64,
    pub marglik: MarglikResult,
    pub aux: ChainAux,
    pub g: f64,
    pub shape: Option<f64>,
}

/// One stored iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub iteration: usize,
    pub gamma: ModelIndicator,
    pub log_post: f64,
    pub accepted: bool,
    /// Seconds since the chain started.
    pub elapsed: f64,
    pub g: f64,
    pub shape: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub records: Vec<Record>,
    /// Posterior inclusion probabilities from all post-burn-in iterations.
    pub pip: Vec<f64>,
    pub iterations: usize,
    pub burn_in: usize,
    pub accepted: usize,
    pub estimator_failures: usize,
    pub proposal_evaluations: usize,
    pub mean_mask_size: f64,
    pub final_zeta: Option<f64>,
    pub elapsed: Duration,
    pub target: &'static str,
    pub config: ChainConfig,
}

impl ChainOutput {
    pub fn acceptance_rate(&self) -> f64 {
        if self.iterations == 0 {
            0.0
        } else {
            self.accepted as f64 / self.iterations as f64
        }
    }

    pub fn seconds_per_iteration(&self) -> f64 {
        if self.iterations == 0 {
            0.0
        } else {
            self.elapsed.as_secs_f64() / self.iterations as f64
        }
    }
}

/// Keeps evenly spaced records, doubling the stride whenever `keep` is exceeded.
struct Recorder {
    records: Vec<Record>,
    stride: usize,
    keep: Option<usize>,
}

impl Recorder {
    fn wants(&self, iteration: usize) -> bool {
        iteration % self.stride == 0
    }

    fn push(&mut self, r: Record) {
        self.records.push(r);
        if let Some(keep) = self.keep {
            if self.records.len() > 2 * keep {
                self.stride *= 2;
                let stride = self.stride;
                self.records.retain(|r| r.iteration % stride == 0);
            }
        }
    }

    fn finish(mut self) -> Vec<Record> {
        if let Some(keep) = self.keep {
            if self.records.len() > keep {
                let n = self.records.len();
                let picked: Vec<Record> = (0..keep)
                    .map(|i| self.records[(i * n) / keep].clone())
                    .collect();
                self.records = picked;
            }
        }
        self.records
    }
}

struct Context<'a> {
    data: &'a Dataset,
    config: &'a ChainConfig,
    la_cache: LaCache,
}

impl Context<'_> {
    fn acceptance_estimate(
        &mut self,
        gamma: &ModelIndicator,
        prior: &PriorConfig,
        shape: Option<f64>,
        aux: &ChainAux,
    ) -> Result<MarglikResult> {
        match (self.config.acceptance, aux) {
            (AcceptanceEstimator::La, _) => self.la_cache.get_or_compute(self.data, gamma, prior, shape),
            (AcceptanceEstimator::Cpm, ChainAux::Cpm(u)) => log_marglik_cpm(self.data, gamma, prior, u, shape, None),
            (AcceptanceEstimator::Da, ChainAux::Da(omega)) => da_conditional_logmarglik(self.data, gamma, prior, omega),
            _ => unreachable!("auxiliary state matches the acceptance estimator"),
        }
    }
}

/// Runs one chain.
pub fn run_chain<R: Rng + ?Sized>(
    data: &Dataset,
    prior: &PriorConfig,
    config: &ChainConfig,
    rng: &mut R,
) -> Result<ChainOutput> {
    config.validate(data, prior)?;
    let start = Instant::now();
    let p = data.p();
    let mut prior = prior.clone();
    let mut ctx = Context {
        data,
        config,
        la_cache: LaCache::new(config.la_cache_capacity),
    };
    let shape = (data.kind() == ModelKind::Weibull).then_some(config.initial_shape);
    let gamma0 = config.initial_model.clone().unwrap_or_else(|| ModelIndicator::empty(p));
    let aux = match config.acceptance {
        AcceptanceEstimator::La => ChainAux::None,
        AcceptanceEstimator::Cpm => {
            let d_max = data.q() + config.cpm.max_model_size.min(p);
            ChainAux::Cpm(CpmAuxiliary::new(config.cpm.n_samples, d_max, config.cpm.rho, rng)?)
        }
        AcceptanceEstimator::Da => ChainAux::Da(DVector::from_fn(data.n(), |_, _| sample_pg1(0.0, rng).value())),
    };
    let marglik = ctx.acceptance_estimate(&gamma0, &prior, shape, &aux)?;
    let mut state = ChainState {
        log_post: marglik.log_value + log_model_prior(&gamma0, &prior),
        gamma: gamma0,
        marglik,
        aux,
        g: prior.g,
        shape,
    };

    let mut tuning = match config.sampler {
        SamplerKind::Parni => {
            let pi_warm = warm_start_pips(data, &state.gamma, &prior, shape)?;
            let eta0 = state.marglik.eta_hat.clone().unwrap_or_else(|| DVector::zeros(data.n()));
            let mut t = TuningState::new(pi_warm, eta0, config.burn_in, config.epsilon_for(p), config.zeta_init)?;
            t.adapt_zeta = config.adapt_zeta;
            Some(t)
        }
        SamplerKind::Ads => None,
    };
    let mut g_rw = AdaptiveRwState::default();
    let mut shape_rw = AdaptiveRwState::default();

    let mut recorder = Recorder {
        records: Vec::new(),
        stride: config.thin,
        keep: config.keep,
    };
    recorder.push(Record {
        iteration: 0,
        gamma: state.gamma.clone(),
        log_post: state.log_post,
        accepted: false,
        elapsed: 0.0,
        g: state.g,
        shape: state.shape,
    });

    let mut inclusion = vec![0usize; p];
    let mut counted = 0usize;
    let mut accepted_total = 0usize;
    let mut failures = 0usize;
    let mut evaluations = 0usize;
    let mut mask_total = 0usize;
    let mut done = 0usize;

    for it in 1..=config.iterations {
        if let Some(budget) = config.budget {
            if start.elapsed() >= budget {
                break;
            }
        }

        // Model move.
        let (proposed, log_q_ratio, log_mask_ratio) = match tuning.as_ref() {
            Some(t) => {
                let mask = sample_mask(&state.gamma, t, rng);
                mask_total += mask.size();
                let omega = match &state.aux {
                    ChainAux::Da(w) => Some(w),
                    _ => None,
                };
                let mut scorer =
                    ProposalScorer::new(data, &prior, state.shape, config.proposal, Some(&t.eta_hat), omega)?;
                if config.proposal == ProposalEstimator::La {
                    scorer = scorer.with_la_cache(&mut ctx.la_cache);
                }
                let prop = pointwise_propose(&state.gamma, &mask, t, &mut scorer, rng);
                evaluations += scorer.evaluations();
                let mask_ratio = log_mask_prob(&mask.k, &prop.gamma, t) - log_mask_prob(&mask.k, &state.gamma, t);
                let q_ratio = prop.log_rev - prop.log_fwd;
                (prop.gamma, q_ratio, mask_ratio)
            }
            None => {
                let prop = ads_propose(&state.gamma, rng);
                (prop.gamma, prop.log_rev - prop.log_fwd, 0.0)
            }
        };

        let deterministic = config.acceptance != AcceptanceEstimator::Cpm;
        let (accept_prob, accepted) = if deterministic && proposed == state.gamma {
            (1.0, true)
        } else {
            let aux_new = match &state.aux {
                ChainAux::Cpm(u) => ChainAux::Cpm(cpm_refresh(u, rng)),
                other => other.clone(),
            };
            match ctx.acceptance_estimate(&proposed, &prior, state.shape, &aux_new) {
                Ok(m) if m.log_value.is_finite() => {
                    let log_post_new = m.log_value + log_model_prior(&proposed, &prior);
                    let log_alpha = log_post_new - state.log_post + log_mask_ratio + log_q_ratio;
                    let alpha = log_alpha.min(0.0).exp();
                    let acc = rng.random::<f64>().ln() < log_alpha;
                    if acc {
                        state.gamma = proposed;
                        state.log_post = log_post_new;
                        state.marglik = m;
                        state.aux = aux_new;
                    }
                    (alpha, acc)
                }
                other => {
                    if let Err(e) = other {
                        log::debug!("acceptance estimator failed at iteration {it}: {e}");
                    }
                    failures += 1;
                    (0.0, false)
                }
            }
        };
        if accepted {
            accepted_total += 1;
        }

        // Slab variance.
        if prior.g_hierarchical {
            let gamma = state.gamma.clone();
            let shape_now = state.shape;
            let aux = state.aux.clone();
            let step = update_g(
                prior.g,
                state.marglik.log_value,
                &mut g_rw,
                |g_new| ctx.acceptance_estimate_uncached(&gamma, &prior.with_g(g_new), shape_now, &aux),
                rng,
            );
            if let Some(m) = step.marglik {
                prior.g = step.value;
                state.g = step.value;
                state.marglik = m;
                state.log_post = state.marglik.log_value + log_model_prior(&state.gamma, &prior);
                ctx.la_cache.clear();
            }
        }

        // Weibull shape.
        if let Some(k) = state.shape {
            let gamma = state.gamma.clone();
            let aux = state.aux.clone();
            let prior_now = prior.clone();
            let step = update_weibull_shape(
                k,
                state.marglik.log_value,
                prior.sigma_k_sq,
                &mut shape_rw,
                |k_new| ctx.acceptance_estimate_uncached(&gamma, &prior_now, Some(k_new), &aux),
                rng,
            );
            if let Some(m) = step.marglik {
                state.shape = Some(step.value);
                state.marglik = m;
                state.log_post = state.marglik.log_value + log_model_prior(&state.gamma, &prior);
                ctx.la_cache.clear();
            }
        }

        // Pólya-gamma latents.
        if let ChainAux::Da(omega) = &state.aux {
            let (_, omega_new) = da_gibbs_sweep(data, &state.gamma, &prior, omega, rng)?;
            let m = da_conditional_logmarglik(data, &state.gamma, &prior, &omega_new)?;
            state.log_post = m.log_value + log_model_prior(&state.gamma, &prior);
            state.marglik = m;
            state.aux = ChainAux::Da(omega_new);
        }

        if let Some(t) = tuning.as_mut() {
            t.update(&state.gamma, accept_prob, state.marglik.eta_hat.as_ref());
        }

        if it > config.burn_in {
            counted += 1;
            for &j in state.gamma.included() {
                inclusion[j] += 1;
            }
        }
        done = it;
        if recorder.wants(it) {
            recorder.push(Record {
                iteration: it,
                gamma: state.gamma.clone(),
                log_post: state.log_post,
                accepted,
                elapsed: start.elapsed().as_secs_f64(),
                g: state.g,
                shape: state.shape,
            });
        }
    }

    let records = recorder.finish();
    let pip = if counted > 0 {
        inclusion.iter().map(|&c| c as f64 / counted as f64).collect()
    } else {
        // No post-burn-in iterations: average whatever was recorded.
        let n = records.len() as f64;
        (0..p)
            .map(|j| records.iter().filter(|r| r.gamma.contains(j)).count() as f64 / n)
            .collect()
    };
    Ok(ChainOutput {
        records,
        pip,
        iterations: done,
        burn_in: config.burn_in,
        accepted: accepted_total,
        estimator_failures: failures,
        proposal_evaluations: evaluations,
        mean_mask_size: if done > 0 { mask_total as f64 / done as f64 } else { 0.0 },
        final_zeta: tuning.as_ref().map(|t| t.zeta),
        elapsed: start.elapsed(),
        target: config.acceptance.target_label(),
        config: config.clone(),
    })
}

impl Context<'_> {
    /// Acceptance estimate at a different `g` or shape; bypasses the Laplace cache.
    fn acceptance_estimate_uncached(
        &self,
        gamma: &ModelIndicator,
        prior: &PriorConfig,
        shape: Option<f64>,
        aux: &ChainAux,
    ) -> Result<MarglikResult> {
        match (self.config.acceptance, aux) {
            (AcceptanceEstimator::La, _) => crate::marglik::log_marglik_la(self.data, gamma, prior, None, shape),
            (AcceptanceEstimator::Cpm, ChainAux::Cpm(u)) => log_marglik_cpm(self.data, gamma, prior, u, shape, None),
            (AcceptanceEstimator::Da, ChainAux::Da(omega)) => da_conditional_logmarglik(self.data, gamma, prior, omega),
            _ => unreachable!("auxiliary state matches the acceptance estimator"),
        }
    }
}
