//! Pointwise adaptive random-neighbourhood informed proposal.
//!
//! An iteration draws a mask `k` (which coordinates may change), walks the
//! masked coordinates in random order making a two-model informed choice at
//! each, and corrects with a Metropolis–Hastings step. Tuning parameters
//! `A`, `D` come from a composite of warm-start and ergodic inclusion
//! probabilities; `zeta` is adapted towards a target acceptance rate.

use std::collections::HashMap;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::marglik::{
    da_conditional_logmarglik, log_marglik_adaptive_ala_with, log_marglik_ala, log_marglik_la, EtaGuess,
    MarglikResult,
};
use crate::model::{log_model_prior, Dataset, ModelIndicator, PriorConfig};
use crate::numerics::Posterior;

/// Acceptance rate targeted by the `zeta` adaptation.
pub const TARGET_ACCEPTANCE: f64 = 0.234;

/// Hastings balancing function `g_H(x) = min(1, x)`, on the log scale.
pub fn log_balancing(log_x: f64) -> f64 {
    log_x.min(0.0)
}

/// Mask `k` with its masked coordinates in visiting order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighbourhoodMask {
    pub k: Vec<bool>,
    pub active: Vec<usize>,
}

impl NeighbourhoodMask {
    pub fn size(&self) -> usize {
        self.active.len()
    }
}

/// Adaptive tuning parameters of the proposal.
#[derive(Debug, Clone)]
pub struct TuningState {
    pub a: Vec<f64>,
    pub d: Vec<f64>,
    pub zeta: f64,
    pub pi_warm: Vec<f64>,
    pub pi_ergodic: Vec<f64>,
    pub pi_hat: Vec<f64>,
    /// Running mean of fitted linear predictors.
    pub eta_hat: DVector<f64>,
    /// Number of adaptation steps taken (`L`).
    pub iter: usize,
    pub burn_in: usize,
    pub epsilon: f64,
    pub adapt_zeta: bool,
    inclusion_counts: Vec<f64>,
    eta_sum: DVector<f64>,
    eta_count: usize,
}

/// Warm-start/ergodic mixing weight `phi_l`.
pub fn phi(l: usize, burn_in: usize) -> f64 {
    if l <= burn_in {
        1.0 - 0.5 * ((burn_in - l + 1) as f64).powf(-0.5)
    } else {
        0.5 * ((l - burn_in) as f64).powf(-0.5)
    }
}

fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl TuningState {
    pub fn new(pi_warm: Vec<f64>, eta0: DVector<f64>, burn_in: usize, epsilon: f64, zeta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::InvalidConfig(format!("clamp epsilon must lie in (0, 1/2), got {epsilon}")));
        }
        let p = pi_warm.len();
        let mut state = Self {
            a: vec![0.0; p],
            d: vec![0.0; p],
            zeta: zeta.clamp(epsilon, 1.0 - epsilon),
            pi_ergodic: vec![0.0; p],
            pi_hat: pi_warm.clone(),
            pi_warm,
            eta_hat: eta0.clone(),
            iter: 0,
            burn_in,
            epsilon,
            adapt_zeta: true,
            inclusion_counts: vec![0.0; p],
            eta_sum: DVector::zeros(eta0.len()),
            eta_count: 0,
        };
        state.refresh_a_d();
        Ok(state)
    }

    fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.epsilon, 1.0 - self.epsilon)
    }

    fn refresh_a_d(&mut self) {
        for j in 0..self.pi_hat.len() {
            let pi = self.clamp(self.pi_hat[j]);
            self.pi_hat[j] = pi;
            let odds = pi / (1.0 - pi);
            self.a[j] = self.clamp(odds.min(1.0));
            self.d[j] = self.clamp((1.0 / odds).min(1.0));
        }
    }

    /// `P(k_j = 1 | gamma_j)`
    pub fn mask_prob(&self, j: usize, included: bool) -> f64 {
        if included {
            self.d[j]
        } else {
            self.a[j]
        }
    }

    /// One adaptation step after the chain has moved to `gamma`.
    pub fn update(&mut self, gamma: &ModelIndicator, accept_prob: f64, eta_opt: Option<&DVector<f64>>) {
        self.iter += 1;
        let l = self.iter as f64;
        for &j in gamma.included() {
            self.inclusion_counts[j] += 1.0;
        }
        let w = phi(self.iter, self.burn_in);
        for j in 0..self.pi_hat.len() {
            self.pi_ergodic[j] = self.inclusion_counts[j] / l;
            self.pi_hat[j] = w * self.pi_warm[j] + (1.0 - w) * self.pi_ergodic[j];
        }
        self.refresh_a_d();
        if let Some(eta) = eta_opt {
            self.eta_sum += eta;
            self.eta_count += 1;
            self.eta_hat = &self.eta_sum / self.eta_count as f64;
        }
        if self.adapt_zeta && accept_prob.is_finite() {
            let step = l.powf(-0.7) * (accept_prob - TARGET_ACCEPTANCE);
            self.zeta = self.clamp(expit(logit(self.zeta) + step));
        }
    }
}

/// Draws `k_j ~ Bernoulli(A_j)` for excluded and `Bernoulli(D_j)` for included
/// coordinates, then shuffles the masked positions.
pub fn sample_mask<R: Rng + ?Sized>(gamma: &ModelIndicator, tuning: &TuningState, rng: &mut R) -> NeighbourhoodMask {
    let k: Vec<bool> = gamma
        .bits()
        .iter()
        .enumerate()
        .map(|(j, &b)| rng.random::<f64>() < tuning.mask_prob(j, b))
        .collect();
    let mut active: Vec<usize> = k.iter().enumerate().filter_map(|(j, &b)| b.then_some(j)).collect();
    active.shuffle(rng);
    NeighbourhoodMask { k, active }
}

/// `log p(k | gamma)` under the product-Bernoulli mask distribution.
pub fn log_mask_prob(k: &[bool], gamma: &ModelIndicator, tuning: &TuningState) -> f64 {
    k.iter()
        .zip(gamma.bits())
        .enumerate()
        .map(|(j, (&kj, &gj))| {
            let prob = tuning.mask_prob(j, gj);
            if kj {
                prob.ln()
            } else {
                (-prob).ln_1p()
            }
        })
        .sum()
}

/// Estimator used to score models inside the informed proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProposalEstimator {
    AdaptiveAla,
    /// ALA expanded at the origin.
    Ala,
    La,
    /// Pólya-gamma conditional at the chain's current latent variables.
    Da,
}

impl ProposalEstimator {
    pub fn name(self) -> &'static str {
        match self {
            ProposalEstimator::AdaptiveAla => "adaptive-ALA",
            ProposalEstimator::Ala => "ALA",
            ProposalEstimator::La => "LA",
            ProposalEstimator::Da => "DA",
        }
    }
}

/// Laplace estimates kept across iterations. Only valid while `g` and the
/// Weibull shape stay fixed; the chain clears it when either moves.
#[derive(Debug, Clone)]
pub struct LaCache {
    map: HashMap<ModelIndicator, Option<MarglikResult>>,
    capacity: usize,
}

impl LaCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            map: HashMap::new(),
            capacity,
        }
    }

    pub fn clear(&mut self) {
        self.map.clear();
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// LA at `gamma`, computed on a miss. Failed fits are remembered as failures.
    pub fn get_or_compute(
        &mut self,
        data: &Dataset,
        gamma: &ModelIndicator,
        prior: &PriorConfig,
        shape: Option<f64>,
    ) -> Result<MarglikResult> {
        if let Some(hit) = self.map.get(gamma) {
            return hit.clone().ok_or(Error::NoConvergence {
                iterations: 0,
                grad_norm: f64::NAN,
            });
        }
        let r = log_marglik_la(data, gamma, prior, None, shape);
        if self.capacity > 0 {
            if self.map.len() >= self.capacity {
                self.map.clear();
            }
            self.map.insert(gamma.clone(), r.as_ref().ok().cloned());
        }
        r
    }
}

/// Posterior scores `log p_hat(y | gamma) + log p(gamma)` for the proposal, cached per iteration.
pub struct ProposalScorer<'a> {
    data: &'a Dataset,
    prior: &'a PriorConfig,
    shape: Option<f64>,
    estimator: ProposalEstimator,
    guess: Option<EtaGuess>,
    omega: Option<&'a DVector<f64>>,
    cache: HashMap<ModelIndicator, f64>,
    la_cache: Option<&'a mut LaCache>,
    evaluations: usize,
}

impl<'a> ProposalScorer<'a> {
    pub fn new(
        data: &'a Dataset,
        prior: &'a PriorConfig,
        shape: Option<f64>,
        estimator: ProposalEstimator,
        eta_guess: Option<&DVector<f64>>,
        omega: Option<&'a DVector<f64>>,
    ) -> Result<Self> {
        let guess = match estimator {
            ProposalEstimator::AdaptiveAla => {
                let eta = eta_guess.cloned().unwrap_or_else(|| DVector::zeros(data.n()));
                Some(EtaGuess::new(data, eta, shape)?)
            }
            _ => None,
        };
        if estimator == ProposalEstimator::Da && omega.is_none() {
            return Err(Error::InvalidConfig(
                "the DA proposal needs Polya-gamma latent variables in the chain state".into(),
            ));
        }
        Ok(Self {
            data,
            prior,
            shape,
            estimator,
            guess,
            omega,
            cache: HashMap::new(),
            la_cache: None,
            evaluations: 0,
        })
    }

    /// Shares a cross-iteration Laplace cache with the scorer (LA proposals only).
    pub fn with_la_cache(mut self, cache: &'a mut LaCache) -> Self {
        self.la_cache = Some(cache);
        self
    }

    fn estimate(&mut self, gamma: &ModelIndicator) -> Result<f64> {
        let r = match self.estimator {
            ProposalEstimator::AdaptiveAla => {
                let post = Posterior::new(self.data, gamma, self.prior, self.shape)?;
                log_marglik_adaptive_ala_with(&post, self.guess.as_ref().expect("guess"))?
            }
            ProposalEstimator::Ala => log_marglik_ala(
                self.data,
                gamma,
                self.prior,
                &DVector::zeros(self.data.dim(gamma)),
                self.shape,
            )?,
            ProposalEstimator::La => match self.la_cache.as_deref_mut() {
                Some(cache) => cache.get_or_compute(self.data, gamma, self.prior, self.shape)?,
                None => log_marglik_la(self.data, gamma, self.prior, None, self.shape)?,
            },
            ProposalEstimator::Da => {
                da_conditional_logmarglik(self.data, gamma, self.prior, self.omega.expect("omega"))?
            }
        };
        Ok(r.log_value)
    }

    /// Score of `gamma`; models whose estimate fails score `-inf`.
    pub fn score(&mut self, gamma: &ModelIndicator) -> f64 {
        if let Some(&s) = self.cache.get(gamma) {
            return s;
        }
        self.evaluations += 1;
        let s = match self.estimate(gamma) {
            Ok(v) if v.is_finite() => v + log_model_prior(gamma, self.prior),
            Ok(_) => f64::NEG_INFINITY,
            Err(e) => {
                log::debug!("proposal estimator failed on {gamma:?}: {e}");
                f64::NEG_INFINITY
            }
        };
        self.cache.insert(gamma.clone(), s);
        s
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }
}

/// Result of the pointwise walk.
#[derive(Debug, Clone)]
pub struct PointwiseProposal {
    pub gamma: ModelIndicator,
    pub log_fwd: f64,
    pub log_rev: f64,
}

/// `log(w / (1 + w))` and `log(1 / (1 + w))` for `w = exp(log_w)`.
fn two_point_log_probs(log_w: f64) -> (f64, f64) {
    if log_w == f64::NEG_INFINITY {
        return (f64::NEG_INFINITY, 0.0);
    }
    let log_norm = if log_w > 0.0 {
        log_w + (-log_w).exp().ln_1p()
    } else {
        log_w.exp().ln_1p()
    };
    (log_w - log_norm, -log_norm)
}

/// Log informed weight of moving from `from` to its neighbour at coordinate `j`,
/// relative to staying (`g_H(1) = 1`).
fn log_flip_weight(score_from: f64, score_to: f64, log_mask_ratio: f64, log_zeta_odds: f64) -> f64 {
    if score_to == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let log_ratio = if score_from == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        score_to - score_from + log_mask_ratio
    };
    log_balancing(log_ratio) + log_zeta_odds
}

/// Sequential two-model informed proposal over the masked coordinates.
///
/// The reverse probability walks the same neighbourhoods in reverse order; each
/// reverse factor only involves the two models of the corresponding forward
/// step, so it is accumulated alongside the forward walk.
pub fn pointwise_propose<R: Rng + ?Sized>(
    gamma: &ModelIndicator,
    mask: &NeighbourhoodMask,
    tuning: &TuningState,
    scorer: &mut ProposalScorer<'_>,
    rng: &mut R,
) -> PointwiseProposal {
    let mut current = gamma.clone();
    let mut log_fwd = 0.0;
    let mut log_rev = 0.0;
    if mask.active.is_empty() {
        return PointwiseProposal {
            gamma: current,
            log_fwd,
            log_rev,
        };
    }
    let log_zeta_odds = (tuning.zeta / (1.0 - tuning.zeta)).ln();
    let mut score_current = scorer.score(&current);
    for &j in &mask.active {
        let candidate = current.flipped(j);
        let score_candidate = scorer.score(&candidate);
        let included = current.contains(j);
        // p(k | candidate) / p(k | current) differs only at coordinate j, where k_j = 1.
        let log_mask_ratio = tuning.mask_prob(j, !included).ln() - tuning.mask_prob(j, included).ln();
        let log_w = log_flip_weight(score_current, score_candidate, log_mask_ratio, log_zeta_odds);
        let (log_flip, log_stay) = two_point_log_probs(log_w);
        if rng.random::<f64>().ln() < log_flip {
            log_fwd += log_flip;
            let log_w_back = log_flip_weight(score_candidate, score_current, -log_mask_ratio, log_zeta_odds);
            log_rev += two_point_log_probs(log_w_back).0;
            current = candidate;
            score_current = score_candidate;
        } else {
            log_fwd += log_stay;
            log_rev += log_stay;
        }
    }
    PointwiseProposal {
        gamma: current,
        log_fwd,
        log_rev,
    }
}

/// Exact log probability that the pointwise walk from `from` along `mask` ends at `to`,
/// following the unique path that visits coordinates in mask order.
pub fn pointwise_log_prob(
    from: &ModelIndicator,
    to: &ModelIndicator,
    mask: &NeighbourhoodMask,
    tuning: &TuningState,
    scorer: &mut ProposalScorer<'_>,
) -> f64 {
    let log_zeta_odds = (tuning.zeta / (1.0 - tuning.zeta)).ln();
    let mut current = from.clone();
    let mut total = 0.0;
    for &j in &mask.active {
        let candidate = current.flipped(j);
        let included = current.contains(j);
        let log_mask_ratio = tuning.mask_prob(j, !included).ln() - tuning.mask_prob(j, included).ln();
        let log_w = log_flip_weight(scorer.score(&current), scorer.score(&candidate), log_mask_ratio, log_zeta_odds);
        let (log_flip, log_stay) = two_point_log_probs(log_w);
        if to.contains(j) != current.contains(j) {
            total += log_flip;
            current = candidate;
        } else {
            total += log_stay;
        }
    }
    if &current == to {
        total
    } else {
        f64::NEG_INFINITY
    }
}

/// Log Metropolis–Hastings ratio of a PARNI move given acceptance-side scores.
pub fn log_acceptance_ratio(
    score_current: f64,
    score_proposed: f64,
    log_mask_current: f64,
    log_mask_proposed: f64,
    proposal: &PointwiseProposal,
) -> f64 {
    score_proposed - score_current + log_mask_proposed - log_mask_current + proposal.log_rev - proposal.log_fwd
}
