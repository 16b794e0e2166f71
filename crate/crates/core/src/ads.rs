//! Add-delete-swap Metropolis–Hastings proposal.
//!
//! Each move class gets probability 1/3. At the empty model the only move is an
//! addition and at the full model the only move is a deletion.

use rand::Rng;

use crate::model::ModelIndicator;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdsMove {
    Add(usize),
    Delete(usize),
    Swap { out: usize, into: usize },
}

#[derive(Debug, Clone)]
pub struct AdsProposal {
    pub gamma: ModelIndicator,
    pub mv: AdsMove,
    pub log_fwd: f64,
    pub log_rev: f64,
}

/// Probabilities of (add, delete, swap) at a model of size `k` out of `p`.
fn class_probs(k: usize, p: usize) -> (f64, f64, f64) {
    if k == 0 {
        (1.0, 0.0, 0.0)
    } else if k == p {
        (0.0, 1.0, 0.0)
    } else {
        (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
    }
}

/// Exact probability of proposing `to` from `from`.
pub fn ads_log_prob(from: &ModelIndicator, to: &ModelIndicator) -> f64 {
    let p = from.p();
    let k = from.size();
    let (pa, pd, ps) = class_probs(k, p);
    let added = to.size() as isize - k as isize;
    let dist = from.hamming(to);
    let prob = match (added, dist) {
        (1, 1) => pa / (p - k) as f64,
        (-1, 1) => pd / k as f64,
        (0, 2) => ps / (k * (p - k)) as f64,
        _ => 0.0,
    };
    prob.ln()
}

fn pick<R: Rng + ?Sized>(items: &[usize], rng: &mut R) -> usize {
    items[rng.random_range(0..items.len())]
}

/// Draws an add, delete or swap move.
///
/// # Panics
/// If `p < 1`.
pub fn ads_propose<R: Rng + ?Sized>(gamma: &ModelIndicator, rng: &mut R) -> AdsProposal {
    let p = gamma.p();
    assert!(p >= 1, "ADS needs at least one covariate");
    let k = gamma.size();
    let (pa, pd, _) = class_probs(k, p);
    let u: f64 = rng.random();
    let excluded: Vec<usize> = gamma.excluded().collect();
    let mv = if u < pa {
        AdsMove::Add(pick(&excluded, rng))
    } else if u < pa + pd {
        AdsMove::Delete(pick(gamma.included(), rng))
    } else {
        let out = pick(gamma.included(), rng);
        let into = pick(&excluded, rng);
        AdsMove::Swap { out, into }
    };
    let proposed = match mv {
        AdsMove::Add(j) => gamma.with(j, true),
        AdsMove::Delete(j) => gamma.with(j, false),
        AdsMove::Swap { out, into } => gamma.with(out, false).with(into, true),
    };
    let log_fwd = ads_log_prob(gamma, &proposed);
    let log_rev = ads_log_prob(&proposed, gamma);
    AdsProposal {
        gamma: proposed,
        mv,
        log_fwd,
        log_rev,
    }
}
