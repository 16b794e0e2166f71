//! Bayesian variable selection for logistic, Cox partial-likelihood and Weibull
//! regression with adaptive random-neighbourhood informed proposals.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: model indicators, data sets, priors and likelihood derivatives.
//! * [`numerics`]: Cholesky factors and Newton/IRLS mode finding.
//! * [`polya_gamma`]: exact `PG(1, z)` sampling.
//! * [`marglik`]: marginal-likelihood estimators (LA, ALA, adaptive ALA, CPM, DA).
//! * [`parni`], [`ads`], [`hyper`]: the samplers and hyper-parameter updates.
//! * [`chain`]: the chain driver shared by both samplers.
//! * [`sim`], [`enumerate`]: simulated benchmarks and the exact-enumeration oracle.

pub mod ads;
pub mod chain;
pub mod enumerate;
pub mod error;
pub mod hyper;
pub mod marglik;
pub mod model;
pub mod numerics;
pub mod parni;
pub mod polya_gamma;
pub mod sim;

pub use chain::{
    chain_rng, run_chain, AcceptanceEstimator, ChainConfig, ChainOutput, CpmSettings, ProposalEstimator, Record,
    SamplerKind,
};
pub use enumerate::{enumerate_exact, Enumeration};
pub use error::{Error, Result};
pub use marglik::{MarglikResult, Method};
pub use model::{Dataset, ModelIndicator, ModelKind, ModelPrior, PriorConfig, Response};
pub use sim::{Censoring, SimConfig};
