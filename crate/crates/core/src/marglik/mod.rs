//! Estimators of the marginal likelihood `p(y | gamma)`.
//!
//! Every estimator returns a [`MarglikResult`] on the natural-log scale. The
//! Laplace-type estimators (LA, ALA, adaptive ALA) and the correlated
//! pseudo-marginal importance sampler keep every normalising constant. The
//! Pólya-gamma conditional keeps `2^{-n}` but drops `prod_i p_PG(omega_i)`,
//! which does not depend on `gamma`.

mod cpm;
mod da;
mod laplace;
mod warm_start;

use nalgebra::DVector;

pub use cpm::{cpm_refresh, log_marglik_cpm, log_marglik_cpm_from_map, CpmAuxiliary};
pub use da::{da_conditional_logmarglik, da_gibbs_sweep};
pub use laplace::{
    log_marglik_adaptive_ala, log_marglik_adaptive_ala_with, log_marglik_ala, log_marglik_la,
    EtaGuess,
};
pub use warm_start::{warm_start_log_bayes_factors, warm_start_pips};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    DaConditional,
    La,
    Cpm,
    Ala,
    AdaptiveAla,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::DaConditional => "DA",
            Method::La => "LA",
            Method::Cpm => "CPM",
            Method::Ala => "ALA",
            Method::AdaptiveAla => "adaptive-ALA",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MarglikResult {
    pub log_value: f64,
    pub method: Method,
    /// Posterior mode (or conditional posterior mean for DA) when one was computed.
    pub theta_hat: Option<DVector<f64>>,
    /// `J_gamma theta_hat`
    pub eta_hat: Option<DVector<f64>>,
    /// Log-determinant of the Hessian (or precision) used by the estimator.
    pub log_det: Option<f64>,
}
