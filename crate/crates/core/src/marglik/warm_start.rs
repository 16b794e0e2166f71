//! Rao-Blackwellised inclusion probabilities at a single model, from ALA-at-origin
//! Bayes factors for every one-covariate neighbour.
//!
//! With `H = J^T W J + V^{-1}` and `g = J^T y_tilde` taken at `eta = 0`:
//!
//! * adding `j`: `d_up = x_j^T W x_j + 1/g - b_j^T H^{-1} b_j` with `b_j = J^T W x_j`,
//!   and `log BF = -1/2 log g - 1/2 log d_up + r_j^2 / (2 d_up)`,
//!   `r_j = x_j^T y_tilde - b_j^T H^{-1} g`;
//! * removing `j`: `s = 1 / (H^{-1})_{jj}`, `c = (H^{-1} g)_j`,
//!   and `log BF = -1/2 log g - 1/2 log s + s c^2 / 2`.
//!
//! Only one factorisation of `H` is needed for all `p` covariates.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::model::{eta_derivatives, log_prior_inclusion_odds, Dataset, ModelIndicator, PriorConfig};
use crate::numerics::SpdFactor;

const PIP_FLOOR: f64 = 1e-12;

/// `log p(y | gamma with j) - log p(y | gamma without j)` under ALA at the origin, for all `j`.
pub fn warm_start_log_bayes_factors(
    data: &Dataset,
    gamma0: &ModelIndicator,
    prior: &PriorConfig,
    shape: Option<f64>,
) -> Result<Vec<f64>> {
    let n = data.n();
    let p = data.p();
    let q = data.q();
    let der = eta_derivatives(data, &DVector::zeros(n), shape)?;
    let design = data.design(gamma0);
    let d = design.ncols();
    let mut h = der.w.quad_form(&design);
    let prior_var = prior.variances(q, gamma0.size());
    for i in 0..d {
        h[(i, i)] += 1.0 / prior_var[i];
    }
    let factor = SpdFactor::with_jitter(h)?;
    let grad = design.tr_mul(&der.y_tilde);
    let h_inv_g = factor.solve(&grad);
    let x = data.x();

    // W X, column by column.
    let mut wx = DMatrix::zeros(n, p);
    for j in 0..p {
        let col = der.w.apply(&x.column(j).into_owned());
        wx.set_column(j, &col);
    }
    let b = design.tr_mul(&wx);
    let xty = x.tr_mul(&der.y_tilde);
    let lower = factor.lower();
    let h_inv = if gamma0.size() > 0 { Some(factor.inverse()) } else { None };
    let log_g = prior.g.ln();

    let mut out = Vec::with_capacity(p);
    for j in 0..p {
        let lbf = match gamma0.position(j) {
            None => {
                let bj = b.column(j).into_owned();
                let xwx = x.column(j).dot(&wx.column(j));
                let (quad, cross) = if d > 0 {
                    let half = lower.solve_lower_triangular(&bj).expect("non-singular factor");
                    (half.norm_squared(), bj.dot(&h_inv_g))
                } else {
                    (0.0, 0.0)
                };
                let d_up = xwx + 1.0 / prior.g - quad;
                let r = xty[j] - cross;
                -0.5 * log_g - 0.5 * d_up.ln() + r * r / (2.0 * d_up)
            }
            Some(pos) => {
                let idx = q + pos;
                let h_inv = h_inv.as_ref().expect("non-empty model");
                let s = 1.0 / h_inv[(idx, idx)];
                let c = h_inv_g[idx];
                -0.5 * log_g - 0.5 * s.ln() + 0.5 * s * c * c
            }
        };
        out.push(lbf);
    }
    Ok(out)
}

/// Warm-start inclusion probabilities `P(gamma_j = 1 | gamma_{-j} = gamma0_{-j}, y)`,
/// kept strictly inside `(0, 1)`.
pub fn warm_start_pips(
    data: &Dataset,
    gamma0: &ModelIndicator,
    prior: &PriorConfig,
    shape: Option<f64>,
) -> Result<Vec<f64>> {
    let lbf = warm_start_log_bayes_factors(data, gamma0, prior, shape)?;
    Ok(lbf
        .iter()
        .enumerate()
        .map(|(j, &l)| {
            let logit = l + log_prior_inclusion_odds(gamma0, j, prior);
            let pip = 1.0 / (1.0 + (-logit).exp());
            pip.clamp(PIP_FLOOR, 1.0 - PIP_FLOOR)
        })
        .collect())
}
