//! Symmetric positive-definite factorisations and Newton/IRLS mode finding.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::model::{
    eta_derivatives, log_likelihood_eta, Dataset, GlmDerivatives, ModelIndicator, PriorConfig,
};

pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_NEWTON_ITERATIONS: usize = 100;
pub const MAX_STEP_HALVINGS: usize = 30;
/// Newton decrement `g^T H^{-1} g` below which the mode is reached to rounding accuracy,
/// even if the gradient has not met [`GRADIENT_TOLERANCE`].
pub const DECREMENT_TOLERANCE: f64 = 1e-12;

/// Cholesky factor `M = L L^T` of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Option<Cholesky<f64, Dyn>>,
    dim: usize,
    log_det: f64,
}

impl SpdFactor {
    /// Factorises `m`; fails with [`Error::NotPositiveDefinite`] when a pivot is not positive.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let dim = m.nrows();
        if m.ncols() != dim {
            return Err(Error::DimensionMismatch {
                what: "square matrix",
                expected: dim,
                actual: m.ncols(),
            });
        }
        if dim == 0 {
            return Ok(Self {
                chol: None,
                dim,
                log_det: 0.0,
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        let chol = Cholesky::new(m).ok_or(Error::NotPositiveDefinite)?;
        let l = chol.l_dirty();
        let mut log_det = 0.0;
        for i in 0..dim {
            let d = l[(i, i)];
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::NotPositiveDefinite);
            }
            log_det += 2.0 * d.ln();
        }
        Ok(Self {
            chol: Some(chol),
            dim,
            log_det,
        })
    }

    /// Factorises `m`, retrying once with `1e-8 (1 + max diag)` added to the diagonal.
    pub fn with_jitter(m: DMatrix<f64>) -> Result<Self> {
        match Self::new(m.clone()) {
            Ok(f) => Ok(f),
            Err(Error::NotPositiveDefinite) => {
                let max_diag = m.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs()));
                let jitter = 1e-8 * (1.0 + max_diag);
                log::debug!("adding diagonal jitter {jitter:e}");
                let mut m = m;
                for i in 0..m.nrows() {
                    m[(i, i)] += jitter;
                }
                Self::new(m)
            }
            Err(e) => Err(e),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match &self.chol {
            Some(c) => c.solve(b),
            None => DVector::zeros(0),
        }
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        match &self.chol {
            Some(c) => c.inverse(),
            None => DMatrix::zeros(0, 0),
        }
    }

    /// Lower-triangular factor `L`.
    pub fn lower(&self) -> DMatrix<f64> {
        match &self.chol {
            Some(c) => c.l(),
            None => DMatrix::zeros(0, 0),
        }
    }

    /// `L^{-T} u`, which maps standard normals to draws with covariance `M^{-1}`.
    pub fn inverse_sqrt_t(&self, u: &DVector<f64>) -> DVector<f64> {
        match &self.chol {
            Some(c) => c
                .l_dirty()
                .tr_solve_lower_triangular(u)
                .expect("non-singular triangular factor"),
            None => DVector::zeros(0),
        }
    }

    /// `b^T M^{-1} b`
    pub fn inv_quad(&self, b: &DVector<f64>) -> f64 {
        match &self.chol {
            Some(c) => {
                let half = c.l_dirty().solve_lower_triangular(b).expect("non-singular");
                half.norm_squared()
            }
            None => 0.0,
        }
    }
}

/// Spd factorisation entry point.
pub fn spd_factor(m: DMatrix<f64>) -> Result<SpdFactor> {
    SpdFactor::new(m)
}

/// Local second-order description of the negated log-posterior at a point.
#[derive(Debug, Clone)]
pub struct LocalQuadratic {
    pub theta: DVector<f64>,
    pub eta: DVector<f64>,
    /// `-log p(y | theta) - log p(theta | gamma)`
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

/// Negated log-posterior of one model: `f(theta) = -log p(y|theta) - log p(theta|gamma)`.
#[derive(Debug, Clone)]
pub struct Posterior<'a> {
    data: &'a Dataset,
    shape: Option<f64>,
    design: DMatrix<f64>,
    prior_var: DVector<f64>,
}

impl<'a> Posterior<'a> {
    pub fn new(
        data: &'a Dataset,
        gamma: &ModelIndicator,
        prior: &PriorConfig,
        shape: Option<f64>,
    ) -> Result<Self> {
        if gamma.p() != data.p() {
            return Err(Error::DimensionMismatch {
                what: "model indicator length",
                expected: data.p(),
                actual: gamma.p(),
            });
        }
        data.check_shape(shape)?;
        Ok(Self {
            data,
            shape,
            design: data.design(gamma),
            prior_var: prior.variances(data.q(), gamma.size()),
        })
    }

    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn shape(&self) -> Option<f64> {
        self.shape
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn prior_variances(&self) -> &DVector<f64> {
        &self.prior_var
    }

    fn check(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "coefficient vector",
                expected: self.dim(),
                actual: theta.len(),
            });
        }
        Ok(())
    }

    pub fn eta(&self, theta: &DVector<f64>) -> DVector<f64> {
        if self.dim() == 0 {
            DVector::zeros(self.data.n())
        } else {
            &self.design * theta
        }
    }

    pub fn log_prior(&self, theta: &DVector<f64>) -> f64 {
        theta
            .iter()
            .zip(self.prior_var.iter())
            .map(|(&t, &v)| -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + t * t / v))
            .sum()
    }

    pub fn log_likelihood(&self, theta: &DVector<f64>) -> Result<f64> {
        self.check(theta)?;
        log_likelihood_eta(self.data, &self.eta(theta), self.shape)
    }

    /// `f(theta)`; `+inf` where the likelihood overflows.
    pub fn value(&self, theta: &DVector<f64>) -> Result<f64> {
        let v = -self.log_likelihood(theta)? - self.log_prior(theta);
        Ok(if v.is_nan() { f64::INFINITY } else { v })
    }

    /// `J^T W J + V^{-1}`
    pub fn hessian(&self, der: &GlmDerivatives) -> DMatrix<f64> {
        let mut h = der.w.quad_form(&self.design);
        for i in 0..self.dim() {
            h[(i, i)] += 1.0 / self.prior_var[i];
        }
        h
    }

    /// Value, gradient and Hessian of `f` at `theta`.
    pub fn local(&self, theta: &DVector<f64>) -> Result<LocalQuadratic> {
        self.check(theta)?;
        let eta = self.eta(theta);
        let ll = log_likelihood_eta(self.data, &eta, self.shape)?;
        let der = eta_derivatives(self.data, &eta, self.shape)?;
        let mut grad = self.design.tr_mul(&der.y_tilde);
        for i in 0..self.dim() {
            grad[i] += theta[i] / self.prior_var[i];
        }
        let value = -ll - self.log_prior(theta);
        Ok(LocalQuadratic {
            theta: theta.clone(),
            eta,
            value: if value.is_nan() { f64::INFINITY } else { value },
            grad,
            hess: self.hessian(&der),
        })
    }

    /// Direct Newton iterate `theta - H^{-1} g`.
    pub fn newton_direct(&self, theta0: &DVector<f64>) -> Result<DVector<f64>> {
        let local = self.local(theta0)?;
        let factor = SpdFactor::with_jitter(local.hess)?;
        Ok(theta0 - factor.solve(&local.grad))
    }

    /// Working-response form of the same step:
    /// `(J^T W J + V^{-1})^{-1} J^T (W eta - y_tilde)` with `W`, `y_tilde` taken at `eta`.
    ///
    /// `W eta - y_tilde` is used instead of `W (eta - W^{-1} y_tilde)` so that
    /// singular curvatures (the partial likelihood) need no inverse.
    pub fn irls_from_eta(&self, eta: &DVector<f64>, der: &GlmDerivatives) -> Result<(DVector<f64>, SpdFactor)> {
        let factor = SpdFactor::with_jitter(self.hessian(der))?;
        let working = der.w.apply(eta) - &der.y_tilde;
        let rhs = self.design.tr_mul(&working);
        Ok((factor.solve(&rhs), factor))
    }

    pub fn newton_irls(&self, theta0: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(theta0)?;
        let eta = self.eta(theta0);
        let der = eta_derivatives(self.data, &eta, self.shape)?;
        Ok(self.irls_from_eta(&eta, &der)?.0)
    }

    /// Damped Newton iterations to the posterior mode.
    pub fn map_estimate(&self, theta_init: Option<&DVector<f64>>) -> Result<MapEstimate> {
        let mut theta = match theta_init {
            Some(t) => {
                self.check(t)?;
                t.clone()
            }
            None => DVector::zeros(self.dim()),
        };
        let mut local = self.local(&theta)?;
        if !local.value.is_finite() {
            theta = DVector::zeros(self.dim());
            local = self.local(&theta)?;
        }
        let mut iterations = 0;
        loop {
            let grad_norm = local.grad.amax();
            let factor = SpdFactor::with_jitter(local.hess.clone())?;
            let step = factor.solve(&local.grad);
            let decrement = local.grad.dot(&step);
            if grad_norm < GRADIENT_TOLERANCE || decrement < DECREMENT_TOLERANCE {
                return Ok(MapEstimate {
                    theta: local.theta,
                    eta: local.eta,
                    neg_log_post: local.value,
                    factor,
                    iterations,
                    converged: true,
                    grad_norm,
                });
            }
            if iterations >= MAX_NEWTON_ITERATIONS {
                return Ok(MapEstimate {
                    theta: local.theta,
                    eta: local.eta,
                    neg_log_post: local.value,
                    factor,
                    iterations,
                    converged: false,
                    grad_norm,
                });
            }
            iterations += 1;
            let mut scale = 1.0;
            let mut accepted = None;
            for _ in 0..=MAX_STEP_HALVINGS {
                let candidate = &theta - &step * scale;
                let value = self.value(&candidate)?;
                if value <= local.value {
                    accepted = Some(candidate);
                    break;
                }
                scale *= 0.5;
            }
            match accepted {
                Some(next) => {
                    theta = next;
                    local = self.local(&theta)?;
                }
                None => {
                    // No descent along the Newton direction: we are at the mode to
                    // rounding accuracy, or stuck.
                    let converged = grad_norm < GRADIENT_TOLERANCE.sqrt();
                    return Ok(MapEstimate {
                        theta: local.theta,
                        eta: local.eta,
                        neg_log_post: local.value,
                        factor,
                        iterations,
                        converged,
                        grad_norm,
                    });
                }
            }
        }
    }
}

/// Posterior mode of one model with the negated Hessian factor there.
#[derive(Debug, Clone)]
pub struct MapEstimate {
    pub theta: DVector<f64>,
    /// `J_gamma theta_hat`
    pub eta: DVector<f64>,
    pub neg_log_post: f64,
    pub factor: SpdFactor,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

impl MapEstimate {
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NoConvergence {
                iterations: self.iterations,
                grad_norm: self.grad_norm,
            })
        }
    }
}

/// One Newton step on the negated log-posterior from `theta0`.
pub fn newton_one_step(
    data: &Dataset,
    gamma: &ModelIndicator,
    prior: &PriorConfig,
    theta0: &DVector<f64>,
    shape: Option<f64>,
) -> Result<DVector<f64>> {
    Posterior::new(data, gamma, prior, shape)?.newton_direct(theta0)
}

/// The same step computed through the working-response (IRLS) form.
pub fn newton_one_step_irls(
    data: &Dataset,
    gamma: &ModelIndicator,
    prior: &PriorConfig,
    theta0: &DVector<f64>,
    shape: Option<f64>,
) -> Result<DVector<f64>> {
    Posterior::new(data, gamma, prior, shape)?.newton_irls(theta0)
}

/// Posterior mode by damped Newton; see [`Posterior::map_estimate`].
pub fn map_estimate(
    data: &Dataset,
    gamma: &ModelIndicator,
    prior: &PriorConfig,
    theta_init: Option<&DVector<f64>>,
    shape: Option<f64>,
) -> Result<MapEstimate> {
    Posterior::new(data, gamma, prior, shape)?.map_estimate(theta_init)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain Gaussian elimination with partial pivoting.
    fn eliminate(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
        let n = a.nrows();
        let mut m = a.clone().insert_column(n, 0.0);
        m.set_column(n, b);
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
                .unwrap();
            m.swap_rows(col, piv);
            for r in col + 1..n {
                let f = m[(r, col)] / m[(col, col)];
                for c in col..=n {
                    m[(r, c)] -= f * m[(col, c)];
                }
            }
        }
        let mut x = DVector::zeros(n);
        for r in (0..n).rev() {
            let mut s = m[(r, n)];
            for c in r + 1..n {
                s -= m[(r, c)] * x[c];
            }
            x[r] = s / m[(r, r)];
        }
        x
    }

    #[test]
    fn identity_and_diagonal_log_dets() {
        assert_eq!(spd_factor(DMatrix::identity(3, 3)).unwrap().log_det(), 0.0);
        let f = spd_factor(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 8.0]))).unwrap();
        assert!((f.log_det() - 16f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn solve_matches_elimination() {
        let b = DMatrix::from_fn(5, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.7 + 0.1 * (i as f64));
        let a = b.transpose() * &b + DMatrix::identity(5, 5);
        let rhs = DVector::from_fn(5, |i, _| i as f64 - 2.0);
        let f = spd_factor(a.clone()).unwrap();
        let x = f.solve(&rhs);
        let oracle = eliminate(&a, &rhs);
        assert!((x - oracle).amax() < 1e-10);
        let l = f.lower();
        assert!((&l * l.transpose() - &a).amax() < 1e-10 * a.amax());
        let ld: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        assert!((ld - f.log_det()).abs() < 1e-12);
    }

    #[test]
    fn indefinite_is_rejected_and_jitter_only_helps_semidefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(spd_factor(m.clone()).unwrap_err(), Error::NotPositiveDefinite);
        assert!(SpdFactor::with_jitter(m).is_err());
        let semi = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(SpdFactor::with_jitter(semi).is_ok());
    }

    #[test]
    fn inverse_sqrt_has_inverse_covariance() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let f = spd_factor(m.clone()).unwrap();
        let e0 = f.inverse_sqrt_t(&DVector::from_vec(vec![1.0, 0.0]));
        let e1 = f.inverse_sqrt_t(&DVector::from_vec(vec![0.0, 1.0]));
        let cov = &e0 * e0.transpose() + &e1 * e1.transpose();
        assert!((cov - m.try_inverse().unwrap()).amax() < 1e-14);
        let b = DVector::from_vec(vec![0.3, -1.2]);
        assert!((f.inv_quad(&b) - b.dot(&f.solve(&b))).abs() < 1e-14);
    }

    #[test]
    fn empty_factor() {
        let f = spd_factor(DMatrix::zeros(0, 0)).unwrap();
        assert_eq!(f.log_det(), 0.0);
        assert_eq!(f.solve(&DVector::zeros(0)).len(), 0);
    }
}
