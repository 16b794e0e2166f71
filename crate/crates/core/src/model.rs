//! Models, priors and likelihood derivatives shared by every estimator and sampler.
//!
//! All likelihood code works on the linear predictor `eta = Z alpha + X_gamma beta_gamma`.
//! Derivatives are taken with respect to `eta` so that the coefficient-space
//! gradient and Hessian follow from a single pass over the design matrix.

use std::f64::consts::PI;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};

/// Binary inclusion vector over the free covariates.
#[derive(Clone, Eq)]
pub struct ModelIndicator {
    bits: Vec<bool>,
    included: Vec<usize>,
}

impl ModelIndicator {
    /// The empty model over `p` covariates.
    pub fn empty(p: usize) -> Self {
        Self {
            bits: vec![false; p],
            included: Vec::new(),
        }
    }

    pub fn full(p: usize) -> Self {
        Self {
            bits: vec![true; p],
            included: (0..p).collect(),
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        let included = bits
            .iter()
            .enumerate()
            .filter_map(|(j, &b)| b.then_some(j))
            .collect();
        Self { bits, included }
    }

    pub fn from_included(p: usize, included: &[usize]) -> Result<Self> {
        let mut bits = vec![false; p];
        for &j in included {
            if j >= p {
                return Err(Error::DimensionMismatch {
                    what: "covariate index",
                    expected: p,
                    actual: j,
                });
            }
            bits[j] = true;
        }
        Ok(Self::from_bits(bits))
    }

    /// Model number `code` in binary enumeration order (bit `j` of `code` is `gamma_j`).
    pub fn from_code(p: usize, code: u64) -> Self {
        Self::from_bits((0..p).map(|j| (code >> j) & 1 == 1).collect())
    }

    pub fn p(&self) -> usize {
        self.bits.len()
    }

    pub fn size(&self) -> usize {
        self.included.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn included(&self) -> &[usize] {
        &self.included
    }

    pub fn contains(&self, j: usize) -> bool {
        self.bits[j]
    }

    /// Excluded positions in increasing order.
    pub fn excluded(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(j, &b)| (!b).then_some(j))
    }

    /// Position of covariate `j` within the included list.
    pub fn position(&self, j: usize) -> Option<usize> {
        self.included.binary_search(&j).ok()
    }

    pub fn flip(&mut self, j: usize) {
        if self.bits[j] {
            let pos = self.included.binary_search(&j).expect("bit set");
            self.included.remove(pos);
        } else {
            let pos = self.included.binary_search(&j).unwrap_err();
            self.included.insert(pos, j);
        }
        self.bits[j] = !self.bits[j];
    }

    pub fn flipped(&self, j: usize) -> Self {
        let mut out = self.clone();
        out.flip(j);
        out
    }

    pub fn with(&self, j: usize, value: bool) -> Self {
        if self.bits[j] == value {
            self.clone()
        } else {
            self.flipped(j)
        }
    }

    pub fn hamming(&self, other: &Self) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count()
    }
}

impl PartialEq for ModelIndicator {
    fn eq(&self, other: &Self) -> bool {
        self.bits == other.bits
    }
}

impl Hash for ModelIndicator {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.bits.len().hash(state);
        self.included.hash(state);
    }
}

impl fmt::Debug for ModelIndicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ModelIndicator(p={}, {:?})", self.p(), self.included)
    }
}

impl fmt::Display for ModelIndicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Logistic,
    CoxPartial,
    Weibull,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::CoxPartial => "cox-partial",
            ModelKind::Weibull => "weibull",
        }
    }

    pub fn is_survival(self) -> bool {
        !matches!(self, ModelKind::Logistic)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logistic" | "logit" => Ok(ModelKind::Logistic),
            "cox" | "cox-partial" | "coxph" => Ok(ModelKind::CoxPartial),
            "weibull" => Ok(ModelKind::Weibull),
            other => Err(Error::InvalidConfig(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Binary(Vec<f64>),
    Survival { time: Vec<f64>, event: Vec<f64> },
}

impl Response {
    pub fn len(&self) -> usize {
        match self {
            Response::Binary(y) => y.len(),
            Response::Survival { time, .. } => time.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Column centring and scaling applied to `X` at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

/// Tied-time groups of a survival response, ordered by decreasing time.
#[derive(Debug, Clone)]
pub(crate) struct RiskSets {
    /// Subject indices sorted by decreasing time.
    order: Vec<usize>,
    /// `(start, end, events)` ranges into `order`, one per distinct time.
    groups: Vec<(usize, usize, usize)>,
}

impl RiskSets {
    fn new(time: &[f64], event: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..time.len()).collect();
        order.sort_by(|&a, &b| time[b].total_cmp(&time[a]).then(a.cmp(&b)));
        let mut groups = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let t = time[order[start]];
            let mut end = start;
            let mut events = 0;
            while end < order.len() && time[order[end]] == t {
                if event[order[end]] > 0.5 {
                    events += 1;
                }
                end += 1;
            }
            groups.push((start, end, events));
            start = end;
        }
        Self { order, groups }
    }
}

/// Immutable data set: response, free covariates `X` and always-included covariates `Z`.
#[derive(Debug, Clone)]
pub struct Dataset {
    kind: ModelKind,
    x: DMatrix<f64>,
    z: DMatrix<f64>,
    response: Response,
    log_time: Vec<f64>,
    risk_sets: Option<Arc<RiskSets>>,
    standardization: Option<Standardization>,
    column_names: Vec<String>,
}

impl Dataset {
    pub fn new(kind: ModelKind, x: DMatrix<f64>, z: DMatrix<f64>, response: Response) -> Result<Self> {
        let n = response.len();
        if n == 0 {
            return Err(Error::InvalidData("no observations".into()));
        }
        if x.nrows() != n {
            return Err(Error::DimensionMismatch {
                what: "rows of X",
                expected: n,
                actual: x.nrows(),
            });
        }
        if z.nrows() != n {
            return Err(Error::DimensionMismatch {
                what: "rows of Z",
                expected: n,
                actual: z.nrows(),
            });
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidData("X must have at least one column".into()));
        }
        if x.iter().chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite covariate value".into()));
        }
        let mut log_time = Vec::new();
        let mut risk_sets = None;
        match (&response, kind) {
            (Response::Binary(y), ModelKind::Logistic) => {
                if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::InvalidData(format!(
                        "row {}: binary response must be 0 or 1, got {}",
                        i + 1,
                        y[i]
                    )));
                }
            }
            (Response::Survival { time, event }, ModelKind::CoxPartial | ModelKind::Weibull) => {
                if event.len() != n {
                    return Err(Error::DimensionMismatch {
                        what: "event flags",
                        expected: n,
                        actual: event.len(),
                    });
                }
                if let Some(i) = time.iter().position(|&t| !(t > 0.0 && t.is_finite())) {
                    return Err(Error::InvalidData(format!(
                        "row {}: survival time must be positive, got {}",
                        i + 1,
                        time[i]
                    )));
                }
                if let Some(i) = event.iter().position(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::InvalidData(format!(
                        "row {}: event flag must be 0 or 1, got {}",
                        i + 1,
                        event[i]
                    )));
                }
                log_time = time.iter().map(|t| t.ln()).collect();
                if kind == ModelKind::CoxPartial {
                    risk_sets = Some(Arc::new(RiskSets::new(time, event)));
                }
            }
            _ => {
                return Err(Error::InvalidData(format!(
                    "response type does not match model kind {}",
                    kind.name()
                )))
            }
        }
        let column_names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Ok(Self {
            kind,
            x,
            z,
            response,
            log_time,
            risk_sets,
            standardization: None,
            column_names,
        })
    }

    pub fn logistic(x: DMatrix<f64>, z: DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        Self::new(ModelKind::Logistic, x, z, Response::Binary(y))
    }

    pub fn survival(
        kind: ModelKind,
        x: DMatrix<f64>,
        z: DMatrix<f64>,
        time: Vec<f64>,
        event: Vec<f64>,
    ) -> Result<Self> {
        Self::new(kind, x, z, Response::Survival { time, event })
    }

    /// Centre every column of `X` and scale it to unit (population) variance.
    pub fn standardized(mut self) -> Result<Self> {
        let n = self.n() as f64;
        let mut means = Vec::with_capacity(self.p());
        let mut scales = Vec::with_capacity(self.p());
        for j in 0..self.p() {
            let mut col = self.x.column_mut(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if !(var > 0.0) || var.sqrt() <= 1e-12 * (1.0 + mean.abs()) {
                return Err(Error::InvalidData(format!(
                    "covariate `{}` is constant",
                    self.column_names[j]
                )));
            }
            let sd = var.sqrt();
            col.iter_mut().for_each(|v| *v = (*v - mean) / sd);
            means.push(mean);
            scales.push(sd);
        }
        self.standardization = Some(Standardization { means, scales });
        Ok(self)
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(Error::DimensionMismatch {
                what: "column names",
                expected: self.p(),
                actual: names.len(),
            });
        }
        self.column_names = names;
        Ok(self)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.z.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn response(&self) -> &Response {
        &self.response
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Coefficient count `q + p_gamma` for a model.
    pub fn dim(&self, gamma: &ModelIndicator) -> usize {
        self.q() + gamma.size()
    }

    /// `J_gamma = (Z, X_gamma)`.
    pub fn design(&self, gamma: &ModelIndicator) -> DMatrix<f64> {
        let n = self.n();
        let q = self.q();
        let mut j = DMatrix::zeros(n, q + gamma.size());
        if q > 0 {
            j.columns_mut(0, q).copy_from(&self.z);
        }
        for (c, &col) in gamma.included().iter().enumerate() {
            j.column_mut(q + c).copy_from(&self.x.column(col));
        }
        j
    }

    /// `J_gamma theta` without materialising `J_gamma`.
    pub fn linear_predictor(&self, gamma: &ModelIndicator, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_theta(self, gamma, theta)?;
        let q = self.q();
        let mut eta = DVector::zeros(self.n());
        for c in 0..q {
            eta.axpy(theta[c], &self.z.column(c), 1.0);
        }
        for (c, &col) in gamma.included().iter().enumerate() {
            eta.axpy(theta[q + c], &self.x.column(col), 1.0);
        }
        Ok(eta)
    }

    pub(crate) fn check_shape(&self, shape: Option<f64>) -> Result<()> {
        match (self.kind, shape) {
            (ModelKind::Weibull, Some(k)) if k > 0.0 && k.is_finite() => Ok(()),
            (ModelKind::Weibull, Some(k)) => Err(Error::InvalidShape(k)),
            (ModelKind::Weibull, None) => Err(Error::InvalidConfig(
                "Weibull likelihood requires a shape parameter".into(),
            )),
            (_, None) => Ok(()),
            (_, Some(_)) => Err(Error::InvalidConfig(format!(
                "{} likelihood takes no shape parameter",
                self.kind.name()
            ))),
        }
    }
}

fn check_theta(data: &Dataset, gamma: &ModelIndicator, theta: &DVector<f64>) -> Result<()> {
    if gamma.p() != data.p() {
        return Err(Error::DimensionMismatch {
            what: "model indicator length",
            expected: data.p(),
            actual: gamma.p(),
        });
    }
    let d = data.dim(gamma);
    if theta.len() != d {
        return Err(Error::DimensionMismatch {
            what: "coefficient vector",
            expected: d,
            actual: theta.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelPrior {
    /// Independent inclusions with probability `h`.
    Fixed { h: f64 },
    /// `h ~ Beta(a, b)` integrated out.
    BetaBinomial { a: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig {
    /// Slab variance. When `g_hierarchical` is set this is the current state of the chain.
    pub g: f64,
    /// Half-Cauchy prior on `sqrt(g)`; `g` is then updated within the chain.
    pub g_hierarchical: bool,
    pub sigma_alpha_sq: f64,
    pub model_prior: ModelPrior,
    /// Prior variance of `log k` for the Weibull shape.
    pub sigma_k_sq: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            g: 1.0,
            g_hierarchical: false,
            sigma_alpha_sq: 100.0,
            model_prior: ModelPrior::Fixed { h: 0.5 },
            sigma_k_sq: 1.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        positive(self.g, "g")?;
        positive(self.sigma_alpha_sq, "sigma_alpha_sq")?;
        positive(self.sigma_k_sq, "sigma_k_sq")?;
        match self.model_prior {
            ModelPrior::Fixed { h } if h > 0.0 && h < 1.0 => Ok(()),
            ModelPrior::Fixed { h } => Err(Error::InvalidConfig(format!(
                "prior inclusion probability must lie in (0, 1), got {h}"
            ))),
            ModelPrior::BetaBinomial { a, b } => {
                positive(a, "beta-binomial a")?;
                positive(b, "beta-binomial b")
            }
        }
    }

    pub fn with_g(&self, g: f64) -> Self {
        Self { g, ..self.clone() }
    }

    /// Prior variances of `theta_gamma`: `sigma_alpha_sq` on the fixed block, `g` on the rest.
    pub fn variances(&self, q: usize, p_gamma: usize) -> DVector<f64> {
        DVector::from_fn(q + p_gamma, |i, _| if i < q { self.sigma_alpha_sq } else { self.g })
    }
}

/// `log p(gamma)`.
pub fn log_model_prior(gamma: &ModelIndicator, prior: &PriorConfig) -> f64 {
    let p = gamma.p() as f64;
    let k = gamma.size() as f64;
    match prior.model_prior {
        ModelPrior::Fixed { h } => k * h.ln() + (p - k) * (-h).ln_1p(),
        ModelPrior::BetaBinomial { a, b } => ln_beta(a + k, b + p - k) - ln_beta(a, b),
    }
}

/// Log prior odds `log p(gamma with j) - log p(gamma without j)`.
pub fn log_prior_inclusion_odds(gamma: &ModelIndicator, j: usize, prior: &PriorConfig) -> f64 {
    let p = gamma.p() as f64;
    let others = (gamma.size() - usize::from(gamma.contains(j))) as f64;
    match prior.model_prior {
        ModelPrior::Fixed { h } => h.ln() - (-h).ln_1p(),
        ModelPrior::BetaBinomial { a, b } => {
            // B(a+k+1, b+p-k-1) / B(a+k, b+p-k) = (a+k) / (b+p-k-1)
            (a + others).ln() - (b + p - others - 1.0).ln()
        }
    }
}

/// Log density of `N(0, sigma_alpha_sq I_q) x N(0, g I_{p_gamma})` at `theta`.
pub fn log_coeff_prior(
    theta: &DVector<f64>,
    q: usize,
    gamma: &ModelIndicator,
    prior: &PriorConfig,
) -> Result<f64> {
    let d = q + gamma.size();
    if theta.len() != d {
        return Err(Error::DimensionMismatch {
            what: "coefficient vector",
            expected: d,
            actual: theta.len(),
        });
    }
    Ok(theta
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let v = if i < q { prior.sigma_alpha_sq } else { prior.g };
            -0.5 * ((2.0 * PI * v).ln() + t * t / v)
        })
        .sum())
}

/// Negated second derivative of the log-likelihood with respect to `eta`.
#[derive(Debug, Clone)]
pub enum Curvature {
    Diagonal(DVector<f64>),
    RiskSet(CoxCurvature),
}

/// Breslow partial-likelihood curvature in factored form:
/// `W = diag(e * c) - (e e^T) .* min(d2_l, d2_m)`.
#[derive(Debug, Clone)]
pub struct CoxCurvature {
    risk: Arc<RiskSets>,
    /// `exp(eta - max eta)`
    e: Vec<f64>,
    /// Per subject `sum_{events i: t_i <= t_l} 1 / S_i`
    c: Vec<f64>,
    /// Per subject `sum_{events i: t_i <= t_l} 1 / S_i^2`
    d2: Vec<f64>,
    /// Per tied group `m_g / S_g^2`
    group_weight: Vec<f64>,
}

impl Curvature {
    pub fn dim(&self) -> usize {
        match self {
            Curvature::Diagonal(w) => w.len(),
            Curvature::RiskSet(c) => c.e.len(),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, Curvature::Diagonal(_))
    }

    /// `W v`
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Curvature::Diagonal(w) => w.component_mul(v),
            Curvature::RiskSet(cox) => {
                let risk = &cox.risk;
                // T_g: risk-set sums of e*v, accumulated from the latest time down.
                let mut totals = Vec::with_capacity(risk.groups.len());
                let mut acc = 0.0;
                for &(s, t, _) in &risk.groups {
                    for &i in &risk.order[s..t] {
                        acc += cox.e[i] * v[i];
                    }
                    totals.push(acc);
                }
                let mut out = DVector::zeros(v.len());
                let mut u = 0.0;
                for (g, &(s, t, _)) in risk.groups.iter().enumerate().rev() {
                    u += cox.group_weight[g] * totals[g];
                    for &i in &risk.order[s..t] {
                        out[i] = cox.e[i] * (cox.c[i] * v[i] - u);
                    }
                }
                out
            }
        }
    }

    /// `J^T W J`
    pub fn quad_form(&self, j: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Curvature::Diagonal(w) => {
                let mut wj = j.clone();
                for (mut row, &wi) in wj.row_iter_mut().zip(w.iter()) {
                    row *= wi;
                }
                j.tr_mul(&wj)
            }
            Curvature::RiskSet(cox) => {
                let risk = &cox.risk;
                let d = j.ncols();
                let mut sj = j.clone();
                for (i, mut row) in sj.row_iter_mut().enumerate() {
                    row *= (cox.e[i] * cox.c[i]).sqrt();
                }
                let mut out = sj.tr_mul(&sj);
                let mut a = DMatrix::zeros(risk.groups.len(), d);
                let mut acc = DVector::<f64>::zeros(d);
                for (g, &(s, t, _)) in risk.groups.iter().enumerate() {
                    for &i in &risk.order[s..t] {
                        for c in 0..d {
                            acc[c] += cox.e[i] * j[(i, c)];
                        }
                    }
                    let scale = cox.group_weight[g].sqrt();
                    for c in 0..d {
                        a[(g, c)] = scale * acc[c];
                    }
                }
                out -= a.tr_mul(&a);
                out
            }
        }
    }

    /// `A^T W B`
    pub fn cross(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut wb = DMatrix::zeros(b.nrows(), b.ncols());
        for c in 0..b.ncols() {
            let col = self.apply(&b.column(c).into_owned());
            wb.set_column(c, &col);
        }
        a.tr_mul(&wb)
    }

    /// `diag(B^T W B)`
    pub fn diag_quad(&self, b: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_fn(b.ncols(), |c, _| {
            let col = b.column(c).into_owned();
            col.dot(&self.apply(&col))
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Curvature::Diagonal(w) => DMatrix::from_diagonal(w),
            Curvature::RiskSet(cox) => {
                let n = cox.e.len();
                DMatrix::from_fn(n, n, |l, m| {
                    let off = cox.e[l] * cox.e[m] * cox.d2[l].min(cox.d2[m]);
                    if l == m {
                        cox.e[l] * cox.c[l] - off
                    } else {
                        -off
                    }
                })
            }
        }
    }
}

/// First and second derivatives of the negated log-likelihood with respect to `eta`.
#[derive(Debug, Clone)]
pub struct GlmDerivatives {
    /// `-d log p(y | eta) / d eta`
    pub y_tilde: DVector<f64>,
    /// `-d^2 log p(y | eta) / d eta d eta^T`
    pub w: Curvature,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_eta(data: &Dataset, eta: &DVector<f64>) -> Result<()> {
    if eta.len() != data.n() {
        return Err(Error::DimensionMismatch {
            what: "linear predictor",
            expected: data.n(),
            actual: eta.len(),
        });
    }
    Ok(())
}

/// Log-likelihood as a function of the linear predictor.
pub fn log_likelihood_eta(data: &Dataset, eta: &DVector<f64>, shape: Option<f64>) -> Result<f64> {
    check_eta(data, eta)?;
    data.check_shape(shape)?;
    Ok(match (&data.response, data.kind) {
        (Response::Binary(y), _) => y
            .iter()
            .zip(eta.iter())
            .map(|(&yi, &e)| yi * e - softplus(e))
            .sum(),
        (Response::Survival { event, .. }, ModelKind::Weibull) => {
            let k = shape.expect("checked");
            let lk = k.ln();
            event
                .iter()
                .zip(eta.iter())
                .zip(&data.log_time)
                .map(|((&d, &e), &lt)| d * (lk + k * e + (k - 1.0) * lt) - (k * (e + lt)).exp())
                .sum()
        }
        (Response::Survival { event, .. }, _) => {
            let risk = data.risk_sets.as_ref().expect("cox risk sets");
            let m = eta.max();
            let mut s = 0.0;
            let mut ll = 0.0;
            for &(a, b, events) in &risk.groups {
                for &i in &risk.order[a..b] {
                    s += (eta[i] - m).exp();
                }
                if events > 0 {
                    let log_s = m + s.ln();
                    for &i in &risk.order[a..b] {
                        if event[i] > 0.5 {
                            ll += eta[i] - log_s;
                        }
                    }
                }
            }
            ll
        }
    })
}

/// Log-likelihood of model `gamma` at coefficients `theta = (alpha, beta_gamma)`.
pub fn log_likelihood(
    data: &Dataset,
    gamma: &ModelIndicator,
    theta: &DVector<f64>,
    shape: Option<f64>,
) -> Result<f64> {
    let eta = data.linear_predictor(gamma, theta)?;
    log_likelihood_eta(data, &eta, shape)
}

/// Negated gradient and curvature of the log-likelihood at `eta`.
pub fn eta_derivatives(data: &Dataset, eta: &DVector<f64>, shape: Option<f64>) -> Result<GlmDerivatives> {
    check_eta(data, eta)?;
    data.check_shape(shape)?;
    let n = data.n();
    Ok(match (&data.response, data.kind) {
        (Response::Binary(y), _) => {
            let mu: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
            GlmDerivatives {
                y_tilde: DVector::from_fn(n, |i, _| mu[i] - y[i]),
                w: Curvature::Diagonal(DVector::from_fn(n, |i, _| mu[i] * (1.0 - mu[i]))),
            }
        }
        (Response::Survival { event, .. }, ModelKind::Weibull) => {
            let k = shape.expect("checked");
            let u: Vec<f64> = eta
                .iter()
                .zip(&data.log_time)
                .map(|(&e, &lt)| (k * (e + lt)).exp())
                .collect();
            GlmDerivatives {
                y_tilde: DVector::from_fn(n, |i, _| k * (u[i] - event[i])),
                w: Curvature::Diagonal(DVector::from_fn(n, |i, _| k * k * u[i])),
            }
        }
        (Response::Survival { event, .. }, _) => {
            let risk = Arc::clone(data.risk_sets.as_ref().expect("cox risk sets"));
            let m = eta.max();
            let e: Vec<f64> = eta.iter().map(|&v| (v - m).exp()).collect();
            let mut sums = Vec::with_capacity(risk.groups.len());
            let mut s = 0.0;
            for &(a, b, _) in &risk.groups {
                for &i in &risk.order[a..b] {
                    s += e[i];
                }
                sums.push(s);
            }
            let mut c = vec![0.0; n];
            let mut d2 = vec![0.0; n];
            let mut group_weight = vec![0.0; risk.groups.len()];
            let (mut c_acc, mut d_acc) = (0.0, 0.0);
            for (g, &(a, b, events)) in risk.groups.iter().enumerate().rev() {
                if events > 0 {
                    let m_g = events as f64;
                    c_acc += m_g / sums[g];
                    group_weight[g] = m_g / (sums[g] * sums[g]);
                    d_acc += group_weight[g];
                }
                for &i in &risk.order[a..b] {
                    c[i] = c_acc;
                    d2[i] = d_acc;
                }
            }
            GlmDerivatives {
                y_tilde: DVector::from_fn(n, |i, _| e[i] * c[i] - event[i]),
                w: Curvature::RiskSet(CoxCurvature {
                    risk,
                    e,
                    c,
                    d2,
                    group_weight,
                }),
            }
        }
    })
}
