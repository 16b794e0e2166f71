//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Command-line overrides
//! are applied on top of the file with [`RunConfig::from_pairs`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use parni_core::{
    AcceptanceEstimator, Censoring, ChainConfig, ModelKind, ModelPrior, PriorConfig, ProposalEstimator, SamplerKind,
    SimConfig,
};

use crate::error::{CliError, CliResult};

/// Every key the parser understands.
pub const KNOWN_KEYS: &[&str] = &[
    "data",
    "kind",
    "response",
    "time",
    "event",
    "fixed",
    "free",
    "standardize",
    "intercept",
    "sim.n",
    "sim.p",
    "sim.rho",
    "sim.beta",
    "sim.sigma",
    "sim.q",
    "sim.censoring",
    "sim.seed",
    "g",
    "g_hierarchical",
    "sigma_alpha_sq",
    "h",
    "beta_binomial",
    "sigma_k_sq",
    "sampler",
    "proposal",
    "acceptance",
    "iterations",
    "budget_seconds",
    "keep",
    "burn_in",
    "thin",
    "chains",
    "workers",
    "seed",
    "out",
    "cpm_samples",
    "cpm_rho",
    "cpm_max_size",
    "epsilon",
    "zeta",
    "initial_shape",
    "gold",
    "gold_multiple",
    "label",
];

/// Column roles in an input CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schema {
    pub response: Option<String>,
    pub time: Option<String>,
    pub event: Option<String>,
    pub fixed: Vec<String>,
    /// Every remaining column when unset.
    pub free: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv { path: PathBuf, schema: Schema },
    Simulated { sim: SimConfig, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum GoldSource {
    None,
    File(PathBuf),
    /// Exact enumeration under the Laplace approximation.
    Enumerate,
    /// One long PARNI-CPM run of `multiple` times the configured length.
    Reference { multiple: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: DataSource,
    pub kind: ModelKind,
    pub standardize: bool,
    pub intercept: bool,
    pub prior: PriorConfig,
    pub chain: ChainConfig,
    pub chains: usize,
    pub workers: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub gold: GoldSource,
    pub label: String,
}

/// Parses `key = value` lines.
pub fn parse_pairs(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Config(format!("line {}: expected key=value, got `{line}`", lineno + 1)));
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

struct Reader<'a> {
    map: &'a BTreeMap<String, String>,
}

impl Reader<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn parse<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| CliError::Config(format!("{key} = {v}: {e}"))),
        }
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }
}

fn parse_kind(v: &str) -> CliResult<ModelKind> {
    v.parse::<ModelKind>().map_err(|e| CliError::Config(e.to_string()))
}

fn parse_censoring(v: &str) -> CliResult<Censoring> {
    let (name, arg) = match v.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (v.trim(), None),
    };
    let num = |default: f64| -> CliResult<f64> {
        arg.map_or(Ok(default), |a| {
            a.parse::<f64>()
                .map_err(|e| CliError::Config(format!("sim.censoring = {v}: {e}")))
        })
    };
    match name {
        "none" => Ok(Censoring::None),
        "admin" | "administrative" => Ok(Censoring::Administrative { quantile: num(0.7)? }),
        "uniform" => Ok(Censoring::Uniform {
            upper_quantile: num(1.0)?,
        }),
        other => Err(CliError::Config(format!("unknown censoring rule `{other}`"))),
    }
}

impl RunConfig {
    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn from_file(path: &Path, overrides: &BTreeMap<String, String>) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut map = parse_pairs(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(d) = map.get_mut("data") {
            let p = Path::new(d.as_str());
            if p.is_relative() {
                *d = base.join(p).to_string_lossy().into_owned();
            }
        }
        if let Some(g) = map.get_mut("gold") {
            if !matches!(g.as_str(), "enumerate" | "reference" | "none") && Path::new(g.as_str()).is_relative() {
                *g = base.join(g.as_str()).to_string_lossy().into_owned();
            }
        }
        map.extend(overrides.iter().map(|(k, v)| (k.clone(), v.clone())));
        Self::from_pairs(&map)
    }

    pub fn from_pairs(map: &BTreeMap<String, String>) -> CliResult<Self> {
        if let Some(k) = map.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(CliError::Config(format!("unknown key `{k}`")));
        }
        let r = Reader { map };
        let kind = parse_kind(r.raw("kind").unwrap_or("logistic"))?;

        let source = match r.raw("data") {
            Some(path) => DataSource::Csv {
                path: PathBuf::from(path),
                schema: Schema {
                    response: r.raw("response").map(String::from),
                    time: r.raw("time").map(String::from),
                    event: r.raw("event").map(String::from),
                    fixed: r.raw("fixed").map(list).unwrap_or_default(),
                    free: r.raw("free").map(list),
                },
            },
            None => {
                let defaults = SimConfig::default();
                let beta = match r.raw("sim.beta") {
                    None => None,
                    Some(v) => Some(
                        list(v)
                            .iter()
                            .map(|b| b.parse::<f64>())
                            .collect::<Result<Vec<_>, _>>()
                            .map_err(|e| CliError::Config(format!("sim.beta: {e}")))?,
                    ),
                };
                let sim = SimConfig {
                    n: r.or("sim.n", defaults.n)?,
                    p: r.or("sim.p", defaults.p)?,
                    ar_rho: r.or("sim.rho", defaults.ar_rho)?,
                    beta,
                    kind,
                    sigma: r.or("sim.sigma", defaults.sigma)?,
                    q_shape: r.or("sim.q", defaults.q_shape)?,
                    censoring: r.raw("sim.censoring").map(parse_censoring).transpose()?.unwrap_or_default(),
                };
                sim.validate().map_err(|e| CliError::Config(e.to_string()))?;
                DataSource::Simulated {
                    sim,
                    seed: r.or("sim.seed", 1)?,
                }
            }
        };

        let model_prior = match (r.raw("h"), r.raw("beta_binomial")) {
            (Some(_), Some(_)) => return Err(CliError::Config("set either h or beta_binomial, not both".into())),
            (_, Some(ab)) => {
                let v = list(ab);
                let parsed: Vec<f64> = v
                    .iter()
                    .map(|s| s.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| CliError::Config(format!("beta_binomial: {e}")))?;
                let [a, b] = parsed[..] else {
                    return Err(CliError::Config("beta_binomial takes two numbers `a,b`".into()));
                };
                ModelPrior::BetaBinomial { a, b }
            }
            (Some(_), None) => ModelPrior::Fixed { h: r.or("h", 0.5)? },
            (None, None) => ModelPrior::Fixed { h: 0.5 },
        };
        let defaults = PriorConfig::default();
        let prior = PriorConfig {
            g: r.or("g", defaults.g)?,
            g_hierarchical: r.or("g_hierarchical", false)?,
            sigma_alpha_sq: r.or("sigma_alpha_sq", defaults.sigma_alpha_sq)?,
            model_prior,
            sigma_k_sq: r.or("sigma_k_sq", defaults.sigma_k_sq)?,
        };
        prior.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let cd = ChainConfig::default();
        let parse_enum = |key: &str| -> CliResult<Option<String>> { Ok(r.raw(key).map(String::from)) };
        let sampler = match parse_enum("sampler")? {
            Some(v) => SamplerKind::from_str(&v).map_err(|e| CliError::Config(e.to_string()))?,
            None => cd.sampler,
        };
        let proposal = match parse_enum("proposal")? {
            Some(v) => ProposalEstimator::from_str(&v).map_err(|e| CliError::Config(e.to_string()))?,
            None => cd.proposal,
        };
        let acceptance = match parse_enum("acceptance")? {
            Some(v) => AcceptanceEstimator::from_str(&v).map_err(|e| CliError::Config(e.to_string()))?,
            None => AcceptanceEstimator::default_for(kind),
        };
        let budget = r.parse::<f64>("budget_seconds")?;
        if let Some(b) = budget {
            if !(b > 0.0 && b.is_finite()) {
                return Err(CliError::Config(format!("budget_seconds must be positive, got {b}")));
            }
        }
        let iterations = match (r.parse::<usize>("iterations")?, budget) {
            (Some(n), _) => n,
            (None, Some(_)) => usize::MAX,
            (None, None) => cd.iterations,
        };
        let chain = ChainConfig {
            sampler,
            proposal,
            acceptance,
            iterations,
            burn_in: r.or("burn_in", cd.burn_in.min(iterations / 10))?,
            thin: r.or("thin", cd.thin)?,
            budget: budget.map(Duration::from_secs_f64),
            keep: r.parse("keep")?,
            cpm: parni_core::CpmSettings {
                n_samples: r.or("cpm_samples", cd.cpm.n_samples)?,
                rho: r.or("cpm_rho", cd.cpm.rho)?,
                max_model_size: r.or("cpm_max_size", cd.cpm.max_model_size)?,
            },
            epsilon: r.parse("epsilon")?,
            zeta_init: r.or("zeta", cd.zeta_init)?,
            adapt_zeta: true,
            initial_model: None,
            initial_shape: r.or("initial_shape", cd.initial_shape)?,
            la_cache_capacity: cd.la_cache_capacity,
        };
        if chain.iterations != usize::MAX && chain.iterations > 0 && chain.burn_in >= chain.iterations {
            return Err(CliError::Config(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                chain.burn_in, chain.iterations
            )));
        }
        if acceptance == AcceptanceEstimator::Da && kind != ModelKind::Logistic {
            return Err(CliError::Config(format!(
                "acceptance = DA is only available for logistic data, not {}",
                kind.name()
            )));
        }

        let gold = match r.raw("gold") {
            None | Some("none") => GoldSource::None,
            Some("enumerate") => GoldSource::Enumerate,
            Some("reference") => GoldSource::Reference {
                multiple: r.or("gold_multiple", 10.0)?,
            },
            Some(path) => GoldSource::File(PathBuf::from(path)),
        };
        let chains: usize = r.or("chains", 1)?;
        if chains == 0 {
            return Err(CliError::Config("chains must be at least 1".into()));
        }
        let label = r.raw("label").map(String::from).unwrap_or_else(|| {
            format!("{}-{}-{}", sampler.name(), proposal.name(), acceptance.name()).to_lowercase()
        });
        Ok(Self {
            source,
            kind,
            standardize: r.or("standardize", true)?,
            intercept: r.or("intercept", kind == ModelKind::Weibull)?,
            prior,
            chain,
            chains,
            workers: r.or("workers", 1)?.max(1),
            seed: r.or("seed", 1)?,
            out: PathBuf::from(r.raw("out").unwrap_or("parni-out")),
            gold,
            label,
        })
    }

    /// Plain-text `key=value` echo of the effective settings, in a stable order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut v = vec![
            ("label".to_string(), self.label.clone()),
            ("kind".into(), self.kind.name().into()),
            ("sampler".into(), self.chain.sampler.name().into()),
            ("proposal".into(), self.chain.proposal.name().into()),
            ("acceptance".into(), self.chain.acceptance.name().into()),
            ("target".into(), self.chain.acceptance.target_label().into()),
            (
                "iterations".into(),
                if self.chain.iterations == usize::MAX {
                    "unbounded".into()
                } else {
                    self.chain.iterations.to_string()
                },
            ),
            ("burn_in".into(), self.chain.burn_in.to_string()),
            ("thin".into(), self.chain.thin.to_string()),
            ("chains".into(), self.chains.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("g".into(), self.prior.g.to_string()),
            ("g_hierarchical".into(), self.prior.g_hierarchical.to_string()),
            ("sigma_alpha_sq".into(), self.prior.sigma_alpha_sq.to_string()),
            ("sigma_k_sq".into(), self.prior.sigma_k_sq.to_string()),
        ];
        match self.prior.model_prior {
            ModelPrior::Fixed { h } => v.push(("h".into(), h.to_string())),
            ModelPrior::BetaBinomial { a, b } => v.push(("beta_binomial".into(), format!("{a},{b}"))),
        }
        if let Some(b) = self.chain.budget {
            v.push(("budget_seconds".into(), b.as_secs_f64().to_string()));
        }
        if let Some(k) = self.chain.keep {
            v.push(("keep".into(), k.to_string()));
        }
        match &self.source {
            DataSource::Csv { path, .. } => v.push(("data".into(), path.display().to_string())),
            DataSource::Simulated { sim, seed } => {
                v.push(("sim.n".into(), sim.n.to_string()));
                v.push(("sim.p".into(), sim.p.to_string()));
                v.push(("sim.seed".into(), seed.to_string()));
            }
        }
        v
    }
}
