//! Builds the data, runs the chains and writes the output directory.

use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use parni_core::{
    chain_rng, enumerate_exact, run_chain, sim, AcceptanceEstimator, ChainConfig, ChainOutput, Dataset, ModelKind,
    PriorConfig, ProposalEstimator, SamplerKind,
};

use crate::config::{DataSource, GoldSource, RunConfig};
use crate::error::{CliError, CliResult};
use crate::ingest::ingest_csv;
use crate::report;

/// Stream index reserved for the reference run, away from the per-chain streams.
pub const REFERENCE_STREAM: u64 = 1 << 32;

pub fn build_dataset(cfg: &RunConfig) -> CliResult<Dataset> {
    match &cfg.source {
        DataSource::Csv { path, schema } => ingest_csv(path, cfg.kind, schema, cfg.standardize, cfg.intercept),
        DataSource::Simulated { sim: s, seed } => {
            let data = sim::simulate(s, &mut chain_rng(*seed, 0))?;
            if cfg.standardize {
                Ok(data.standardized()?)
            } else {
                Ok(data)
            }
        }
    }
}

/// Runs `chains` independent chains on up to `workers` threads.
///
/// Chain `c` always uses stream `c` of `seed`, so the result does not depend on `workers`.
pub fn run_chains(
    data: &Dataset,
    prior: &PriorConfig,
    config: &ChainConfig,
    seed: u64,
    chains: usize,
    workers: usize,
) -> CliResult<Vec<ChainOutput>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<parni_core::Result<ChainOutput>>>> = Mutex::new((0..chains).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, chains.max(1)) {
            s.spawn(|| loop {
                let c = next.fetch_add(1, Ordering::Relaxed);
                if c >= chains {
                    break;
                }
                log::info!("chain {} started", c + 1);
                let out = run_chain(data, prior, config, &mut chain_rng(seed, c as u64));
                slots.lock().expect("no worker panicked")[c] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|o| o.expect("every chain ran").map_err(CliError::from))
        .collect()
}

/// Reference PIPs for error summaries, if the configuration asks for them.
pub fn gold_pips(cfg: &RunConfig, data: &Dataset) -> CliResult<Option<Vec<f64>>> {
    let shape = (cfg.kind == ModelKind::Weibull).then_some(cfg.chain.initial_shape);
    match &cfg.gold {
        GoldSource::None => Ok(None),
        GoldSource::Enumerate => Ok(Some(enumerate_exact(data, &cfg.prior, shape, data.p())?.pip)),
        GoldSource::File(path) => {
            let (_, pip) = report::read_pip_column(path)?;
            if pip.len() != data.p() {
                return Err(CliError::Data(format!(
                    "gold file has {} covariates, data has {}",
                    pip.len(),
                    data.p()
                )));
            }
            Ok(Some(pip))
        }
        GoldSource::Reference { multiple } => {
            if cfg.chain.iterations == usize::MAX {
                return Err(CliError::Config("a reference run needs a fixed `iterations`".into()));
            }
            let iterations = (cfg.chain.iterations as f64 * multiple).ceil() as usize;
            let reference = ChainConfig {
                sampler: SamplerKind::Parni,
                proposal: ProposalEstimator::AdaptiveAla,
                acceptance: AcceptanceEstimator::Cpm,
                iterations,
                burn_in: (cfg.chain.burn_in as f64 * multiple).ceil() as usize,
                budget: None,
                keep: Some(1),
                ..cfg.chain.clone()
            };
            log::info!("reference run of {iterations} iterations");
            let out = run_chain(data, &cfg.prior, &reference, &mut chain_rng(cfg.seed, REFERENCE_STREAM))?;
            Ok(Some(out.pip))
        }
    }
}

#[derive(Debug)]
pub struct RunResult {
    pub outputs: Vec<ChainOutput>,
    pub summary: report::SummaryRow,
    pub gold: Option<Vec<f64>>,
    pub out: PathBuf,
}

/// Runs a configuration and writes its output directory.
pub fn execute(cfg: &RunConfig) -> CliResult<RunResult> {
    let data = build_dataset(cfg)?;
    log::info!("data: n = {}, p = {}, q = {}, kind = {}", data.n(), data.p(), data.q(), data.kind().name());
    let gold = gold_pips(cfg, &data)?;
    let outputs = run_chains(&data, &cfg.prior, &cfg.chain, cfg.seed, cfg.chains, cfg.workers)?;
    let summary = report::SummaryRow::from_outputs(&cfg.label, &outputs, gold.as_deref())?;

    let out = cfg.out.clone();
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let names = data.column_names().to_vec();
    report::write_pip_csv(&out.join("pip.csv"), &names, &outputs)?;
    report::write_trace_csv(&out.join("trace.csv"), &outputs)?;
    report::write_timing_csv(&out.join("timing.csv"), &outputs)?;
    report::write_models_csv(&out.join("models.csv"), &outputs)?;
    report::write_summary_csv(&out.join("summary.csv"), std::slice::from_ref(&summary))?;
    let mut meta = cfg.echo();
    meta.push(("n".into(), data.n().to_string()));
    meta.push(("p".into(), data.p().to_string()));
    meta.push(("q".into(), data.q().to_string()));
    for (c, o) in outputs.iter().enumerate() {
        meta.push((format!("chain_{}.iterations", c + 1), o.iterations.to_string()));
        meta.push((format!("chain_{}.estimator_failures", c + 1), o.estimator_failures.to_string()));
    }
    report::write_metadata(&out.join("run.txt"), &meta)?;
    if let Some(g) = &gold {
        report::write_gold_csv(&out.join("gold.csv"), &names, g)?;
    }
    Ok(RunResult {
        outputs,
        summary,
        gold,
        out,
    })
}
