use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use parni_core::{chain_rng, enumerate_exact, sim, ModelKind, SimConfig};
use parni_cli::config::RunConfig;
use parni_cli::error::{CliError, CliResult};
use parni_cli::{ingest, report, runner};

#[derive(Parser)]
#[command(name = "parni", version, about = "Bayesian variable selection for GLMs and survival models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the chains described by a configuration file.
    Run {
        config: PathBuf,
        #[arg(long)]
        sampler: Option<String>,
        #[arg(long)]
        proposal: Option<String>,
        #[arg(long)]
        acceptance: Option<String>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        budget_seconds: Option<f64>,
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Extra `key=value` settings.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Write a simulated data set as CSV.
    Simulate {
        #[arg(long, default_value = "logistic")]
        kind: String,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 500)]
        p: usize,
        #[arg(long, default_value_t = 0.6)]
        rho: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact posterior inclusion probabilities by enumerating every model.
    Enumerate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate error and relative efficiency of finished runs against a gold standard.
    Compare {
        #[arg(long)]
        gold: PathBuf,
        /// Label of the run the others are measured against.
        #[arg(long)]
        baseline: String,
        #[arg(long)]
        out: Option<PathBuf>,
        dirs: Vec<PathBuf>,
    },
}

fn overrides(
    pairs: [(&str, Option<String>); 8],
    set: &[String],
) -> CliResult<BTreeMap<String, String>> {
    let mut map: BTreeMap<String, String> = pairs
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
        .collect();
    for s in set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("`--set {s}` is not of the form key=value")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn read_metadata(dir: &Path) -> BTreeMap<String, String> {
    fs::read_to_string(dir.join("run.txt"))
        .map(|t| {
            t.lines()
                .filter_map(|l| l.split_once('='))
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect()
        })
        .unwrap_or_default()
}

fn compare(gold: &Path, baseline: &str, dirs: &[PathBuf], out: Option<&Path>) -> CliResult<()> {
    let (_, gold) = report::read_pip_column(gold)?;
    let mut rows = Vec::new();
    for dir in dirs {
        let meta = read_metadata(dir);
        let label = meta
            .get("label")
            .cloned()
            .unwrap_or_else(|| dir.file_name().map_or("run".into(), |f| f.to_string_lossy().into_owned()));
        let chains = report::read_chain_pips(&dir.join("pip.csv"))?;
        let mut summary = csv::Reader::from_path(dir.join("summary.csv"))?;
        let first = summary
            .records()
            .next()
            .transpose()?
            .ok_or_else(|| CliError::Data(format!("{}: empty summary.csv", dir.display())))?;
        let field = |i: usize| first.get(i).and_then(|s| s.parse::<f64>().ok()).unwrap_or(0.0);
        rows.push(report::SummaryRow {
            label,
            chains: chains.len(),
            iterations: field(2) as usize,
            acceptance_rate: field(3),
            iterations_per_second: field(4),
            avg_mse: Some(report::average_mse(&chains, &gold)?),
            relative_efficiency: None,
        });
    }
    report::attach_relative_efficiency(&mut rows, baseline)?;
    for r in &rows {
        println!(
            "{:<32} mse={:.3e} efficiency={:.3}",
            r.label,
            r.avg_mse.unwrap_or(f64::NAN),
            r.relative_efficiency.unwrap_or(f64::NAN)
        );
    }
    if let Some(out) = out {
        report::write_summary_csv(out, &rows)?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run {
            config,
            sampler,
            proposal,
            acceptance,
            iters,
            budget_seconds,
            chains,
            seed,
            out,
            set,
        } => {
            let ov = overrides(
                [
                    ("sampler", sampler),
                    ("proposal", proposal),
                    ("acceptance", acceptance),
                    ("iterations", iters.map(|v| v.to_string())),
                    ("budget_seconds", budget_seconds.map(|v| v.to_string())),
                    ("chains", chains.map(|v| v.to_string())),
                    ("seed", seed.map(|v| v.to_string())),
                    ("out", out.map(|v| v.display().to_string())),
                ],
                &set,
            )?;
            let cfg = RunConfig::from_file(&config, &ov)?;
            let result = runner::execute(&cfg)?;
            let s = &result.summary;
            println!(
                "{}: {} iterations, acceptance {:.3}, {:.1} it/s{} -> {}",
                s.label,
                s.iterations,
                s.acceptance_rate,
                s.iterations_per_second,
                s.avg_mse.map(|m| format!(", mse {m:.3e}")).unwrap_or_default(),
                result.out.display()
            );
            Ok(())
        }
        Command::Simulate {
            kind,
            n,
            p,
            rho,
            seed,
            out,
        } => {
            let kind: ModelKind = kind.parse()?;
            let cfg = SimConfig {
                n,
                p,
                ar_rho: rho,
                kind,
                ..SimConfig::default()
            };
            cfg.validate()?;
            let data = sim::simulate(&cfg, &mut chain_rng(seed, 0))?;
            ingest::write_dataset_csv(&data, &out)
        }
        Command::Enumerate { config, out } => {
            let cfg = RunConfig::from_file(&config, &BTreeMap::new())?;
            let data = runner::build_dataset(&cfg)?;
            let shape = (cfg.kind == ModelKind::Weibull).then_some(cfg.chain.initial_shape);
            let e = enumerate_exact(&data, &cfg.prior, shape, data.p())?;
            report::write_gold_csv(&out, data.column_names(), &e.pip)
        }
        Command::Compare {
            gold,
            baseline,
            out,
            dirs,
        } => compare(&gold, &baseline, &dirs, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
