//! Output files and the summary statistics written to them.

use std::fs;
use std::path::Path;

use parni_core::ChainOutput;

use crate::error::{CliError, CliResult};

/// Mean over covariates of the per-covariate mean squared error across chains.
pub fn average_mse(pips: &[Vec<f64>], gold: &[f64]) -> CliResult<f64> {
    if pips.is_empty() {
        return Err(CliError::Data("no chains to compare".into()));
    }
    let p = gold.len();
    if let Some(bad) = pips.iter().find(|v| v.len() != p) {
        return Err(CliError::Data(format!(
            "PIP vector has {} entries but the reference has {p}",
            bad.len()
        )));
    }
    let per_covariate = (0..p).map(|j| {
        pips.iter().map(|v| (v[j] - gold[j]).powi(2)).sum::<f64>() / pips.len() as f64
    });
    Ok(per_covariate.sum::<f64>() / p as f64)
}

/// `MSE_baseline / MSE_other`; above one means `other` is more efficient.
pub fn relative_efficiency(baseline_mse: f64, other_mse: f64) -> f64 {
    baseline_mse / other_mse
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub chains: usize,
    pub iterations: usize,
    pub acceptance_rate: f64,
    pub iterations_per_second: f64,
    pub avg_mse: Option<f64>,
    pub relative_efficiency: Option<f64>,
}

impl SummaryRow {
    pub fn from_outputs(label: &str, outputs: &[ChainOutput], gold: Option<&[f64]>) -> CliResult<Self> {
        let iterations: usize = outputs.iter().map(|o| o.iterations).sum();
        let accepted: usize = outputs.iter().map(|o| o.accepted).sum();
        let seconds: f64 = outputs.iter().map(|o| o.elapsed.as_secs_f64()).sum();
        let avg_mse = match gold {
            Some(g) => Some(average_mse(&outputs.iter().map(|o| o.pip.clone()).collect::<Vec<_>>(), g)?),
            None => None,
        };
        Ok(Self {
            label: label.to_string(),
            chains: outputs.len(),
            iterations,
            acceptance_rate: if iterations > 0 { accepted as f64 / iterations as f64 } else { 0.0 },
            iterations_per_second: if seconds > 0.0 { iterations as f64 / seconds } else { 0.0 },
            avg_mse,
            relative_efficiency: None,
        })
    }
}

/// Fills in efficiencies relative to the row labelled `baseline`.
pub fn attach_relative_efficiency(rows: &mut [SummaryRow], baseline: &str) -> CliResult<()> {
    let base = rows
        .iter()
        .find(|r| r.label == baseline)
        .ok_or_else(|| CliError::Config(format!("baseline `{baseline}` is not among the compared runs")))?
        .avg_mse
        .ok_or_else(|| CliError::Config("relative efficiency needs a gold standard".into()))?;
    for r in rows.iter_mut() {
        r.relative_efficiency = r.avg_mse.map(|m| relative_efficiency(base, m));
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// `covariate, chain_1, ..., chain_k, mean`
pub fn write_pip_csv(path: &Path, names: &[String], outputs: &[ChainOutput]) -> CliResult<()> {
    let p = names.len();
    if let Some(o) = outputs.iter().find(|o| o.pip.len() != p) {
        return Err(CliError::Data(format!("chain has {} PIPs, expected {p}", o.pip.len())));
    }
    let mut w = writer(path)?;
    let mut header = vec!["covariate".to_string()];
    header.extend((1..=outputs.len()).map(|c| format!("chain_{c}")));
    header.push("mean".into());
    w.write_record(&header)?;
    for (j, name) in names.iter().enumerate() {
        let vals: Vec<f64> = outputs.iter().map(|o| o.pip[j]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let mut row = vec![name.clone()];
        row.extend(vals.iter().map(f64::to_string));
        row.push(mean.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Deterministic per-iteration trace: `chain, iteration, log_posterior, accepted, model_size`.
pub fn write_trace_csv(path: &Path, outputs: &[ChainOutput]) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(["chain", "iteration", "log_posterior", "accepted", "model_size"])?;
    for (c, o) in outputs.iter().enumerate() {
        for r in &o.records {
            w.write_record([
                (c + 1).to_string(),
                r.iteration.to_string(),
                r.log_post.to_string(),
                u8::from(r.accepted).to_string(),
                r.gamma.size().to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Wall-clock timing kept apart from the trace so the trace stays reproducible.
pub fn write_timing_csv(path: &Path, outputs: &[ChainOutput]) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(["chain", "iteration", "elapsed_seconds"])?;
    for (c, o) in outputs.iter().enumerate() {
        for r in &o.records {
            w.write_record([(c + 1).to_string(), r.iteration.to_string(), r.elapsed.to_string()])?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Sampled models in compact form: `chain, iteration, included` (1-based, `;`-separated).
pub fn write_models_csv(path: &Path, outputs: &[ChainOutput]) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(["chain", "iteration", "included"])?;
    for (c, o) in outputs.iter().enumerate() {
        for r in &o.records {
            let inc: Vec<String> = r.gamma.included().iter().map(|j| (j + 1).to_string()).collect();
            w.write_record([(c + 1).to_string(), r.iteration.to_string(), inc.join(";")])?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record([
        "label",
        "chains",
        "iterations",
        "acceptance_rate",
        "iterations_per_second",
        "avg_mse",
        "relative_efficiency",
    ])?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            r.chains.to_string(),
            r.iterations.to_string(),
            r.acceptance_rate.to_string(),
            r.iterations_per_second.to_string(),
            opt(r.avg_mse),
            opt(r.relative_efficiency),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Plain-text metadata, one `key=value` per line.
pub fn write_metadata(path: &Path, pairs: &[(String, String)]) -> CliResult<()> {
    let text: String = pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// `covariate, pip`
pub fn write_gold_csv(path: &Path, names: &[String], pip: &[f64]) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(["covariate", "pip"])?;
    for (n, v) in names.iter().zip(pip) {
        w.write_record([n.clone(), v.to_string()])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a PIP column: `pip` if present, else `mean`, else the last column.
pub fn read_pip_column(path: &Path) -> CliResult<(Vec<String>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let col = headers
        .iter()
        .position(|h| h == "pip")
        .or_else(|| headers.iter().position(|h| h == "mean"))
        .unwrap_or(headers.len().saturating_sub(1));
    let mut names = Vec::new();
    let mut vals = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        names.push(rec.get(0).unwrap_or_default().to_string());
        let cell = rec.get(col).unwrap_or_default();
        vals.push(cell.parse::<f64>().map_err(|_| {
            CliError::Data(format!("{}: row {}: `{cell}` is not a probability", path.display(), i + 1))
        })?);
    }
    Ok((names, vals))
}

/// Per-chain PIP columns of a `pip.csv`.
pub fn read_chain_pips(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.starts_with("chain_").then_some(i))
        .collect();
    let mut chains = vec![Vec::new(); cols.len()];
    for rec in r.records() {
        let rec = rec?;
        for (c, &i) in cols.iter().enumerate() {
            let cell = rec.get(i).unwrap_or_default();
            chains[c].push(
                cell.parse::<f64>()
                    .map_err(|_| CliError::Data(format!("{}: `{cell}` is not a probability", path.display())))?,
            );
        }
    }
    Ok(chains)
}
