//! CSV input and output of data sets.

use std::path::Path;

use nalgebra::DMatrix;
use parni_core::{Dataset, ModelKind, Response};

use crate::config::Schema;
use crate::error::{CliError, CliResult};

fn column(headers: &[String], name: &str) -> CliResult<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Data(format!("column `{name}` not found in header")))
}

/// Reads a data set. Free covariates are standardised when `standardize` is set;
/// `intercept` adds a column of ones to the fixed covariates.
pub fn ingest_csv(
    path: &Path,
    kind: ModelKind,
    schema: &Schema,
    standardize: bool,
    intercept: bool,
) -> CliResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader.headers()?.iter().map(String::from).collect();

    let response_cols: Vec<usize> = match kind {
        ModelKind::Logistic => vec![column(&headers, schema.response.as_deref().unwrap_or("y"))?],
        _ => vec![
            column(&headers, schema.time.as_deref().unwrap_or("time"))?,
            column(&headers, schema.event.as_deref().unwrap_or("event"))?,
        ],
    };
    let fixed: Vec<usize> = schema
        .fixed
        .iter()
        .map(|c| column(&headers, c))
        .collect::<CliResult<_>>()?;
    let free: Vec<usize> = match &schema.free {
        Some(cols) => cols.iter().map(|c| column(&headers, c)).collect::<CliResult<_>>()?,
        None => (0..headers.len())
            .filter(|i| !response_cols.contains(i) && !fixed.contains(i))
            .collect(),
    };
    if free.is_empty() {
        return Err(CliError::Data("no free covariate columns".into()));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>().map_err(|_| {
                    CliError::Data(format!(
                        "row {}: column `{}` is not numeric (`{cell}`)",
                        r + 1,
                        headers.get(c).map_or("?", String::as_str)
                    ))
                })
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    let x = DMatrix::from_fn(n, free.len(), |i, j| rows[i][free[j]]);
    let extra = usize::from(intercept);
    let z = DMatrix::from_fn(n, fixed.len() + extra, |i, j| if j < extra { 1.0 } else { rows[i][fixed[j - extra]] });
    let response = match kind {
        ModelKind::Logistic => Response::Binary(rows.iter().map(|r| r[response_cols[0]]).collect()),
        _ => Response::Survival {
            time: rows.iter().map(|r| r[response_cols[0]]).collect(),
            event: rows.iter().map(|r| r[response_cols[1]]).collect(),
        },
    };
    let names = free.iter().map(|&c| headers[c].clone()).collect();
    let data = Dataset::new(kind, x, z, response)
        .map_err(|e| CliError::Data(e.to_string()))?
        .with_column_names(names)?;
    if standardize {
        data.standardized().map_err(|e| CliError::Data(e.to_string()))
    } else {
        Ok(data)
    }
}

/// Writes the response and free covariates with a header row.
///
/// Fixed covariates are not written; an intercept is restored on ingestion.
pub fn write_dataset_csv(data: &Dataset, path: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut header: Vec<String> = match data.response() {
        Response::Binary(_) => vec!["y".into()],
        Response::Survival { .. } => vec!["time".into(), "event".into()],
    };
    header.extend(data.column_names().iter().cloned());
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut row: Vec<String> = match data.response() {
            Response::Binary(y) => vec![y[i].to_string()],
            Response::Survival { time, event } => vec![time[i].to_string(), event[i].to_string()],
        };
        row.extend((0..data.p()).map(|j| data.x()[(i, j)].to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}
