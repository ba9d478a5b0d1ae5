//! CSV ingestion and output.

use std::fs::File;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub header: bool,
    /// Marker for an unlabeled row in a label column.
    pub na: String,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            header: true,
            na: "NA".into(),
        }
    }
}

/// A numeric matrix plus an optional label column pulled out of it.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Names of the numeric columns (`x1, x2, ...` without a header).
    pub columns: Vec<String>,
    pub data: DMatrix<f64>,
    /// One-based labels, `None` where the row carries the unlabeled marker.
    pub labels: Option<Vec<Option<usize>>>,
    pub label_name: Option<String>,
}

fn reader(path: &Path, opts: &CsvOptions) -> CliResult<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(opts.header)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, err: csv::Error) -> CliError {
    match err.position() {
        Some(pos) => CliError::input(format!("{}: line {}: {err}", path.display(), pos.line())),
        None => CliError::input(format!("{}: {err}", path.display())),
    }
}

/// Resolves a column given by header name or one-based index.
fn resolve_column(spec: &str, names: &[String], path: &Path) -> CliResult<usize> {
    if let Some(i) = names.iter().position(|n| n == spec) {
        return Ok(i);
    }
    match spec.parse::<usize>() {
        Ok(i) if (1..=names.len()).contains(&i) => Ok(i - 1),
        _ => Err(CliError::input(format!(
            "{}: no column '{spec}' (give a header name or a 1-based index up to {})",
            path.display(),
            names.len()
        ))),
    }
}

fn parse_label(field: &str, opts: &CsvOptions, line: u64, path: &Path) -> CliResult<Option<usize>> {
    if field == opts.na || field.is_empty() {
        return Ok(None);
    }
    let bad = || CliError::input(format!("{}: line {line}: label '{field}' is not a positive integer", path.display()));
    let v: f64 = field.parse().map_err(|_| bad())?;
    if v < 1.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(bad());
    }
    Ok(Some(v as usize))
}

/// Reads a rectangular numeric CSV. `label_col` names a column holding
/// one-based class labels (or the unlabeled marker) that is split off.
pub fn read_dataset(path: &Path, opts: &CsvOptions, label_col: Option<&str>) -> CliResult<Dataset> {
    let mut rdr = reader(path, opts)?;
    let header: Option<Vec<String>> = if opts.header {
        let h = rdr.headers().map_err(|e| csv_error(path, e))?;
        Some(h.iter().map(str::to_string).collect())
    } else {
        None
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<Option<usize>> = Vec::new();
    let mut names = header.clone();
    let mut label_idx: Option<usize> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if names.is_none() {
            names = Some((1..=rec.len()).map(|j| format!("x{j}")).collect());
        }
        if label_idx.is_none() {
            if let Some(spec) = label_col {
                label_idx = Some(resolve_column(spec, names.as_ref().unwrap(), path)?);
            }
        }
        let mut row = Vec::with_capacity(rec.len());
        for (j, field) in rec.iter().enumerate() {
            if Some(j) == label_idx {
                labels.push(parse_label(field, opts, line, path)?);
                continue;
            }
            let v: f64 = field.parse().map_err(|_| {
                CliError::input(format!("{}: line {line}, column {}: '{field}' is not a number", path.display(), j + 1))
            })?;
            if !v.is_finite() {
                return Err(CliError::input(format!(
                    "{}: line {line}, column {}: non-finite value '{field}'",
                    path.display(),
                    j + 1
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::input(format!("{}: no data rows", path.display())));
    }
    let names = names.unwrap();
    if let (Some(spec), None) = (label_col, label_idx) {
        resolve_column(spec, &names, path)?;
    }
    let p = rows[0].len();
    if p == 0 {
        return Err(CliError::input(format!("{}: no numeric columns", path.display())));
    }
    let columns: Vec<String> = names
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != label_idx)
        .map(|(_, n)| n.clone())
        .collect();
    Ok(Dataset {
        columns,
        data: DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]),
        labels: label_idx.map(|_| labels),
        label_name: label_idx.map(|j| names[j].clone()),
    })
}

/// Reads one label column (the first unless `column` is given).
pub fn read_labels(path: &Path, opts: &CsvOptions, column: Option<&str>) -> CliResult<Vec<Option<usize>>> {
    let mut rdr = reader(path, opts)?;
    let names: Option<Vec<String>> = if opts.header {
        Some(rdr.headers().map_err(|e| csv_error(path, e))?.iter().map(str::to_string).collect())
    } else {
        None
    };
    let mut out = Vec::new();
    let mut idx: Option<usize> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if idx.is_none() {
            let names = names.clone().unwrap_or_else(|| (1..=rec.len()).map(|j| format!("x{j}")).collect());
            idx = Some(match column {
                Some(spec) => resolve_column(spec, &names, path)?,
                None => 0,
            });
        }
        out.push(parse_label(&rec[idx.unwrap()], opts, line, path)?);
    }
    Ok(out)
}

fn writer(path: &Path) -> CliResult<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| CliError::input(format!("cannot create {}: {e}", path.display())))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::input(format!("writing {}: {e}", path.display()))
}

/// Writes a CSV with the given header and pre-formatted rows.
pub fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| write_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| write_err(path, e))
}

/// Single-column `label` CSV of one-based labels.
pub fn write_labels(path: &Path, labels: &[usize]) -> CliResult<()> {
    write_rows(path, &["label"], labels.iter().map(|l| vec![l.to_string()]))
}

/// Numeric matrix with a header, optionally followed by a `label` column.
pub fn write_matrix(path: &Path, names: &[String], data: &DMatrix<f64>, labels: Option<&[usize]>) -> CliResult<()> {
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    if labels.is_some() {
        header.push("label");
    }
    let rows = (0..data.nrows()).map(|i| {
        let mut r: Vec<String> = data.row(i).iter().map(|v| v.to_string()).collect();
        if let Some(l) = labels {
            r.push(l[i].to_string());
        }
        r
    });
    write_rows(path, &header, rows)
}
