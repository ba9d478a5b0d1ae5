//! Command-line workflows for ghmix: clustering, semi-supervised
//! classification, discriminant analysis, BIC selection, simulation and
//! label evaluation, all driven by CSV files.

pub mod commands;
pub mod data;
pub mod error;
pub mod model_doc;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ghmix::densities::Family;

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "ghmix", version, about = "Generalized hyperbolic mixture models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CsvArgs {
    /// Field delimiter (single character).
    #[arg(long, default_value = ",")]
    pub delimiter: char,
    /// The first line holds data, not column names.
    #[arg(long)]
    pub no_header: bool,
    /// Marker for an unlabeled row in the label column.
    #[arg(long, default_value = "NA")]
    pub na: String,
    /// Label column, by header name or 1-based index.
    #[arg(long)]
    pub labels_col: Option<String>,
}

impl CsvArgs {
    pub fn options(&self) -> CliResult<data::CsvOptions> {
        if !self.delimiter.is_ascii() {
            return Err(CliError::input(format!("delimiter '{}' must be a single ASCII character", self.delimiter)));
        }
        Ok(data::CsvOptions {
            delimiter: self.delimiter as u8,
            header: !self.no_header,
            na: self.na.clone(),
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Model family: mghd, mmsghd, mcmsghd, mcghd, a comma-separated list, or all.
    #[arg(long)]
    pub family: Option<String>,
    /// Standardize every column before fitting.
    #[arg(long)]
    pub scale: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Aitken stopping threshold.
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    /// Independent k-means starts per fit; the best log-likelihood is kept.
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a mixture (or sweep G/families by BIC) and write MAP labels.
    Cluster {
        data: PathBuf,
        /// Number of components, or an inclusive range such as 1..4.
        #[arg(long = "G")]
        g: String,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        csv: CsvArgs,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Also write a density grid for two-dimensional data.
        #[arg(long)]
        contours: bool,
    },
    /// BIC sweep; defaults to G in 1..4 over all four families.
    Select {
        data: PathBuf,
        #[arg(long = "G", default_value = "1..4")]
        g: String,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        csv: CsvArgs,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Semi-supervised fit: rows with a label keep it, the rest are predicted.
    Classify {
        data: PathBuf,
        /// Number of classes; defaults to the largest label present.
        #[arg(long = "G")]
        g: Option<usize>,
        /// Ground-truth labels for every row, scored on the unlabeled rows.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        csv: CsvArgs,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Discriminant analysis: fit on labeled training rows, label the test rows.
    Da {
        train: PathBuf,
        test: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        csv: CsvArgs,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Label new data with a saved model.
    Predict {
        model: PathBuf,
        data: PathBuf,
        #[command(flatten)]
        csv: CsvArgs,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Generate a simulation scenario.
    Simulate {
        /// gaussian, skew-normal, ghd or msghd.
        #[arg(long, default_value = "gaussian")]
        generator: String,
        #[arg(long, default_value_t = 2)]
        p: usize,
        #[arg(long = "G", default_value_t = 2)]
        g: usize,
        #[arg(long, default_value_t = 200)]
        n_per_component: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Adjusted Rand index and confusion table of two label files.
    Eval {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        csv: CsvArgs,
        /// Print a JSON document instead of text.
        #[arg(long)]
        json: bool,
    },
}

/// Parses `"3"` or an inclusive range `"1..4"`.
pub fn parse_g_range(spec: &str) -> CliResult<Vec<usize>> {
    let bad = || CliError::input(format!("--G expects a positive integer or a range a..b, got '{spec}'"));
    let parse = |s: &str| s.trim().parse::<usize>().ok().filter(|v| *v >= 1);
    match spec.split_once("..") {
        Some((a, b)) => {
            let a = parse(a).ok_or_else(bad)?;
            let b = parse(b.trim_start_matches('=')).ok_or_else(bad)?;
            if a > b {
                return Err(bad());
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![parse(spec).ok_or_else(bad)?]),
    }
}

/// Parses a family name, a comma-separated list, or `all`.
pub fn parse_families(spec: &str) -> CliResult<Vec<Family>> {
    if spec.eq_ignore_ascii_case("all") {
        return Ok(Family::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in spec.split(',') {
        let f = Family::parse(part.trim()).map_err(|e| CliError::input(e.to_string()))?;
        if !out.contains(&f) {
            out.push(f);
        }
    }
    Ok(out)
}

/// Runs one command, printing a short report to stdout.
pub fn run(cli: Cli) -> CliResult<()> {
    commands::dispatch(cli.command)
}
