//! The workflows behind each subcommand. Every `cmd_*` function reads its
//! inputs, writes its artifacts into `out_dir`, and returns what it wrote.

use std::path::{Path, PathBuf};

use ghmix::densities::{mixture_log_density, Family};
use ghmix::inference::{fit, fit_classification, fit_discriminant, predict, FitConfig, FitResult};
use ghmix::labels::{ari, confusion, Confusion, LabelVector};
use ghmix::selection::{bic_value, count_free_params, select, FitStatus, ModelScore};
use ghmix::simulate::{generate_scenario, Generator, ScenarioSpec};
use nalgebra::DMatrix;

use crate::data::{read_dataset, read_labels, write_labels, write_matrix, write_rows, CsvOptions, Dataset};
use crate::error::{CliError, CliResult};
use crate::model_doc::ModelDocument;
use crate::{parse_families, parse_g_range, Command, CsvArgs, FitArgs};

const CONTOUR_GRID: usize = 50;

fn config(fit: &FitArgs, family: Family, g: usize) -> CliResult<FitConfig> {
    let mut c = FitConfig::new(family, g);
    c.scale_data = fit.scale;
    c.seed = fit.seed;
    c.max_iter = fit.max_iter;
    c.epsilon = fit.epsilon;
    c.n_restarts = fit.restarts;
    c.validate().map_err(|e| CliError::from_core(e, "configuration"))?;
    Ok(c)
}

fn single_family(fit: &FitArgs) -> CliResult<Family> {
    let fams = parse_families(fit.family.as_deref().unwrap_or("mcghd"))?;
    match fams.as_slice() {
        [f] => Ok(*f),
        _ => Err(CliError::input("this command takes a single --family")),
    }
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))
}

fn one_based(labels: &[usize]) -> Vec<usize> {
    labels.iter().map(|l| l + 1).collect()
}

/// ARI of one-based `fitted` against optional truth, over rows labeled in both.
fn score_against(fitted: &[usize], truth: &[Option<usize>]) -> CliResult<f64> {
    let a = LabelVector::new(fitted.to_vec())?;
    let b = LabelVector::from_options(truth)?;
    Ok(ari(&a, &b)?)
}

fn score_row(s: &ModelScore) -> Vec<String> {
    let status = match &s.status {
        FitStatus::Ok => "ok".to_string(),
        FitStatus::Failed(msg) => format!("failed: {msg}"),
    };
    vec![
        s.family.name().into(),
        s.g.to_string(),
        s.loglik.to_string(),
        s.rho.to_string(),
        s.bic.to_string(),
        s.converged.to_string(),
        status,
    ]
}

fn write_scores(path: &Path, scores: &[ModelScore]) -> CliResult<()> {
    write_rows(path, &["family", "G", "loglik", "rho", "bic", "converged", "status"], scores.iter().map(score_row))
}

#[derive(Debug, Clone)]
pub struct ClusterOutcome {
    /// One-based MAP labels.
    pub labels: Vec<usize>,
    pub scores: Vec<ModelScore>,
    pub family: Family,
    pub g: usize,
    /// ARI against the label column, when one was given.
    pub ari: Option<f64>,
    pub document: ModelDocument,
    pub files: Vec<PathBuf>,
}

/// Fits one model, or sweeps every `(G, family)` pair by BIC, then writes
/// `labels.csv`, `model.json`, `scores.csv` (and `contours.csv` on request).
pub fn cmd_cluster(
    data_path: &Path,
    g_spec: &str,
    families: &[Family],
    fit_args: &FitArgs,
    csv: &CsvArgs,
    out_dir: &Path,
    contours: bool,
) -> CliResult<ClusterOutcome> {
    let gs = parse_g_range(g_spec)?;
    let opts = csv.options()?;
    let ds = read_dataset(data_path, &opts, csv.labels_col.as_deref())?;
    if contours && ds.data.ncols() != 2 {
        return Err(CliError::input(format!("--contours needs two-dimensional data, got {} columns", ds.data.ncols())));
    }
    let (n, p) = ds.data.shape();
    let (result, scores) = if gs.len() == 1 && families.len() == 1 {
        let (g, family) = (gs[0], families[0]);
        let res = fit(&ds.data, &config(fit_args, family, g)?)
            .map_err(|e| CliError::from_core(e, &format!("fit with G = {g}, family {family}")))?;
        let rho = count_free_params(family, g, p);
        let score = ModelScore {
            family,
            g,
            loglik: res.loglik(),
            rho,
            bic: bic_value(res.loglik(), rho, n),
            converged: res.converged,
            status: FitStatus::Ok,
        };
        (res, vec![score])
    } else {
        let base = config(fit_args, families[0], gs[0])?;
        let sel = select(&ds.data, &gs, families, &base).map_err(|e| CliError::from_core(e, "model selection"))?;
        match sel.best_fit {
            Some(best) => (best, sel.scores),
            None => {
                let failures: Vec<String> = sel
                    .scores
                    .iter()
                    .filter_map(|s| match &s.status {
                        FitStatus::Failed(m) => Some(format!("(G = {}, {}): {m}", s.g, s.family)),
                        FitStatus::Ok => None,
                    })
                    .collect();
                return Err(CliError::Degenerate(format!("every fit failed: {}", failures.join("; "))));
            }
        }
    };
    ensure_dir(out_dir)?;
    let labels = one_based(&result.map_labels);
    let document = ModelDocument::from_fit(&result, &ds.columns, fit_args.seed, n);
    let mut files = vec![out_dir.join("labels.csv"), out_dir.join("model.json"), out_dir.join("scores.csv")];
    write_labels(&files[0], &labels)?;
    document.write(&files[1])?;
    write_scores(&files[2], &scores)?;
    if contours {
        let path = out_dir.join("contours.csv");
        write_contours(&path, &ds.data, &result)?;
        files.push(path);
    }
    let ari = match &ds.labels {
        Some(truth) => Some(score_against(&labels, truth)?),
        None => None,
    };
    Ok(ClusterOutcome {
        labels,
        scores,
        family: result.model.family,
        g: result.model.g(),
        ari,
        document,
        files,
    })
}

/// `(x, y, density)` on a regular grid spanning the data plus a 10% margin,
/// with the density expressed in the original (unscaled) units.
fn write_contours(path: &Path, data: &DMatrix<f64>, res: &FitResult) -> CliResult<()> {
    let axis = |j: usize| {
        let col = data.column(j);
        let (lo, hi) = (col.min(), col.max());
        let pad = 0.1 * (hi - lo).max(1e-8);
        let (lo, hi) = (lo - pad, hi + pad);
        (0..CONTOUR_GRID)
            .map(move |k| lo + (hi - lo) * k as f64 / (CONTOUR_GRID - 1) as f64)
            .collect::<Vec<_>>()
    };
    let (xs, ys) = (axis(0), axis(1));
    let (mean, sd) = match &res.scaling {
        Some(s) => (s.mean.clone(), s.sd.clone()),
        None => (vec![0.0; 2], vec![1.0; 2]),
    };
    let log_jac = -(sd[0].ln() + sd[1].ln());
    let mut rows = Vec::with_capacity(xs.len() * ys.len());
    for x in &xs {
        for y in &ys {
            let z = [(x - mean[0]) / sd[0], (y - mean[1]) / sd[1]];
            let d = (mixture_log_density(&z, &res.model)? + log_jac).exp();
            rows.push(vec![x.to_string(), y.to_string(), d.to_string()]);
        }
    }
    write_rows(path, &["x", "y", "density"], rows)
}

#[derive(Debug, Clone)]
pub struct ClassifyOutcome {
    /// One-based label of every row (given labels kept, the rest predicted).
    pub labels: Vec<usize>,
    /// `(1-based row, predicted label)` for the unlabeled rows.
    pub predictions: Vec<(usize, usize)>,
    /// ARI of the predictions against `--truth`, if supplied.
    pub ari: Option<f64>,
    pub files: Vec<PathBuf>,
}

pub fn cmd_classify(
    data_path: &Path,
    g: Option<usize>,
    truth: Option<&Path>,
    fit_args: &FitArgs,
    csv: &CsvArgs,
    out_dir: &Path,
) -> CliResult<ClassifyOutcome> {
    let opts = csv.options()?;
    let col = csv
        .labels_col
        .as_deref()
        .ok_or_else(|| CliError::input("classify needs --labels-col naming the partial label column"))?;
    let ds = read_dataset(data_path, &opts, Some(col))?;
    let given = ds.labels.clone().expect("label column requested");
    let max_label = given.iter().flatten().copied().max().unwrap_or(0);
    let g = g.unwrap_or(max_label);
    if g == 0 {
        return Err(CliError::input(format!("{}: no labeled rows", data_path.display())));
    }
    if let Some(i) = given.iter().position(|l| l.is_some_and(|l| l > g)) {
        return Err(CliError::input(format!(
            "{}: data row {} has label {} outside 1..{g}",
            data_path.display(),
            i + 1,
            given[i].unwrap()
        )));
    }
    let zero: Vec<Option<usize>> = given.iter().map(|l| l.map(|v| v - 1)).collect();
    let family = single_family(fit_args)?;
    let res = fit_classification(&ds.data, &zero, &config(fit_args, family, g)?)
        .map_err(|e| CliError::from_core(e, &format!("classification with G = {g}, family {family}")))?;
    let labels = one_based(&res.map_labels);
    let predictions: Vec<(usize, usize)> =
        (0..labels.len()).filter(|i| given[*i].is_none()).map(|i| (i + 1, labels[i])).collect();
    let ari = match truth {
        Some(path) if !predictions.is_empty() => {
            let t = read_labels(path, &opts, None)?;
            if t.len() != labels.len() {
                return Err(CliError::input(format!(
                    "{}: {} labels for {} data rows",
                    path.display(),
                    t.len(),
                    labels.len()
                )));
            }
            let fitted: Vec<usize> = predictions.iter().map(|(_, l)| *l).collect();
            let want: Vec<Option<usize>> = predictions.iter().map(|(i, _)| t[i - 1]).collect();
            Some(score_against(&fitted, &want)?)
        }
        _ => None,
    };
    ensure_dir(out_dir)?;
    let files = vec![out_dir.join("labels.csv"), out_dir.join("predictions.csv"), out_dir.join("model.json")];
    write_labels(&files[0], &labels)?;
    write_rows(&files[1], &["row", "label"], predictions.iter().map(|(i, l)| vec![i.to_string(), l.to_string()]))?;
    ModelDocument::from_fit(&res, &ds.columns, fit_args.seed, labels.len()).write(&files[2])?;
    Ok(ClassifyOutcome {
        labels,
        predictions,
        ari,
        files,
    })
}

#[derive(Debug, Clone)]
pub struct DaOutcome {
    /// One-based labels of the test rows.
    pub labels: Vec<usize>,
    /// ARI against the test file's own label column, when it has one.
    pub ari: Option<f64>,
    pub files: Vec<PathBuf>,
}

/// Reads the test file, splitting off the label column only if the file has
/// one more column than the training features.
fn read_test(path: &Path, opts: &CsvOptions, csv: &CsvArgs, p: usize) -> CliResult<Dataset> {
    let ds = read_dataset(path, opts, None)?;
    match (ds.data.ncols(), csv.labels_col.as_deref()) {
        (c, _) if c == p => Ok(ds),
        (c, Some(col)) if c == p + 1 => read_dataset(path, opts, Some(col)),
        (c, _) => Err(CliError::input(format!(
            "{}: {c} columns, but the training data has {p} feature columns",
            path.display()
        ))),
    }
}

pub fn cmd_da(train: &Path, test: &Path, fit_args: &FitArgs, csv: &CsvArgs, out_dir: &Path) -> CliResult<DaOutcome> {
    let opts = csv.options()?;
    let col = csv
        .labels_col
        .as_deref()
        .ok_or_else(|| CliError::input("da needs --labels-col naming the training label column"))?;
    let tr = read_dataset(train, &opts, Some(col))?;
    let given = tr.labels.clone().expect("label column requested");
    if let Some(i) = given.iter().position(Option::is_none) {
        return Err(CliError::input(format!("{}: training row {} is unlabeled", train.display(), i + 1)));
    }
    let zero: Vec<usize> = given.iter().map(|l| l.unwrap() - 1).collect();
    let g = zero.iter().max().unwrap() + 1;
    let te = read_test(test, &opts, csv, tr.data.ncols())?;
    let family = single_family(fit_args)?;
    let (assigned, res) = fit_discriminant(&tr.data, &zero, &te.data, &config(fit_args, family, g)?)
        .map_err(|e| CliError::from_core(e, &format!("discriminant fit with G = {g}, family {family}")))?;
    let labels = one_based(&assigned);
    let ari = match &te.labels {
        Some(t) => Some(score_against(&labels, t)?),
        None => None,
    };
    ensure_dir(out_dir)?;
    let files = vec![out_dir.join("labels.csv"), out_dir.join("model.json")];
    write_labels(&files[0], &labels)?;
    ModelDocument::from_fit(&res, &tr.columns, fit_args.seed, tr.data.nrows()).write(&files[1])?;
    Ok(DaOutcome { labels, ari, files })
}

/// Labels `data_path` with a saved model, applying its recorded scaling.
pub fn cmd_predict(model_path: &Path, data_path: &Path, csv: &CsvArgs, out_dir: &Path) -> CliResult<Vec<usize>> {
    let doc = ModelDocument::read(model_path)?;
    let model = doc.model()?;
    let ds = read_dataset(data_path, &csv.options()?, csv.labels_col.as_deref())?;
    if ds.data.ncols() != doc.columns.len() {
        return Err(CliError::input(format!(
            "{}: {} columns, but the model was fitted on {}",
            data_path.display(),
            ds.data.ncols(),
            doc.columns.len()
        )));
    }
    let x = match doc.scaling() {
        Some(s) => s.apply(&ds.data),
        None => ds.data.clone(),
    };
    let labels = one_based(&predict(&model, &x)?);
    ensure_dir(out_dir)?;
    write_labels(&out_dir.join("labels.csv"), &labels)?;
    Ok(labels)
}

/// Writes `data.csv` (features plus `label`), `truth.csv` and the echoed
/// scenario in `scenario.json`.
pub fn cmd_simulate(spec: &ScenarioSpec, out_dir: &Path) -> CliResult<(DMatrix<f64>, Vec<usize>)> {
    spec.validate().map_err(|e| CliError::from_core(e, "scenario"))?;
    let (data, labels) = generate_scenario(spec)?;
    ensure_dir(out_dir)?;
    let names: Vec<String> = (1..=spec.p).map(|j| format!("x{j}")).collect();
    write_matrix(&out_dir.join("data.csv"), &names, &data, Some(&labels))?;
    write_labels(&out_dir.join("truth.csv"), &labels)?;
    let sidecar = serde_json::json!({
        "generator": spec.generator.name(),
        "p": spec.p,
        "G": spec.g,
        "n_per_component": spec.n_per_component,
        "hypercube_side": spec.hypercube_side,
        "corr_range": [spec.corr_range.0, spec.corr_range.1],
        "skew_range": [spec.skew_range.0, spec.skew_range.1],
        "omega": spec.omega_fixed,
        "lambda": spec.lambda_fixed,
        "seed": spec.seed,
    });
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| CliError::Numeric(e.to_string()))? + "\n";
    std::fs::write(out_dir.join("scenario.json"), text)?;
    Ok((data, labels))
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub ari: f64,
    pub confusion: Confusion,
}

pub fn cmd_eval(a: &Path, b: &Path, csv: &CsvArgs) -> CliResult<EvalOutcome> {
    let opts = csv.options()?;
    let la = read_labels(a, &opts, csv.labels_col.as_deref())?;
    let lb = read_labels(b, &opts, csv.labels_col.as_deref())?;
    if la.len() != lb.len() {
        return Err(CliError::input(format!(
            "{} has {} labels but {} has {}",
            a.display(),
            la.len(),
            b.display(),
            lb.len()
        )));
    }
    let (va, vb) = (LabelVector::from_options(&la)?, LabelVector::from_options(&lb)?);
    Ok(EvalOutcome {
        ari: ari(&va, &vb)?,
        confusion: confusion(&va, &vb)?,
    })
}

fn eval_json(out: &EvalOutcome) -> serde_json::Value {
    let c = &out.confusion;
    let counts: Vec<Vec<usize>> =
        (0..c.counts.nrows()).map(|r| (0..c.counts.ncols()).map(|k| c.counts[(r, k)]).collect()).collect();
    serde_json::json!({
        "ari": out.ari,
        "misclassification": c.misclassification,
        "row_labels": c.row_labels,
        "col_labels": c.col_labels,
        "counts": counts,
        "matching": c.matching,
    })
}

fn print_confusion(c: &Confusion) {
    let mut head = String::from("      ");
    for l in &c.col_labels {
        head.push_str(&format!("{l:>6}"));
    }
    println!("{head}");
    for (r, l) in c.row_labels.iter().enumerate() {
        let mut line = format!("{l:>6}");
        for k in 0..c.col_labels.len() {
            line.push_str(&format!("{:>6}", c.counts[(r, k)]));
        }
        println!("{line}");
    }
}

fn fmt_ari(ari: Option<f64>) -> String {
    ari.map(|a| format!(", ARI {a:.4}")).unwrap_or_default()
}

pub(crate) fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Cluster {
            data,
            g,
            fit,
            csv,
            out_dir,
            contours,
        } => {
            let families = parse_families(fit.family.as_deref().unwrap_or("mcghd"))?;
            let out = cmd_cluster(&data, &g, &families, &fit, &csv, &out_dir, contours)?;
            report_cluster(&out);
        }
        Command::Select {
            data,
            g,
            fit,
            csv,
            out_dir,
        } => {
            let families = parse_families(fit.family.as_deref().unwrap_or("all"))?;
            let out = cmd_cluster(&data, &g, &families, &fit, &csv, &out_dir, false)?;
            for s in &out.scores {
                println!("{}", score_row(s).join(","));
            }
            report_cluster(&out);
        }
        Command::Classify {
            data,
            g,
            truth,
            fit,
            csv,
            out_dir,
        } => {
            let out = cmd_classify(&data, g, truth.as_deref(), &fit, &csv, &out_dir)?;
            if out.predictions.is_empty() {
                println!("all rows are labeled; nothing to predict");
            } else {
                println!("predicted {} unlabeled rows{}", out.predictions.len(), fmt_ari(out.ari));
            }
        }
        Command::Da {
            train,
            test,
            fit,
            csv,
            out_dir,
        } => {
            let out = cmd_da(&train, &test, &fit, &csv, &out_dir)?;
            println!("labeled {} test rows{}", out.labels.len(), fmt_ari(out.ari));
        }
        Command::Predict {
            model,
            data,
            csv,
            out_dir,
        } => {
            let labels = cmd_predict(&model, &data, &csv, &out_dir)?;
            println!("labeled {} rows", labels.len());
        }
        Command::Simulate {
            generator,
            p,
            g,
            n_per_component,
            seed,
            out_dir,
        } => {
            let mut spec = ScenarioSpec::new(Generator::parse(&generator)?, p, g, seed);
            spec.n_per_component = n_per_component;
            let (data, _) = cmd_simulate(&spec, &out_dir)?;
            println!("wrote {} x {} scenario to {}", data.nrows(), data.ncols(), out_dir.display());
        }
        Command::Eval { a, b, csv, json } => {
            let out = cmd_eval(&a, &b, &csv)?;
            if json {
                println!("{}", eval_json(&out));
            } else {
                println!("ARI {:.6}", out.ari);
                println!("misclassification {:.6}", out.confusion.misclassification);
                print_confusion(&out.confusion);
            }
        }
    }
    Ok(())
}

fn report_cluster(out: &ClusterOutcome) {
    let best = out.scores.iter().find(|s| s.family == out.family && s.g == out.g);
    println!(
        "best model: {} with G = {} (BIC {:.4}){}",
        out.family,
        out.g,
        best.map_or(f64::NAN, |s| s.bic),
        fmt_ari(out.ari)
    );
}
