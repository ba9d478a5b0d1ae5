//! The generalized EM driver and its semi-supervised variants.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::estep::{e_step, EStepCache, SufficientStats};
use super::kmeans::kmeans_init;
use super::mstep::{
    fix_column_signs, m_step_gamma, m_step_gig_hyper, m_step_location_skewness, m_step_mixing,
    m_step_phi, PHI_FLOOR,
};
use crate::densities::{CghdComponent, Family, MixtureModel};
use crate::error::{Error, Result};
use crate::gig::{gig_expectations, GigParams};
use crate::selection;

/// Starting responsibilities.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    KMeans,
    /// Zero-based component of every observation.
    Labels(Vec<usize>),
    /// Random soft responsibilities drawn from the seed.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub family: Family,
    pub g: usize,
    pub max_iter: usize,
    /// Aitken threshold.
    pub epsilon: f64,
    pub init: Init,
    pub seed: u64,
    /// Lower bound for `lambda_j`; `None` selects the family default
    /// (`1 + 1e-4` under McMSGHD, unbounded otherwise).
    pub lambda_floor: Option<f64>,
    /// Standardize every column before fitting.
    pub scale_data: bool,
    /// Independent starts (seeds `seed, seed + 1, ...`); the best final
    /// log-likelihood wins.
    pub n_restarts: usize,
}

impl FitConfig {
    pub fn new(family: Family, g: usize) -> Self {
        Self {
            family,
            g,
            max_iter: 500,
            epsilon: 0.01,
            init: Init::KMeans,
            seed: 1,
            lambda_floor: None,
            scale_data: false,
            n_restarts: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.g == 0 {
            return Err(Error::invalid("G must be at least 1"));
        }
        if self.max_iter < 2 {
            return Err(Error::invalid("max_iter must be at least 2"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if self.n_restarts == 0 {
            return Err(Error::invalid("n_restarts must be at least 1"));
        }
        Ok(())
    }

    fn effective_lambda_floor(&self) -> Option<f64> {
        match (self.lambda_floor, self.family) {
            (Some(f), _) => Some(f),
            (None, Family::McMsghd) => Some(super::mstep::MCMSGHD_LAMBDA_FLOOR),
            _ => None,
        }
    }
}

/// Per-column standardization applied before fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Scaling {
    /// Column means and sample standard deviations; constant columns keep sd 1.
    pub fn from_data(data: &DMatrix<f64>) -> Self {
        let (n, p) = data.shape();
        let mut mean = vec![0.0; p];
        let mut sd = vec![1.0; p];
        for j in 0..p {
            let col = data.column(j);
            let m = col.sum() / n as f64;
            let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
            mean[j] = m;
            if v > 0.0 {
                sd[j] = v.sqrt();
            }
        }
        Self { mean, sd }
    }

    pub fn apply(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(data.nrows(), data.ncols(), |i, j| (data[(i, j)] - self.mean[j]) / self.sd[j])
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Parameters in the coordinates the fit ran in (standardized if `scaling` is set).
    pub model: MixtureModel,
    pub loglik_trace: Vec<f64>,
    pub bic: f64,
    /// Zero-based MAP component of every observation.
    pub map_labels: Vec<usize>,
    pub zhat: DMatrix<f64>,
    pub converged: bool,
    pub n_iter: usize,
    pub scaling: Option<Scaling>,
}

impl FitResult {
    pub fn loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace is never empty")
    }
}

/// Aitken stopping rule on the last three log-likelihoods: converged iff
/// `0 <= l_inf - l_last < epsilon`.
pub fn aitken_converged(trace: &[f64], epsilon: f64) -> bool {
    let k = trace.len();
    if k < 3 {
        return false;
    }
    let (l0, l1, l2) = (trace[k - 3], trace[k - 2], trace[k - 1]);
    let prev = l1 - l0;
    let step = l2 - l1;
    if prev == 0.0 {
        return step.abs() <= 1e-12;
    }
    let a = step / prev;
    if a == 1.0 {
        return false;
    }
    let l_inf = l1 + step / (1.0 - a);
    let diff = l_inf - l2;
    (0.0..epsilon).contains(&diff)
}

/// Zero-based arg max of every row, ties to the lowest index.
pub fn map_rows(zhat: &DMatrix<f64>) -> Vec<usize> {
    (0..zhat.nrows())
        .map(|i| {
            let mut best = 0;
            for k in 1..zhat.ncols() {
                if zhat[(i, k)] > zhat[(i, best)] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

fn check_data(data: &DMatrix<f64>) -> Result<()> {
    if data.nrows() == 0 || data.ncols() == 0 {
        return Err(Error::invalid("data matrix is empty"));
    }
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        let (i, j) = (pos % data.nrows(), pos / data.nrows());
        return Err(Error::invalid(format!(
            "non-finite value at row {}, column {}",
            i + 1,
            j + 1
        )));
    }
    Ok(())
}

/// Starting latent-weight law per family: inverse Gaussian `(1, -1/2)` for the
/// GHD branch and, for the convex family, `lambda_j = 3/2`.
fn start_lambda(family: Family) -> f64 {
    if family == Family::McMsghd {
        1.5
    } else {
        -0.5
    }
}

fn start_varpi(family: Family) -> f64 {
    family.fixed_varpi().unwrap_or(0.5)
}

/// Parameters from weighted means and covariances of the responsibilities.
pub fn init_model(data: &DMatrix<f64>, z: &DMatrix<f64>, family: Family) -> Result<MixtureModel> {
    let (n, p) = data.shape();
    let g = z.ncols();
    let lambda = start_lambda(family);
    // E[W] of the starting weight law, used to turn a covariance into a scale
    let ew = gig_expectations(&GigParams::new(1.0, 1.0, lambda)?)?.e_w;
    let ew0 = gig_expectations(&GigParams::new(1.0, 1.0, -0.5)?)?.e_w;
    let scale_div = match family {
        Family::Mghd => ew0,
        Family::Mcghd => 0.5 * (ew0 + ew),
        _ => ew,
    };
    let mut pi = Vec::with_capacity(g);
    let mut comps = Vec::with_capacity(g);
    for k in 0..g {
        let w = z.column(k);
        let ng = w.sum();
        if ng < (p + 1) as f64 {
            return Err(Error::Degenerate {
                reason: format!("initial component {} has size {ng:.3} < p + 1 = {}", k + 1, p + 1),
                trace: Vec::new(),
            });
        }
        let mean = DVector::from_fn(p, |j, _| (0..n).map(|i| w[i] * data[(i, j)]).sum::<f64>() / ng);
        let mut cov = DMatrix::zeros(p, p);
        for i in 0..n {
            let d = data.row(i).transpose() - &mean;
            cov.ger(w[i] / ng, &d, &d, 1.0);
        }
        let ridge = 1e-8 * (cov.trace() / p as f64).max(1e-300);
        for j in 0..p {
            cov[(j, j)] += ridge;
        }
        let eig = SymmetricEigen::new(cov);
        let mut comp = CghdComponent::spherical(DVector::zeros(p), 1.0, lambda, start_varpi(family));
        comp.lambda0 = -0.5;
        comp.gamma = eig.eigenvectors;
        comp.phi = eig.eigenvalues.map(|v| (v / scale_div).max(PHI_FLOOR));
        comp.mu = comp.gamma.tr_mul(&mean);
        fix_column_signs(&mut comp);
        pi.push(ng / n as f64);
        comps.push(comp);
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    MixtureModel::new(family, pi, comps)
}

fn responsibilities(data: &DMatrix<f64>, config: &FitConfig, seed: u64) -> Result<DMatrix<f64>> {
    let n = data.nrows();
    let g = config.g;
    match &config.init {
        Init::KMeans => kmeans_init(data, g, seed),
        Init::Labels(labels) => {
            if labels.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: labels.len(),
                });
            }
            let mut z = DMatrix::zeros(n, g);
            for (i, l) in labels.iter().enumerate() {
                if *l >= g {
                    return Err(Error::invalid(format!(
                        "initial label {} at row {} exceeds G = {g}",
                        l + 1,
                        i + 1
                    )));
                }
                z[(i, *l)] = 1.0;
            }
            Ok(z)
        }
        Init::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut z = DMatrix::zeros(n, g);
            for i in 0..n {
                let mut total = 0.0;
                for k in 0..g {
                    let e = -(1.0 - rng.random::<f64>()).ln();
                    z[(i, k)] = e;
                    total += e;
                }
                for k in 0..g {
                    z[(i, k)] /= total;
                }
            }
            Ok(z)
        }
    }
}

fn with_trace(err: Error, trace: &[f64]) -> Error {
    match err {
        Error::Degenerate { reason, .. } => Error::Degenerate {
            reason,
            trace: trace.to_vec(),
        },
        other => other,
    }
}

/// Applies one full M-step to `model` in place.
fn m_step(data: &DMatrix<f64>, cache: &EStepCache, model: &mut MixtureModel) -> Result<()> {
    let stats = SufficientStats::from_cache(cache);
    let (pi, varpi) = m_step_mixing(cache, model.family)?;
    model.pi = pi;
    for (comp, v) in model.components.iter_mut().zip(varpi) {
        comp.varpi = v;
    }
    let (mus, betas) = m_step_location_skewness(cache, &stats);
    for ((comp, mu), beta) in model.components.iter_mut().zip(mus).zip(betas) {
        comp.mu = mu;
        comp.beta = beta;
    }
    let phis = m_step_phi(cache, &stats, model);
    for (comp, phi) in model.components.iter_mut().zip(phis) {
        comp.phi = phi;
    }
    let gammas = m_step_gamma(data, cache, model)?;
    for (comp, gamma) in model.components.iter_mut().zip(gammas) {
        comp.gamma = gamma;
        fix_column_signs(comp);
    }
    let hyper = m_step_gig_hyper(&stats, model);
    for (comp, h) in model.components.iter_mut().zip(hyper) {
        comp.omega = h.omega;
        comp.lambda = h.lambda;
        comp.omega0 = h.omega0;
        comp.lambda0 = h.lambda0;
    }
    Ok(())
}

/// GEM iterations from a given starting model.
pub fn run_em(
    data: &DMatrix<f64>,
    mut model: MixtureModel,
    config: &FitConfig,
    fixed: Option<&[Option<usize>]>,
) -> Result<FitResult> {
    config.validate()?;
    if let Some(floor) = config.effective_lambda_floor() {
        for comp in &mut model.components {
            comp.lambda.iter_mut().for_each(|l| *l = l.max(floor));
        }
    }
    let mut trace = Vec::new();
    let mut converged = false;
    let cache = loop {
        let cache = e_step(data, &model, fixed).map_err(|e| with_trace(e, &trace))?;
        trace.push(cache.loglik);
        if aitken_converged(&trace, config.epsilon) {
            converged = true;
            break cache;
        }
        if trace.len() >= config.max_iter {
            break cache;
        }
        let mut next = model.clone();
        m_step(data, &cache, &mut next).map_err(|e| with_trace(e, &trace))?;
        if let Some(floor) = config.lambda_floor {
            for comp in &mut next.components {
                comp.lambda.iter_mut().for_each(|l| *l = l.max(floor));
            }
        }
        model = next;
    };
    let n = data.nrows();
    let map_labels = map_rows(&cache.zhat);
    let loglik = cache.loglik;
    let rho = selection::count_free_params(model.family, model.g(), model.dim());
    Ok(FitResult {
        bic: selection::bic_value(loglik, rho, n),
        n_iter: trace.len(),
        loglik_trace: trace,
        map_labels,
        zhat: cache.zhat,
        converged,
        model,
        scaling: None,
    })
}

fn prepare(data: &DMatrix<f64>, config: &FitConfig) -> Result<(DMatrix<f64>, Option<Scaling>)> {
    config.validate()?;
    check_data(data)?;
    let (n, p) = data.shape();
    if n <= config.g * (p + 1) {
        return Err(Error::invalid(format!(
            "need n > G (p + 1) observations (n = {n}, G = {}, p = {p})",
            config.g
        )));
    }
    if config.scale_data {
        let s = Scaling::from_data(data);
        Ok((s.apply(data), Some(s)))
    } else {
        Ok((data.clone(), None))
    }
}

/// Keeps the better of two restart outcomes; errors lose to any success.
fn best_of(a: Option<Result<FitResult>>, b: Result<FitResult>) -> Result<FitResult> {
    match (a, b) {
        (None, b) => b,
        (Some(Ok(a)), Ok(b)) => Ok(if b.loglik() > a.loglik() { b } else { a }),
        (Some(Ok(a)), Err(_)) => Ok(a),
        (Some(Err(_)), b) => b,
    }
}

/// Unsupervised fit.
pub fn fit(data: &DMatrix<f64>, config: &FitConfig) -> Result<FitResult> {
    let (x, scaling) = prepare(data, config)?;
    let mut best: Option<Result<FitResult>> = None;
    for r in 0..config.n_restarts {
        let seed = config.seed.wrapping_add(r as u64);
        let attempt = responsibilities(&x, config, seed)
            .and_then(|z| init_model(&x, &z, config.family))
            .and_then(|m| run_em(&x, m, config, None));
        best = Some(best_of(best, attempt));
        if matches!(config.init, Init::Labels(_)) {
            break;
        }
    }
    let mut res = best.expect("at least one restart")?;
    res.scaling = scaling;
    Ok(res)
}

fn fixed_from_labels(labels: &[Option<usize>], g: usize, n: usize) -> Result<Vec<Option<usize>>> {
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    let mut seen = vec![false; g];
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            if *l >= g {
                return Err(Error::invalid(format!("label {} at row {} exceeds G = {g}", l + 1, i + 1)));
            }
            seen[*l] = true;
        }
    }
    if !labels.iter().any(Option::is_some) {
        return Err(Error::invalid("classification needs at least one labeled observation"));
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(Error::invalid(format!("class {} has no labeled observation", k + 1)));
    }
    Ok(labels.to_vec())
}

/// Semi-supervised fit: labeled observations keep indicator responsibilities
/// throughout; the model starts from the labeled observations alone.
pub fn fit_classification(data: &DMatrix<f64>, labels: &[Option<usize>], config: &FitConfig) -> Result<FitResult> {
    let (x, scaling) = prepare(data, config)?;
    let fixed = fixed_from_labels(labels, config.g, x.nrows())?;
    let labeled: Vec<usize> = (0..x.nrows()).filter(|i| fixed[*i].is_some()).collect();
    let sub = x.select_rows(&labeled);
    let mut z = DMatrix::zeros(labeled.len(), config.g);
    for (r, i) in labeled.iter().enumerate() {
        z[(r, fixed[*i].unwrap())] = 1.0;
    }
    let model = init_model(&sub, &z, config.family)?;
    let mut res = run_em(&x, model, config, Some(&fixed))?;
    res.scaling = scaling;
    Ok(res)
}

/// Discriminant analysis: fits every class on its training block and assigns
/// each test row to `argmax_g pi_g f_g(x)`, ties to the lower index. Returns
/// zero-based test labels and the training fit. Test data are transformed
/// with the training scaling when `config.scale_data` is set.
pub fn fit_discriminant(
    train: &DMatrix<f64>,
    train_labels: &[usize],
    test: &DMatrix<f64>,
    config: &FitConfig,
) -> Result<(Vec<usize>, FitResult)> {
    if test.ncols() != train.ncols() {
        return Err(Error::DimensionMismatch {
            expected: train.ncols(),
            found: test.ncols(),
        });
    }
    check_data(test)?;
    let labels: Vec<Option<usize>> = train_labels.iter().map(|l| Some(*l)).collect();
    let res = fit_classification(train, &labels, config)?;
    let test = match &res.scaling {
        Some(s) => s.apply(test),
        None => test.clone(),
    };
    let assigned = predict(&res.model, &test)?;
    Ok((assigned, res))
}

/// Zero-based `argmax_g pi_g f_g(x)` per row, ties to the lower index.
pub fn predict(model: &MixtureModel, data: &DMatrix<f64>) -> Result<Vec<usize>> {
    (0..data.nrows())
        .map(|i| {
            let x: Vec<f64> = data.row(i).iter().copied().collect();
            let w = model.weighted_component_log_densities(&x)?;
            let mut best = 0;
            for k in 1..w.len() {
                if w[k] > w[best] {
                    best = k;
                }
            }
            Ok(best)
        })
        .collect()
}
