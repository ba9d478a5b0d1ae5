//! Conditional maximizers of the expected complete-data log-likelihood.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};

use super::estep::{EStepCache, SufficientStats};
use crate::densities::{Family, MixtureModel};
use crate::error::{Error, Result};
use crate::specfun::{dlog_bessel_k_dnu, log_bessel_k, log_bessel_k_ratio};

pub const PHI_FLOOR: f64 = 1e-10;
pub const OMEGA_MIN: f64 = 1e-6;
pub const OMEGA_MAX: f64 = 500.0;
/// Lower bound on every `lambda_j` under the convex MSGHD family.
pub const MCMSGHD_LAMBDA_FLOOR: f64 = 1.0 + 1e-4;

const DENOM_TOL: f64 = 1e-10;
const GAMMA_SLACK: f64 = 1e-8;
const BACKTRACK: usize = 40;

static PHI_FLOOR_HITS: AtomicU64 = AtomicU64::new(0);
static REJECTED_HYPER_STEPS: AtomicU64 = AtomicU64::new(0);

/// Times a scale entry was raised to [`PHI_FLOOR`] in this process.
pub fn phi_floor_hits() -> u64 {
    PHI_FLOOR_HITS.load(Ordering::Relaxed)
}

/// Concentration/index steps discarded because they failed to improve `q`.
pub fn rejected_hyper_steps() -> u64 {
    REJECTED_HYPER_STEPS.load(Ordering::Relaxed)
}

/// `pi_g = n_g / n` and `varpi_g = sum_i u z / n_g`; fixed-`varpi` families
/// keep their value.
pub fn m_step_mixing(cache: &EStepCache, family: Family) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, g, p) = (cache.n(), cache.g(), cache.p());
    let mut pi = Vec::with_capacity(g);
    let mut varpi = Vec::with_capacity(g);
    for k in 0..g {
        let ng: f64 = cache.zhat.column(k).sum();
        if ng < (p + 1) as f64 {
            return Err(Error::Degenerate {
                reason: format!(
                    "component {} has effective size {ng:.3} < p + 1 = {}",
                    k + 1,
                    p + 1
                ),
                trace: Vec::new(),
            });
        }
        pi.push(ng / n as f64);
        let v = match family.fixed_varpi() {
            Some(v) => v,
            None => {
                let s: f64 = (0..n).map(|i| cache.uhat[(i, k)] * cache.zhat[(i, k)]).sum();
                (s / ng).clamp(0.0, 1.0)
            }
        };
        varpi.push(v);
    }
    Ok((pi, varpi))
}

/// Joint maximizer of the location and skewness of every component given the
/// current rotations. Falls back to the weighted mean and zero skewness when
/// the latent weights are numerically constant.
pub fn m_step_location_skewness(
    cache: &EStepCache,
    stats: &SufficientStats,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let (n, g, p) = (cache.n(), cache.g(), cache.p());
    let mut mus = Vec::with_capacity(g);
    let mut betas = Vec::with_capacity(g);
    for k in 0..g {
        let y = &cache.rotated[k];
        let mut mu = DVector::zeros(p);
        let mut beta = DVector::zeros(p);
        for j in 0..p {
            let (s1bar, s2bar) = (stats.s1bar[(k, j)], stats.s2bar[(k, j)]);
            let (mut num_mu, mut num_beta, mut den, mut mean) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..n {
                let z = cache.zhat[(i, k)];
                let s2 = cache.s2(i, j, k);
                let yij = y[(i, j)];
                num_mu += z * yij * (s1bar * s2 - 1.0);
                num_beta += z * yij * (s2bar - s2);
                den += z * (s1bar * s2 - 1.0);
                mean += z * yij;
            }
            if den.abs() < DENOM_TOL {
                mu[j] = mean / stats.n_g[k];
            } else {
                mu[j] = num_mu / den;
                beta[j] = num_beta / den;
            }
        }
        mus.push(mu);
        betas.push(beta);
    }
    (mus, betas)
}

/// Diagonal scales given updated location and skewness in `model`.
pub fn m_step_phi(cache: &EStepCache, stats: &SufficientStats, model: &MixtureModel) -> Vec<DVector<f64>> {
    let (n, p) = (cache.n(), cache.p());
    model
        .components
        .iter()
        .enumerate()
        .map(|(k, comp)| {
            DVector::from_fn(p, |j, _| {
                let beta = comp.beta[j];
                let mut acc = 0.0;
                for i in 0..n {
                    let z = cache.zhat[(i, k)];
                    let r = cache.rotated[k][(i, j)] - comp.mu[j];
                    acc += z * (cache.s2(i, j, k) * r * r - 2.0 * r * beta + cache.s1(i, j, k) * beta * beta);
                }
                let v = acc / stats.n_g[k];
                if v > PHI_FLOOR && v.is_finite() {
                    v
                } else {
                    PHI_FLOOR_HITS.fetch_add(1, Ordering::Relaxed);
                    PHI_FLOOR
                }
            })
        })
        .collect()
}

/// Per-observation pieces of the rotation objective for component `k`:
/// the diagonal `M_i = Phi^{-1} V_i` and the vector `c_i = Phi^{-1}(V_i mu + beta)`.
fn gamma_terms(cache: &EStepCache, model: &MixtureModel, k: usize, i: usize) -> (DVector<f64>, DVector<f64>) {
    let comp = &model.components[k];
    let p = cache.p();
    let v = DVector::from_fn(p, |j, _| cache.s2(i, j, k));
    let m = v.component_div(&comp.phi);
    let c = (v.component_mul(&comp.mu) + &comp.beta).component_div(&comp.phi);
    (m, c)
}

/// Objective minimized over orthogonal `gamma` for component `k`:
/// `sum_i z_i [ y_i' M_i y_i / 2 - y_i' c_i ]` with `y_i = gamma' x_i`.
pub fn gamma_objective(data: &DMatrix<f64>, cache: &EStepCache, model: &MixtureModel, k: usize, gamma: &DMatrix<f64>) -> f64 {
    let y = data * gamma;
    (0..cache.n())
        .map(|i| {
            let (m, c) = gamma_terms(cache, model, k, i);
            let yi = y.row(i).transpose();
            cache.zhat[(i, k)] * (0.5 * yi.component_mul(&yi).dot(&m) - yi.dot(&c))
        })
        .sum()
}

/// Orthogonal maximizer of `tr(gamma' (-K))`, i.e. `P R'` for `-K = P B R'`.
fn procrustes(k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = (-k).svd(true, true);
    match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => Ok(u * v_t),
        _ => Err(Error::numeric("singular value decomposition failed in the rotation update")),
    }
}

/// One majorization step for each of the two surrogates: first bounding
/// `M_i` by its largest entry, then bounding `x_i x_i'` by `x_i' x_i`. The new
/// rotation is kept only if it does not increase [`gamma_objective`].
pub fn m_step_gamma(data: &DMatrix<f64>, cache: &EStepCache, model: &MixtureModel) -> Result<Vec<DMatrix<f64>>> {
    let (n, p) = (cache.n(), cache.p());
    let mut out = Vec::with_capacity(model.g());
    for k in 0..model.g() {
        let start = model.components[k].gamma.clone();
        if p == 1 {
            out.push(start);
            continue;
        }
        let terms: Vec<_> = (0..n).map(|i| gamma_terms(cache, model, k, i)).collect();
        let mut gamma = start.clone();
        for surrogate in 0..2 {
            let y = data * &gamma;
            let mut kmat = DMatrix::zeros(p, p);
            let mut diag_shift = DVector::zeros(p);
            for i in 0..n {
                let z = cache.zhat[(i, k)];
                if z == 0.0 {
                    continue;
                }
                let (m, c) = &terms[i];
                let x = data.row(i).transpose();
                let yi = y.row(i).transpose();
                let row = if surrogate == 0 {
                    let alpha = m.max();
                    yi.component_mul(&m.add_scalar(-alpha)) - c
                } else {
                    diag_shift += z * x.norm_squared() * m;
                    yi.component_mul(m) - c
                };
                kmat.ger(z, &x, &row, 1.0);
            }
            if surrogate == 1 {
                kmat -= &gamma * DMatrix::from_diagonal(&diag_shift);
            }
            gamma = procrustes(&kmat)?;
        }
        let before = gamma_objective(data, cache, model, k, &start);
        let after = gamma_objective(data, cache, model, k, &gamma);
        if after <= before + GAMMA_SLACK * before.abs().max(1.0) && after.is_finite() {
            out.push(gamma);
        } else {
            out.push(start);
        }
    }
    Ok(out)
}

/// Flips columns of `gamma` so each column's largest-magnitude entry is
/// positive, negating the matching location and skewness coordinates so the
/// density is unchanged.
pub fn fix_column_signs(comp: &mut crate::densities::CghdComponent) {
    for j in 0..comp.dim() {
        let col = comp.gamma.column(j);
        let big = col.iter().fold(0.0f64, |a, v| if v.abs() > a.abs() { *v } else { a });
        if big < 0.0 {
            comp.gamma.column_mut(j).neg_mut();
            comp.mu[j] = -comp.mu[j];
            comp.beta[j] = -comp.beta[j];
        }
    }
}

/// `q(omega, lambda) = -log K_lambda(omega) + (lambda - 1) e3 - omega (e1 + e2) / 2`.
pub fn gig_q(omega: f64, lambda: f64, e1: f64, e2: f64, e3: f64) -> f64 {
    match log_bessel_k(lambda, omega) {
        Ok(lk) => -lk + (lambda - 1.0) * e3 - 0.5 * omega * (e1 + e2),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// One update of a GIG concentration/index pair: the multiplicative index
/// step and one Newton step in the concentration, each accepted only if it
/// does not decrease `q` (halving toward the old value otherwise).
pub fn update_gig_pair(
    omega: f64,
    lambda: f64,
    e1: f64,
    e2: f64,
    e3: f64,
    lambda_floor: Option<f64>,
) -> (f64, f64) {
    let floor = lambda_floor.unwrap_or(f64::NEG_INFINITY);
    let q = |w: f64, l: f64| gig_q(w, l, e1, e2, e3);
    let mut lambda = lambda;
    let mut omega = omega;

    if let Ok(dk) = dlog_bessel_k_dnu(lambda, omega) {
        if dk.abs() >= 1e-12 {
            let target = e3 * lambda / dk;
            lambda = line_search(lambda, target, |l| l.max(floor), |l| q(omega, l));
        }
    }

    if let Ok(lr) = log_bessel_k_ratio(lambda, omega) {
        let r = lr.exp();
        let d1 = r - lambda / omega - 0.5 * (e1 + e2);
        let d2 = r * r - (2.0 * lambda + 1.0) * r / omega - 1.0 + lambda / (omega * omega);
        // fall back to a scaled gradient step where q is not locally concave
        let step = if d2 < 0.0 { -d1 / d2 } else { d1 * omega };
        if step.is_finite() && step != 0.0 {
            omega = line_search(omega, omega + step, |w| w.clamp(OMEGA_MIN, OMEGA_MAX), |w| q(w, lambda));
        }
    }
    (omega, lambda)
}

fn line_search(
    old: f64,
    target: f64,
    project: impl Fn(f64) -> f64,
    q: impl Fn(f64) -> f64,
) -> f64 {
    if !target.is_finite() {
        REJECTED_HYPER_STEPS.fetch_add(1, Ordering::Relaxed);
        return old;
    }
    let q0 = q(old);
    let mut t = 1.0;
    for _ in 0..BACKTRACK {
        let cand = project(old + t * (target - old));
        let qc = q(cand);
        if qc.is_finite() && qc >= q0 {
            return cand;
        }
        t *= 0.5;
    }
    REJECTED_HYPER_STEPS.fetch_add(1, Ordering::Relaxed);
    old
}

/// New GIG hyperparameters for one component.
#[derive(Debug, Clone, PartialEq)]
pub struct GigHyper {
    pub omega: DVector<f64>,
    pub lambda: DVector<f64>,
    pub omega0: f64,
    pub lambda0: f64,
}

/// Concentration and index updates for both branches of every component.
/// A branch with (numerically) no weight keeps its values.
pub fn m_step_gig_hyper(stats: &SufficientStats, model: &MixtureModel) -> Vec<GigHyper> {
    let floor = (model.family == Family::McMsghd).then_some(MCMSGHD_LAMBDA_FLOOR);
    model
        .components
        .iter()
        .enumerate()
        .map(|(k, comp)| {
            let mut h = GigHyper {
                omega: comp.omega.clone(),
                lambda: comp.lambda.clone(),
                omega0: comp.omega0,
                lambda0: comp.lambda0,
            };
            let tiny = 1e-8 * stats.n_g[k].max(1.0);
            if model.family.uses_ghd() && stats.n_ghd[k] > tiny {
                let (w, l) = update_gig_pair(comp.omega0, comp.lambda0, stats.a[k], stats.b[k], stats.c[k], None);
                h.omega0 = w;
                h.lambda0 = l;
            }
            if model.family.uses_msghd() && stats.n_msghd[k] > tiny {
                for j in 0..comp.dim() {
                    let (w, l) = update_gig_pair(
                        comp.omega[j],
                        comp.lambda[j],
                        stats.ebar1[(k, j)],
                        stats.ebar2[(k, j)],
                        stats.ebar3[(k, j)],
                        floor,
                    );
                    h.omega[j] = w;
                    h.lambda[j] = l;
                }
            }
            h
        })
        .collect()
}
