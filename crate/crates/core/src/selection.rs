//! Free-parameter counts, BIC, and the sweep over component counts and families.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::densities::Family;
use crate::error::Result;
use crate::inference::{fit, FitConfig, FitResult};

/// Free parameters of a `G`-component mixture in dimension `p`.
///
/// Per component: location and skewness (`2p`), then the scale, counted as a
/// full symmetric matrix for MGHD and as `p(p-1)/2` rotation angles plus `p`
/// diagonal entries otherwise; then the latent-weight concentration/index
/// pairs (one pair for GHD, `p` pairs for MSGHD, both plus `varpi` for
/// MCGHD). Mixing proportions add `G - 1`.
pub fn count_free_params(family: Family, g: usize, p: usize) -> usize {
    let loc = 2 * p;
    let per = match family {
        Family::Mghd => loc + p * (p + 1) / 2 + 2,
        Family::Mmsghd | Family::McMsghd => loc + p * (p - 1) / 2 + p + 2 * p,
        Family::Mcghd => loc + p * (p - 1) / 2 + p + 2 * p + 3,
    };
    g * per + g - 1
}

/// `2 loglik - rho log n`; larger is better.
pub fn bic_value(loglik: f64, rho: usize, n: usize) -> f64 {
    2.0 * loglik - rho as f64 * (n as f64).ln()
}

/// BIC of a finished fit on `n` observations.
pub fn bic(fit: &FitResult, n: usize) -> f64 {
    let m = &fit.model;
    bic_value(fit.loglik(), count_free_params(m.family, m.g(), m.dim()), n)
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelScore {
    pub family: Family,
    pub g: usize,
    /// `NaN` for failed fits.
    pub loglik: f64,
    pub rho: usize,
    /// `NaN` for failed fits.
    pub bic: f64,
    pub converged: bool,
    pub status: FitStatus,
}

#[derive(Debug, Clone)]
pub struct Selection {
    /// One entry per `(G, family)` pair, ordered by `G` then family.
    pub scores: Vec<ModelScore>,
    /// Index into `scores` of the BIC maximizer, if any fit succeeded.
    pub best: Option<usize>,
    pub best_fit: Option<FitResult>,
}

/// Whether `a` beats `b`: higher BIC, then smaller `G`, then earlier family.
fn better(a: &ModelScore, b: &ModelScore) -> bool {
    if a.bic != b.bic {
        return a.bic > b.bic;
    }
    (a.g, a.family) < (b.g, b.family)
}

/// Fits every `(G, family)` pair (concurrently) and picks the BIC maximizer.
/// `base` supplies everything except the family and `G`.
pub fn select(data: &DMatrix<f64>, g_range: &[usize], families: &[Family], base: &FitConfig) -> Result<Selection> {
    let n = data.nrows();
    let p = data.ncols();
    let mut keys: Vec<(usize, Family)> = g_range
        .iter()
        .flat_map(|g| families.iter().map(move |f| (*g, *f)))
        .collect();
    keys.sort();
    keys.dedup();
    if keys.is_empty() {
        return Err(crate::error::Error::invalid("empty component-count or family range"));
    }
    let results: Vec<(ModelScore, Option<FitResult>)> = keys
        .par_iter()
        .map(|(g, family)| {
            let mut cfg = base.clone();
            cfg.g = *g;
            cfg.family = *family;
            let rho = count_free_params(*family, *g, p);
            match fit(data, &cfg) {
                Ok(res) => (
                    ModelScore {
                        family: *family,
                        g: *g,
                        loglik: res.loglik(),
                        rho,
                        bic: bic_value(res.loglik(), rho, n),
                        converged: res.converged,
                        status: FitStatus::Ok,
                    },
                    Some(res),
                ),
                Err(e) => (
                    ModelScore {
                        family: *family,
                        g: *g,
                        loglik: f64::NAN,
                        rho,
                        bic: f64::NAN,
                        converged: false,
                        status: FitStatus::Failed(e.to_string()),
                    },
                    None,
                ),
            }
        })
        .collect();
    let mut best: Option<usize> = None;
    for (i, (s, _)) in results.iter().enumerate() {
        if s.status != FitStatus::Ok || !s.bic.is_finite() {
            continue;
        }
        if best.is_none_or(|b| better(s, &results[b].0)) {
            best = Some(i);
        }
    }
    let best_fit = best.and_then(|b| results[b].1.clone());
    Ok(Selection {
        scores: results.into_iter().map(|(s, _)| s).collect(),
        best,
        best_fit,
    })
}
