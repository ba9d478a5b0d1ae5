//! Quadrature-based GIG expectations and a KS statistic against the GIG law.

use ghmix::gig::{gig_log_density, GigParams};

use super::quad::{integrate, integrate_pieces};

/// Breakpoints in `u = log w` bracketing the bulk of a GIG density.
pub fn log_scale_support(p: &GigParams) -> Vec<f64> {
    let f = |u: f64| gig_log_density(u.exp(), p).unwrap() + u;
    // crude mode search on a grid, then walk out until the integrand is negligible
    let mut best = (f64::NEG_INFINITY, 0.0);
    let mut u = -40.0;
    while u <= 40.0 {
        let v = f(u);
        if v > best.0 {
            best = (v, u);
        }
        u += 0.05;
    }
    let (peak, mode) = best;
    let mut lo = mode;
    let mut step = 0.05;
    while f(lo) - peak > -60.0 && lo > -700.0 {
        lo -= step;
        step *= 1.3;
    }
    let mut hi = mode;
    step = 0.05;
    while f(hi) - peak > -60.0 && hi < 700.0 {
        hi += step;
        step *= 1.3;
    }
    let mut pts: Vec<f64> = (0..=16).map(|k| lo + (hi - lo) * k as f64 / 16.0).collect();
    pts.push(mode);
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    pts
}

/// `int g(w) h(w) dw` computed on the log scale.
pub fn expect<G: Fn(f64) -> f64>(p: &GigParams, g: G) -> f64 {
    let pts = log_scale_support(p);
    integrate_pieces(
        |u| {
            let w = u.exp();
            g(w) * (gig_log_density(w, p).unwrap() + u).exp()
        },
        &pts,
        1e-13,
    )
}

/// Kolmogorov-Smirnov statistic of `draws` against the numerically integrated CDF.
pub fn ks_statistic(p: &GigParams, mut draws: Vec<f64>) -> f64 {
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = draws.len() as f64;
    let density = |u: f64| (gig_log_density(u.exp(), p).unwrap() + u).exp();
    let pts = log_scale_support(p);
    let lo = pts[0];
    let mut cdf = 0.0;
    let mut prev = lo;
    let mut d: f64 = 0.0;
    for (i, w) in draws.iter().enumerate() {
        let u = w.ln();
        if u > prev {
            cdf += integrate(density, prev, u, 1e-12);
            prev = u;
        }
        let c = cdf.min(1.0);
        d = d.max((c - i as f64 / n).abs()).max((c - (i + 1) as f64 / n).abs());
    }
    d
}

/// `(omega, lambda)` pairs spanning the sampler's regimes: small and large
/// concentration, negative, near-zero and large index.
pub const KS_REGIMES: [(f64, f64); 20] = [
    (0.05, -0.3),
    (0.1, 0.0),
    (0.15, 0.5),
    (0.1, -0.9),
    (0.3, 0.2),
    (0.5, -1.0),
    (1.0, -0.5),
    (1.0, 1.5),
    (2.5, 0.0),
    (2.5, -2.0),
    (4.0, 0.7),
    (10.0, -0.5),
    (10.0, 3.0),
    (0.8, 2.5),
    (0.2, 6.0),
    (50.0, -4.0),
    (0.6, 1.0),
    (3.0, -1.7),
    (1.7, 0.3),
    (0.25, -2.5),
];
