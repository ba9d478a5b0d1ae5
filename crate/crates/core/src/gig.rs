//! Generalized inverse Gaussian (GIG) law.
//!
//! Two parametrizations are carried: the classic `(psi, chi, lambda)` form
//! with density proportional to `w^{lambda-1} exp(-(psi w + chi/w)/2)`, and
//! the concentration/scale form `(omega, eta, lambda)` with
//! `omega = sqrt(psi chi)` and `eta = sqrt(chi/psi)`.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::densities::CghdComponent;
use crate::error::{Error, Result};
use crate::specfun::{self, log_bessel_k};

/// Smallest concentration accepted by [`GigParams::floored`].
pub const OMEGA_FLOOR: f64 = 1e-6;

static OMEGA_FLOOR_HITS: AtomicU64 = AtomicU64::new(0);

/// Number of times a concentration was raised to [`OMEGA_FLOOR`] in this process.
pub fn omega_floor_hits() -> u64 {
    OMEGA_FLOOR_HITS.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GigParams {
    pub omega: f64,
    pub eta: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GigClassicParams {
    pub psi: f64,
    pub chi: f64,
    pub lambda: f64,
}

impl GigParams {
    pub fn new(omega: f64, eta: f64, lambda: f64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::domain(format!("GIG concentration must be positive, got {omega}")));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::domain(format!("GIG scale must be positive, got {eta}")));
        }
        if !lambda.is_finite() {
            return Err(Error::domain(format!("GIG index must be finite, got {lambda}")));
        }
        Ok(Self { omega, eta, lambda })
    }

    /// Like [`GigParams::new`] but raises `omega` to [`OMEGA_FLOOR`] instead of failing.
    pub fn floored(omega: f64, eta: f64, lambda: f64) -> Result<Self> {
        let omega = if omega < OMEGA_FLOOR {
            OMEGA_FLOOR_HITS.fetch_add(1, Ordering::Relaxed);
            OMEGA_FLOOR
        } else {
            omega
        };
        Self::new(omega, eta, lambda)
    }

    pub fn to_classic(self) -> GigClassicParams {
        GigClassicParams {
            psi: self.omega / self.eta,
            chi: self.omega * self.eta,
            lambda: self.lambda,
        }
    }
}

impl GigClassicParams {
    pub fn new(psi: f64, chi: f64, lambda: f64) -> Result<Self> {
        if !(psi > 0.0 && psi.is_finite() && chi > 0.0 && chi.is_finite()) {
            return Err(Error::domain(format!(
                "GIG psi and chi must be positive, got psi={psi} chi={chi}"
            )));
        }
        if !lambda.is_finite() {
            return Err(Error::domain(format!("GIG index must be finite, got {lambda}")));
        }
        Ok(Self { psi, chi, lambda })
    }

    pub fn to_scaled(self) -> GigParams {
        GigParams {
            omega: (self.psi * self.chi).sqrt(),
            eta: (self.chi / self.psi).sqrt(),
            lambda: self.lambda,
        }
    }

    /// Log density in the classic form.
    pub fn log_density(&self, w: f64) -> Result<f64> {
        if !(w > 0.0) {
            return Err(Error::domain(format!("GIG support is w > 0, got {w}")));
        }
        let omega = (self.psi * self.chi).sqrt();
        Ok(0.5 * self.lambda * (self.psi / self.chi).ln() + (self.lambda - 1.0) * w.ln()
            - std::f64::consts::LN_2
            - log_bessel_k(self.lambda, omega)?
            - 0.5 * (self.psi * w + self.chi / w))
    }
}

/// `E[W]`, `E[1/W]` and `E[log W]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GigMoments {
    pub e_w: f64,
    pub e_winv: f64,
    pub e_logw: f64,
}

pub fn gig_log_density(w: f64, params: &GigParams) -> Result<f64> {
    if !(w > 0.0) {
        return Err(Error::domain(format!("GIG support is w > 0, got {w}")));
    }
    let GigParams { omega, eta, lambda } = *params;
    let r = w / eta;
    Ok((lambda - 1.0) * r.ln()
        - (2.0 * eta).ln()
        - log_bessel_k(lambda, omega)?
        - 0.5 * omega * (r + 1.0 / r))
}

pub fn gig_expectations(params: &GigParams) -> Result<GigMoments> {
    let GigParams { omega, eta, lambda } = *params;
    let (_, up, down) = specfun::log_k_neighbours(lambda, omega)?;
    Ok(GigMoments {
        e_w: eta * up.exp(),
        // K_{lambda-1}/K_lambda directly, which is the difference form without
        // its cancellation at small omega.
        e_winv: down.exp() / eta,
        e_logw: eta.ln() + specfun::dlog_bessel_k_dnu(lambda, omega)?,
    })
}

/// Conditional law of the GHD latent weight given an observation:
/// `GIG(psi = omega0 + beta' Sigma^{-1} beta, chi = omega0 + delta(x), lambda0 - p/2)`.
pub fn ghd_latent_posterior(x: &[f64], comp: &CghdComponent) -> Result<GigClassicParams> {
    comp.validate()?;
    let p = comp.dim();
    let delta = crate::densities::mahalanobis(x, comp)?;
    let quad_beta: f64 = (0..p).map(|j| comp.beta[j] * comp.beta[j] / comp.phi[j]).sum();
    GigClassicParams::new(
        comp.omega0 + quad_beta,
        comp.omega0 + delta,
        comp.lambda0 - 0.5 * p as f64,
    )
}

/// `n` draws from the GIG law, deterministic in `seed`.
pub fn gig_sample(params: &GigParams, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = GigSampler::new(params);
    (0..n).map(|_| sampler.sample(&mut rng)).collect()
}

/// Prepared sampler for one parameter set.
///
/// Works on the standardized law `eta = 1`, `lambda >= 0` and maps back with
/// `W = eta X` (or `eta / X` when `lambda < 0`, since `1/X` has index `-lambda`).
///
/// * `lambda > 2` or `omega > 3`: ratio-of-uniforms with mode shift;
/// * moderate parameters: ratio-of-uniforms without shift;
/// * `lambda < 1` with small `omega`: rejection from a piecewise envelope,
///   where the density is not T-concave and ratio-of-uniforms is inefficient.
#[derive(Debug, Clone)]
pub struct GigSampler {
    eta: f64,
    invert: bool,
    method: Method,
}

#[derive(Debug, Clone)]
enum Method {
    ShiftedRou {
        t: f64,
        s: f64,
        mode: f64,
        nc: f64,
        u_minus: f64,
        u_plus: f64,
    },
    PlainRou {
        t: f64,
        s: f64,
        nc: f64,
        u_max: f64,
    },
    Envelope {
        lambda: f64,
        omega: f64,
        x0: f64,
        k0: f64,
        k1: f64,
        k2: f64,
        areas: [f64; 3],
    },
}

fn gig_mode(lambda: f64, omega: f64) -> f64 {
    if lambda >= 1.0 {
        ((lambda - 1.0).hypot(omega) + (lambda - 1.0)) / omega
    } else {
        omega / ((1.0 - lambda).hypot(omega) + (1.0 - lambda))
    }
}

impl GigSampler {
    pub fn new(params: &GigParams) -> Self {
        let lambda = params.lambda.abs();
        let omega = params.omega;
        let method = if lambda > 2.0 || omega > 3.0 {
            Self::shifted(lambda, omega)
        } else if lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
            Self::plain(lambda, omega)
        } else {
            Self::envelope(lambda, omega)
        };
        Self {
            eta: params.eta,
            invert: params.lambda < 0.0,
            method,
        }
    }

    fn shifted(lambda: f64, omega: f64) -> Method {
        let t = 0.5 * (lambda - 1.0);
        let s = 0.25 * omega;
        let mode = gig_mode(lambda, omega);
        let nc = t * mode.ln() - s * (mode + 1.0 / mode);
        // Roots of the cubic locating the extremes of x * sqrt(f(x + mode)).
        let a = -(2.0 * (lambda + 1.0) / omega + mode);
        let b = 2.0 * (lambda - 1.0) * mode / omega - 1.0;
        let c = mode;
        let p = b - a * a / 3.0;
        let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
        let phi = (-q / (2.0 * (-(p * p * p) / 27.0).sqrt())).acos();
        let fak = 2.0 * (-p / 3.0).sqrt();
        let y1 = fak * (phi / 3.0).cos() - a / 3.0;
        let y2 = fak * (phi / 3.0 + 4.0 / 3.0 * std::f64::consts::PI).cos() - a / 3.0;
        let u_plus = (y1 - mode) * (t * y1.ln() - s * (y1 + 1.0 / y1) - nc).exp();
        let u_minus = (y2 - mode) * (t * y2.ln() - s * (y2 + 1.0 / y2) - nc).exp();
        Method::ShiftedRou {
            t,
            s,
            mode,
            nc,
            u_minus,
            u_plus,
        }
    }

    fn plain(lambda: f64, omega: f64) -> Method {
        let t = 0.5 * (lambda - 1.0);
        let s = 0.25 * omega;
        let mode = gig_mode(lambda, omega);
        let nc = t * mode.ln() - s * (mode + 1.0 / mode);
        let ym = ((lambda + 1.0) + (lambda + 1.0).hypot(omega)) / omega;
        let u_max = (0.5 * (lambda + 1.0) * ym.ln() - s * (ym + 1.0 / ym) - nc).exp();
        Method::PlainRou { t, s, nc, u_max }
    }

    fn envelope(lambda: f64, omega: f64) -> Method {
        let mode = gig_mode(lambda, omega);
        let x0 = omega / (1.0 - lambda);
        let k0 = ((lambda - 1.0) * mode.ln() - 0.5 * omega * (mode + 1.0 / mode)).exp();
        let a0 = k0 * x0;
        let (k1, a1, k2, a2) = if x0 >= 2.0 / omega {
            let k2 = x0.powf(lambda - 1.0);
            (0.0, 0.0, k2, k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega)
        } else {
            let k1 = (-omega).exp();
            let a1 = if lambda == 0.0 {
                k1 * (2.0 / (omega * omega)).ln()
            } else {
                k1 / lambda * ((2.0 / omega).powf(lambda) - x0.powf(lambda))
            };
            let k2 = (2.0 / omega).powf(lambda - 1.0);
            (k1, a1, k2, k2 * 2.0 * (-1.0f64).exp() / omega)
        };
        Method::Envelope {
            lambda,
            omega,
            x0,
            k0,
            k1,
            k2,
            areas: [a0, a1, a2],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = match self.method {
            Method::ShiftedRou {
                t,
                s,
                mode,
                nc,
                u_minus,
                u_plus,
            } => loop {
                let u = u_minus + rng.random::<f64>() * (u_plus - u_minus);
                let v = 1.0 - rng.random::<f64>();
                let x = u / v + mode;
                if x > 0.0 && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
                    break x;
                }
            },
            Method::PlainRou { t, s, nc, u_max } => loop {
                let u = u_max * rng.random::<f64>();
                let v = 1.0 - rng.random::<f64>();
                let x = u / v;
                if x > 0.0 && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
                    break x;
                }
            },
            Method::Envelope {
                lambda,
                omega,
                x0,
                k0,
                k1,
                k2,
                areas,
            } => loop {
                let total = areas[0] + areas[1] + areas[2];
                let mut v = total * rng.random::<f64>();
                let (x, hx) = if v <= areas[0] {
                    (x0 * v / areas[0], k0)
                } else {
                    v -= areas[0];
                    if v <= areas[1] {
                        if lambda == 0.0 {
                            let x = omega * (omega.exp() * v).exp();
                            (x, k1 / x)
                        } else {
                            let x = (x0.powf(lambda) + lambda / k1 * v).powf(1.0 / lambda);
                            (x, k1 * x.powf(lambda - 1.0))
                        }
                    } else {
                        v -= areas[1];
                        let a = x0.max(2.0 / omega);
                        let x = -2.0 / omega * ((-omega / 2.0 * a).exp() - omega / (2.0 * k2) * v).ln();
                        (x, k2 * (-omega / 2.0 * x).exp())
                    }
                };
                let u = rng.random::<f64>() * hx;
                if x > 0.0 && u.ln() <= (lambda - 1.0) * x.ln() - omega / 2.0 * (x + 1.0 / x) {
                    break x;
                }
            },
        };
        if self.invert {
            self.eta / x
        } else {
            self.eta * x
        }
    }
}
