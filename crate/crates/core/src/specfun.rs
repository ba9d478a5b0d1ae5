//! Modified Bessel function of the third kind, `K_nu(x)`, for real order.
//!
//! Everything here works on the log scale. The densities and conditional
//! expectations of the mixture models evaluate `K_nu` at arguments where the
//! raw value over- or underflows a double (large `x` drives `K` towards
//! `e^{-x}`, small `x` with large order drives it towards `x^{-nu}`).
//!
//! Strategy, for `nu >= 0` (the function is even in `nu`):
//!
//! * write `nu = mu + n` with `mu` in `[-1/2, 1/2)`;
//! * evaluate `K_mu` and `K_{mu+1}` by Temme's series when `x < 2` and by
//!   Steed's continued fraction otherwise;
//! * climb to order `nu` with the forward three-term recurrence, carried as a
//!   running ratio so nothing is exponentiated;
//! * for `|nu|` above [`DEBYE_ORDER`] switch to the uniform asymptotic
//!   (Debye) expansion, which is accurate to better than `1e-11` there.

use crate::error::{Error, Result};
use std::f64::consts::PI;

/// Orders above this use the uniform asymptotic expansion.
pub const DEBYE_ORDER: f64 = 200.0;

/// `log K_nu(x)` together with the order and argument it was evaluated at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselEval {
    pub log_value: f64,
    pub order: f64,
    pub argument: f64,
}

impl BesselEval {
    pub fn new(order: f64, argument: f64) -> Result<Self> {
        Ok(Self {
            log_value: log_bessel_k(order, argument)?,
            order,
            argument,
        })
    }
}

fn check_args(nu: f64, x: f64) -> Result<()> {
    if !nu.is_finite() {
        return Err(Error::domain(format!("Bessel order must be finite, got {nu}")));
    }
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!(
            "Bessel argument must be positive and finite, got {x}"
        )));
    }
    Ok(())
}

/// Natural log of `K_nu(x)`.
pub fn log_bessel_k(nu: f64, x: f64) -> Result<f64> {
    check_args(nu, x)?;
    Ok(log_k_unchecked(nu.abs(), x))
}

/// `log K_{nu+1}(x) - log K_nu(x)`.
pub fn log_bessel_k_ratio(nu: f64, x: f64) -> Result<f64> {
    check_args(nu, x)?;
    Ok(log_k_and_ratio(nu, x).1)
}

/// Returns `(log K_nu(x), log K_{nu+1}(x) - log K_nu(x))` in one pass.
pub fn log_bessel_k_with_ratio(nu: f64, x: f64) -> Result<(f64, f64)> {
    check_args(nu, x)?;
    Ok(log_k_and_ratio(nu, x))
}

/// Partial derivative of `log K_nu(x)` with respect to the order, by a
/// central difference at step `h = 1e-5 * max(1, |nu|)`. Truncation error is
/// about `h^2 / 6` times the third derivative and rounding about
/// `1e-16 |log K| / h`, both far below what the E-step needs.
pub fn dlog_bessel_k_dnu(nu: f64, x: f64) -> Result<f64> {
    check_args(nu, x)?;
    let h = 1e-5 * nu.abs().max(1.0);
    let f = |v: f64| log_k_unchecked(v.abs(), x);
    Ok((f(nu + h) - f(nu - h)) / (2.0 * h))
}

/// `(log K_nu, log K_{nu+1}/K_nu, log K_{nu-1}/K_nu)` at `x`.
///
/// The downward ratio comes from the recurrence itself rather than from
/// `K_{nu+1}/K_nu - 2 nu/x`, which cancels badly for small `x`.
pub fn log_k_neighbours(nu: f64, x: f64) -> Result<(f64, f64, f64)> {
    check_args(nu, x)?;
    let a = nu.abs();
    if a > DEBYE_ORDER {
        let lk = debye_log_k(a, x);
        let up = debye_log_k((nu + 1.0).abs(), x) - lk;
        let down = debye_log_k((nu - 1.0).abs(), x) - lk;
        return Ok((lk, up, down));
    }
    let (lk, up_a, prev) = climb(a, x);
    // K_{a-1}/K_a for the magnitude a = |nu|
    let down_a = match prev {
        Some(r) => -r.ln(),
        None => log_k_unchecked((a - 1.0).abs(), x) - lk,
    };
    if nu >= 0.0 {
        Ok((lk, up_a.ln(), down_a))
    } else {
        Ok((lk, down_a, up_a.ln()))
    }
}

pub(crate) fn log_k_and_ratio(nu: f64, x: f64) -> (f64, f64) {
    let a = nu.abs();
    if a > DEBYE_ORDER {
        let lk = debye_log_k(a, x);
        let lk1 = debye_log_k((nu + 1.0).abs(), x);
        return (lk, lk1 - lk);
    }
    if nu >= 0.0 {
        let (lk, ratio, _) = climb(a, x);
        return (lk, ratio.ln());
    }
    // K_{nu+1} = K_{|nu|-1}; reuse the previous ratio of the climb when it exists.
    let (lk, _, prev) = climb(a, x);
    match prev {
        Some(r) => (lk, -r.ln()),
        None => (lk, log_k_unchecked((nu + 1.0).abs(), x) - lk),
    }
}

fn log_k_unchecked(a: f64, x: f64) -> f64 {
    if a > DEBYE_ORDER {
        debye_log_k(a, x)
    } else {
        climb(a, x).0
    }
}

/// Forward recurrence from `|mu| <= 1/2` to order `a >= 0`.
///
/// Returns `log K_a(x)`, the ratio `K_{a+1}/K_a` and, when at least one
/// recurrence step was taken, the ratio `K_a/K_{a-1}`.
fn climb(a: f64, x: f64) -> (f64, f64, Option<f64>) {
    let steps = (a + 0.5).floor();
    let mu = a - steps;
    let (mut log_k, mut ratio) = if x < 2.0 {
        temme(mu, x)
    } else {
        steed(mu, x)
    };
    let mut prev = None;
    let mut acc = 1.0_f64;
    let n = steps as usize;
    for k in 1..=n {
        acc *= ratio;
        if acc > 1e250 {
            log_k += acc.ln();
            acc = 1.0;
        }
        prev = Some(ratio);
        ratio = 1.0 / ratio + 2.0 * (mu + k as f64) / x;
    }
    log_k += acc.ln();
    (log_k, ratio, prev)
}

/// Coefficients of the Taylor series of `1/Gamma(z)` about zero.
const RECIP_GAMMA: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_8,
    -0.042_002_635_034_095_2,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_3,
    -0.009_621_971_527_877_0,
    0.007_218_943_246_663_0,
    -0.001_165_167_591_859_1,
    -0.000_215_241_674_114_9,
    0.000_128_050_282_388_2,
    -0.000_020_134_854_780_7,
    -0.000_001_250_493_482_1,
    0.000_001_133_027_232_0,
    -0.000_000_205_633_841_7,
    0.000_000_006_116_095_0,
    0.000_000_005_002_007_5,
    -0.000_000_001_181_274_6,
    0.000_000_000_104_342_7,
    0.000_000_000_007_782_3,
    -0.000_000_000_003_696_8,
    0.000_000_000_000_510_0,
    -0.000_000_000_000_020_6,
    -0.000_000_000_000_005_4,
    0.000_000_000_000_001_4,
    0.000_000_000_000_000_1,
];

/// Temme's auxiliary functions for `|mu| <= 1/2`:
/// `(gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu))` with
/// `gam1 = (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu)` and
/// `gam2 = (1/Gamma(1-mu) + 1/Gamma(1+mu)) / 2`.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    // 1/Gamma(1+mu) = sum_k c_{k+1} mu^k; split into even and odd powers so
    // gam1 never suffers cancellation near mu = 0.
    let m2 = mu * mu;
    let mut even = 0.0;
    let mut odd = 0.0;
    for k in (0..RECIP_GAMMA.len()).rev() {
        if k % 2 == 0 {
            even = even * m2 + RECIP_GAMMA[k];
        } else {
            odd = odd * m2 + RECIP_GAMMA[k];
        }
    }
    let gam1 = -odd;
    let gam2 = even;
    (gam1, gam2, even + mu * odd, even - mu * odd)
}

/// `(log K_mu(x), K_{mu+1}(x)/K_mu(x))` for `x < 2`, `|mu| <= 1/2`.
fn temme(mu: f64, x: f64) -> (f64, f64) {
    let half_x = 0.5 * x;
    let pimu = PI * mu;
    let fact = if pimu.abs() < f64::EPSILON {
        1.0
    } else {
        pimu / pimu.sin()
    };
    let d = -half_x.ln();
    let e = mu * d;
    let fact2 = if e.abs() < f64::EPSILON { 1.0 } else { e.sinh() / e };
    let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let ee = e.exp();
    let mut p = 0.5 * ee / gampl;
    let mut q = 0.5 / (ee * gammi);
    let mut c = 1.0;
    let dd = half_x * half_x;
    let mut sum1 = p;
    for i in 1..10_000 {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu * mu);
        c *= dd / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        sum1 += c * (p - fi * ff);
        if del.abs() < sum.abs() * f64::EPSILON {
            break;
        }
    }
    let k_mu = sum;
    let k_mu1 = sum1 * 2.0 / x;
    (k_mu.ln(), k_mu1 / k_mu)
}

/// Steed's continued fraction, `x >= 2`, `|mu| <= 1/2`.
fn steed(mu: f64, x: f64) -> (f64, f64) {
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - mu * mu;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..100_000 {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < f64::EPSILON {
            break;
        }
    }
    h *= a1;
    let log_k = 0.5 * (PI / (2.0 * x)).ln() - x - s.ln();
    (log_k, (mu + x + 0.5 - h) / x)
}

/// Uniform asymptotic expansion of `log K_nu(x)` for large `nu > 0`.
fn debye_log_k(nu: f64, x: f64) -> f64 {
    let z = x / nu;
    let root = (1.0 + z * z).sqrt();
    let t = 1.0 / root;
    // eta = sqrt(1+z^2) + log(z / (1 + sqrt(1+z^2)))
    let eta = root + (z / (1.0 + root)).ln();
    let t2 = t * t;
    let u1 = t * (3.0 - 5.0 * t2) / 24.0;
    let u2 = t2 * (81.0 + t2 * (-462.0 + t2 * 385.0)) / 1152.0;
    let u3 = t * t2 * (30375.0 + t2 * (-369_603.0 + t2 * (765_765.0 - t2 * 425_425.0))) / 414_720.0;
    let u4 = t2
        * t2
        * (4_465_125.0
            + t2 * (-94_121_676.0
                + t2 * (349_922_430.0 + t2 * (-446_185_740.0 + t2 * 185_910_725.0))))
        / 39_813_120.0;
    let inv = 1.0 / nu;
    let series = 1.0 - u1 * inv + u2 * inv * inv - u3 * inv.powi(3) + u4 * inv.powi(4);
    0.5 * (PI / (2.0 * nu)).ln() - nu * eta - 0.5 * root.ln() + series.ln()
}
