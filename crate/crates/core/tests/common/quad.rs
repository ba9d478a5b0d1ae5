//! Adaptive Gauss-Kronrod (7/15) quadrature used as an independent oracle.
#![allow(dead_code)]

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Global adaptive bisection: always split the interval with the largest
/// error estimate until the summed estimate meets `tol` (absolute) or a
/// relative `1e-14`, or the interval budget runs out.
fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, _depth: u32) -> f64 {
    let first = gk15(f, a, b);
    let mut total = first.0;
    let mut err = first.1;
    let mut parts = vec![(a, b, first)];
    for _ in 0..600 {
        if err <= tol.max(1e-14 * total.abs()) {
            break;
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.partial_cmp(&y.1 .2 .1).unwrap())
            .unwrap();
        let (lo, hi, old) = parts.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let left = gk15(f, lo, mid);
        let right = gk15(f, mid, hi);
        total += left.0 + right.0 - old.0;
        err += left.1 + right.1 - old.1;
        parts.push((lo, mid, left));
        parts.push((mid, hi, right));
    }
    parts.iter().map(|p| p.2 .0).sum()
}

/// Integral over a finite interval with absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    adapt(&f, a, b, tol, 48)
}

/// Integral over `[a, b]` after splitting at the given interior points.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, points: &[f64], tol: f64) -> f64 {
    let per = tol / points.len().max(1) as f64;
    points
        .windows(2)
        .map(|w| adapt(&f, w[0], w[1], per, 48))
        .sum()
}

/// Integral over `[a, inf)` through the map `x = a + t/(1-t)`.
pub fn integrate_to_inf<F: Fn(f64) -> f64>(f: F, a: f64, tol: f64) -> f64 {
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let u = 1.0 - t;
        let v = f(a + t / u) / (u * u);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    adapt(&g, 0.0, 1.0, tol, 48)
}

/// `log K_nu(x)` from the integral representation
/// `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt`, evaluated with the
/// integrand rescaled by its peak so huge or tiny values stay representable.
pub fn log_bessel_k_quad(nu: f64, x: f64) -> f64 {
    let a = nu.abs();
    let phi = |t: f64| -x * t.cosh() + a * t;
    let peak_t = (a / x).asinh();
    let peak = phi(peak_t);
    let end = tail_end(&phi, peak_t, peak);
    let integrand = |t: f64| {
        let main = (phi(t) - peak).exp();
        let other = (-x * t.cosh() - a * t - peak).exp();
        0.5 * (main + other)
    };
    let width = 1.0 / (x * x + a * a).sqrt().sqrt();
    let mut pts = vec![0.0];
    for k in [-8.0, -3.0, -1.0, 0.0, 1.0, 3.0, 8.0] {
        let t = peak_t + k * width;
        if t > 0.0 && t < end {
            pts.push(t);
        }
    }
    pts.push(end);
    pts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    pts.dedup();
    let v = integrate_pieces(integrand, &pts, 1e-15);
    peak + v.ln()
}

/// `d/dnu log K_nu(x)` as `int exp(-x cosh t) t sinh(nu t) dt / K_nu(x)`.
pub fn dlog_bessel_k_quad(nu: f64, x: f64) -> f64 {
    let a = nu.abs();
    let phi = |t: f64| -x * t.cosh() + a * t;
    let peak_t = (a / x).asinh();
    let peak = phi(peak_t);
    let end = tail_end(&phi, peak_t, peak) + 5.0;
    let num = |t: f64| {
        let main = (phi(t) - peak).exp();
        let other = (-x * t.cosh() - a * t - peak).exp();
        0.5 * t * (main - other)
    };
    let den = |t: f64| {
        let main = (phi(t) - peak).exp();
        let other = (-x * t.cosh() - a * t - peak).exp();
        0.5 * (main + other)
    };
    let width = 1.0 / (x * x + a * a).sqrt().sqrt();
    let mut pts = vec![0.0];
    for k in [-8.0, -3.0, -1.0, 0.0, 1.0, 3.0, 8.0] {
        let t = peak_t + k * width;
        if t > 0.0 && t < end {
            pts.push(t);
        }
    }
    pts.push(end);
    pts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    pts.dedup();
    let n = integrate_pieces(num, &pts, 1e-15);
    let d = integrate_pieces(den, &pts, 1e-15);
    nu.signum() * n / d
}

fn tail_end<F: Fn(f64) -> f64>(phi: &F, peak_t: f64, peak: f64) -> f64 {
    let mut step = 0.5;
    let mut t = peak_t;
    while phi(t) - peak > -745.0 {
        t += step;
        step *= 1.5;
    }
    t
}
