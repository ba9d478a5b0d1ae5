//! Draws from GHD, MSGHD and CGHD components, and the simulation scenarios
//! used to benchmark the fitting engine.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::densities::CghdComponent;
use crate::error::{Error, Result};
use crate::gig::{GigParams, GigSampler};

struct Samplers {
    ghd: Option<GigSampler>,
    msghd: Vec<GigSampler>,
}

impl Samplers {
    fn new(comp: &CghdComponent, ghd: bool, msghd: bool) -> Result<Self> {
        let ghd = if ghd {
            Some(GigSampler::new(&GigParams::new(comp.omega0, 1.0, comp.lambda0)?))
        } else {
            None
        };
        let msghd = if msghd {
            (0..comp.dim())
                .map(|j| Ok(GigSampler::new(&GigParams::new(comp.omega[j], 1.0, comp.lambda[j])?)))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(Self { ghd, msghd })
    }
}

/// `Gamma (mu + w o beta + sqrt(w) o sqrt(phi) o z)` for per-coordinate weights `w`.
fn assemble(comp: &CghdComponent, w: &[f64], rng: &mut ChaCha8Rng) -> DVector<f64> {
    let p = comp.dim();
    let y = DVector::from_fn(p, |j, _| {
        let z: f64 = rng.sample(StandardNormal);
        comp.mu[j] + w[j] * comp.beta[j] + (w[j] * comp.phi[j]).sqrt() * z
    });
    &comp.gamma * y
}

fn ghd_draw(comp: &CghdComponent, s: &Samplers, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let w = s.ghd.as_ref().expect("GHD sampler").sample(rng);
    assemble(comp, &vec![w; comp.dim()], rng)
}

fn msghd_draw(comp: &CghdComponent, s: &Samplers, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let w: Vec<f64> = s.msghd.iter().map(|g| g.sample(rng)).collect();
    assemble(comp, &w, rng)
}

fn rows(draws: Vec<DVector<f64>>, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(draws.len(), p, |i, j| draws[i][j])
}

/// `n` GHD draws `Gamma mu + W Gamma beta + sqrt(W) V`, `W ~ GIG(omega0, 1, lambda0)`.
pub fn sample_ghd(comp: &CghdComponent, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    comp.validate()?;
    let s = Samplers::new(comp, true, false)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rows((0..n).map(|_| ghd_draw(comp, &s, &mut rng)).collect(), comp.dim()))
}

/// `n` MSGHD draws with an independent weight per rotated coordinate.
pub fn sample_msghd(comp: &CghdComponent, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    comp.validate()?;
    let s = Samplers::new(comp, false, true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rows((0..n).map(|_| msghd_draw(comp, &s, &mut rng)).collect(), comp.dim()))
}

/// `n` CGHD draws and the inner label of each (`true` for the GHD branch).
/// With `varpi` at 1 (or 0) no Bernoulli draws are made, so the stream is
/// exactly that of [`sample_ghd`] (or [`sample_msghd`]).
pub fn sample_cghd_labeled(comp: &CghdComponent, n: usize, seed: u64) -> Result<(DMatrix<f64>, Vec<bool>)> {
    comp.validate()?;
    let varpi = comp.varpi;
    let s = Samplers::new(comp, varpi > 0.0, varpi < 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(n);
    let mut branch = Vec::with_capacity(n);
    for _ in 0..n {
        let u = if varpi >= 1.0 {
            true
        } else if varpi <= 0.0 {
            false
        } else {
            rng.random::<f64>() < varpi
        };
        draws.push(if u { ghd_draw(comp, &s, &mut rng) } else { msghd_draw(comp, &s, &mut rng) });
        branch.push(u);
    }
    Ok((rows(draws, comp.dim()), branch))
}

pub fn sample_cghd(comp: &CghdComponent, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    Ok(sample_cghd_labeled(comp, n, seed)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Generator {
    Gaussian,
    SkewNormal,
    Ghd,
    Msghd,
}

impl Generator {
    pub const ALL: [Generator; 4] = [Generator::Gaussian, Generator::SkewNormal, Generator::Ghd, Generator::Msghd];

    pub fn name(self) -> &'static str {
        match self {
            Generator::Gaussian => "gaussian",
            Generator::SkewNormal => "skew_normal",
            Generator::Ghd => "ghd",
            Generator::Msghd => "msghd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "gaussian" | "normal" => Ok(Generator::Gaussian),
            "skew_normal" | "skewnormal" => Ok(Generator::SkewNormal),
            "ghd" => Ok(Generator::Ghd),
            "msghd" => Ok(Generator::Msghd),
            other => Err(Error::invalid(format!("unknown generator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub generator: Generator,
    pub p: usize,
    pub g: usize,
    pub n_per_component: usize,
    pub hypercube_side: f64,
    pub corr_range: (f64, f64),
    pub skew_range: (f64, f64),
    pub omega_fixed: f64,
    pub lambda_fixed: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(generator: Generator, p: usize, g: usize, seed: u64) -> Self {
        Self {
            generator,
            p,
            g,
            n_per_component: 200,
            hypercube_side: 50.0,
            corr_range: (0.0, 0.6),
            skew_range: (-6.0, 6.0),
            omega_fixed: 1.0,
            lambda_fixed: -0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.g == 0 || self.n_per_component == 0 {
            return Err(Error::invalid("scenario counts must be positive"));
        }
        if !(self.hypercube_side > 0.0) || !(self.omega_fixed > 0.0) || !self.lambda_fixed.is_finite() {
            return Err(Error::invalid("scenario side and concentration must be positive"));
        }
        for (name, (lo, hi)) in [("corr_range", self.corr_range), ("skew_range", self.skew_range)] {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::invalid(format!("{name} must be an ordered finite interval")));
            }
        }
        if self.corr_range.0 <= -1.0 || self.corr_range.1 >= 1.0 {
            return Err(Error::invalid("corr_range must lie inside (-1, 1)"));
        }
        Ok(())
    }
}

/// Symmetric positive-definite matrix with unit diagonal and off-diagonal
/// entries drawn from `range`; eigenvalues are clipped and the diagonal
/// renormalized when the raw draw is not positive definite.
pub fn random_correlation(p: usize, range: (f64, f64), rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut a = DMatrix::identity(p, p);
    for i in 0..p {
        for j in 0..i {
            let v = if range.1 > range.0 { rng.random_range(range.0..range.1) } else { range.0 };
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    const MIN_EIG: f64 = 1e-3;
    for _ in 0..50 {
        let eig = SymmetricEigen::new(a.clone());
        if eig.eigenvalues.min() >= MIN_EIG {
            break;
        }
        let clipped = eig.eigenvalues.map(|v| v.max(MIN_EIG));
        let b = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        let d = b.diagonal().map(|v| 1.0 / v.sqrt());
        a = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { b[(i, j)] * d[i] * d[j] });
    }
    a
}

/// Data and one-based true labels for a simulation scenario.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<(DMatrix<f64>, Vec<usize>)> {
    spec.validate()?;
    let (p, m) = (spec.p, spec.n_per_component);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = DMatrix::zeros(spec.g * m, p);
    let mut labels = Vec::with_capacity(spec.g * m);
    for k in 0..spec.g {
        let centre = DVector::from_fn(p, |_, _| rng.random_range(0.0..spec.hypercube_side));
        let sigma = random_correlation(p, spec.corr_range, &mut rng);
        let (lo, hi) = spec.skew_range;
        let skew = DVector::from_fn(p, |_, _| if hi > lo { rng.random_range(lo..hi) } else { lo });
        let seed: u64 = rng.random();
        let block = match spec.generator {
            Generator::Gaussian => {
                let l = sigma.cholesky().expect("scale is positive definite").l();
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                DMatrix::from_fn(m, p, |_, _| r.sample::<f64, _>(StandardNormal)) * l.transpose()
                    + DMatrix::from_fn(m, p, |_, j| centre[j])
            }
            Generator::SkewNormal => {
                let l = sigma.cholesky().expect("scale is positive definite").l();
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                let mut out = DMatrix::zeros(m, p);
                for i in 0..m {
                    let z0: f64 = r.sample::<f64, _>(StandardNormal).abs();
                    let z = DVector::from_fn(p, |_, _| r.sample::<f64, _>(StandardNormal));
                    let x = &centre + z0 * &skew + &l * z;
                    out.set_row(i, &x.transpose());
                }
                out
            }
            Generator::Ghd | Generator::Msghd => {
                let eig = SymmetricEigen::new(sigma);
                let mut comp = CghdComponent::spherical(
                    DVector::zeros(p),
                    spec.omega_fixed,
                    spec.lambda_fixed,
                    if spec.generator == Generator::Ghd { 1.0 } else { 0.0 },
                );
                comp.gamma = eig.eigenvectors;
                comp.phi = eig.eigenvalues;
                comp.mu = comp.gamma.tr_mul(&centre);
                comp.beta = skew;
                sample_cghd(&comp, m, seed)?
            }
        };
        data.rows_mut(k * m, m).copy_from(&block);
        labels.extend(std::iter::repeat_n(k + 1, m));
    }
    Ok((data, labels))
}
