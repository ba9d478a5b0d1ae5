//! GHD, MSGHD and CGHD log-densities and their finite mixtures.
//!
//! Location `mu` and skewness `beta` live in the rotated coordinates
//! `y = Gamma' x`; the scale matrix is `Sigma = Gamma diag(phi) Gamma'` and is
//! never formed. Every quadratic form is a weighted sum over `y - mu`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::specfun::{self, log_bessel_k};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Which sub-structure of the coalesced component a mixture uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    /// Generalized hyperbolic components (`varpi = 1`).
    Mghd,
    /// Multiple-scaled generalized hyperbolic components (`varpi = 0`).
    Mmsghd,
    /// Multiple-scaled components with every index `lambda_j > 1`.
    McMsghd,
    /// Coalesced components, `varpi` free in `[0, 1]`.
    Mcghd,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Mghd, Family::Mmsghd, Family::McMsghd, Family::Mcghd];

    pub fn name(self) -> &'static str {
        match self {
            Family::Mghd => "mghd",
            Family::Mmsghd => "mmsghd",
            Family::McMsghd => "mcmsghd",
            Family::Mcghd => "mcghd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mghd" => Ok(Family::Mghd),
            "mmsghd" => Ok(Family::Mmsghd),
            "mcmsghd" => Ok(Family::McMsghd),
            "mcghd" => Ok(Family::Mcghd),
            other => Err(Error::invalid(format!("unknown model family '{other}'"))),
        }
    }

    /// Inner mixing proportion imposed by the family, if any.
    pub fn fixed_varpi(self) -> Option<f64> {
        match self {
            Family::Mghd => Some(1.0),
            Family::Mmsghd | Family::McMsghd => Some(0.0),
            Family::Mcghd => None,
        }
    }

    pub fn uses_ghd(self) -> bool {
        matches!(self, Family::Mghd | Family::Mcghd)
    }

    pub fn uses_msghd(self) -> bool {
        !matches!(self, Family::Mghd)
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One coalesced generalized hyperbolic component.
#[derive(Debug, Clone, PartialEq)]
pub struct CghdComponent {
    pub mu: DVector<f64>,
    pub gamma: DMatrix<f64>,
    pub phi: DVector<f64>,
    pub beta: DVector<f64>,
    pub omega: DVector<f64>,
    pub lambda: DVector<f64>,
    pub omega0: f64,
    pub lambda0: f64,
    pub varpi: f64,
}

impl CghdComponent {
    /// Unit-scale, unrotated, symmetric component at `mu` with the given
    /// concentrations/indices shared by both branches.
    pub fn spherical(mu: DVector<f64>, omega: f64, lambda: f64, varpi: f64) -> Self {
        let p = mu.len();
        Self {
            gamma: DMatrix::identity(p, p),
            phi: DVector::from_element(p, 1.0),
            beta: DVector::zeros(p),
            omega: DVector::from_element(p, omega),
            lambda: DVector::from_element(p, lambda),
            omega0: omega,
            lambda0: lambda,
            varpi,
            mu,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.dim();
        for (name, len) in [
            ("phi", self.phi.len()),
            ("beta", self.beta.len()),
            ("omega", self.omega.len()),
            ("lambda", self.lambda.len()),
        ] {
            if len != p {
                return Err(Error::invalid(format!("{name} has length {len}, expected {p}")));
            }
        }
        if self.gamma.nrows() != p || self.gamma.ncols() != p {
            return Err(Error::invalid(format!(
                "gamma is {}x{}, expected {p}x{p}",
                self.gamma.nrows(),
                self.gamma.ncols()
            )));
        }
        let gtg = self.gamma.transpose() * &self.gamma - DMatrix::<f64>::identity(p, p);
        if gtg.amax() > 1e-10 {
            return Err(Error::invalid(format!(
                "gamma is not orthogonal (max deviation {:.3e})",
                gtg.amax()
            )));
        }
        if self.phi.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("phi entries must be positive and finite"));
        }
        if self.omega.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !(self.omega0 > 0.0) {
            return Err(Error::invalid("concentrations must be positive"));
        }
        if self.lambda.iter().any(|v| !v.is_finite()) || !self.lambda0.is_finite() {
            return Err(Error::invalid("indices must be finite"));
        }
        if !(0.0..=1.0).contains(&self.varpi) {
            return Err(Error::invalid(format!("varpi {} outside [0, 1]", self.varpi)));
        }
        if self.mu.iter().chain(self.beta.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("location and skewness must be finite"));
        }
        Ok(())
    }

    /// `Gamma' x`.
    pub fn rotate(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self.gamma.tr_mul(&DVector::from_column_slice(x)))
    }

    /// `Sigma = Gamma diag(phi) Gamma'`; only used for reporting and tests.
    pub fn sigma(&self) -> DMatrix<f64> {
        &self.gamma * DMatrix::from_diagonal(&self.phi) * self.gamma.transpose()
    }
}

/// Component constants reused across observations.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub p: usize,
    /// `log K_{lambda0}(omega0)`
    pub log_k0: f64,
    /// `omega0 + beta' Phi^{-1} beta`
    pub d0: f64,
    pub log_det: f64,
    /// `log K_{lambda_j}(omega_j)`
    pub log_k: Vec<f64>,
    /// `omega_j + beta_j^2 / phi_j`
    pub dbar: Vec<f64>,
}

/// GHD log-density at rotated `y` plus, optionally, the posterior moments of
/// the latent weight `(E[W], E[1/W], E[log W])`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BranchEval {
    pub log_density: f64,
    pub moments: Option<(f64, f64, f64)>,
}

impl Prepared {
    pub fn new(comp: &CghdComponent, ghd: bool, msghd: bool) -> Result<Self> {
        let p = comp.dim();
        let quad_beta: f64 = (0..p).map(|j| comp.beta[j] * comp.beta[j] / comp.phi[j]).sum();
        let log_k0 = if ghd {
            log_bessel_k(comp.lambda0, comp.omega0)?
        } else {
            0.0
        };
        let mut log_k = Vec::with_capacity(if msghd { p } else { 0 });
        let mut dbar = Vec::with_capacity(if msghd { p } else { 0 });
        if msghd {
            for j in 0..p {
                log_k.push(log_bessel_k(comp.lambda[j], comp.omega[j])?);
                dbar.push(comp.omega[j] + comp.beta[j] * comp.beta[j] / comp.phi[j]);
            }
        }
        Ok(Self {
            p,
            log_k0,
            d0: comp.omega0 + quad_beta,
            log_det: comp.phi.iter().map(|v| v.ln()).sum(),
            log_k,
            dbar,
        })
    }

    pub fn ghd(&self, comp: &CghdComponent, y: &[f64], moments: bool) -> Result<BranchEval> {
        let mut delta = 0.0;
        let mut skew = 0.0;
        for j in 0..self.p {
            let r = y[j] - comp.mu[j];
            delta += r * r / comp.phi[j];
            skew += r * comp.beta[j] / comp.phi[j];
        }
        let e = comp.omega0 + delta;
        let nu = comp.lambda0 - 0.5 * self.p as f64;
        let s = (self.d0 * e).sqrt();
        let (lk, up, down) = specfun::log_k_neighbours(nu, s)?;
        let half_log_ratio = 0.5 * (e.ln() - self.d0.ln());
        let log_density = nu * half_log_ratio + lk
            - 0.5 * self.p as f64 * LN_2PI
            - 0.5 * self.log_det
            - self.log_k0
            + skew;
        let moments = if moments {
            let scale = half_log_ratio.exp();
            Some((
                scale * up.exp(),
                down.exp() / scale,
                half_log_ratio + specfun::dlog_bessel_k_dnu(nu, s)?,
            ))
        } else {
            None
        };
        Ok(BranchEval {
            log_density,
            moments,
        })
    }

    /// Univariate GHD factor of coordinate `j` of the MSGHD branch.
    pub fn msghd_coord(&self, comp: &CghdComponent, j: usize, yj: f64, moments: bool) -> Result<BranchEval> {
        let r = yj - comp.mu[j];
        let phi = comp.phi[j];
        let e = comp.omega[j] + r * r / phi;
        let d = self.dbar[j];
        let nu = comp.lambda[j] - 0.5;
        let s = (d * e).sqrt();
        let (lk, up, down) = specfun::log_k_neighbours(nu, s)?;
        let half_log_ratio = 0.5 * (e.ln() - d.ln());
        let log_density = nu * half_log_ratio + lk - 0.5 * LN_2PI - 0.5 * phi.ln() - self.log_k[j]
            + r * comp.beta[j] / phi;
        let moments = if moments {
            let scale = half_log_ratio.exp();
            Some((
                scale * up.exp(),
                down.exp() / scale,
                half_log_ratio + specfun::dlog_bessel_k_dnu(nu, s)?,
            ))
        } else {
            None
        };
        Ok(BranchEval {
            log_density,
            moments,
        })
    }

    pub fn msghd(&self, comp: &CghdComponent, y: &[f64]) -> Result<f64> {
        (0..self.p).try_fold(0.0, |acc, j| Ok(acc + self.msghd_coord(comp, j, y[j], false)?.log_density))
    }
}

/// `log(w1 e^a + w2 e^b)` for non-negative weights.
pub(crate) fn log_mix2(w1: f64, a: f64, w2: f64, b: f64) -> f64 {
    if w1 <= 0.0 {
        return w2.ln() + b;
    }
    if w2 <= 0.0 {
        return w1.ln() + a;
    }
    let la = w1.ln() + a;
    let lb = w2.ln() + b;
    let m = la.max(lb);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((la - m).exp() + (lb - m).exp()).ln()
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn check_finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::numeric(format!("{what} evaluated to {v}")))
    }
}

/// Squared Mahalanobis distance `delta(x, mu | Sigma)` in rotated coordinates.
pub fn mahalanobis(x: &[f64], comp: &CghdComponent) -> Result<f64> {
    let y = comp.rotate(x)?;
    Ok((0..comp.dim())
        .map(|j| {
            let r = y[j] - comp.mu[j];
            r * r / comp.phi[j]
        })
        .sum())
}

pub fn ghd_log_density(x: &[f64], comp: &CghdComponent) -> Result<f64> {
    comp.validate()?;
    let y = comp.rotate(x)?;
    let prep = Prepared::new(comp, true, false)?;
    check_finite(prep.ghd(comp, y.as_slice(), false)?.log_density, "GHD log-density")
}

/// Product over rotated coordinates of univariate GHD densities with
/// parameters `(mu_j, phi_j, beta_j, omega_j, lambda_j)`.
pub fn msghd_log_density(x: &[f64], comp: &CghdComponent) -> Result<f64> {
    comp.validate()?;
    let y = comp.rotate(x)?;
    let prep = Prepared::new(comp, false, true)?;
    check_finite(prep.msghd(comp, y.as_slice())?, "MSGHD log-density")
}

pub fn cghd_log_density(x: &[f64], comp: &CghdComponent) -> Result<f64> {
    comp.validate()?;
    let y = comp.rotate(x)?;
    component_log_density(comp, None, y.as_slice())
}

/// Log-density of one component under a family, evaluated at rotated `y`.
fn component_log_density(comp: &CghdComponent, family: Option<Family>, y: &[f64]) -> Result<f64> {
    let varpi = family.and_then(Family::fixed_varpi).unwrap_or(comp.varpi);
    let ghd = varpi > 0.0;
    let msghd = varpi < 1.0;
    let prep = Prepared::new(comp, ghd, msghd)?;
    let lg = if ghd {
        prep.ghd(comp, y, false)?.log_density
    } else {
        0.0
    };
    let lm = if msghd { prep.msghd(comp, y)? } else { 0.0 };
    check_finite(log_mix2(varpi, lg, 1.0 - varpi, lm), "CGHD log-density")
}

/// A G-component mixture of coalesced generalized hyperbolic distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    pub family: Family,
    pub pi: Vec<f64>,
    pub components: Vec<CghdComponent>,
}

impl MixtureModel {
    pub fn new(family: Family, pi: Vec<f64>, components: Vec<CghdComponent>) -> Result<Self> {
        let model = Self {
            family,
            pi,
            components,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn g(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, CghdComponent::dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        if self.pi.len() != self.components.len() {
            return Err(Error::DimensionMismatch {
                expected: self.components.len(),
                found: self.pi.len(),
            });
        }
        let total: f64 = self.pi.iter().sum();
        if (total - 1.0).abs() > 1e-12 || self.pi.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid(format!(
                "mixing proportions must be positive and sum to 1 (sum {total})"
            )));
        }
        let p = self.dim();
        for (g, comp) in self.components.iter().enumerate() {
            comp.validate()?;
            if comp.dim() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: comp.dim(),
                });
            }
            if let Some(v) = self.family.fixed_varpi() {
                if comp.varpi != v {
                    return Err(Error::invalid(format!(
                        "component {} has varpi {} but family {} requires {v}",
                        g + 1,
                        comp.varpi,
                        self.family
                    )));
                }
            }
            if self.family == Family::McMsghd && comp.lambda.iter().any(|l| *l <= 1.0) {
                return Err(Error::invalid(format!(
                    "component {} violates lambda_j > 1 required by {}",
                    g + 1,
                    self.family
                )));
            }
        }
        Ok(())
    }

    /// `log pi_g + log f_g(x)` for every component.
    pub fn weighted_component_log_densities(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.components
            .iter()
            .zip(&self.pi)
            .map(|(comp, pi)| {
                let y = comp.rotate(x)?;
                Ok(pi.ln() + component_log_density(comp, Some(self.family), y.as_slice())?)
            })
            .collect()
    }
}

pub fn mixture_log_density(x: &[f64], model: &MixtureModel) -> Result<f64> {
    model.validate()?;
    let terms = model.weighted_component_log_densities(x)?;
    check_finite(log_sum_exp(&terms), "mixture log-density")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn skewed_1d() -> CghdComponent {
        let mut c = CghdComponent::spherical(DVector::from_vec(vec![0.4]), 1.3, -0.8, 0.5);
        c.beta[0] = 0.7;
        c.phi[0] = 2.0;
        c.omega[0] = 0.6;
        c.lambda[0] = 1.7;
        c
    }

    #[test]
    fn mahalanobis_direct_sum() {
        let mut c = CghdComponent::spherical(DVector::zeros(2), 1.0, 0.5, 1.0);
        c.phi = DVector::from_vec(vec![1.0, 4.0]);
        assert_relative_eq!(mahalanobis(&[1.0, 2.0], &c).unwrap(), 2.0);
        c.mu = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(mahalanobis(&[1.0, 2.0], &c).unwrap(), 0.0);
        assert!(matches!(
            mahalanobis(&[1.0], &c),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn symmetric_without_skewness() {
        let c = CghdComponent::spherical(DVector::from_vec(vec![1.5]), 0.9, 0.3, 1.0);
        for t in [0.1, 1.0, 4.0, 20.0] {
            let a = ghd_log_density(&[1.5 + t], &c).unwrap();
            let b = ghd_log_density(&[1.5 - t], &c).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
    }

    #[test]
    fn cghd_endpoints() {
        let mut c = skewed_1d();
        for x in [-3.0, 0.0, 2.5] {
            c.varpi = 1.0;
            assert_eq!(cghd_log_density(&[x], &c).unwrap(), ghd_log_density(&[x], &c).unwrap());
            c.varpi = 0.0;
            assert_eq!(cghd_log_density(&[x], &c).unwrap(), msghd_log_density(&[x], &c).unwrap());
        }
    }

    #[test]
    fn identical_components_collapse() {
        let c = skewed_1d();
        let single = MixtureModel::new(Family::Mcghd, vec![1.0], vec![c.clone()]).unwrap();
        let double = MixtureModel::new(Family::Mcghd, vec![0.3, 0.7], vec![c.clone(), c]).unwrap();
        for x in [-2.0, 0.1, 3.3] {
            let a = mixture_log_density(&[x], &single).unwrap();
            let b = mixture_log_density(&[x], &double).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
    }

    #[test]
    fn family_constraints_enforced() {
        let mut c = skewed_1d();
        assert!(MixtureModel::new(Family::Mghd, vec![1.0], vec![c.clone()]).is_err());
        c.varpi = 0.0;
        c.lambda[0] = 0.9;
        assert!(MixtureModel::new(Family::Mmsghd, vec![1.0], vec![c.clone()]).is_ok());
        assert!(MixtureModel::new(Family::McMsghd, vec![1.0], vec![c.clone()]).is_err());
        assert!(MixtureModel::new(Family::Mmsghd, vec![0.5, 0.6], vec![c.clone(), c]).is_err());
    }

    #[test]
    fn rejects_non_orthogonal_gamma() {
        let mut c = CghdComponent::spherical(DVector::zeros(2), 1.0, 0.5, 1.0);
        c.gamma[(0, 1)] = 0.1;
        assert!(ghd_log_density(&[0.0, 0.0], &c).is_err());
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(Family::parse(f.name()).unwrap(), f);
        }
        assert!(Family::parse("gmm").is_err());
    }
}
