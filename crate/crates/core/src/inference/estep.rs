//! Posterior expectations of the latent labels and weights.

use nalgebra::DMatrix;

use crate::densities::{log_mix2, log_sum_exp, MixtureModel, Prepared};
use crate::error::{Error, Result};

const RESP_FLOOR: f64 = 1e-300;

/// Everything the M-step needs from one E-step.
///
/// `a`, `b`, `c` are `E[W0]`, `E[1/W0]`, `E[log W0]` for the GHD branch;
/// `e1[g]`, `e2[g]`, `e3[g]` are `n x p` matrices of the same moments for the
/// per-coordinate weights of the MSGHD branch. Branches a family does not use
/// are filled with the neutral values `1, 1, 0`.
#[derive(Debug, Clone)]
pub struct EStepCache {
    pub zhat: DMatrix<f64>,
    pub uhat: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub e1: Vec<DMatrix<f64>>,
    pub e2: Vec<DMatrix<f64>>,
    pub e3: Vec<DMatrix<f64>>,
    /// Rotated data `X Gamma_g` for each component.
    pub rotated: Vec<DMatrix<f64>>,
    /// Observed-data log-likelihood (classification form when labels are fixed).
    pub loglik: f64,
}

impl EStepCache {
    pub fn n(&self) -> usize {
        self.zhat.nrows()
    }

    pub fn g(&self) -> usize {
        self.zhat.ncols()
    }

    pub fn p(&self) -> usize {
        self.rotated.first().map_or(0, |m| m.ncols())
    }

    /// `s1 = u a + (1 - u) E1` for observation `i`, coordinate `j`, component `g`.
    pub fn s1(&self, i: usize, j: usize, g: usize) -> f64 {
        let u = self.uhat[(i, g)];
        u * self.a[(i, g)] + (1.0 - u) * self.e1[g][(i, j)]
    }

    /// `s2 = u b + (1 - u) E2`.
    pub fn s2(&self, i: usize, j: usize, g: usize) -> f64 {
        let u = self.uhat[(i, g)];
        u * self.b[(i, g)] + (1.0 - u) * self.e2[g][(i, j)]
    }
}

/// Weighted averages of the E-step quantities for each component.
///
/// `A`, `B`, `C` average the GHD-branch moments with weights `z u`, and the
/// `Ebar` matrices average the MSGHD-branch moments with weights `z (1 - u)`,
/// the weights under which each branch's weight law enters the expected
/// complete-data log-likelihood. `s1bar`, `s2bar` are plain `z` averages.
#[derive(Debug, Clone)]
pub struct SufficientStats {
    pub n_g: Vec<f64>,
    /// `sum_i z u` and `sum_i z (1 - u)` per component.
    pub n_ghd: Vec<f64>,
    pub n_msghd: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub ebar1: DMatrix<f64>,
    pub ebar2: DMatrix<f64>,
    pub ebar3: DMatrix<f64>,
    pub s1bar: DMatrix<f64>,
    pub s2bar: DMatrix<f64>,
}

impl SufficientStats {
    pub fn from_cache(cache: &EStepCache) -> Self {
        let (n, g, p) = (cache.n(), cache.g(), cache.p());
        let mut st = Self {
            n_g: vec![0.0; g],
            n_ghd: vec![0.0; g],
            n_msghd: vec![0.0; g],
            a: vec![0.0; g],
            b: vec![0.0; g],
            c: vec![0.0; g],
            ebar1: DMatrix::zeros(g, p),
            ebar2: DMatrix::zeros(g, p),
            ebar3: DMatrix::zeros(g, p),
            s1bar: DMatrix::zeros(g, p),
            s2bar: DMatrix::zeros(g, p),
        };
        for k in 0..g {
            for i in 0..n {
                let z = cache.zhat[(i, k)];
                let u = cache.uhat[(i, k)];
                let (wg, wm) = (z * u, z * (1.0 - u));
                st.n_g[k] += z;
                st.n_ghd[k] += wg;
                st.n_msghd[k] += wm;
                st.a[k] += wg * cache.a[(i, k)];
                st.b[k] += wg * cache.b[(i, k)];
                st.c[k] += wg * cache.c[(i, k)];
                for j in 0..p {
                    st.ebar1[(k, j)] += wm * cache.e1[k][(i, j)];
                    st.ebar2[(k, j)] += wm * cache.e2[k][(i, j)];
                    st.ebar3[(k, j)] += wm * cache.e3[k][(i, j)];
                    st.s1bar[(k, j)] += z * cache.s1(i, j, k);
                    st.s2bar[(k, j)] += z * cache.s2(i, j, k);
                }
            }
            let div = |num: &mut f64, den: f64| *num = if den > 0.0 { *num / den } else { 0.0 };
            div(&mut st.a[k], st.n_ghd[k]);
            div(&mut st.b[k], st.n_ghd[k]);
            div(&mut st.c[k], st.n_ghd[k]);
            for j in 0..p {
                div(&mut st.ebar1[(k, j)], st.n_msghd[k]);
                div(&mut st.ebar2[(k, j)], st.n_msghd[k]);
                div(&mut st.ebar3[(k, j)], st.n_msghd[k]);
                div(&mut st.s1bar[(k, j)], st.n_g[k]);
                div(&mut st.s2bar[(k, j)], st.n_g[k]);
            }
        }
        st
    }
}

/// E-step over all observations. `fixed[i] = Some(g)` pins observation `i` to
/// component `g` (zero-based); its responsibilities become the indicator and
/// it contributes `log(pi_g f_g(x_i))` to the log-likelihood.
pub fn e_step(data: &DMatrix<f64>, model: &MixtureModel, fixed: Option<&[Option<usize>]>) -> Result<EStepCache> {
    let (n, p) = data.shape();
    if p != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: p,
        });
    }
    if let Some(f) = fixed {
        if f.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: f.len(),
            });
        }
    }
    let g = model.g();
    let mut cache = EStepCache {
        zhat: DMatrix::zeros(n, g),
        uhat: DMatrix::zeros(n, g),
        a: DMatrix::from_element(n, g, 1.0),
        b: DMatrix::from_element(n, g, 1.0),
        c: DMatrix::zeros(n, g),
        e1: vec![DMatrix::from_element(n, p, 1.0); g],
        e2: vec![DMatrix::from_element(n, p, 1.0); g],
        e3: vec![DMatrix::zeros(n, p); g],
        rotated: Vec::with_capacity(g),
        loglik: 0.0,
    };
    // log pi_g + log f_g(x_i), filled column by column
    let mut logw = DMatrix::zeros(n, g);
    let fail = |i: usize, k: usize, e: Error| {
        Error::numeric(format!("E-step failed at observation {} component {}: {e}", i + 1, k + 1))
    };
    for (k, comp) in model.components.iter().enumerate() {
        let varpi = model.family.fixed_varpi().unwrap_or(comp.varpi);
        let ghd = varpi > 0.0;
        let msghd = varpi < 1.0;
        let prep = Prepared::new(comp, ghd, msghd).map_err(|e| fail(0, k, e))?;
        let y = data * &comp.gamma;
        let log_pi = model.pi[k].ln();
        for i in 0..n {
            let yi: Vec<f64> = (0..p).map(|j| y[(i, j)]).collect();
            let mut lg = 0.0;
            if ghd {
                let br = prep.ghd(comp, &yi, true).map_err(|e| fail(i, k, e))?;
                let (ea, eb, ec) = br.moments.expect("moments requested");
                lg = br.log_density;
                cache.a[(i, k)] = ea;
                cache.b[(i, k)] = eb;
                cache.c[(i, k)] = ec;
            }
            let mut lm = 0.0;
            if msghd {
                for (j, yj) in yi.iter().enumerate() {
                    let br = prep.msghd_coord(comp, j, *yj, true).map_err(|e| fail(i, k, e))?;
                    let (e1, e2, e3) = br.moments.expect("moments requested");
                    lm += br.log_density;
                    cache.e1[k][(i, j)] = e1;
                    cache.e2[k][(i, j)] = e2;
                    cache.e3[k][(i, j)] = e3;
                }
            }
            let lf = log_mix2(varpi, lg, 1.0 - varpi, lm);
            cache.uhat[(i, k)] = if !msghd {
                1.0
            } else if !ghd {
                0.0
            } else {
                (varpi.ln() + lg - lf).exp().clamp(0.0, 1.0)
            };
            let v = log_pi + lf;
            if !v.is_finite() {
                return Err(fail(i, k, Error::numeric(format!("log-density is {v}"))));
            }
            logw[(i, k)] = v;
        }
        cache.rotated.push(y);
    }
    let mut loglik = 0.0;
    for i in 0..n {
        let row: Vec<f64> = (0..g).map(|k| logw[(i, k)]).collect();
        match fixed.and_then(|f| f[i]) {
            Some(label) => {
                loglik += row[label];
                cache.zhat[(i, label)] = 1.0;
            }
            None => {
                let lse = log_sum_exp(&row);
                loglik += lse;
                let mut total = 0.0;
                for k in 0..g {
                    let z = (row[k] - lse).exp().max(RESP_FLOOR);
                    cache.zhat[(i, k)] = z;
                    total += z;
                }
                for k in 0..g {
                    cache.zhat[(i, k)] /= total;
                }
            }
        }
    }
    if !loglik.is_finite() {
        return Err(Error::numeric(format!("log-likelihood evaluated to {loglik}")));
    }
    cache.loglik = loglik;
    Ok(cache)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::{CghdComponent, Family};
    use nalgebra::DVector;

    fn blob_data() -> DMatrix<f64> {
        DMatrix::from_fn(30, 2, |i, j| ((i * 37 + j * 11) % 13) as f64 / 4.0 - 1.5)
    }

    fn comp(mu: f64, varpi: f64) -> CghdComponent {
        let mut c = CghdComponent::spherical(DVector::from_element(2, mu), 1.0, -0.5, varpi);
        c.beta[0] = 0.3;
        c
    }

    #[test]
    fn single_component_owns_everything() {
        let model = MixtureModel::new(Family::Mcghd, vec![1.0], vec![comp(0.0, 0.5)]).unwrap();
        let cache = e_step(&blob_data(), &model, None).unwrap();
        assert!(cache.zhat.iter().all(|z| *z == 1.0));
    }

    #[test]
    fn identical_components_split_evenly() {
        let model =
            MixtureModel::new(Family::Mcghd, vec![0.5, 0.5], vec![comp(0.2, 0.4), comp(0.2, 0.4)]).unwrap();
        let cache = e_step(&blob_data(), &model, None).unwrap();
        assert!(cache.zhat.iter().all(|z| (z - 0.5).abs() < 1e-12));
    }

    #[test]
    fn inner_label_follows_family() {
        let data = blob_data();
        let m = MixtureModel::new(Family::Mghd, vec![1.0], vec![comp(0.0, 1.0)]).unwrap();
        assert!(e_step(&data, &m, None).unwrap().uhat.iter().all(|u| *u == 1.0));
        let m = MixtureModel::new(Family::Mmsghd, vec![1.0], vec![comp(0.0, 0.0)]).unwrap();
        assert!(e_step(&data, &m, None).unwrap().uhat.iter().all(|u| *u == 0.0));
        let m = MixtureModel::new(Family::Mcghd, vec![1.0], vec![comp(0.0, 1.0)]).unwrap();
        assert!(e_step(&data, &m, None).unwrap().uhat.iter().all(|u| *u == 1.0));
    }

    #[test]
    fn moments_satisfy_jensen() {
        let model =
            MixtureModel::new(Family::Mcghd, vec![0.3, 0.7], vec![comp(-1.0, 0.3), comp(1.0, 0.8)]).unwrap();
        let cache = e_step(&blob_data(), &model, None).unwrap();
        for k in 0..2 {
            for i in 0..cache.n() {
                assert!(cache.a[(i, k)] * cache.b[(i, k)] >= 1.0 - 1e-12);
                for j in 0..2 {
                    assert!(cache.e1[k][(i, j)] * cache.e2[k][(i, j)] >= 1.0 - 1e-12);
                }
                let row: f64 = (0..2).map(|g| cache.zhat[(i, g)]).sum();
                assert!((row - 1.0).abs() < 1e-10);
            }
        }
        let st = SufficientStats::from_cache(&cache);
        assert!((st.n_g.iter().sum::<f64>() - 30.0).abs() < 1e-8);
    }

    #[test]
    fn fixed_labels_pin_responsibilities() {
        let model =
            MixtureModel::new(Family::Mghd, vec![0.5, 0.5], vec![comp(-1.0, 1.0), comp(1.0, 1.0)]).unwrap();
        let data = blob_data();
        let fixed: Vec<Option<usize>> = (0..30).map(|i| if i % 2 == 0 { Some(1) } else { None }).collect();
        let cache = e_step(&data, &model, Some(&fixed)).unwrap();
        for i in (0..30).step_by(2) {
            assert_eq!(cache.zhat[(i, 1)], 1.0);
            assert_eq!(cache.zhat[(i, 0)], 0.0);
        }
    }
}
