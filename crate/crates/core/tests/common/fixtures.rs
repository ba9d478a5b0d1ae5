//! Random models, data and E-step caches for exercising single M-step updates.

use ghmix::densities::{Family, MixtureModel};
use ghmix::gig::{gig_expectations, GigParams};
use ghmix::inference::EStepCache;
use nalgebra::DMatrix;
use rand::Rng;

use super::{log_uniform, normal};

/// A random but internally consistent E-step cache over `data` for `model`.
pub fn random_cache(r: &mut impl Rng, data: &DMatrix<f64>, model: &MixtureModel) -> EStepCache {
    let (n, p) = data.shape();
    let g = model.g();
    let mut zhat = DMatrix::from_fn(n, g, |_, _| r.random_range(0.05..1.0));
    for i in 0..n {
        let s: f64 = zhat.row(i).sum();
        zhat.row_mut(i).scale_mut(1.0 / s);
    }
    // W-moment triples from actual GIG laws so Jensen-type constraints hold
    let moment = |r: &mut dyn rand::RngCore| {
        let omega = log_uniform(r, 0.3, 5.0);
        let eta = log_uniform(r, 0.5, 2.0);
        let params = GigParams::new(omega, eta, r.random_range(-2.0..2.0)).unwrap();
        let m = gig_expectations(&params).unwrap();
        (m.e_w, m.e_winv, m.e_logw)
    };
    let mut a = DMatrix::zeros(n, g);
    let mut b = DMatrix::zeros(n, g);
    let mut c = DMatrix::zeros(n, g);
    let mut e1 = vec![DMatrix::zeros(n, p); g];
    let mut e2 = vec![DMatrix::zeros(n, p); g];
    let mut e3 = vec![DMatrix::zeros(n, p); g];
    for k in 0..g {
        for i in 0..n {
            (a[(i, k)], b[(i, k)], c[(i, k)]) = moment(r);
            for j in 0..p {
                (e1[k][(i, j)], e2[k][(i, j)], e3[k][(i, j)]) = moment(r);
            }
        }
    }
    let uhat = match model.family {
        Family::Mghd => DMatrix::from_element(n, g, 1.0),
        Family::Mmsghd | Family::McMsghd => DMatrix::zeros(n, g),
        Family::Mcghd => DMatrix::from_fn(n, g, |_, _| r.random()),
    };
    EStepCache {
        zhat,
        uhat,
        a,
        b,
        c,
        e1,
        e2,
        e3,
        rotated: model.components.iter().map(|comp| data * &comp.gamma).collect(),
        loglik: 0.0,
    }
}

pub fn random_model(r: &mut impl Rng, family: Family, g: usize, p: usize) -> MixtureModel {
    let comps = (0..g)
        .map(|_| {
            let mut c = super::random_component(r, p);
            if let Some(v) = family.fixed_varpi() {
                c.varpi = v;
            }
            if family == Family::McMsghd {
                c.lambda.iter_mut().for_each(|l| *l = r.random_range(1.1..3.0));
            }
            c
        })
        .collect();
    let mut pi: Vec<f64> = (0..g).map(|_| r.random_range(0.2..1.0)).collect();
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= s);
    MixtureModel::new(family, pi, comps).unwrap()
}

pub fn random_data(r: &mut impl Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| 2.0 * normal(r))
}

