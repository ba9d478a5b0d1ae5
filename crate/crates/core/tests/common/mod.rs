#![allow(dead_code)]
pub mod fixtures;
pub mod gig;
pub mod quad;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Log-uniform draw on `[lo, hi]`.
pub fn log_uniform(rng: &mut (impl Rng + ?Sized), lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

use ghmix::densities::CghdComponent;
use nalgebra::{DMatrix, DVector};

/// Haar-ish random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal(rng: &mut impl Rng, p: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(p, p, |_, _| normal(rng));
    m.qr().q()
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

/// Random component with moderate parameters, suitable for quadrature.
pub fn random_component(rng: &mut impl Rng, p: usize) -> CghdComponent {
    let mut c = CghdComponent::spherical(DVector::zeros(p), 1.0, 0.0, rng.random());
    c.gamma = random_orthogonal(rng, p);
    for j in 0..p {
        c.mu[j] = rng.random_range(-2.0..2.0);
        c.phi[j] = rng.random_range(0.3..3.0);
        c.beta[j] = rng.random_range(-1.5..1.5);
        c.omega[j] = log_uniform(rng, 0.3, 5.0);
        c.lambda[j] = rng.random_range(-2.5..2.5);
    }
    c.omega0 = log_uniform(rng, 0.3, 5.0);
    c.lambda0 = rng.random_range(-2.5..2.5);
    c
}
