mod common;

use common::fixtures::{random_cache, random_data, random_model};
use common::{log_uniform, random_orthogonal, rng};
use ghmix::densities::{CghdComponent, Family, MixtureModel};
use ghmix::gig::{gig_expectations, GigParams};
use ghmix::inference::*;
use ghmix::specfun::log_bessel_k;
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::Rng;

#[test]
fn mixing_matches_direct_summation() {
    let mut r = rng(51);
    for family in Family::ALL {
        let data = random_data(&mut r, 60, 2);
        let model = random_model(&mut r, family, 3, 2);
        let cache = random_cache(&mut r, &data, &model);
        let (pi, varpi) = m_step_mixing(&cache, family).unwrap();
        for k in 0..3 {
            let mut ng = 0.0;
            let mut uz = 0.0;
            for i in 0..60 {
                ng += cache.zhat[(i, k)];
                uz += cache.zhat[(i, k)] * cache.uhat[(i, k)];
            }
            assert!((pi[k] - ng / 60.0).abs() < 1e-14);
            assert!((varpi[k] - uz / ng).abs() < 1e-14);
        }
    }
}

#[test]
fn mixing_flags_starved_components() {
    let mut r = rng(52);
    let data = random_data(&mut r, 20, 2);
    let model = random_model(&mut r, Family::Mghd, 2, 2);
    let mut cache = random_cache(&mut r, &data, &model);
    cache.zhat.column_mut(0).fill(1.0);
    cache.zhat.column_mut(1).fill(0.0);
    match m_step_mixing(&cache, Family::Mghd) {
        Err(ghmix::Error::Degenerate { .. }) => {}
        other => panic!("expected a degenerate-fit error, got {other:?}"),
    }
}

/// Solves the two stationarity equations of the expected log-likelihood in
/// `(mu_j, beta_j)` as a 2x2 linear system.
fn location_oracle(cache: &EStepCache, k: usize, j: usize) -> (f64, f64) {
    let mut m = Matrix2::zeros();
    let mut rhs = Vector2::zeros();
    for i in 0..cache.n() {
        let z = cache.zhat[(i, k)];
        let u = cache.uhat[(i, k)];
        let s1 = u * cache.a[(i, k)] + (1.0 - u) * cache.e1[k][(i, j)];
        let s2 = u * cache.b[(i, k)] + (1.0 - u) * cache.e2[k][(i, j)];
        let y = cache.rotated[k][(i, j)];
        // d/dmu: sum z [s2 (y - mu) - beta] = 0 ; d/dbeta: sum z [(y - mu) - s1 beta] = 0
        m[(0, 0)] += z * s2;
        m[(0, 1)] += z;
        rhs[0] += z * s2 * y;
        m[(1, 0)] += z;
        m[(1, 1)] += z * s1;
        rhs[1] += z * y;
    }
    let sol = m.lu().solve(&rhs).unwrap();
    (sol[0], sol[1])
}

#[test]
fn location_and_skewness_solve_the_normal_equations() {
    let mut r = rng(53);
    for family in Family::ALL {
        for _ in 0..5 {
            let data = random_data(&mut r, 40, 3);
            let model = random_model(&mut r, family, 2, 3);
            let cache = random_cache(&mut r, &data, &model);
            let stats = SufficientStats::from_cache(&cache);
            let (mus, betas) = m_step_location_skewness(&cache, &stats);
            for k in 0..2 {
                for j in 0..3 {
                    let (mu, beta) = location_oracle(&cache, k, j);
                    assert!((mus[k][j] - mu).abs() < 1e-9 * mu.abs().max(1.0), "{} vs {mu}", mus[k][j]);
                    assert!((betas[k][j] - beta).abs() < 1e-9 * beta.abs().max(1.0));
                }
            }
        }
    }
}

#[test]
fn constant_coordinates_give_zero_skewness() {
    let mut r = rng(54);
    let model = random_model(&mut r, Family::Mcghd, 1, 2);
    let mut comp = model.components[0].clone();
    comp.gamma = DMatrix::identity(2, 2);
    let model = MixtureModel::new(Family::Mcghd, vec![1.0], vec![comp]).unwrap();
    let data = DMatrix::from_fn(30, 2, |_, j| if j == 0 { 3.25 } else { -1.0 });
    let cache = random_cache(&mut r, &data, &model);
    let stats = SufficientStats::from_cache(&cache);
    let (mus, betas) = m_step_location_skewness(&cache, &stats);
    assert!((mus[0][0] - 3.25).abs() < 1e-12 && (mus[0][1] + 1.0).abs() < 1e-12);
    assert!(betas[0].amax() < 1e-12);
}

#[test]
fn symmetric_data_gives_zero_skewness() {
    let mut r = rng(55);
    let mut model = random_model(&mut r, Family::Mghd, 1, 1);
    model.components[0].gamma[(0, 0)] = 1.0;
    let half: Vec<f64> = (0..15).map(|_| r.random_range(0.1..3.0)).collect();
    let data = DMatrix::from_fn(30, 1, |i, _| 2.0 + if i < 15 { half[i] } else { -half[i - 15] });
    let mut cache = random_cache(&mut r, &data, &model);
    // mirror-symmetric weights
    for i in 15..30 {
        cache.zhat[(i, 0)] = cache.zhat[(i - 15, 0)];
        cache.a[(i, 0)] = cache.a[(i - 15, 0)];
        cache.b[(i, 0)] = cache.b[(i - 15, 0)];
    }
    let stats = SufficientStats::from_cache(&cache);
    let (mus, betas) = m_step_location_skewness(&cache, &stats);
    assert!(betas[0][0].abs() < 1e-12);
    assert!((mus[0][0] - 2.0).abs() < 1e-12);
}

#[test]
fn phi_matches_branchwise_transcription() {
    let mut r = rng(56);
    for family in Family::ALL {
        let data = random_data(&mut r, 40, 3);
        let model = random_model(&mut r, family, 2, 3);
        let cache = random_cache(&mut r, &data, &model);
        let stats = SufficientStats::from_cache(&cache);
        let phis = m_step_phi(&cache, &stats, &model);
        for (k, comp) in model.components.iter().enumerate() {
            for j in 0..3 {
                let (mut acc, mut ng) = (0.0, 0.0);
                for i in 0..40 {
                    let (z, u) = (cache.zhat[(i, k)], cache.uhat[(i, k)]);
                    let d = cache.rotated[k][(i, j)] - comp.mu[j];
                    let bj = comp.beta[j];
                    acc += z * u * (cache.b[(i, k)] * d * d - 2.0 * d * bj + cache.a[(i, k)] * bj * bj);
                    acc += z * (1.0 - u)
                        * (cache.e2[k][(i, j)] * d * d - 2.0 * d * bj + cache.e1[k][(i, j)] * bj * bj);
                    ng += z;
                }
                let want = acc / ng;
                assert!((phis[k][j] - want).abs() < 1e-12 * want.abs().max(1.0));
            }
        }
    }
}

#[test]
fn phi_reduces_to_weighted_variance() {
    let mut r = rng(57);
    let model = random_model(&mut r, Family::Mghd, 1, 2);
    let mut comp = model.components[0].clone();
    comp.beta.fill(0.0);
    let model = MixtureModel::new(Family::Mghd, vec![1.0], vec![comp.clone()]).unwrap();
    let data = random_data(&mut r, 25, 2);
    let mut cache = random_cache(&mut r, &data, &model);
    cache.b.fill(1.0);
    let stats = SufficientStats::from_cache(&cache);
    let phi = m_step_phi(&cache, &stats, &model);
    for j in 0..2 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..25 {
            let d = cache.rotated[0][(i, j)] - comp.mu[j];
            num += cache.zhat[(i, 0)] * d * d;
            den += cache.zhat[(i, 0)];
        }
        assert!((phi[0][j] - num / den).abs() < 1e-12);
    }
}

/// Minus the rotation-dependent part of the expected complete-data
/// log-likelihood, written with dense matrices.
fn neg_q_gamma(data: &DMatrix<f64>, cache: &EStepCache, comp: &CghdComponent, k: usize, gamma: &DMatrix<f64>) -> f64 {
    let p = data.ncols();
    let mut total = 0.0;
    for i in 0..data.nrows() {
        let z = cache.zhat[(i, k)];
        let u = cache.uhat[(i, k)];
        let x = data.row(i).transpose();
        let y = gamma.transpose() * &x;
        // expected quadratic forms of both branches
        let mut q = 0.0;
        for j in 0..p {
            let d = y[j] - comp.mu[j];
            q += u * (cache.b[(i, k)] * d * d / 2.0 - d * comp.beta[j]) / comp.phi[j];
            q += (1.0 - u) * (cache.e2[k][(i, j)] * d * d / 2.0 - d * comp.beta[j]) / comp.phi[j];
        }
        total += z * q;
    }
    total
}

#[test]
fn rotation_update_never_increases_the_objective() {
    let mut r = rng(58);
    for family in Family::ALL {
        for _ in 0..50 {
            let data = random_data(&mut r, 20, 3);
            let model = random_model(&mut r, family, 1, 3);
            let cache = random_cache(&mut r, &data, &model);
            let comp = &model.components[0];
            let before = gamma_objective(&data, &cache, &model, 0, &comp.gamma);
            let new = m_step_gamma(&data, &cache, &model).unwrap().remove(0);
            let after = gamma_objective(&data, &cache, &model, 0, &new);
            assert!(after <= before + 1e-8 * before.abs().max(1.0), "{after} > {before}");
            let dev = (new.transpose() * &new - DMatrix::<f64>::identity(3, 3)).amax();
            assert!(dev <= 1e-10, "orthogonality {dev}");
            // the objective differs from the dense expected log-likelihood only by a constant
            let other = random_orthogonal(&mut r, 3);
            let lhs = gamma_objective(&data, &cache, &model, 0, &other) - before;
            let rhs = neg_q_gamma(&data, &cache, comp, 0, &other) - neg_q_gamma(&data, &cache, comp, 0, &comp.gamma);
            assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }
}

#[test]
fn rotation_in_one_dimension_is_trivial() {
    let mut r = rng(59);
    let data = random_data(&mut r, 20, 1);
    let model = random_model(&mut r, Family::Mcghd, 1, 1);
    let cache = random_cache(&mut r, &data, &model);
    let g = m_step_gamma(&data, &cache, &model).unwrap();
    assert_eq!(g[0], model.components[0].gamma);
}

/// Brute-force maximizer of `q` on a refining grid.
fn grid_max(e1: f64, e2: f64, e3: f64) -> (f64, f64) {
    let q = |w: f64, l: f64| -log_bessel_k(l, w).unwrap() + (l - 1.0) * e3 - 0.5 * w * (e1 + e2);
    let (mut wl, mut wh, mut ll, mut lh) = (-6.0f64, 6.0f64, -8.0f64, 8.0f64);
    let mut best = (0.0, 0.0);
    for _ in 0..12 {
        let mut top = f64::NEG_INFINITY;
        for a in 0..=40 {
            let lw = wl + (wh - wl) * a as f64 / 40.0;
            for b in 0..=40 {
                let l = ll + (lh - ll) * b as f64 / 40.0;
                let v = q(lw.exp(), l);
                if v > top {
                    top = v;
                    best = (lw, l);
                }
            }
        }
        let (dw, dl) = ((wh - wl) / 10.0, (lh - ll) / 10.0);
        (wl, wh, ll, lh) = (best.0 - dw, best.0 + dw, best.1 - dl, best.1 + dl);
    }
    (best.0.exp(), best.1)
}

#[test]
fn hyperparameter_iteration_reaches_grid_maximizer() {
    for (omega, lambda) in [(1.0, -0.5), (2.5, 1.3), (0.6, -1.8), (4.0, 0.2)] {
        let m = gig_expectations(&GigParams::new(omega, 1.0, lambda).unwrap()).unwrap();
        let (mut w, mut l) = (1.0, -0.5);
        for _ in 0..20_000 {
            (w, l) = update_gig_pair(w, l, m.e_w, m.e_winv, m.e_logw, None);
        }
        let (gw, gl) = grid_max(m.e_w, m.e_winv, m.e_logw);
        assert!((w - gw).abs() < 1e-3 && (l - gl).abs() < 1e-3, "({w}, {l}) vs grid ({gw}, {gl})");
        assert!((w - omega).abs() < 1e-3 && (l - lambda).abs() < 1e-3, "({w}, {l}) vs truth ({omega}, {lambda})");
    }
}

#[test]
fn hyperparameter_step_is_stationary_at_the_optimum() {
    let m = gig_expectations(&GigParams::new(2.0, 1.0, 0.7).unwrap()).unwrap();
    let (w, l) = update_gig_pair(2.0, 0.7, m.e_w, m.e_winv, m.e_logw, None);
    assert!((w - 2.0).abs() < 1e-9 && (l - 0.7).abs() < 1e-9, "({w}, {l})");
}

#[test]
fn hyper_step_respects_the_convex_floor() {
    let mut r = rng(60);
    for _ in 0..200 {
        let e3 = r.random_range(-3.0..1.0);
        let e1 = log_uniform(&mut r, 0.3, 3.0);
        let e2 = 1.0 / e1 + r.random_range(0.0..2.0);
        let (_, l) = update_gig_pair(1.0, 1.2, e1, e2, e3, Some(MCMSGHD_LAMBDA_FLOOR));
        assert!(l >= MCMSGHD_LAMBDA_FLOOR);
    }
}

#[test]
fn map_rule_matches_direct_scan() {
    let mut r = rng(61);
    let z = DMatrix::from_fn(200, 4, |_, _| r.random_range(0.0..1.0));
    let labels = map_rows(&z);
    for i in 0..200 {
        let mut best = 0;
        for k in 0..4 {
            if z[(i, k)] > z[(i, best)] {
                best = k;
            }
        }
        assert_eq!(labels[i], best);
    }
}

#[test]
fn e_step_matches_density_ratios() {
    let mut r = rng(62);
    let model = random_model(&mut r, Family::Mcghd, 3, 2);
    let data = random_data(&mut r, 15, 2);
    let cache = e_step(&data, &model, None).unwrap();
    let mut ll = 0.0;
    for i in 0..15 {
        let x: Vec<f64> = data.row(i).iter().copied().collect();
        let w: Vec<f64> = (0..3)
            .map(|k| model.pi[k] * ghmix::densities::cghd_log_density(&x, &model.components[k]).unwrap().exp())
            .collect();
        let total: f64 = w.iter().sum();
        ll += total.ln();
        for k in 0..3 {
            assert!((cache.zhat[(i, k)] - w[k] / total).abs() < 1e-12);
            let c = &model.components[k];
            let g = c.varpi * ghmix::densities::ghd_log_density(&x, c).unwrap().exp();
            let f = ghmix::densities::cghd_log_density(&x, c).unwrap().exp();
            assert!((cache.uhat[(i, k)] - g / f).abs() < 1e-12);
            let post = ghmix::gig::ghd_latent_posterior(&x, c).unwrap().to_scaled();
            let m = gig_expectations(&post).unwrap();
            assert!((cache.a[(i, k)] - m.e_w).abs() < 1e-10 * m.e_w);
            assert!((cache.b[(i, k)] - m.e_winv).abs() < 1e-10 * m.e_winv);
            assert!((cache.c[(i, k)] - m.e_logw).abs() < 1e-9 * m.e_logw.abs().max(1.0));
        }
    }
    assert!((cache.loglik - ll).abs() < 1e-10 * ll.abs());
}

#[test]
fn aitken_matches_closed_form_geometric_series() {
    let l = |k: i32| 10.0 - 2.0 * 0.1f64.powi(k);
    let trace: Vec<f64> = (0..12).map(l).collect();
    let first = (3..=trace.len()).find(|m| aitken_converged(&trace[..*m], 0.01)).unwrap();
    // converges on the first window whose last value is within 0.01 of 10
    let expected = (2..trace.len()).find(|k| 10.0 - trace[*k] < 0.01).unwrap() + 1;
    assert_eq!(first, expected.max(3));
}

#[test]
fn kmeans_is_deterministic_and_hard() {
    let mut r = rng(63);
    let data = random_data(&mut r, 100, 3);
    let z = kmeans_init(&data, 3, 17).unwrap();
    assert_eq!(z, kmeans_init(&data, 3, 17).unwrap());
    for i in 0..100 {
        assert_eq!(z.row(i).sum(), 1.0);
        assert!(z.row(i).iter().all(|v| *v == 0.0 || *v == 1.0));
    }
    let _ = DVector::<f64>::zeros(1);
}
