//! Lloyd's k-means with k-means++ seeding, used to start the EM iterations.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const RESTARTS: usize = 10;
const MAX_ATTEMPTS: usize = 20;
const MAX_LLOYD_ITER: usize = 300;

/// Hard `n x G` responsibilities from the best of ten k-means runs.
pub fn kmeans_init(data: &DMatrix<f64>, g: usize, seed: u64) -> Result<DMatrix<f64>> {
    let labels = kmeans_labels(data, g, seed)?;
    let mut z = DMatrix::zeros(data.nrows(), g);
    for (i, l) in labels.iter().enumerate() {
        z[(i, *l)] = 1.0;
    }
    Ok(z)
}

/// Zero-based cluster labels from the best of ten k-means runs.
pub fn kmeans_labels(data: &DMatrix<f64>, g: usize, seed: u64) -> Result<Vec<usize>> {
    let n = data.nrows();
    if g == 0 || n <= g {
        return Err(Error::invalid(format!("k-means needs n > G >= 1 (n = {n}, G = {g})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut failures = 0;
    let mut done = 0;
    while done < RESTARTS {
        match lloyd(data, g, &mut rng) {
            Some((wcss, labels)) => {
                done += 1;
                if best.as_ref().is_none_or(|(b, _)| wcss < *b) {
                    best = Some((wcss, labels));
                }
            }
            None => {
                failures += 1;
                if failures >= MAX_ATTEMPTS {
                    return Err(Error::invalid(format!(
                        "k-means produced an empty cluster in {MAX_ATTEMPTS} attempts"
                    )));
                }
            }
        }
    }
    Ok(best.expect("at least one k-means run completed").1)
}

fn sq_dist(data: &DMatrix<f64>, i: usize, centre: &[f64]) -> f64 {
    centre
        .iter()
        .enumerate()
        .map(|(j, c)| (data[(i, j)] - c).powi(2))
        .sum()
}

fn plus_plus(data: &DMatrix<f64>, g: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let (n, p) = data.shape();
    let row = |i: usize| (0..p).map(|j| data[(i, j)]).collect::<Vec<_>>();
    let mut centres = vec![row(rng.random_range(0..n))];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(data, i, &centres[0])).collect();
    while centres.len() < g {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut k = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    k = i;
                    break;
                }
                u -= d;
            }
            k
        } else {
            rng.random_range(0..n)
        };
        let c = row(pick);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(data, i, &c));
        }
        centres.push(c);
    }
    centres
}

/// One seeded Lloyd run; `None` if a cluster empties.
fn lloyd(data: &DMatrix<f64>, g: usize, rng: &mut ChaCha8Rng) -> Option<(f64, Vec<usize>)> {
    let (n, p) = data.shape();
    let mut centres = plus_plus(data, g, rng);
    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_LLOYD_ITER {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for (k, c) in centres.iter().enumerate() {
                let d = sq_dist(data, i, c);
                if d < best.0 {
                    best = (d, k);
                }
            }
            if *label != best.1 {
                *label = best.1;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; p]; g];
        let mut counts = vec![0usize; g];
        for (i, l) in labels.iter().enumerate() {
            counts[*l] += 1;
            for j in 0..p {
                sums[*l][j] += data[(i, j)];
            }
        }
        if counts.contains(&0) {
            return None;
        }
        for k in 0..g {
            for j in 0..p {
                centres[k][j] = sums[k][j] / counts[k] as f64;
            }
        }
        if !changed {
            break;
        }
    }
    let wcss = labels
        .iter()
        .enumerate()
        .map(|(i, l)| sq_dist(data, i, &centres[*l]))
        .sum();
    Some((wcss, labels))
}
