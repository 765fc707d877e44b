//! Lloyd's k-means with k-means++ seeding and multiple restarts.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{derive_seed, rng_from_seed};

/// Reseeding attempts per restart before it is given up.
const ATTEMPTS_PER_RESTART: u64 = 10;

#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub restart: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct KMeansParams {
    pub restarts: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Clusters the rows of the row-major `n × dim` matrix `data` into `k`
/// non-empty groups. The restart with the lowest within-cluster sum of
/// squares wins; ties go to the earlier restart.
pub fn kmeans(data: &[f64], dim: usize, k: usize, params: &KMeansParams) -> Result<KMeansFit> {
    let n = data.len().checked_div(dim).unwrap_or(0);
    if k == 0 || k > n {
        return Err(Error::domain(format!(
            "cannot form {k} clusters from {n} points"
        )));
    }
    let mut best: Option<KMeansFit> = None;
    for restart in 0..params.restarts {
        for attempt in 0..ATTEMPTS_PER_RESTART {
            let seed = derive_seed(
                params.seed,
                (restart as u64) * ATTEMPTS_PER_RESTART + attempt,
            );
            if let Some((labels, inertia)) = lloyd(data, dim, k, params, seed) {
                if best.as_ref().is_none_or(|b| inertia < b.inertia) {
                    best = Some(KMeansFit {
                        labels,
                        inertia,
                        restart,
                    });
                }
                break;
            }
        }
    }
    best.ok_or_else(|| {
        Error::Numeric(format!(
            "k-means could not find {k} non-empty clusters (too few distinct points?)"
        ))
    })
}

fn plus_plus_init(data: &[f64], dim: usize, k: usize, seed: u64) -> Vec<f64> {
    let n = data.len() / dim;
    let mut rng = rng_from_seed(seed);
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centers = Vec::with_capacity(k * dim);
    centers.extend_from_slice(row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(row(i), &centers[..dim])).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let start = centers.len();
        centers.extend_from_slice(row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(row(i), &centers[start..]));
        }
    }
    centers
}

/// One seeded Lloyd run; `None` if a cluster empties.
fn lloyd(
    data: &[f64],
    dim: usize,
    k: usize,
    params: &KMeansParams,
    seed: u64,
) -> Option<(Vec<usize>, f64)> {
    let n = data.len() / dim;
    let mut centers = plus_plus_init(data, dim, k, seed);
    let mut labels = vec![usize::MAX; n];
    for _ in 0..params.max_iterations.max(1) {
        let mut changed = false;
        for i in 0..n {
            let x = &data[i * dim..(i + 1) * dim];
            let mut best = (0, f64::INFINITY);
            for c in 0..k {
                let d = sq_dist(x, &centers[c * dim..(c + 1) * dim]);
                if d < best.1 {
                    best = (c, d);
                }
            }
            if labels[i] != best.0 {
                labels[i] = best.0;
                changed = true;
            }
        }
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = labels[i];
            counts[c] += 1;
            for (s, x) in sums[c * dim..(c + 1) * dim]
                .iter_mut()
                .zip(&data[i * dim..(i + 1) * dim])
            {
                *s += x;
            }
        }
        if counts.contains(&0) {
            return None;
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let new: Vec<f64> = sums[c * dim..(c + 1) * dim]
                .iter()
                .map(|s| s / counts[c] as f64)
                .collect();
            shift = shift.max(sq_dist(&new, &centers[c * dim..(c + 1) * dim]));
            centers[c * dim..(c + 1) * dim].copy_from_slice(&new);
        }
        if !changed || shift <= params.tolerance {
            break;
        }
    }
    let inertia = (0..n)
        .map(|i| {
            let c = labels[i];
            sq_dist(
                &data[i * dim..(i + 1) * dim],
                &centers[c * dim..(c + 1) * dim],
            )
        })
        .sum();
    Some((labels, inertia))
}
