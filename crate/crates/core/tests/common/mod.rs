//! Brute-force reference implementations written straight off the
//! definitions, used to check the library's aggregated kernels.
#![allow(dead_code)]

use blockmodel_gof::model::{rng_from_seed, BlockMatrix, Membership};
use blockmodel_gof::Graph;
use rand::Rng;

pub fn dense(g: &Graph) -> Vec<Vec<f64>> {
    let n = g.n();
    let mut a = vec![vec![0.0; n]; n];
    for (i, j) in g.edges() {
        a[i][j] = 1.0;
        a[j][i] = 1.0;
    }
    a
}

/// Edge density over ordered pairs `i != j` per block pair.
pub fn bhat(g: &Graph, sigma: &Membership) -> Vec<f64> {
    let (n, k) = (g.n(), sigma.k());
    let a = dense(g);
    let mut num = vec![0.0; k * k];
    let mut den = vec![0.0; k * k];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let idx = sigma.label(i) * k + sigma.label(j);
                num[idx] += a[i][j];
                den[idx] += 1.0;
            }
        }
    }
    num.iter().zip(&den).map(|(x, d)| x / d).collect()
}

/// Deviation matrix with probabilities `omega_i omega_j b[σ(i)σ(j)]` clamped
/// to `[1/(2n²), 1 - 1/(2n²)]`.
pub fn deviations(
    g: &Graph,
    sigma0: &Membership,
    b: &[f64],
    omega: Option<&[f64]>,
) -> Vec<Vec<f64>> {
    let (n, k) = (g.n(), sigma0.k());
    let a = dense(g);
    let eps = 1.0 / (2.0 * (n * n) as f64);
    let w = |i: usize| omega.map_or(1.0, |o| o[i]);
    let mut rho = vec![vec![0.0; k]; n];
    for i in 0..n {
        for v in 0..k {
            let mut sum = 0.0;
            let mut count = 0.0;
            for j in 0..n {
                if j == i || sigma0.label(j) != v {
                    continue;
                }
                let p = (w(i) * w(j) * b[sigma0.label(i) * k + v]).clamp(eps, 1.0 - eps);
                sum += (a[i][j] - p) / (p * (1.0 - p)).sqrt();
                count += 1.0;
            }
            rho[i][v] = sum / f64::sqrt(count);
        }
    }
    rho
}

pub fn max_abs(rho: &[Vec<f64>]) -> f64 {
    let mut m: f64 = 0.0;
    for row in rho {
        for x in row {
            if x.abs() > m {
                m = x.abs();
            }
        }
    }
    m
}

pub fn blockwise_average(sigma: &Membership, b: &BlockMatrix, sigma0: &Membership) -> Vec<f64> {
    let (n, k0) = (sigma.n(), sigma0.k());
    let mut num = vec![0.0; k0 * k0];
    let mut den = vec![0.0; k0 * k0];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let idx = sigma0.label(i) * k0 + sigma0.label(j);
                num[idx] += b.get(sigma.label(i), sigma.label(j));
                den[idx] += 1.0;
            }
        }
    }
    num.iter().zip(&den).map(|(x, d)| x / d).collect()
}

pub fn ell(sigma: &Membership, b: &BlockMatrix, sigma0: &Membership) -> f64 {
    let (n, k0) = (sigma.n(), sigma0.k());
    let avg = blockwise_average(sigma, b, sigma0);
    let mut best: f64 = 0.0;
    for i in 0..n {
        for v in 0..k0 {
            let mut sum = 0.0;
            let mut count = 0.0;
            for j in 0..n {
                if j == i || sigma0.label(j) != v {
                    continue;
                }
                let p = b.get(sigma.label(i), sigma.label(j));
                sum += (p - avg[sigma0.label(i) * k0 + v]) / (p * (1.0 - p)).sqrt();
                count += 1.0;
            }
            best = best.max((sum / f64::sqrt(count)).abs());
        }
    }
    best
}

pub fn r_max(sigma: &Membership, b: &BlockMatrix, sigma0: &Membership) -> f64 {
    let (n, k0) = (sigma.n(), sigma0.k());
    let avg = blockwise_average(sigma, b, sigma0);
    let mut best: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let q = avg[sigma0.label(i) * k0 + sigma0.label(j)];
                let p = b.get(sigma.label(i), sigma.label(j));
                best = best.max(((q * (1.0 - q)) / (p * (1.0 - p))).sqrt());
            }
        }
    }
    best
}

/// Labels with `k` communities of at least two members each.
pub fn random_labels<R: Rng>(n: usize, k: usize, rng: &mut R) -> Membership {
    loop {
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        if let Ok(m) = Membership::new(labels, k) {
            if m.sizes().iter().all(|&s| s >= 2) {
                return m;
            }
        }
    }
}

pub struct Instance {
    pub g: Graph,
    pub sigma0: Membership,
    pub sigma: Membership,
    pub b: BlockMatrix,
    pub omega: Vec<f64>,
}

/// Random graph on `6..=40` nodes with a hypothesised and a "true"
/// membership, a true `B` strictly inside (0, 1) and positive multipliers.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = rng_from_seed(seed);
    let n = rng.random_range(6..=40);
    let k0 = rng.random_range(1..=(n / 2).min(4));
    let k = rng.random_range(1..=(n / 2).min(4));
    let sigma0 = random_labels(n, k0, &mut rng);
    let sigma = random_labels(n, k, &mut rng);
    let density: f64 = rng.random_range(0.05..0.9);
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .filter(|_| rng.random::<f64>() < density)
        .collect();
    let g = Graph::from_edges(n, edges).unwrap();
    let mut probs = vec![0.0; k * k];
    for u in 0..k {
        for v in u..k {
            let p = rng.random_range(0.02..0.98);
            probs[u * k + v] = p;
            probs[v * k + u] = p;
        }
    }
    let b = BlockMatrix::new(k, probs).unwrap();
    let omega = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    Instance {
        g,
        sigma0,
        sigma,
        b,
        omega,
    }
}
