//! Leading eigenpairs (by absolute eigenvalue) of graph adjacency matrices.
//!
//! Small graphs go through a dense symmetric eigendecomposition. Larger ones
//! use Lanczos with full reorthogonalisation, growing the Krylov basis until
//! the wanted Ritz pairs have small residuals. If the basis would become too
//! large for the reorthogonalisation cost to pay off, the dense solver is used
//! instead.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::rng_from_seed;
use rand::Rng;

/// Graphs up to this size always use the dense solver.
pub const DENSE_CUTOFF: usize = 300;
/// Largest graph the dense fallback is allowed to handle.
const DENSE_FALLBACK_LIMIT: usize = 5000;
/// Relative residual `‖A x − θ x‖ / max|θ|` accepted for a Ritz pair.
const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Eigenpairs {
    /// Eigenvalues ordered by decreasing absolute value (ties: larger value first).
    pub values: Vec<f64>,
    /// `vectors[l]` is the unit eigenvector for `values[l]`.
    pub vectors: Vec<Vec<f64>>,
}

fn order(a: f64, b: f64) -> std::cmp::Ordering {
    b.abs().total_cmp(&a.abs()).then(b.total_cmp(&a))
}

/// Flips `v` so its largest-magnitude entry (first on ties) is positive.
fn fix_sign(v: &mut [f64]) {
    let mut idx = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[idx].abs() {
            idx = i;
        }
    }
    if v.get(idx).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// `k` leading eigenpairs of the adjacency matrix of `g`.
///
/// `seed` drives the Lanczos start vector; results are deterministic in it.
pub fn leading_eigenpairs(g: &Graph, k: usize, seed: u64) -> Result<Eigenpairs> {
    let n = g.n();
    if k == 0 || k > n {
        return Err(Error::domain(format!(
            "cannot extract {k} eigenpairs from a {n}-node graph"
        )));
    }
    if n <= DENSE_CUTOFF {
        return dense_eigenpairs(g, k);
    }
    match lanczos(g, k, seed, max_basis(n, k))? {
        Some(pairs) => Ok(pairs),
        None if n <= DENSE_FALLBACK_LIMIT => {
            log::debug!("Lanczos did not converge for n = {n}, k = {k}; using dense solver");
            dense_eigenpairs(g, k)
        }
        None => Err(Error::Numeric(format!(
            "Lanczos failed to converge for {k} eigenpairs of a {n}-node graph"
        ))),
    }
}

fn max_basis(n: usize, k: usize) -> usize {
    // beyond this, n·m² reorthogonalisation work exceeds a dense solve
    let cap = ((n as f64).powf(2.0 / 3.0) * 4.0) as usize;
    cap.max(10 * k + 100).min(n)
}

pub(crate) fn dense_eigenpairs(g: &Graph, k: usize) -> Result<Eigenpairs> {
    let n = g.n();
    let dense = g.to_dense();
    let m = DMatrix::from_fn(n, n, |i, j| f64::from(dense[i * n + j]));
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("dense symmetric eigensolver did not converge".into()))?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| order(eig.eigenvalues[a], eig.eigenvalues[b]).then(a.cmp(&b)));
    let mut values = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k);
    for &c in idx.iter().take(k) {
        values.push(eig.eigenvalues[c]);
        let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        fix_sign(&mut v);
        vectors.push(v);
    }
    Ok(Eigenpairs { values, vectors })
}

/// Lanczos with full reorthogonalisation. Returns `None` when the basis hits
/// `max_dim` without the wanted pairs converging.
pub(crate) fn lanczos(
    g: &Graph,
    k: usize,
    seed: u64,
    max_dim: usize,
) -> Result<Option<Eigenpairs>> {
    let n = g.n();
    let mut rng = rng_from_seed(seed);
    let mut random_unit = |basis: &[Vec<f64>]| -> Vec<f64> {
        loop {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            for _ in 0..2 {
                for q in basis {
                    let c = dot(q, &v);
                    axpy(-c, q, &mut v);
                }
            }
            if normalize(&mut v) > 1e-8 {
                return v;
            }
        }
    };

    let scale = (0..n).map(|i| g.degree(i)).max().unwrap_or(0).max(1) as f64;
    let mut basis: Vec<Vec<f64>> = vec![random_unit(&[])];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut check_at = (3 * k + 30).min(n);
    let mut w = vec![0.0; n];

    loop {
        while alphas.len() < check_at {
            let j = alphas.len();
            g.mul_vec(&basis[j], &mut w);
            let alpha = dot(&basis[j], &w);
            axpy(-alpha, &basis[j], &mut w);
            if j > 0 {
                axpy(-betas[j - 1], &basis[j - 1], &mut w);
            }
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &w);
                    axpy(-c, q, &mut w);
                }
            }
            alphas.push(alpha);
            if basis.len() == n {
                betas.push(0.0);
                break;
            }
            let beta = normalize(&mut w);
            if beta < 1e-10 * scale {
                // invariant subspace found; continue from a fresh direction
                betas.push(0.0);
                basis.push(random_unit(&basis));
            } else {
                betas.push(beta);
                basis.push(w.clone());
            }
        }

        let m = alphas.len();
        let t = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                alphas[i]
            } else if i + 1 == j {
                betas[i]
            } else if j + 1 == i {
                betas[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::try_new(t, f64::EPSILON, 0)
            .ok_or_else(|| Error::Numeric("tridiagonal eigensolver did not converge".into()))?;
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_by(|&a, &b| order(eig.eigenvalues[a], eig.eigenvalues[b]).then(a.cmp(&b)));
        let top = &idx[..k.min(m)];
        let exhausted = m == n;
        let theta_max = eig.eigenvalues[idx[0]].abs().max(1.0);
        let coupling = betas[m - 1];
        let converged = exhausted
            || (top.len() == k
                && top.iter().all(|&c| {
                    (coupling * eig.eigenvectors[(m - 1, c)]).abs() <= RESIDUAL_TOL * theta_max
                }));
        if converged {
            let mut values = Vec::with_capacity(k);
            let mut vectors = Vec::with_capacity(k);
            for &c in top {
                values.push(eig.eigenvalues[c]);
                let mut v = vec![0.0; n];
                for (j, q) in basis.iter().take(m).enumerate() {
                    axpy(eig.eigenvectors[(j, c)], q, &mut v);
                }
                normalize(&mut v);
                fix_sign(&mut v);
                vectors.push(v);
            }
            return Ok(Some(Eigenpairs { values, vectors }));
        }
        if m >= max_dim {
            return Ok(None);
        }
        check_at = (m + m / 2 + 10).min(max_dim);
    }
}
