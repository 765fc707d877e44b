//! Population-level separation between a true block model and a
//! hypothesised membership, and membership of the alternative class against
//! which the test is consistent.
//!
//! Every quantity depends on a node only through its pair of labels
//! `(σ₀(i), σ(i))`, so sums over nodes are evaluated through the
//! `k₀ × k` contingency table of the two memberships. The result is exact
//! (the `j = i` exclusion is applied per label pair) and costs
//! `O(n + k₀²k²)` instead of `O(n²)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BlockMatrix, Membership};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlternativeAssessment {
    pub ell: f64,
    pub r_max: f64,
    pub threshold: f64,
    pub gamma: f64,
    pub in_class: bool,
}

struct Table {
    k0: usize,
    k: usize,
    /// `counts[u * k + a]`: nodes with `σ₀ = u` and `σ = a`.
    counts: Vec<usize>,
    sizes0: Vec<usize>,
}

impl Table {
    fn new(sigma: &Membership, sigma0: &Membership) -> Table {
        let (k0, k) = (sigma0.k(), sigma.k());
        let mut counts = vec![0; k0 * k];
        for (&u, &a) in sigma0.labels().iter().zip(sigma.labels()) {
            counts[u * k + a] += 1;
        }
        Table {
            k0,
            k,
            counts,
            sizes0: sigma0.sizes().to_vec(),
        }
    }

    fn get(&self, u: usize, a: usize) -> usize {
        self.counts[u * self.k + a]
    }
}

fn check(sigma: &Membership, b: &BlockMatrix, sigma0: &Membership) -> Result<()> {
    if sigma.n() != sigma0.n() {
        return Err(Error::domain(format!(
            "memberships cover {} and {} nodes",
            sigma.n(),
            sigma0.n()
        )));
    }
    if b.k() != sigma.k() {
        return Err(Error::domain(format!(
            "B is {}x{} but the true membership has {} communities",
            b.k(),
            b.k(),
            sigma.k()
        )));
    }
    sigma0.require_min_size(2, "blockwise averaging")
}

fn averaged(t: &Table, b: &BlockMatrix) -> Vec<f64> {
    let (k0, k) = (t.k0, t.k);
    let mut out = vec![0.0; k0 * k0];
    for u in 0..k0 {
        for v in 0..k0 {
            let mut sum = 0.0;
            for a in 0..k {
                for c in 0..k {
                    let pairs =
                        t.get(u, a) * t.get(v, c) - usize::from(u == v && a == c) * t.get(u, a);
                    sum += pairs as f64 * b.get(a, c);
                }
            }
            let pairs = t.sizes0[u] * (t.sizes0[v] - usize::from(u == v));
            out[u * k0 + v] = sum / pairs as f64;
        }
    }
    out
}

/// `B^{σ₀}`: the average of `B_{σ(i)σ(j)}` over ordered pairs `i ≠ j` with
/// `σ₀(i) = u`, `σ₀(j) = v`.
pub fn blockwise_average(
    sigma: &Membership,
    b: &BlockMatrix,
    sigma0: &Membership,
) -> Result<BlockMatrix> {
    check(sigma, b, sigma0)?;
    let t = Table::new(sigma, sigma0);
    let mut probs = averaged(&t, b);
    // exact symmetry, independent of summation order
    for u in 0..t.k0 {
        for v in (u + 1)..t.k0 {
            probs[v * t.k0 + u] = probs[u * t.k0 + v];
        }
    }
    BlockMatrix::new(t.k0, probs)
}

fn sd(p: f64) -> f64 {
    (p * (1.0 - p)).sqrt()
}

fn check_open(b: &BlockMatrix) -> Result<()> {
    if b.as_slice().iter().any(|&p| p <= 0.0 || p >= 1.0) {
        return Err(Error::domain(
            "separation needs every entry of B strictly inside (0, 1)",
        ));
    }
    Ok(())
}

fn ell_from(t: &Table, b: &BlockMatrix, avg: &[f64]) -> f64 {
    let (k0, k) = (t.k0, t.k);
    let mut ell: f64 = 0.0;
    for u in 0..k0 {
        for a in 0..k {
            if t.get(u, a) == 0 {
                continue;
            }
            for v in 0..k0 {
                let mut sum = 0.0;
                for c in 0..k {
                    let members = t.get(v, c) - usize::from(u == v && a == c);
                    let p = b.get(a, c);
                    sum += members as f64 * (p - avg[u * k0 + v]) / sd(p);
                }
                let others = t.sizes0[v] - usize::from(u == v);
                ell = ell.max((sum / (others as f64).sqrt()).abs());
            }
        }
    }
    ell
}

/// Separation `ℓ(k₀, σ₀)`: the largest standardised group difference between
/// the true probabilities and their `σ₀`-blockwise averages.
pub fn separation_ell(sigma: &Membership, b: &BlockMatrix, sigma0: &Membership) -> Result<f64> {
    check(sigma, b, sigma0)?;
    check_open(b)?;
    let t = Table::new(sigma, sigma0);
    Ok(ell_from(&t, b, &averaged(&t, b)))
}

/// Computes `ℓ`, `max_{i≠j} r_ij` and the class threshold
/// `sqrt(2 log(2k₀n)) (1 + γ r_max)` for `γ > 1`.
pub fn assess_alternative(
    sigma: &Membership,
    b: &BlockMatrix,
    sigma0: &Membership,
    gamma: f64,
) -> Result<AlternativeAssessment> {
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(Error::domain(format!(
            "gamma must be a finite value above 1, got {gamma}"
        )));
    }
    check(sigma, b, sigma0)?;
    check_open(b)?;
    let t = Table::new(sigma, sigma0);
    let avg = averaged(&t, b);
    let ell = ell_from(&t, b, &avg);
    let (k0, k) = (t.k0, t.k);
    let mut r_max: f64 = 0.0;
    for u in 0..k0 {
        for a in 0..k {
            for v in 0..k0 {
                for c in 0..k {
                    let (x, y) = (t.get(u, a), t.get(v, c));
                    let same = u == v && a == c;
                    if x == 0 || y == 0 || (same && x < 2) {
                        continue;
                    }
                    r_max = r_max.max(sd(avg[u * k0 + v]) / sd(b.get(a, c)));
                }
            }
        }
    }
    let n = sigma.n();
    let threshold = (2.0 * ((2 * k0 * n) as f64).ln()).sqrt() * (1.0 + gamma * r_max);
    Ok(AlternativeAssessment {
        ell,
        r_max,
        threshold,
        gamma,
        in_class: ell >= threshold,
    })
}

/// Large-`n` separation of the single-community alternative for two equal
/// blocks with within-probability `p` and between-probability `q`.
pub fn er_separation_asymptotic(n: usize, p: f64, q: f64) -> f64 {
    (n as f64).sqrt() * (p - q).abs() / 4.0 * (1.0 / sd(q) - 1.0 / sd(p)).abs()
}

/// Class threshold for the same alternative.
pub fn er_threshold_asymptotic(n: usize, p: f64, q: f64, gamma: f64) -> f64 {
    let ratio = ((p + q) * (2.0 - p - q) / (p * (1.0 - p)).min(q * (1.0 - q))).sqrt();
    (2.0 * (2.0 * n as f64).ln()).sqrt() * (1.0 + 0.5 * gamma * ratio)
}
