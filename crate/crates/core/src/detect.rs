//! Community label estimates: adjacency spectral clustering and SCORE.

use serde::{Deserialize, Serialize};

use crate::eigen::leading_eigenpairs;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::kmeans::{kmeans, KMeansParams};
use crate::model::{derive_seed, Membership};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            restarts: 20,
            max_iterations: 300,
            tolerance: 1e-9,
            seed: 0,
        }
    }
}

impl ClusteringConfig {
    pub fn with_seed(seed: u64) -> Self {
        ClusteringConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_iterations == 0 {
            return Err(Error::config(
                "restarts and max_iterations must be at least 1",
            ));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::config("k-means tolerance must be non-negative"));
        }
        Ok(())
    }

    fn kmeans_params(&self) -> KMeansParams {
        KMeansParams {
            restarts: self.restarts,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            seed: derive_seed(self.seed, 1),
        }
    }

    fn eigen_seed(&self) -> u64 {
        derive_seed(self.seed, 0)
    }
}

/// Which front-end produced a label vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Detector {
    Spectral,
    Score,
}

fn check_inputs(g: &Graph, k: usize, cfg: &ClusteringConfig) -> Result<()> {
    cfg.validate()?;
    if k == 0 || k > g.n() {
        return Err(Error::domain(format!(
            "cannot find {k} communities in a {}-node graph",
            g.n()
        )));
    }
    if g.edge_count() == 0 {
        return Err(Error::domain("community detection needs at least one edge"));
    }
    Ok(())
}

/// k-means on the rows of the `k` leading adjacency eigenvectors (by |eigenvalue|).
pub fn spectral_clustering(g: &Graph, k: usize, cfg: &ClusteringConfig) -> Result<Membership> {
    check_inputs(g, k, cfg)?;
    if k == 1 {
        return Membership::trivial(g.n());
    }
    let eig = leading_eigenpairs(g, k, cfg.eigen_seed())?;
    let n = g.n();
    let mut rows = vec![0.0; n * k];
    for (l, v) in eig.vectors.iter().enumerate() {
        for i in 0..n {
            rows[i * k + l] = v[i];
        }
    }
    let fit = kmeans(&rows, k, k, &cfg.kmeans_params())?;
    Membership::canonical(&fit.labels)
}

#[derive(Clone, Debug)]
pub struct ScoreOutput {
    pub membership: Membership,
    /// Nodes whose leading-eigenvector entry was numerically zero.
    pub degenerate_rows: usize,
}

/// SCORE: k-means on entrywise ratios of eigenvectors 2..k to the leading
/// one, each ratio clamped to `[-log n, log n]`.
pub fn score(g: &Graph, k: usize, cfg: &ClusteringConfig) -> Result<Membership> {
    score_with_diagnostics(g, k, cfg).map(|o| o.membership)
}

pub fn score_with_diagnostics(g: &Graph, k: usize, cfg: &ClusteringConfig) -> Result<ScoreOutput> {
    check_inputs(g, k, cfg)?;
    let n = g.n();
    if k == 1 {
        return Ok(ScoreOutput {
            membership: Membership::trivial(n)?,
            degenerate_rows: 0,
        });
    }
    let eig = leading_eigenpairs(g, k, cfg.eigen_seed())?;
    let bound = (n as f64).ln();
    let dim = k - 1;
    let lead = &eig.vectors[0];
    let mut rows = vec![0.0; n * dim];
    let mut degenerate_rows = 0;
    for i in 0..n {
        let degenerate = lead[i].abs() < 1e-12;
        degenerate_rows += usize::from(degenerate);
        for l in 0..dim {
            let num = eig.vectors[l + 1][i];
            rows[i * dim + l] = if degenerate {
                if num == 0.0 {
                    0.0
                } else {
                    (num * lead[i].signum()).signum() * bound
                }
            } else {
                (num / lead[i]).clamp(-bound, bound)
            };
        }
    }
    if degenerate_rows > 0 {
        log::warn!("SCORE: {degenerate_rows} node(s) with vanishing leading-eigenvector entry");
    }
    let fit = kmeans(&rows, dim, k, &cfg.kmeans_params())?;
    Ok(ScoreOutput {
        membership: Membership::canonical(&fit.labels)?,
        degenerate_rows,
    })
}
