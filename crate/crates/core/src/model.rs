//! Block model parameters, samplers and maximum-likelihood estimators.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Generator used by every sampler in the crate.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Mixes `stream` into `base` (SplitMix64 finaliser) to get an independent seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Assignment of `n` nodes to `k` non-empty communities.
///
/// Labels are stored 0-based (`0..k`); the text format is 1-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Membership {
    labels: Vec<usize>,
    k: usize,
    sizes: Vec<usize>,
}

impl Membership {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::domain("community count must be at least 1"));
        }
        let mut sizes = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(Error::domain(format!(
                    "node {i} has label {} outside 1..={k}",
                    l + 1
                )));
            }
            sizes[l] += 1;
        }
        if let Some(u) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::domain(format!("community {} is empty", u + 1)));
        }
        Ok(Membership { labels, k, sizes })
    }

    /// Builds from 1-based labels; `k` is the largest label.
    pub fn from_one_based(labels: &[usize]) -> Result<Self> {
        if let Some(i) = labels.iter().position(|&l| l == 0) {
            return Err(Error::domain(format!(
                "node {i} has label 0; labels are 1-based"
            )));
        }
        let k = labels.iter().copied().max().unwrap_or(0);
        Membership::new(labels.iter().map(|&l| l - 1).collect(), k)
    }

    /// All `n` nodes in one community.
    pub fn trivial(n: usize) -> Result<Self> {
        Membership::new(vec![0; n], 1)
    }

    /// Relabels communities so that first occurrences appear in increasing order.
    pub fn canonical(labels: &[usize]) -> Result<Self> {
        let mut map = Vec::<Option<usize>>::new();
        let mut next = 0;
        let relabelled = labels
            .iter()
            .map(|&l| {
                if l >= map.len() {
                    map.resize(l + 1, None);
                }
                *map[l].get_or_insert_with(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        Membership::new(relabelled, next)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Inverse index: the members of every community, ascending.
    pub fn communities(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Applies `perm[old] = new` to the community ids.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.k {
            return Err(Error::domain("relabelling must cover every community"));
        }
        Membership::new(self.labels.iter().map(|&l| perm[l]).collect(), self.k)
    }

    pub(crate) fn require_min_size(&self, min: usize, what: &str) -> Result<()> {
        match self.sizes.iter().position(|&s| s < min) {
            Some(u) => Err(Error::domain(format!(
                "community {} has {} node(s); {what} needs at least {min}",
                u + 1,
                self.sizes[u]
            ))),
            None => Ok(()),
        }
    }

    pub(crate) fn require_len(&self, n: usize) -> Result<()> {
        if self.n() != n {
            return Err(Error::domain(format!(
                "membership covers {} nodes but the graph has {n}",
                self.n()
            )));
        }
        Ok(())
    }
}

/// Reads one 1-based label per line; blank lines and `#` comments are skipped.
pub fn read_membership<R: BufRead>(reader: R) -> Result<Membership> {
    let mut labels = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        labels.push(t.parse::<usize>().map_err(|_| Error::Parse {
            line: idx + 1,
            message: format!("label {t:?} is not a positive integer"),
        })?);
    }
    Membership::from_one_based(&labels)
}

pub fn write_membership<W: Write>(sigma: &Membership, mut out: W) -> Result<()> {
    for &l in sigma.labels() {
        writeln!(out, "{}", l + 1)?;
    }
    out.flush()?;
    Ok(())
}

/// Symmetric `k × k` matrix of edge probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMatrix {
    k: usize,
    probs: Vec<f64>,
}

impl BlockMatrix {
    /// `probs` is row-major.
    pub fn new(k: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != k * k {
            return Err(Error::domain(format!(
                "block matrix has {} entries, expected {}",
                probs.len(),
                k * k
            )));
        }
        for u in 0..k {
            for v in 0..k {
                let p = probs[u * k + v];
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::domain(format!(
                        "B[{}][{}] = {p} is not a probability",
                        u + 1,
                        v + 1
                    )));
                }
                if p != probs[v * k + u] {
                    return Err(Error::domain(format!(
                        "B is not symmetric at ({}, {})",
                        u + 1,
                        v + 1
                    )));
                }
            }
        }
        Ok(BlockMatrix { k, probs })
    }

    pub fn constant(k: usize, p: f64) -> Result<Self> {
        BlockMatrix::new(k, vec![p; k * k])
    }

    /// `B_uv = scale * (1 + boost * 1{u = v})`, the family used throughout the simulations.
    pub fn assortative(k: usize, scale: f64, boost: f64) -> Result<Self> {
        let probs = (0..k * k)
            .map(|idx| {
                let diag = if idx / k == idx % k { 1.0 } else { 0.0 };
                scale * (1.0 + boost * diag)
            })
            .collect();
        BlockMatrix::new(k, probs)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.probs[u * self.k + v]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Rows and columns permuted by `perm[old] = new`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let k = self.k;
        let mut probs = vec![0.0; k * k];
        for u in 0..k {
            for v in 0..k {
                probs[perm[u] * k + perm[v]] = self.get(u, v);
            }
        }
        BlockMatrix { k, probs }
    }

    pub fn max_abs_diff(&self, other: &BlockMatrix) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Reads `k` comma-separated rows of `k` probabilities.
pub fn read_block_matrix<R: BufRead>(reader: R) -> Result<BlockMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let row = t
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: idx + 1,
                    message: format!("{s:?} is not a number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let k = rows.len();
    if rows.iter().any(|r| r.len() != k) {
        return Err(Error::domain("block matrix CSV must be square"));
    }
    BlockMatrix::new(k, rows.concat())
}

pub fn write_block_matrix<W: Write>(b: &BlockMatrix, mut out: W) -> Result<()> {
    for u in 0..b.k() {
        let row: Vec<String> = (0..b.k()).map(|v| format!("{}", b.get(u, v))).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Positive per-node degree multipliers.
#[derive(Clone, Debug, PartialEq)]
pub struct DegreeParams {
    omega: Vec<f64>,
}

impl DegreeParams {
    pub fn new(omega: Vec<f64>) -> Result<Self> {
        if let Some(i) = omega.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::domain(format!(
                "degree parameter of node {i} is {} (must be positive)",
                omega[i]
            )));
        }
        Ok(DegreeParams { omega })
    }

    pub fn ones(n: usize) -> Self {
        DegreeParams {
            omega: vec![1.0; n],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.omega
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// Whether every community's multipliers sum to its size (relative 1e-9).
    pub fn is_normalized(&self, sigma: &Membership) -> bool {
        let mut sums = vec![0.0; sigma.k()];
        for (i, w) in self.omega.iter().enumerate() {
            sums[sigma.label(i)] += w;
        }
        sums.iter()
            .zip(sigma.sizes())
            .all(|(s, &size)| ((s - size as f64) / size as f64).abs() <= 1e-9)
    }
}

/// Ordered-pair counts per community pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockCounts {
    pub k: usize,
    /// Row-major `k × k` ordered node-pair counts.
    pub pairs: Vec<u64>,
    /// Row-major `k × k` ordered edge counts; within-block edges count twice.
    pub edges: Vec<u64>,
}

impl BlockCounts {
    pub fn pairs(&self, u: usize, v: usize) -> u64 {
        self.pairs[u * self.k + v]
    }

    pub fn edges(&self, u: usize, v: usize) -> u64 {
        self.edges[u * self.k + v]
    }
}

pub fn sample_membership_balanced<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    rng: &mut R,
) -> Result<Membership> {
    if k == 0 || k > n {
        return Err(Error::domain(format!(
            "cannot split {n} nodes into {k} non-empty communities"
        )));
    }
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(rng);
    Membership::new(labels, k)
}

/// Draws labels i.i.d. from `pi`, redrawing the whole vector while any
/// community is empty.
pub fn sample_membership_multinomial<R: Rng + ?Sized>(
    n: usize,
    pi: &[f64],
    rng: &mut R,
) -> Result<Membership> {
    let k = pi.len();
    if k == 0 || pi.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(Error::domain(
            "community probabilities must all be positive",
        ));
    }
    if (pi.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::domain("community probabilities must sum to 1"));
    }
    if k > n {
        return Err(Error::domain(format!(
            "cannot fill {k} communities with {n} nodes"
        )));
    }
    let cumulative: Vec<f64> = pi
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let mut attempts = 0usize;
    loop {
        let labels: Vec<usize> = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                cumulative.iter().position(|&c| u < c).unwrap_or(k - 1)
            })
            .collect();
        match Membership::new(labels, k) {
            Ok(m) => return Ok(m),
            Err(_) => {
                attempts += 1;
                log::info!("multinomial membership left a community empty; redrawing ({attempts})");
            }
        }
    }
}

/// Three-point mixture of the degree-corrected simulations: `η ~ U[4/5, 6/5]`
/// w.p. 0.8, `9/11` w.p. 0.1 and `13/11` w.p. 0.1.
pub fn sample_degree_params_sim4<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DegreeParams {
    let omega = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            if u < 0.8 {
                0.8 + 0.4 * rng.random::<f64>()
            } else if u < 0.9 {
                9.0 / 11.0
            } else {
                13.0 / 11.0
            }
        })
        .collect();
    DegreeParams { omega }
}

/// Draws every `i < j` pair independently with probability `prob(i, j)`,
/// consuming exactly one uniform per pair in row-major order.
fn sample_pairs<R, F>(n: usize, rng: &mut R, mut prob: F) -> Graph
where
    R: Rng + ?Sized,
    F: FnMut(usize, usize) -> f64,
{
    // upper-triangle neighbours first, then an exact-capacity symmetric fill
    let mut upper: Vec<u32> = Vec::new();
    let mut starts = Vec::with_capacity(n + 1);
    let mut degree = vec![0usize; n];
    let mut row = vec![0u32; n];
    for i in 0..n {
        starts.push(upper.len());
        let mut len = 0;
        for j in (i + 1)..n {
            let u: f64 = rng.random();
            row[len] = j as u32;
            len += usize::from(u < prob(i, j));
        }
        upper.extend_from_slice(&row[..len]);
        degree[i] += len;
        for &j in &row[..len] {
            degree[j as usize] += 1;
        }
    }
    starts.push(upper.len());
    let mut adj: Vec<Vec<u32>> = degree.iter().map(|&d| Vec::with_capacity(d)).collect();
    for i in 0..n {
        let neighbours = &upper[starts[i]..starts[i + 1]];
        adj[i].extend_from_slice(neighbours);
        for &j in neighbours {
            adj[j as usize].push(i as u32);
        }
    }
    Graph::from_sorted_rows(adj)
}

pub fn sample_sbm<R: Rng + ?Sized>(
    sigma: &Membership,
    b: &BlockMatrix,
    rng: &mut R,
) -> Result<Graph> {
    if b.k() != sigma.k() {
        return Err(Error::domain(format!(
            "membership has {} communities but B is {}x{}",
            sigma.k(),
            b.k(),
            b.k()
        )));
    }
    let labels = sigma.labels();
    Ok(sample_pairs(sigma.n(), rng, |i, j| {
        b.get(labels[i], labels[j])
    }))
}

pub fn sample_dcsbm<R: Rng + ?Sized>(
    sigma: &Membership,
    b: &BlockMatrix,
    omega: &DegreeParams,
    rng: &mut R,
) -> Result<Graph> {
    if b.k() != sigma.k() {
        return Err(Error::domain(format!(
            "membership has {} communities but B is {}x{}",
            sigma.k(),
            b.k(),
            b.k()
        )));
    }
    if omega.len() != sigma.n() {
        return Err(Error::domain(
            "degree parameters and membership differ in length",
        ));
    }
    let w = omega.as_slice();
    if let Some((i, j, p)) = worst_pair(sigma, b, w) {
        if p > 1.0 {
            return Err(Error::domain(format!(
                "edge probability {p} > 1 for pair ({i}, {j}); degree parameters too large"
            )));
        }
    }
    let labels = sigma.labels();
    Ok(sample_pairs(sigma.n(), rng, |i, j| {
        w[i] * w[j] * b.get(labels[i], labels[j])
    }))
}

/// Largest `ω_i ω_j B_{σ(i)σ(j)}` over `i ≠ j`, found blockwise from the top
/// two multipliers of every community.
fn worst_pair(sigma: &Membership, b: &BlockMatrix, w: &[f64]) -> Option<(usize, usize, f64)> {
    let k = sigma.k();
    let mut top: Vec<[Option<usize>; 2]> = vec![[None, None]; k];
    for (i, &l) in sigma.labels().iter().enumerate() {
        let slot = &mut top[l];
        match slot[0] {
            Some(a) if w[a] >= w[i] => match slot[1] {
                Some(c) if w[c] >= w[i] => {}
                _ => slot[1] = Some(i),
            },
            _ => {
                slot[1] = slot[0];
                slot[0] = Some(i);
            }
        }
    }
    let mut best: Option<(usize, usize, f64)> = None;
    for u in 0..k {
        for v in u..k {
            let pair = if u == v {
                top[u][0].zip(top[u][1])
            } else {
                top[u][0].zip(top[v][0])
            };
            if let Some((i, j)) = pair {
                let p = w[i] * w[j] * b.get(u, v);
                if best.is_none_or(|(_, _, q)| p > q) {
                    best = Some((i.min(j), i.max(j), p));
                }
            }
        }
    }
    best
}

pub fn block_counts(g: &Graph, sigma: &Membership) -> Result<BlockCounts> {
    sigma.require_len(g.n())?;
    let k = sigma.k();
    let sizes = sigma.sizes();
    let mut pairs = vec![0u64; k * k];
    for u in 0..k {
        for v in 0..k {
            let (a, b) = (sizes[u] as u64, sizes[v] as u64);
            pairs[u * k + v] = if u == v { a * (a - 1) } else { a * b };
        }
    }
    let mut edges = vec![0u64; k * k];
    let labels = sigma.labels();
    for i in 0..g.n() {
        let row = labels[i] * k;
        for &j in g.neighbors(i) {
            edges[row + labels[j as usize]] += 1;
        }
    }
    Ok(BlockCounts { k, pairs, edges })
}

/// Maximum-likelihood `B̂`: ordered-pair edge counts over ordered-pair counts.
pub fn estimate_block_matrix(g: &Graph, sigma0: &Membership) -> Result<BlockMatrix> {
    sigma0.require_len(g.n())?;
    sigma0.require_min_size(2, "estimating B")?;
    let counts = block_counts(g, sigma0)?;
    let probs = counts
        .edges
        .iter()
        .zip(&counts.pairs)
        .map(|(&m, &p)| m as f64 / p as f64)
        .collect();
    Ok(BlockMatrix {
        k: sigma0.k(),
        probs,
    })
}

/// `ω̂_i = |σ₀⁻¹(u)| d_i / Σ_{j ∈ σ₀⁻¹(u)} d_j` with `u = σ₀(i)`.
pub fn estimate_degree_params(g: &Graph, sigma0: &Membership) -> Result<DegreeParams> {
    sigma0.require_len(g.n())?;
    let mut totals = vec![0usize; sigma0.k()];
    for i in 0..g.n() {
        totals[sigma0.label(i)] += g.degree(i);
    }
    if let Some(u) = totals.iter().position(|&t| t == 0) {
        return Err(Error::domain(format!(
            "community {} has no edges; degree parameters are undefined",
            u + 1
        )));
    }
    if let Some(i) = (0..g.n()).find(|&i| g.degree(i) == 0) {
        return Err(Error::domain(format!(
            "node {i} is isolated; its degree parameter would be zero"
        )));
    }
    let sizes = sigma0.sizes();
    let omega = (0..g.n())
        .map(|i| {
            let u = sigma0.label(i);
            sizes[u] as f64 * g.degree(i) as f64 / totals[u] as f64
        })
        .collect();
    Ok(DegreeParams { omega })
}
