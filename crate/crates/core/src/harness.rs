//! Monte Carlo experiments over the block-model settings, and the two
//! real-data pipelines.
//!
//! Every experiment expands into a list of cells (one parameter tuple each).
//! Cell `c` of a run with base seed `s` uses seed `derive_seed(s, c)`, and its
//! replication `r` uses `derive_seed(cell_seed, r)`, so results never depend
//! on scheduling and different base seeds give unrelated streams.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;

use crate::detect::{score, spectral_clustering, ClusteringConfig};
use crate::error::{Error, Result};
use crate::gof::{
    gumbel_cdf, test_membership, test_membership_known_omega, test_num_communities, ModelKind,
    StatisticVariant, TestReport,
};
use crate::graph::{
    largest_connected_component, load_edge_list, load_weighted_edge_list, symmetrize_and_threshold,
    Graph,
};
use crate::model::{
    derive_seed, read_membership, rng_from_seed, sample_dcsbm, sample_degree_params_sim4,
    sample_membership_balanced, sample_membership_multinomial, sample_sbm, BlockMatrix, Membership,
    SimRng,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentId {
    Sim1,
    Sim2Grid,
    Sim2RSweep,
    Sim3Type1,
    Sim3Power,
    Sim4,
    Sim5,
    Sim6,
    SuppErPower,
    DataTrade,
    DataPolblogs,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 11] = [
        ExperimentId::Sim1,
        ExperimentId::Sim2Grid,
        ExperimentId::Sim2RSweep,
        ExperimentId::Sim3Type1,
        ExperimentId::Sim3Power,
        ExperimentId::Sim4,
        ExperimentId::Sim5,
        ExperimentId::Sim6,
        ExperimentId::SuppErPower,
        ExperimentId::DataTrade,
        ExperimentId::DataPolblogs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Sim1 => "sim1",
            ExperimentId::Sim2Grid => "sim2-grid",
            ExperimentId::Sim2RSweep => "sim2-r-sweep",
            ExperimentId::Sim3Type1 => "sim3-type1",
            ExperimentId::Sim3Power => "sim3-power",
            ExperimentId::Sim4 => "sim4",
            ExperimentId::Sim5 => "sim5",
            ExperimentId::Sim6 => "sim6",
            ExperimentId::SuppErPower => "supp-er-power",
            ExperimentId::DataTrade => "data-trade",
            ExperimentId::DataPolblogs => "data-polblogs",
        }
    }

    /// Override keys accepted by this experiment.
    pub fn parameters(self) -> &'static [&'static str] {
        match self {
            ExperimentId::Sim1 | ExperimentId::Sim4 => &["n", "k", "b_scale", "b_boost"],
            ExperimentId::Sim2Grid | ExperimentId::Sim5 => {
                &["block_size", "k", "k0", "b_scale", "b_boost"]
            }
            ExperimentId::Sim2RSweep => &["block_size", "k", "r"],
            ExperimentId::Sim3Type1 | ExperimentId::Sim6 => {
                &["block_size", "k", "b_scale", "b_boost"]
            }
            ExperimentId::Sim3Power => &["block_size", "r", "z"],
            ExperimentId::SuppErPower => &["block_size", "r", "b_scale"],
            ExperimentId::DataTrade => &["k0", "percentile"],
            ExperimentId::DataPolblogs => &["k0"],
        }
    }

    pub fn is_data(self) -> bool {
        matches!(self, ExperimentId::DataTrade | ExperimentId::DataPolblogs)
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = ExperimentId::ALL.iter().map(|id| id.name()).collect();
                Error::config(format!(
                    "unknown experiment {s:?}; valid ids: {}",
                    valid.join(", ")
                ))
            })
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub id: ExperimentId,
    pub replications: usize,
    pub base_seed: u64,
    pub alpha: f64,
    /// Replaces the default value list of a parameter.
    pub overrides: BTreeMap<String, Vec<f64>>,
    /// Directory holding the real-data files.
    pub data_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(id: ExperimentId) -> Self {
        ExperimentSpec {
            id,
            replications: 200,
            base_seed: 0,
            alpha: 0.05,
            overrides: BTreeMap::new(),
            data_dir: None,
        }
    }

    pub fn with_override(mut self, key: &str, values: &[f64]) -> Self {
        self.overrides.insert(key.to_string(), values.to_vec());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::config("replications must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!(
                "alpha {} is outside (0, 1)",
                self.alpha
            )));
        }
        let allowed = self.id.parameters();
        for (key, values) in &self.overrides {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::config(format!(
                    "{} does not take parameter {key:?}; allowed: {}",
                    self.id,
                    allowed.join(", ")
                )));
            }
            if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(format!(
                    "parameter {key:?} needs finite values"
                )));
            }
        }
        Ok(())
    }

    fn reals(&self, key: &str, default: &[f64]) -> Vec<f64> {
        self.overrides
            .get(key)
            .cloned()
            .unwrap_or_else(|| default.to_vec())
    }

    fn counts(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.overrides.get(key) {
            None => Ok(default.to_vec()),
            Some(values) => values
                .iter()
                .map(|&v| {
                    if v >= 1.0 && v.fract() == 0.0 {
                        Ok(v as usize)
                    } else {
                        Err(Error::config(format!(
                            "parameter {key:?} needs positive integers, got {v}"
                        )))
                    }
                })
                .collect(),
        }
    }

    fn single(&self, key: &str, default: f64) -> Result<f64> {
        match self.overrides.get(key).map(Vec::as_slice) {
            None => Ok(default),
            Some([v]) => Ok(*v),
            Some(_) => Err(Error::config(format!(
                "parameter {key:?} takes a single value"
            ))),
        }
    }
}

/// One output line: a parameter tuple and its aggregated outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub experiment_id: String,
    pub k: Option<usize>,
    pub k0: Option<usize>,
    pub n: usize,
    pub r: Option<f64>,
    pub z: Option<f64>,
    pub variant: String,
    pub rejection_rate: f64,
    pub stderr: f64,
    pub ks_stat: Option<f64>,
    pub clamp_total: u64,
    pub seed: u64,
    pub mean_statistic: f64,
    pub replications: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRow {
    pub row: usize,
    pub replication: usize,
    pub statistic: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub id: ExperimentId,
    pub rows: Vec<ResultRow>,
    /// Per-replication statistics, `row` indexing into `rows`.
    pub samples: Vec<SampleRow>,
    pub runtime_secs: f64,
}

impl ExperimentResult {
    /// Statistic sample behind `rows[row]`, in replication order.
    pub fn sample(&self, row: usize) -> Vec<f64> {
        self.samples
            .iter()
            .filter(|s| s.row == row)
            .map(|s| s.statistic)
            .collect()
    }

    pub fn find(&self, pred: impl Fn(&ResultRow) -> bool) -> Option<(usize, &ResultRow)> {
        self.rows.iter().enumerate().find(|(_, r)| pred(r))
    }
}

/// Half-width of the normal-approximation 95% band for a rate `p` over `r` draws.
pub fn binomial_band(p: f64, r: usize) -> f64 {
    1.96 * (p * (1.0 - p) / r as f64).sqrt()
}

/// Sup-distance between the empirical CDF of `sample` and the Gumbel null.
pub fn ks_distance_to_gumbel(sample: &[f64]) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let m = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d: f64, (i, &x)| {
        let f = gumbel_cdf(x);
        d.max((i as f64 + 1.0) / m - f).max(f - i as f64 / m)
    })
}

/// Moves exactly `⌈z·n⌉` distinct nodes to a uniformly chosen different
/// community. Draws are repeated if a community would be left empty.
pub fn corrupt_labels<R: Rng + ?Sized>(
    sigma: &Membership,
    z: f64,
    rng: &mut R,
) -> Result<Membership> {
    let (n, k) = (sigma.n(), sigma.k());
    if k < 2 {
        return Err(Error::domain(
            "corrupting labels needs at least two communities",
        ));
    }
    if !(z > 0.0 && z < 1.0) {
        return Err(Error::domain(format!(
            "corruption fraction {z} is outside (0, 1)"
        )));
    }
    let m = ((z * n as f64) - 1e-9).ceil().max(1.0) as usize;
    for _ in 0..1000 {
        let mut labels = sigma.labels().to_vec();
        for i in sample_indices(rng, n, m) {
            let shift = rng.random_range(1..k);
            labels[i] = (labels[i] + shift) % k;
        }
        if let Ok(out) = Membership::new(labels, k) {
            return Ok(out);
        }
    }
    Err(Error::domain(
        "could not corrupt labels without emptying a community",
    ))
}

struct Draw {
    variant: String,
    statistic: f64,
    reject: bool,
    clamp_events: u64,
}

fn draw(report: &TestReport) -> Draw {
    Draw {
        variant: report.variant.name().to_string(),
        statistic: report.statistic,
        reject: report.reject,
        clamp_events: report.clamp_events,
    }
}

/// The diagnostic `T_n2` carried by a degree-corrected report, judged against
/// the same critical values.
fn companion_draw(report: &TestReport) -> Option<Draw> {
    report.t_n2.map(|t| Draw {
        variant: StatisticVariant::Tn2.name().to_string(),
        statistic: t,
        reject: t > report.upper_critical || t < report.lower_critical,
        clamp_events: report.clamp_events,
    })
}

fn dcsbm_draws(report: &TestReport) -> Vec<Draw> {
    let mut out: Vec<Draw> = companion_draw(report).into_iter().collect();
    out.push(draw(report));
    out
}

type Replicate = Box<dyn Fn(&mut SimRng, &ClusteringConfig) -> Result<Vec<Draw>> + Send + Sync>;

struct Cell {
    k: Option<usize>,
    k0: Option<usize>,
    n: usize,
    r: Option<f64>,
    z: Option<f64>,
    run: Replicate,
}

enum Labels {
    Uniform,
    Balanced,
}

impl Labels {
    fn draw(&self, n: usize, k: usize, rng: &mut SimRng) -> Result<Membership> {
        match self {
            Labels::Uniform => sample_membership_multinomial(n, &vec![1.0 / k as f64; k], rng),
            Labels::Balanced => sample_membership_balanced(n, k, rng),
        }
    }
}

fn cells(spec: &ExperimentSpec) -> Result<Vec<Cell>> {
    let alpha = spec.alpha;
    let b_scale = spec.single("b_scale", 0.1)?;
    let mut out = Vec::new();
    match spec.id {
        ExperimentId::Sim1 | ExperimentId::Sim4 => {
            let b_boost = spec.single("b_boost", 2.0)?;
            let degree_corrected = spec.id == ExperimentId::Sim4;
            for n in spec.counts("n", &[500])? {
                for k in spec.counts("k", &[3])? {
                    let b = BlockMatrix::assortative(k, b_scale, b_boost)?;
                    let run: Replicate = if degree_corrected {
                        Box::new(move |rng, cfg| {
                            let sigma = Labels::Uniform.draw(n, k, rng)?;
                            let omega = sample_degree_params_sim4(n, rng);
                            let g = sample_dcsbm(&sigma, &b, &omega, rng)?;
                            let sigma_hat = score(&g, k, cfg)?;
                            let known = test_membership_known_omega(&g, &sigma_hat, &omega, alpha)?;
                            let plug_in = test_membership(&g, &sigma_hat, alpha, ModelKind::Dcsbm)?;
                            let mut draws = vec![draw(&known)];
                            draws.extend(dcsbm_draws(&plug_in));
                            Ok(draws)
                        })
                    } else {
                        Box::new(move |rng, cfg| {
                            let sigma = Labels::Uniform.draw(n, k, rng)?;
                            let g = sample_sbm(&sigma, &b, rng)?;
                            Ok(vec![draw(&test_num_communities(
                                &g,
                                k,
                                alpha,
                                ModelKind::Sbm,
                                cfg,
                            )?)])
                        })
                    };
                    out.push(Cell {
                        k: Some(k),
                        k0: Some(k),
                        n,
                        r: None,
                        z: None,
                        run,
                    });
                }
            }
        }
        ExperimentId::Sim2Grid | ExperimentId::Sim5 => {
            let degree_corrected = spec.id == ExperimentId::Sim5;
            let (grid, boost): (&[usize], f64) = if degree_corrected {
                (&[2, 3, 4, 5, 6, 7, 8], 2.0)
            } else {
                (&[2, 4, 6, 8, 10, 20, 30, 40], 4.0)
            };
            let b_boost = spec.single("b_boost", boost)?;
            for block in spec.counts("block_size", &[200])? {
                for k0 in spec.counts("k0", grid)? {
                    for k in spec.counts("k", grid)? {
                        let n = block * k;
                        let b = BlockMatrix::assortative(k, b_scale, b_boost)?;
                        let run: Replicate = if degree_corrected {
                            Box::new(move |rng, cfg| {
                                let sigma = Labels::Balanced.draw(n, k, rng)?;
                                let omega = sample_degree_params_sim4(n, rng);
                                let g = sample_dcsbm(&sigma, &b, &omega, rng)?;
                                Ok(dcsbm_draws(&test_num_communities(
                                    &g,
                                    k0,
                                    alpha,
                                    ModelKind::Dcsbm,
                                    cfg,
                                )?))
                            })
                        } else {
                            Box::new(move |rng, cfg| {
                                let sigma = Labels::Balanced.draw(n, k, rng)?;
                                let g = sample_sbm(&sigma, &b, rng)?;
                                Ok(vec![draw(&test_num_communities(
                                    &g,
                                    k0,
                                    alpha,
                                    ModelKind::Sbm,
                                    cfg,
                                )?)])
                            })
                        };
                        out.push(Cell {
                            k: Some(k),
                            k0: Some(k0),
                            n,
                            r: None,
                            z: None,
                            run,
                        });
                    }
                }
            }
        }
        ExperimentId::Sim2RSweep => {
            let rs = spec.reals("r", &[0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.10]);
            for block in spec.counts("block_size", &[200])? {
                for k in spec.counts("k", &[3])? {
                    for &r in &rs {
                        let n = block * k;
                        let b = BlockMatrix::assortative(k, r, 2.0)?;
                        out.push(Cell {
                            k: Some(k),
                            k0: Some(k),
                            n,
                            r: Some(r),
                            z: None,
                            run: Box::new(move |rng, cfg| {
                                let sigma = Labels::Balanced.draw(n, k, rng)?;
                                let g = sample_sbm(&sigma, &b, rng)?;
                                Ok(vec![draw(&test_num_communities(
                                    &g,
                                    k,
                                    alpha,
                                    ModelKind::Sbm,
                                    cfg,
                                )?)])
                            }),
                        });
                    }
                }
            }
        }
        ExperimentId::Sim3Type1 | ExperimentId::Sim6 => {
            let degree_corrected = spec.id == ExperimentId::Sim6;
            let b_boost = spec.single("b_boost", 2.0)?;
            for block in spec.counts("block_size", &[200])? {
                for k in spec.counts("k", &[2, 3, 4, 5, 6, 7, 8])? {
                    let n = block * k;
                    let b = BlockMatrix::assortative(k, b_scale, b_boost)?;
                    let run: Replicate = if degree_corrected {
                        Box::new(move |rng, cfg| {
                            let sigma = Labels::Balanced.draw(n, k, rng)?;
                            let omega = sample_degree_params_sim4(n, rng);
                            let g = sample_dcsbm(&sigma, &b, &omega, rng)?;
                            let sigma0 = score(&g, k, cfg)?;
                            Ok(dcsbm_draws(&test_membership(
                                &g,
                                &sigma0,
                                alpha,
                                ModelKind::Dcsbm,
                            )?))
                        })
                    } else {
                        Box::new(move |rng, cfg| {
                            let sigma = Labels::Balanced.draw(n, k, rng)?;
                            let g = sample_sbm(&sigma, &b, rng)?;
                            let sigma0 = spectral_clustering(&g, k, cfg)?;
                            Ok(vec![draw(&test_membership(
                                &g,
                                &sigma0,
                                alpha,
                                ModelKind::Sbm,
                            )?)])
                        })
                    };
                    out.push(Cell {
                        k: Some(k),
                        k0: Some(k),
                        n,
                        r: None,
                        z: None,
                        run,
                    });
                }
            }
        }
        ExperimentId::Sim3Power => {
            let rs = spec.reals("r", &[0.05, 0.10]);
            let zs = spec.reals("z", &[0.01, 0.05, 0.10]);
            for block in spec.counts("block_size", &[100, 200])? {
                for &r in &rs {
                    for &z in &zs {
                        let n = 2 * block;
                        let b = BlockMatrix::assortative(2, r, 2.0)?;
                        out.push(Cell {
                            k: Some(2),
                            k0: Some(2),
                            n,
                            r: Some(r),
                            z: Some(z),
                            run: Box::new(move |rng, _| {
                                let sigma = Labels::Balanced.draw(n, 2, rng)?;
                                let g = sample_sbm(&sigma, &b, rng)?;
                                let sigma0 = corrupt_labels(&sigma, z, rng)?;
                                Ok(vec![draw(&test_membership(
                                    &g,
                                    &sigma0,
                                    alpha,
                                    ModelKind::Sbm,
                                )?)])
                            }),
                        });
                    }
                }
            }
        }
        ExperimentId::SuppErPower => {
            let rs = spec.reals("r", &[3.0, 4.0, 5.0, 6.0, 7.0]);
            for &r in &rs {
                for block in spec.counts("block_size", &[200, 400, 800, 1600, 3200, 6400])? {
                    let n = 2 * block;
                    let b = BlockMatrix::assortative(2, b_scale, r)?;
                    out.push(Cell {
                        k: Some(2),
                        k0: Some(1),
                        n,
                        r: Some(r),
                        z: None,
                        run: Box::new(move |rng, cfg| {
                            let sigma = Labels::Balanced.draw(n, 2, rng)?;
                            let g = sample_sbm(&sigma, &b, rng)?;
                            Ok(vec![draw(&test_num_communities(
                                &g,
                                1,
                                alpha,
                                ModelKind::Sbm,
                                cfg,
                            )?)])
                        }),
                    });
                }
            }
        }
        ExperimentId::DataTrade | ExperimentId::DataPolblogs => {
            unreachable!("data experiments have no cells")
        }
    }
    Ok(out)
}

fn cell_seed(base: u64, cell: usize) -> u64 {
    derive_seed(base, cell as u64)
}

/// Runs all cells of `spec`. Replications run on the rayon pool and are
/// reduced in index order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let start = Instant::now();
    if spec.id.is_data() {
        let rows = run_data(spec)?;
        return Ok(ExperimentResult {
            id: spec.id,
            rows,
            samples: Vec::new(),
            runtime_secs: start.elapsed().as_secs_f64(),
        });
    }
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for (idx, cell) in cells(spec)?.into_iter().enumerate() {
        let seed = cell_seed(spec.base_seed, idx);
        let outcomes: Vec<Result<Vec<Draw>>> = (0..spec.replications)
            .into_par_iter()
            .map(|rep| {
                let rep_seed = derive_seed(seed, rep as u64);
                let mut rng = rng_from_seed(rep_seed);
                let cfg = ClusteringConfig::with_seed(derive_seed(rep_seed, 1));
                (cell.run)(&mut rng, &cfg)
            })
            .collect();
        let mut per_variant: Vec<(String, Vec<(usize, Draw)>)> = Vec::new();
        let mut failed = 0;
        for (rep, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok(draws) => {
                    for d in draws {
                        match per_variant.iter_mut().find(|(v, _)| *v == d.variant) {
                            Some((_, list)) => list.push((rep, d)),
                            None => per_variant.push((d.variant.clone(), vec![(rep, d)])),
                        }
                    }
                }
                Err(e) => {
                    log::warn!("{} cell {idx} replication {rep} failed: {e}", spec.id);
                    failed += 1;
                }
            }
        }
        for (variant, list) in per_variant {
            let m = list.len();
            let stats: Vec<f64> = list.iter().map(|(_, d)| d.statistic).collect();
            let rate = list.iter().filter(|(_, d)| d.reject).count() as f64 / m as f64;
            let row = rows.len();
            samples.extend(list.iter().map(|(rep, d)| SampleRow {
                row,
                replication: *rep,
                statistic: d.statistic,
            }));
            rows.push(ResultRow {
                experiment_id: spec.id.name().to_string(),
                k: cell.k,
                k0: cell.k0,
                n: cell.n,
                r: cell.r,
                z: cell.z,
                variant,
                rejection_rate: rate,
                stderr: (rate * (1.0 - rate) / m as f64).sqrt(),
                ks_stat: (m >= 2).then(|| ks_distance_to_gumbel(&stats)),
                clamp_total: list.iter().map(|(_, d)| d.clamp_events).sum(),
                seed,
                mean_statistic: stats.iter().sum::<f64>() / m as f64,
                replications: spec.replications,
                failed,
            });
        }
    }
    Ok(ExperimentResult {
        id: spec.id,
        rows,
        samples,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

pub const TRADE_FILE: &str = "trade_weights.txt";
pub const POLBLOGS_EDGES_FILE: &str = "polblogs_edges.txt";
pub const POLBLOGS_STANCES_FILE: &str = "polblogs_stances.txt";

fn open_dataset(dir: Option<&Path>, name: &str) -> Result<BufReader<File>> {
    let dir = dir.ok_or_else(|| Error::config("real-data experiments need a data directory"))?;
    let path = dir.join(name);
    File::open(&path).map(BufReader::new).map_err(|e| {
        Error::file(
            &path,
            std::io::Error::new(
                e.kind(),
                format!("{e}; see the \"Datasets\" section of README.md for how to obtain and convert this file"),
            ),
        )
    })
}

/// Weighted trade network → undirected graph keeping pairs whose summed
/// weight reaches the `percentile` quantile.
pub fn trade_graph(dir: &Path, percentile: f64) -> Result<Graph> {
    let w = load_weighted_edge_list(open_dataset(Some(dir), TRADE_FILE)?, None)?;
    symmetrize_and_threshold(&w, percentile)
}

/// Largest connected component of the blog network, with stance labels
/// restricted to it.
pub fn polblogs_graph(dir: &Path) -> Result<(Graph, Membership)> {
    let loaded = load_edge_list(open_dataset(Some(dir), POLBLOGS_EDGES_FILE)?, None)?;
    let stances = read_membership(open_dataset(Some(dir), POLBLOGS_STANCES_FILE)?)?;
    let g = loaded.graph;
    if stances.n() != g.n() {
        return Err(Error::domain(format!(
            "{} stance labels for a {}-node graph",
            stances.n(),
            g.n()
        )));
    }
    let (lcc, map) = largest_connected_component(&g);
    let mut labels = vec![0; lcc.n()];
    for (old, new) in map.iter().enumerate() {
        if let Some(new) = new {
            labels[*new] = stances.label(old);
        }
    }
    Ok((lcc, Membership::canonical(&labels)?))
}

fn data_row(
    id: ExperimentId,
    report: &TestReport,
    variant: &str,
    statistic: f64,
    reject: bool,
    seed: u64,
) -> ResultRow {
    ResultRow {
        experiment_id: id.name().to_string(),
        k: None,
        k0: Some(report.k0),
        n: report.n,
        r: None,
        z: None,
        variant: variant.to_string(),
        rejection_rate: if reject { 1.0 } else { 0.0 },
        stderr: 0.0,
        ks_stat: None,
        clamp_total: report.clamp_events,
        seed,
        mean_statistic: statistic,
        replications: 1,
        failed: 0,
    }
}

fn report_rows(id: ExperimentId, report: &TestReport, suffix: &str, seed: u64) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    if let Some(d) = companion_draw(report) {
        rows.push(data_row(
            id,
            report,
            &format!("{}{suffix}", d.variant),
            d.statistic,
            d.reject,
            seed,
        ));
    }
    let name = format!("{}{suffix}", report.variant.name());
    rows.push(data_row(
        id,
        report,
        &name,
        report.statistic,
        report.reject,
        seed,
    ));
    rows
}

fn run_data(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    let dir = spec.data_dir.as_deref();
    let mut rows = Vec::new();
    match spec.id {
        ExperimentId::DataTrade => {
            let percentile = spec.single("percentile", 0.5)?;
            let g = trade_graph(
                dir.ok_or_else(|| Error::config("data-trade needs a data directory"))?,
                percentile,
            )?;
            for k0 in spec.counts("k0", &[3, 7, 10])? {
                let seed = derive_seed(spec.base_seed, k0 as u64);
                let report = test_num_communities(
                    &g,
                    k0,
                    spec.alpha,
                    ModelKind::Sbm,
                    &ClusteringConfig::with_seed(seed),
                )?;
                rows.extend(report_rows(spec.id, &report, "", seed));
            }
        }
        ExperimentId::DataPolblogs => {
            let (g, stances) = polblogs_graph(
                dir.ok_or_else(|| Error::config("data-polblogs needs a data directory"))?,
            )?;
            for k0 in spec.counts("k0", &[2])? {
                let seed = derive_seed(spec.base_seed, k0 as u64);
                let report = test_num_communities(
                    &g,
                    k0,
                    spec.alpha,
                    ModelKind::Dcsbm,
                    &ClusteringConfig::with_seed(seed),
                )?;
                rows.extend(report_rows(spec.id, &report, "", seed));
            }
            let report = test_membership(&g, &stances, spec.alpha, ModelKind::Dcsbm)?;
            rows.extend(report_rows(spec.id, &report, "-membership", spec.base_seed));
        }
        _ => unreachable!(),
    }
    Ok(rows)
}

fn opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const CSV_HEADER: &str =
    "experiment_id,k,k0,n,r,z,variant,rejection_rate,stderr,ks_stat,clamp_total,seed,mean_statistic,replications,failed";

pub fn write_rows_csv<W: Write>(rows: &[ResultRow], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{:.4},{:.4},{},{},{},{:.4},{},{}",
            row.experiment_id,
            opt(row.k),
            opt(row.k0),
            row.n,
            opt(row.r),
            opt(row.z),
            row.variant,
            row.rejection_rate,
            row.stderr,
            row.ks_stat.map(|d| format!("{d:.4}")).unwrap_or_default(),
            row.clamp_total,
            row.seed,
            row.mean_statistic,
            row.replications,
            row.failed
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_samples_csv<W: Write>(result: &ExperimentResult, mut out: W) -> Result<()> {
    writeln!(
        out,
        "experiment_id,k,k0,n,r,z,variant,replication,statistic"
    )?;
    for s in &result.samples {
        let row = &result.rows[s.row];
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            row.experiment_id,
            opt(row.k),
            opt(row.k0),
            row.n,
            opt(row.r),
            opt(row.z),
            row.variant,
            s.replication,
            s.statistic
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `<id>.csv` and, for simulations, `<id>.samples.csv` under `dir`.
pub fn write_results(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let table = dir.join(format!("{}.csv", result.id));
    let file = File::create(&table).map_err(|e| Error::file(&table, e))?;
    write_rows_csv(&result.rows, BufWriter::new(file))?;
    let mut paths = vec![table];
    if !result.samples.is_empty() {
        let path = dir.join(format!("{}.samples.csv", result.id));
        let file = File::create(&path).map_err(|e| Error::file(&path, e))?;
        write_samples_csv(result, BufWriter::new(file))?;
        paths.push(path);
    }
    Ok(paths)
}
