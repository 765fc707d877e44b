use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use blockmodel_gof::graph::{
    largest_connected_component, load_edge_list, load_weighted_edge_list, symmetrize_and_threshold,
    write_edge_list,
};
use blockmodel_gof::harness::{
    run_experiment, write_results, write_rows_csv, ExperimentId, ExperimentSpec,
};
use blockmodel_gof::model::{
    read_membership, rng_from_seed, sample_dcsbm, sample_degree_params_sim4,
    sample_membership_balanced, sample_membership_multinomial, sample_sbm, write_block_matrix,
    write_membership, BlockMatrix, DegreeParams, Membership,
};
use blockmodel_gof::power::assess_alternative;
use blockmodel_gof::{
    score, spectral_clustering, test_membership, test_membership_known_omega, test_num_communities,
    ClusteringConfig, Graph, ModelKind,
};
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};

#[derive(Parser, Debug)]
#[command(
    name = "blockmodel-gof",
    version,
    about = "Goodness-of-fit tests for stochastic block models"
)]
struct Cli {
    /// Seed for every random choice (sampling, eigen start vectors, k-means).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file (test, assess, detect, ingest) or directory (generate, simulate).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Encoding of record payloads.
    #[arg(long, global = true, value_enum, default_value_t = Format::Kv)]
    format: Format,
    /// Significance level.
    #[arg(long, global = true, default_value_t = 0.05)]
    alpha: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    JsonLines,
    Kv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Model {
    Sbm,
    Dcsbm,
}

impl From<Model> for ModelKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Sbm => ModelKind::Sbm,
            Model::Dcsbm => ModelKind::Dcsbm,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    K,
    Membership,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum LabelScheme {
    Uniform,
    Balanced,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Spectral,
    Score,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a graph; writes edges.txt, membership.txt, B.csv (and omega.txt).
    Generate {
        #[arg(long, value_enum, default_value_t = Model::Sbm)]
        model: Model,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        /// "a(1+b*diag)" or a CSV file of k rows.
        #[arg(long = "B", alias = "b")]
        b: String,
        /// "sim4-mixture", "ones" or a file with one multiplier per line.
        #[arg(long, default_value = "sim4-mixture")]
        omega: String,
        #[arg(long, value_enum, default_value_t = LabelScheme::Uniform)]
        labels: LabelScheme,
    },
    /// Estimate a membership; writes one 1-based label per line.
    Detect {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value_t = Method::Spectral)]
        method: Method,
    },
    /// Run a goodness-of-fit test and print its report.
    Test {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::K)]
        mode: Mode,
        /// Required with --mode k.
        #[arg(long)]
        k0: Option<usize>,
        /// Required with --mode membership.
        #[arg(long)]
        sigma0: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Model::Sbm)]
        model: Model,
        /// Known degree multipliers (membership mode, dcsbm model).
        #[arg(long)]
        omega: Option<PathBuf>,
    },
    /// Separation of a true model from a hypothesised membership.
    Assess {
        /// True membership file.
        #[arg(long)]
        sigma: PathBuf,
        #[arg(long)]
        sigma0: PathBuf,
        #[arg(long = "B", alias = "b")]
        b: String,
        #[arg(long, default_value_t = 1.1)]
        gamma: f64,
    },
    /// Run a simulation experiment; writes <id>.csv and <id>.samples.csv.
    Simulate {
        #[arg(long)]
        experiment: String,
        #[arg(long, default_value_t = 200)]
        replications: usize,
        /// Override a parameter list, e.g. --set k=2,4 (repeatable).
        #[arg(long = "set", value_name = "KEY=V1,V2")]
        overrides: Vec<String>,
        /// Directory with the real-data files.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Convert raw data to a canonical edge list.
    Ingest {
        /// Directed "i j weight" list to symmetrise and threshold.
        #[arg(long, conflicts_with = "edges", required_unless_present = "edges")]
        weighted: Option<PathBuf>,
        #[arg(long, requires = "weighted", default_value_t = 0.5)]
        percentile: f64,
        /// Undirected edge list.
        #[arg(long)]
        edges: Option<PathBuf>,
        /// Keep only the largest connected component.
        #[arg(long)]
        lcc: bool,
    },
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| {
        format!("cannot open {}", path.display())
    })?))
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn out_dir(out: Option<&Path>) -> Result<PathBuf> {
    let dir = out.map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

/// Parses "a(1+b*diag)" or reads a CSV file.
fn block_matrix(spec: &str, k: Option<usize>) -> Result<BlockMatrix> {
    let compact: String = spec.chars().filter(|c| !c.is_whitespace()).collect();
    if let Some(body) = compact.strip_suffix("*diag)") {
        if let Some((a, b)) = body.split_once("(1+") {
            let (Ok(a), Ok(b)) = (a.parse::<f64>(), b.parse::<f64>()) else {
                bail!("configuration error: cannot read numbers in B-spec {spec:?}");
            };
            let Some(k) = k else {
                bail!("configuration error: B-spec {spec:?} needs --k");
            };
            return Ok(BlockMatrix::assortative(k, a, b)?);
        }
    }
    let path = Path::new(spec);
    if !path.is_file() {
        bail!("configuration error: B-spec {spec:?} is neither \"a(1+b*diag)\" nor an existing CSV file");
    }
    let b = blockmodel_gof::model::read_block_matrix(open(path)?)?;
    if let Some(k) = k {
        if b.k() != k {
            bail!(
                "configuration error: {} holds a {}x{} matrix but k = {k}",
                path.display(),
                b.k(),
                b.k()
            );
        }
    }
    Ok(b)
}

fn read_omega(path: &Path) -> Result<DegreeParams> {
    let mut values = Vec::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        values.push(
            t.parse::<f64>().with_context(|| {
                format!("{}:{}: {t:?} is not a number", path.display(), idx + 1)
            })?,
        );
    }
    Ok(DegreeParams::new(values)?)
}

fn read_sigma(path: &Path) -> Result<Membership> {
    read_membership(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn read_graph(path: &Path, n: Option<usize>) -> Result<Graph> {
    let loaded =
        load_edge_list(open(path)?, n).with_context(|| format!("reading {}", path.display()))?;
    Ok(loaded.graph)
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Writes records in the chosen encoding. All records share the keys of the first.
fn emit(records: &[Map<String, Value>], format: Format, out: &mut dyn Write) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut *out);
            if let Some(first) = records.first() {
                w.write_record(first.keys())?;
            }
            for r in records {
                w.write_record(r.values().map(cell))?;
            }
            w.flush()?;
        }
        Format::JsonLines => {
            for r in records {
                serde_json::to_writer(&mut *out, r)?;
                writeln!(out)?;
            }
        }
        Format::Kv => {
            for (idx, r) in records.iter().enumerate() {
                if idx > 0 {
                    writeln!(out)?;
                }
                for (key, v) in r {
                    writeln!(out, "{key}: {}", cell(v))?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn record<T: serde::Serialize>(value: &T) -> Result<Map<String, Value>> {
    match serde_json::to_value(value)? {
        Value::Object(m) => Ok(m),
        _ => unreachable!("reports serialise to objects"),
    }
}

/// Re-reads harness CSV so stdout carries the same values as the file.
fn csv_records(text: &[u8]) -> Result<Vec<Map<String, Value>>> {
    let mut rdr = csv::Reader::from_reader(text);
    let header = rdr.headers()?.clone();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let map = header
            .iter()
            .zip(rec.iter())
            .map(|(key, raw)| {
                let value = if raw.is_empty() {
                    Value::Null
                } else if let Ok(i) = raw.parse::<i64>() {
                    Value::from(i)
                } else if let Ok(u) = raw.parse::<u64>() {
                    Value::from(u)
                } else if let Some(x) = raw.parse::<f64>().ok().filter(|x| x.is_finite()) {
                    Value::from(x)
                } else {
                    Value::String(raw.to_string())
                };
                (key.to_string(), value)
            })
            .collect();
        out.push(map);
    }
    Ok(out)
}

fn parse_override(s: &str) -> Result<(String, Vec<f64>)> {
    let Some((key, values)) = s.split_once('=') else {
        bail!("configuration error: --set expects KEY=V1,V2, got {s:?}");
    };
    let values = values
        .split(',')
        .map(|v| {
            v.trim().parse::<f64>().with_context(|| {
                format!("configuration error: {v:?} in --set {key} is not a number")
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((key.trim().to_string(), values))
}

fn run(cli: Cli) -> Result<()> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Generate {
            model,
            n,
            k,
            b,
            omega,
            labels,
        } => {
            let b = block_matrix(&b, Some(k))?;
            let omega = match (model, omega.as_str()) {
                (Model::Sbm, _) => None,
                (Model::Dcsbm, "sim4-mixture") => Some(None),
                (Model::Dcsbm, "ones") => Some(Some(DegreeParams::ones(n))),
                (Model::Dcsbm, path) => Some(Some(read_omega(Path::new(path))?)),
            };
            let mut rng = rng_from_seed(cli.seed);
            let sigma = match labels {
                LabelScheme::Uniform => {
                    sample_membership_multinomial(n, &vec![1.0 / k as f64; k], &mut rng)?
                }
                LabelScheme::Balanced => sample_membership_balanced(n, k, &mut rng)?,
            };
            let dir = out_dir(out)?;
            let (g, omega) = match omega {
                None => (sample_sbm(&sigma, &b, &mut rng)?, None),
                Some(given) => {
                    let omega = match given {
                        Some(w) => w,
                        None => sample_degree_params_sim4(n, &mut rng),
                    };
                    if omega.len() != n {
                        bail!(
                            "configuration error: {} multipliers for n = {n}",
                            omega.len()
                        );
                    }
                    (sample_dcsbm(&sigma, &b, &omega, &mut rng)?, Some(omega))
                }
            };
            write_edge_list(&g, BufWriter::new(File::create(dir.join("edges.txt"))?))?;
            write_membership(
                &sigma,
                BufWriter::new(File::create(dir.join("membership.txt"))?),
            )?;
            write_block_matrix(&b, BufWriter::new(File::create(dir.join("B.csv"))?))?;
            if let Some(omega) = omega {
                let mut w = BufWriter::new(File::create(dir.join("omega.txt"))?);
                for x in omega.as_slice() {
                    writeln!(w, "{x}")?;
                }
                w.flush()?;
            }
        }
        Command::Detect { graph, k, method } => {
            let g = read_graph(&graph, None)?;
            let cfg = ClusteringConfig::with_seed(cli.seed);
            let sigma = match method {
                Method::Spectral => spectral_clustering(&g, k, &cfg)?,
                Method::Score => score(&g, k, &cfg)?,
            };
            write_membership(&sigma, sink(out)?)?;
        }
        Command::Test {
            graph,
            mode,
            k0,
            sigma0,
            model,
            omega,
        } => {
            if omega.is_some() && (mode != Mode::Membership || model != Model::Dcsbm) {
                bail!(
                    "configuration error: --omega applies to --mode membership --model dcsbm only"
                );
            }
            let report = match mode {
                Mode::K => {
                    let g = read_graph(&graph, None)?;
                    let k0 = k0.expect("checked in check_usage");
                    test_num_communities(
                        &g,
                        k0,
                        cli.alpha,
                        model.into(),
                        &ClusteringConfig::with_seed(cli.seed),
                    )?
                }
                Mode::Membership => {
                    let sigma0 = read_sigma(&sigma0.expect("checked in check_usage"))?;
                    let g = read_graph(&graph, Some(sigma0.n()))?;
                    match omega {
                        Some(path) => test_membership_known_omega(
                            &g,
                            &sigma0,
                            &read_omega(&path)?,
                            cli.alpha,
                        )?,
                        None => test_membership(&g, &sigma0, cli.alpha, model.into())?,
                    }
                }
            };
            emit(&[record(&report)?], cli.format, &mut *sink(out)?)?;
        }
        Command::Assess {
            sigma,
            sigma0,
            b,
            gamma,
        } => {
            let sigma = read_sigma(&sigma)?;
            let sigma0 = read_sigma(&sigma0)?;
            let b = block_matrix(&b, Some(sigma.k()))?;
            let a = assess_alternative(&sigma, &b, &sigma0, gamma)?;
            emit(&[record(&a)?], cli.format, &mut *sink(out)?)?;
        }
        Command::Simulate {
            experiment,
            replications,
            overrides,
            data_dir,
        } => {
            let id: ExperimentId = experiment.parse()?;
            let mut spec = ExperimentSpec::new(id);
            spec.replications = replications;
            spec.base_seed = cli.seed;
            spec.alpha = cli.alpha;
            spec.data_dir = data_dir;
            for s in &overrides {
                let (key, values) = parse_override(s)?;
                spec = spec.with_override(&key, &values);
            }
            spec.validate()?;
            let dir = out_dir(out)?;
            let result = run_experiment(&spec)?;
            write_results(&result, &dir)?;
            let mut text = Vec::new();
            write_rows_csv(&result.rows, &mut text)?;
            emit(&csv_records(&text)?, cli.format, &mut *sink(None)?)?;
        }
        Command::Ingest {
            weighted,
            percentile,
            edges,
            lcc,
        } => {
            let g = match (weighted, edges) {
                (Some(path), _) => {
                    if !(percentile > 0.0 && percentile < 1.0) {
                        bail!("configuration error: --percentile must lie in (0, 1), got {percentile}");
                    }
                    let w = load_weighted_edge_list(open(&path)?, None)
                        .with_context(|| format!("reading {}", path.display()))?;
                    symmetrize_and_threshold(&w, percentile)?
                }
                (None, Some(path)) => read_graph(&path, None)?,
                (None, None) => unreachable!("clap requires one input"),
            };
            let g = if lcc {
                largest_connected_component(&g).0
            } else {
                g
            };
            write_edge_list(&g, sink(out)?)?;
        }
    }
    Ok(())
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("BLOCKMODEL_GOF_THREADS") {
        let threads: usize = v.parse().ok().filter(|&t| t > 0).with_context(|| {
            format!("configuration error: BLOCKMODEL_GOF_THREADS={v:?} is not a positive integer")
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()?;
    }
    Ok(())
}

/// Flag combinations clap cannot express; reported as usage errors.
fn check_usage(cli: &Cli) {
    let missing = match &cli.command {
        Command::Test {
            mode: Mode::K,
            k0: None,
            ..
        } => Some("--mode k requires --k0"),
        Command::Test {
            mode: Mode::Membership,
            sigma0: None,
            ..
        } => Some("--mode membership requires --sigma0"),
        _ => None,
    };
    if let Some(msg) = missing {
        Cli::command()
            .error(ErrorKind::MissingRequiredArgument, msg)
            .exit();
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    check_usage(&cli);
    match init_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
