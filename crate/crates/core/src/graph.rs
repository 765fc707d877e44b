//! Undirected simple graphs, weighted digraphs and the edge-list text format.
//!
//! The edge-list format is one pair of integer node ids per line, separated by
//! whitespace, with an optional third column that is ignored for unweighted
//! graphs. Lines starting with `#` or `%` are comments. Two comment directives
//! are understood: `# nodes: N` fixes the node count and `# index-base: 0|1`
//! fixes the id base; without the latter the base is detected from the
//! smallest id in the file (0 means 0-based, anything else 1-based).

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Symmetric 0/1 adjacency structure with an empty diagonal.
///
/// Stored as sorted neighbour lists; every edge appears in both endpoint rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<u32>>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Graph {
            adj: vec![Vec::new(); n],
        }
    }

    /// Builds a graph from undirected pairs. Duplicates and reversed
    /// duplicates collapse; self-loops and out-of-range ids are errors.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut adj = vec![Vec::new(); n];
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::domain(format!(
                    "edge ({i}, {j}) out of bounds for {n} nodes"
                )));
            }
            if i == j {
                return Err(Error::domain(format!("self-loop at node {i}")));
            }
            adj[i].push(j as u32);
            adj[j].push(i as u32);
        }
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
        }
        Ok(Graph { adj })
    }

    /// Dense 0/1 matrix view, row-major. Intended for small graphs and tests.
    pub fn from_dense(n: usize, entries: &[u8]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::domain(format!(
                "dense adjacency has {} entries, expected {}",
                entries.len(),
                n * n
            )));
        }
        let mut edges = Vec::new();
        for i in 0..n {
            if entries[i * n + i] != 0 {
                return Err(Error::domain(format!("non-zero diagonal at node {i}")));
            }
            for j in (i + 1)..n {
                let (a, b) = (entries[i * n + j], entries[j * n + i]);
                if a != b {
                    return Err(Error::domain(format!("asymmetric entry at ({i}, {j})")));
                }
                match a {
                    0 => {}
                    1 => edges.push((i, j)),
                    x => return Err(Error::domain(format!("entry {x} at ({i}, {j}) is not 0/1"))),
                }
            }
        }
        Graph::from_edges(n, edges)
    }

    /// Rows must already be sorted, deduplicated, symmetric and loop-free.
    pub(crate) fn from_sorted_rows(adj: Vec<Vec<u32>>) -> Self {
        debug_assert!(adj
            .iter()
            .enumerate()
            .all(|(i, r)| r.windows(2).all(|w| w[0] < w[1]) && !r.contains(&(i as u32))));
        Graph { adj }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i].binary_search(&(j as u32)).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .map(|&j| j as usize)
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
    }

    /// Row-major dense 0/1 matrix.
    pub fn to_dense(&self) -> Vec<u8> {
        let n = self.n();
        let mut out = vec![0u8; n * n];
        for (i, row) in self.adj.iter().enumerate() {
            for &j in row {
                out[i * n + j as usize] = 1;
            }
        }
        out
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (yi, row) in y.iter_mut().zip(&self.adj) {
            *yi = row.iter().map(|&j| x[j as usize]).sum();
        }
    }

    /// Subgraph induced by `nodes`, relabelled in the given order.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Graph {
        let mut map = vec![u32::MAX; self.n()];
        for (new, &old) in nodes.iter().enumerate() {
            map[old] = new as u32;
        }
        let adj = nodes
            .iter()
            .map(|&old| {
                let mut row: Vec<u32> = self.adj[old]
                    .iter()
                    .map(|&j| map[j as usize])
                    .filter(|&j| j != u32::MAX)
                    .collect();
                row.sort_unstable();
                row
            })
            .collect();
        Graph { adj }
    }

    /// Connected components, each sorted ascending, ordered by smallest member.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut components = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            queue.push_back(start);
            let mut comp = Vec::new();
            while let Some(v) = queue.pop_front() {
                comp.push(v);
                for &w in &self.adj[v] {
                    let w = w as usize;
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
            comp.sort_unstable();
            components.push(comp);
        }
        components
    }
}

/// Directed graph with non-negative finite weights and a zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedDigraph {
    n: usize,
    weights: Vec<f64>,
}

impl WeightedDigraph {
    /// `weights` is row-major `n × n`; `weights[i * n + j]` is the weight of `i → j`.
    pub fn new(n: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n * n {
            return Err(Error::domain(format!(
                "weight matrix has {} entries, expected {}",
                weights.len(),
                n * n
            )));
        }
        for i in 0..n {
            if weights[i * n + i] != 0.0 {
                return Err(Error::domain(format!("non-zero self weight at node {i}")));
            }
        }
        if let Some(pos) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::domain(format!(
                "weight at ({}, {}) is negative or not finite",
                pos / n,
                pos % n
            )));
        }
        Ok(WeightedDigraph { n, weights })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                weights[j * n + i] = self.weights[i * n + j];
            }
        }
        WeightedDigraph { n, weights }
    }
}

/// Result of parsing an edge list.
#[derive(Clone, Debug)]
pub struct LoadedGraph {
    pub graph: Graph,
    pub self_loops_dropped: usize,
    pub duplicate_lines: usize,
}

struct RawPairs {
    pairs: Vec<(usize, usize, Option<f64>, usize)>,
    declared_nodes: Option<usize>,
    declared_base: Option<usize>,
}

fn parse_directive(body: &str) -> Option<(&str, &str)> {
    let (key, value) = body.split_once(':')?;
    Some((key.trim(), value.trim()))
}

fn read_pairs<R: BufRead>(reader: R, weighted: bool) -> Result<RawPairs> {
    let mut out = RawPairs {
        pairs: Vec::new(),
        declared_nodes: None,
        declared_base: None,
    };
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(body) = trimmed
            .strip_prefix('#')
            .or_else(|| trimmed.strip_prefix('%'))
        {
            match parse_directive(body) {
                Some(("nodes", v)) => {
                    out.declared_nodes = Some(v.parse().map_err(|_| Error::Parse {
                        line: line_no,
                        message: format!("bad node count directive {v:?}"),
                    })?)
                }
                Some(("index-base", v)) => match v {
                    "0" => out.declared_base = Some(0),
                    "1" => out.declared_base = Some(1),
                    _ => {
                        return Err(Error::Parse {
                            line: line_no,
                            message: format!("index-base must be 0 or 1, got {v:?}"),
                        })
                    }
                },
                _ => {}
            }
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let mut id = |name: &str| -> Result<usize> {
            let tok = tokens.next().ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("missing {name} node id"),
            })?;
            tok.parse::<usize>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("{name} node id {tok:?} is not a non-negative integer"),
            })
        };
        let i = id("first")?;
        let j = id("second")?;
        let w = if weighted {
            let tok = tokens.next().ok_or_else(|| Error::Parse {
                line: line_no,
                message: "missing weight".into(),
            })?;
            Some(tok.parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("weight {tok:?} is not a number"),
            })?)
        } else {
            None
        };
        out.pairs.push((i, j, w, line_no));
    }
    Ok(out)
}

/// Resolves base and node count, returning 0-based pairs.
fn normalise_ids(
    raw: &RawPairs,
    n_hint: Option<usize>,
) -> Result<(usize, Vec<(usize, usize, Option<f64>)>)> {
    let base = raw.declared_base.unwrap_or_else(|| {
        match raw.pairs.iter().map(|&(i, j, _, _)| i.min(j)).min() {
            Some(0) | None => 0,
            Some(_) => 1,
        }
    });
    let declared = n_hint.or(raw.declared_nodes);
    let mut max_id = None;
    let mut pairs = Vec::with_capacity(raw.pairs.len());
    for &(i, j, w, line) in &raw.pairs {
        let shift = |id: usize| -> Result<usize> {
            let z = id
                .checked_sub(base)
                .ok_or(Error::Bounds { line, id, n: 0 })?;
            if let Some(n) = declared {
                if z >= n {
                    return Err(Error::Bounds { line, id, n });
                }
            }
            Ok(z)
        };
        let (a, b) = (shift(i)?, shift(j)?);
        max_id = Some(max_id.unwrap_or(0).max(a).max(b));
        pairs.push((a, b, w));
    }
    let n = declared.unwrap_or_else(|| max_id.map_or(0, |m| m + 1));
    Ok((n, pairs))
}

/// Parses an undirected edge list.
///
/// Duplicate and reversed lines collapse to one edge; self-loops are dropped
/// and counted. A third column, if present, is ignored.
pub fn load_edge_list<R: BufRead>(reader: R, n_hint: Option<usize>) -> Result<LoadedGraph> {
    let raw = read_pairs(reader, false)?;
    let (n, pairs) = normalise_ids(&raw, n_hint)?;
    let mut self_loops = 0;
    let mut edges = Vec::with_capacity(pairs.len());
    for (i, j, _) in pairs {
        if i == j {
            self_loops += 1;
        } else {
            edges.push((i.min(j), i.max(j)));
        }
    }
    if self_loops > 0 {
        log::warn!("dropped {self_loops} self-loop line(s) from edge list");
    }
    let listed = edges.len();
    let graph = Graph::from_edges(n, edges)?;
    Ok(LoadedGraph {
        self_loops_dropped: self_loops,
        duplicate_lines: listed - graph.edge_count(),
        graph,
    })
}

/// Writes the canonical form: directives, then `i j` with `i < j`, sorted.
pub fn write_edge_list<W: Write>(g: &Graph, mut out: W) -> Result<()> {
    writeln!(out, "# nodes: {}", g.n())?;
    writeln!(out, "# index-base: 0")?;
    for (i, j) in g.edges() {
        writeln!(out, "{i} {j}")?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a directed `i j weight` list. Repeated `(i, j)` lines accumulate;
/// self-loops are dropped.
pub fn load_weighted_edge_list<R: BufRead>(
    reader: R,
    n_hint: Option<usize>,
) -> Result<WeightedDigraph> {
    let raw = read_pairs(reader, true)?;
    let (n, pairs) = normalise_ids(&raw, n_hint)?;
    let mut weights = vec![0.0; n * n];
    let mut self_loops = 0;
    for (i, j, w) in pairs {
        if i == j {
            self_loops += 1;
            continue;
        }
        weights[i * n + j] += w.unwrap_or(0.0);
    }
    if self_loops > 0 {
        log::warn!("dropped {self_loops} self-loop line(s) from weighted edge list");
    }
    WeightedDigraph::new(n, weights)
}

/// Largest connected component and the old→new index map.
///
/// Equal-size components are resolved in favour of the one containing the
/// smallest original node id.
pub fn largest_connected_component(g: &Graph) -> (Graph, Vec<Option<usize>>) {
    let components = g.connected_components();
    // components are ordered by smallest member, so the first maximum wins ties
    let best = components
        .iter()
        .enumerate()
        .fold(None::<(usize, usize)>, |acc, (idx, c)| match acc {
            Some((_, len)) if len >= c.len() => acc,
            _ => Some((idx, c.len())),
        })
        .map(|(idx, _)| idx);
    let nodes: &[usize] = best.map_or(&[], |idx| &components[idx]);
    let mut map = vec![None; g.n()];
    for (new, &old) in nodes.iter().enumerate() {
        map[old] = Some(new);
    }
    (g.induced_subgraph(nodes), map)
}

/// Lower empirical quantile: the smallest value whose empirical CDF is at least `p`.
pub fn lower_quantile(sorted: &[f64], p: f64) -> f64 {
    let m = sorted.len();
    let rank = ((p * m as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(m) - 1]
}

/// Symmetrises `w` by `W_ij = w_ij + w_ji` and keeps the pairs whose summed
/// weight is at least the `percentile` lower quantile of all `i < j` sums.
/// Ties at the threshold become edges.
pub fn symmetrize_and_threshold(w: &WeightedDigraph, percentile: f64) -> Result<Graph> {
    if !(percentile > 0.0 && percentile < 1.0) {
        return Err(Error::domain(format!(
            "percentile must lie in (0, 1), got {percentile}"
        )));
    }
    let n = w.n();
    if n < 2 {
        return Err(Error::domain("thresholding needs at least two nodes"));
    }
    let sums: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, w.weight(i, j) + w.weight(j, i)))
        .collect();
    let mut sorted: Vec<f64> = sums.iter().map(|s| s.2).collect();
    sorted.sort_by(f64::total_cmp);
    let threshold = lower_quantile(&sorted, percentile);
    Graph::from_edges(
        n,
        sums.into_iter()
            .filter(|&(_, _, s)| s >= threshold)
            .map(|(i, j, _)| (i, j)),
    )
}
