//! Network topologies and averaging matrices: symmetric, doubly stochastic
//! mixing weights whose sparsity pattern matches the graph, plus the derived
//! row-stochastic weights used by the step-size analysis checks.

use crate::{Error, Matrix, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::collections::VecDeque;
use std::io::BufRead;
use std::path::Path;

/// Undirected connected graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Topology {
    Ring,
    Path,
    Star,
    Complete,
    RandomConnected { p: f64, seed: u64 },
}

impl Graph {
    /// Builds a graph from an undirected edge list. Rejects self-loops,
    /// duplicate edges, out-of-range endpoints, and disconnected graphs.
    pub fn from_edges(n: usize, raw_edges: &[(usize, usize)]) -> Result<Self> {
        if n < 2 {
            return Err(Error::Graph(format!("need at least 2 nodes, got {n}")));
        }
        let mut seen = std::collections::HashSet::new();
        let mut edges = Vec::new();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in raw_edges {
            if a >= n || b >= n {
                return Err(Error::Graph(format!("edge ({a}, {b}) out of range for n={n}")));
            }
            if a == b {
                return Err(Error::Graph(format!("self-loop at node {a}")));
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                continue; // duplicate edge, keep the first
            }
            edges.push(key);
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        let g = Graph { n, edges, adjacency };
        if !g.is_connected() {
            return Err(Error::Graph("graph is not connected".into()));
        }
        Ok(g)
    }

    /// Degenerate single-node graph (no edges, trivially connected); the
    /// associated averaging matrix is `[1]`.
    pub fn singleton() -> Self {
        Graph { n: 1, edges: Vec::new(), adjacency: vec![Vec::new()] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n
    }

    /// Reads one `i j` pair per line, 0-based. Blank lines and `#` comments
    /// are skipped; node count is `max index + 1`.
    pub fn from_edge_list_file(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::parse_edge_list(std::io::BufReader::new(file))
    }

    pub fn parse_edge_list(reader: impl BufRead) -> Result<Self> {
        let mut edges = Vec::new();
        let mut max_node = 0usize;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut parts = trimmed.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize> {
                tok.ok_or_else(|| Error::Parse {
                    line: lineno + 1,
                    msg: "expected two node indices".into(),
                })?
                .parse()
                .map_err(|e| Error::Parse { line: lineno + 1, msg: format!("bad index: {e}") })
            };
            let a = parse(parts.next())?;
            let b = parse(parts.next())?;
            max_node = max_node.max(a).max(b);
            edges.push((a, b));
        }
        if edges.is_empty() {
            return Err(Error::Graph("edge list is empty".into()));
        }
        Self::from_edges(max_node + 1, &edges)
    }
}

/// Builds one of the standard topologies. Random graphs are resampled until
/// connected (up to a retry cap).
pub fn build_topology(kind: Topology, n: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::Graph(format!("need at least 2 nodes, got {n}")));
    }
    match kind {
        Topology::Ring => {
            let mut edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
            if n > 2 {
                edges.push((n - 1, 0));
            }
            Graph::from_edges(n, &edges)
        }
        Topology::Path => {
            let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
            Graph::from_edges(n, &edges)
        }
        Topology::Star => {
            let edges: Vec<(usize, usize)> = (1..n).map(|i| (0, i)).collect();
            Graph::from_edges(n, &edges)
        }
        Topology::Complete => {
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    edges.push((i, j));
                }
            }
            Graph::from_edges(n, &edges)
        }
        Topology::RandomConnected { p, seed } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Graph(format!("edge probability {p} outside [0, 1]")));
            }
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            const RETRIES: usize = 1000;
            for _ in 0..RETRIES {
                let mut edges = Vec::new();
                for i in 0..n {
                    for j in i + 1..n {
                        if rng.gen_bool(p) {
                            edges.push((i, j));
                        }
                    }
                }
                if edges.is_empty() {
                    continue;
                }
                if let Ok(g) = Graph::from_edges(n, &edges) {
                    return Ok(g);
                }
            }
            Err(Error::Graph(format!(
                "no connected graph found in {RETRIES} draws (n={n}, p={p})"
            )))
        }
    }
}

/// Symmetric doubly stochastic mixing weights with the graph's sparsity
/// pattern and positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragingMatrix {
    w: Matrix,
}

impl AveragingMatrix {
    /// Validates an externally supplied matrix against the graph.
    pub fn new(w: Matrix, graph: &Graph) -> Result<Self> {
        validate_averaging(&w, graph)?;
        Ok(AveragingMatrix { w })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.w
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.w[(i, i)]
    }

    /// Row `i` restricted to the neighbor list order of `graph`.
    pub fn neighbor_weights(&self, graph: &Graph, i: usize) -> Vec<f64> {
        graph.neighbors(i).iter().map(|&j| self.w[(i, j)]).collect()
    }
}

/// Checks symmetry, row sums, nonnegativity, and the sparsity pattern
/// `w_ij > 0 iff j in N_i ∪ {i}`.
pub fn validate_averaging(w: &Matrix, graph: &Graph) -> Result<()> {
    let n = graph.n();
    if w.nrows() != n || w.ncols() != n {
        return Err(Error::InvalidAveraging(format!(
            "shape {}x{} does not match n={n}",
            w.nrows(),
            w.ncols()
        )));
    }
    for i in 0..n {
        for j in 0..n {
            if w[(i, j)] != w[(j, i)] {
                return Err(Error::InvalidAveraging(format!(
                    "asymmetric at ({i}, {j}): {} vs {}",
                    w[(i, j)],
                    w[(j, i)]
                )));
            }
            if w[(i, j)] < 0.0 {
                return Err(Error::InvalidAveraging(format!(
                    "negative entry {} at ({i}, {j})",
                    w[(i, j)]
                )));
            }
            let neighbor = i == j || graph.neighbors(i).binary_search(&j).is_ok();
            if !neighbor && w[(i, j)] != 0.0 {
                return Err(Error::InvalidAveraging(format!(
                    "positive entry {} off the graph pattern at ({i}, {j})",
                    w[(i, j)]
                )));
            }
            if neighbor && i != j && w[(i, j)] <= 0.0 {
                return Err(Error::InvalidAveraging(format!(
                    "zero weight on edge ({i}, {j})"
                )));
            }
        }
        let row_sum: f64 = w.row(i).iter().sum();
        if (row_sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidAveraging(format!(
                "row {i} sums to {row_sum}, expected 1"
            )));
        }
    }
    Ok(())
}

/// Metropolis rule: `w_ij = 1 / (1 + max(deg_i, deg_j))` on edges, diagonal
/// takes the slack. Guarantees a positive diagonal on any connected graph.
pub fn metropolis_weights(graph: &Graph) -> AveragingMatrix {
    let n = graph.n();
    let mut w = Matrix::zeros(n, n);
    for &(i, j) in graph.edges() {
        let wij = 1.0 / (1.0 + graph.degree(i).max(graph.degree(j)) as f64);
        w[(i, j)] = wij;
        w[(j, i)] = wij;
    }
    for i in 0..n {
        let off: f64 = graph.neighbors(i).iter().map(|&j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    AveragingMatrix { w }
}

/// Row-stochastic weights `ŵ_ij = w_ij γ_i / α` off the diagonal and
/// `ŵ_ii = 1 - (1 - w_ii) γ_i / α`. Each row sums to one by construction;
/// the diagonal stays positive only while `γ_i < α / (1 - w_ii)`.
pub fn hat_weights(w: &AveragingMatrix, gammas: &[f64], alpha: f64) -> Result<Matrix> {
    let n = w.n();
    if gammas.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: gammas.len() });
    }
    if alpha <= 0.0 {
        return Err(Error::NonPositiveStep(alpha));
    }
    let mut hat = Matrix::zeros(n, n);
    for i in 0..n {
        let gamma = gammas[i];
        if gamma < 0.0 {
            return Err(Error::NonPositiveStep(gamma));
        }
        let wii = w.diagonal(i);
        let diag = 1.0 - (1.0 - wii) * gamma / alpha;
        if diag <= 0.0 {
            let bound = if wii < 1.0 { alpha / (1.0 - wii) } else { f64::INFINITY };
            return Err(Error::HatWeightPositivity { node: i, gamma, bound });
        }
        for j in 0..n {
            hat[(i, j)] = if i == j { diag } else { w.entry(i, j) * gamma / alpha };
        }
    }
    Ok(hat)
}
