//! Weighted communication graphs: the circle and random unit-disc topologies
//! used in the experiments, plus file-loaded matrices.
//!
//! Generated graphs always satisfy normalized diagonal dominance; loaded
//! matrices are accepted regardless but carry a `dominant` flag so bound
//! checkers can refuse them.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{is_normalized_diag_dominant, Matrix};

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("diagonal dominance violated: {0}")]
    DominanceViolated(String),
    #[error("zero diagonal entry at row {0}")]
    ZeroDiagonal(usize),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dimension mismatch: expected {expected} rows of {expected} entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// The system matrix W together with its adjacency structure.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    w: Matrix,
    /// Per-node neighbor lists, ascending, excluding self: `{ j ≠ i : w_ij ≠ 0 }`.
    adjacency: Vec<Vec<usize>>,
    dominant: bool,
    connected: bool,
}

impl WeightedGraph {
    /// Wrap a matrix, deriving adjacency and the dominance/connectivity flags.
    pub fn from_matrix(w: Matrix) -> Self {
        let n = w.n();
        let adjacency: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && w.get(i, j) != 0.0).collect())
            .collect();
        let dominant = is_normalized_diag_dominant(&w);
        let connected = is_connected(&adjacency);
        WeightedGraph { w, adjacency, dominant, connected }
    }

    pub fn n(&self) -> usize {
        self.w.n()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.w
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn is_dominant(&self) -> bool {
        self.dominant
    }

    /// False marks a warning, not a failure: the algorithms are defined on
    /// disconnected graphs (each component converges independently).
    pub fn is_connected(&self) -> bool {
        self.connected
    }

    pub fn save(&self, path: &Path) -> Result<(), TopologyError> {
        let mut f = std::fs::File::create(path)?;
        write!(f, "{}", render_matrix(&self.w))?;
        Ok(())
    }
}

/// Matrix text format: first line `n`, then n lines of n decimals.
pub fn render_matrix(w: &Matrix) -> String {
    let mut out = format!("{}\n", w.n());
    for i in 0..w.n() {
        let row: Vec<String> = w.row(i).iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Per-node weights as they appear "in the code" of each node: exactly the
/// Jacobi split entries, viewed through the adjacency lists.
#[derive(Debug, Clone)]
pub struct NodeWeights {
    /// `1/w_ii` per node (the A diagonal).
    pub self_weight: Vec<f64>,
    /// `-w_ij/w_ii` per directed edge, aligned with `WeightedGraph::neighbors`.
    pub neighbor_weight: Vec<Vec<f64>>,
}

/// Extract the node-local weight tables. Entries agree with
/// [`jacobi_split`](crate::linalg::jacobi_split) bit-for-bit.
pub fn node_weights(g: &WeightedGraph) -> Result<NodeWeights, TopologyError> {
    let w = g.matrix();
    let n = g.n();
    let mut self_weight = Vec::with_capacity(n);
    let mut neighbor_weight = Vec::with_capacity(n);
    for i in 0..n {
        let d = w.get(i, i);
        if d == 0.0 {
            return Err(TopologyError::ZeroDiagonal(i));
        }
        self_weight.push(1.0 / d);
        neighbor_weight.push(g.neighbors(i).iter().map(|&j| -(w.get(i, j) / d)).collect());
    }
    Ok(NodeWeights { self_weight, neighbor_weight })
}

/// Circulant graph: each node connected to its left and right neighbor.
///
/// `diag = 3, off = -1` reproduces the norms `‖A‖∞ = 1/3`, `‖B‖∞ = 2/3`.
pub fn build_circle(n: usize, diag: f64, off: f64) -> Result<WeightedGraph, TopologyError> {
    if n < 3 {
        return Err(TopologyError::DominanceViolated(format!("circle needs n >= 3, got {n}")));
    }
    if off == 0.0 {
        return Err(TopologyError::DominanceViolated("off-diagonal weight must be nonzero".into()));
    }
    if diag.abs() < 1.0 || diag.abs() <= 2.0 * off.abs() {
        return Err(TopologyError::DominanceViolated(format!(
            "need |diag| >= 1 and |diag| > 2|off|, got diag={diag}, off={off}"
        )));
    }
    let mut w = Matrix::zeros(n);
    for i in 0..n {
        w.set(i, i, diag);
        w.set(i, (i + 1) % n, off);
        w.set(i, (i + n - 1) % n, off);
    }
    Ok(WeightedGraph::from_matrix(w))
}

/// Random geometric graph: n points uniform in `[0, side]²`, edge whenever the
/// Euclidean distance is at most `radius`. Off-diagonal weights are drawn
/// uniform in [-1, 1] per directed edge; the diagonal is then set to
/// `max(1, rowsum/dominance_ratio)` which makes every row strictly dominant.
///
/// Deterministic for a fixed seed. The result may be disconnected; that is
/// reported through the `connected` flag, not as an error.
pub fn build_unit_disc(
    n: usize,
    side: f64,
    radius: f64,
    dominance_ratio: f64,
    seed: u64,
) -> Result<WeightedGraph, TopologyError> {
    if n < 2 || side <= 0.0 {
        return Err(TopologyError::DominanceViolated(format!(
            "need n >= 2 and side > 0, got n={n}, side={side}"
        )));
    }
    if !(0.0 < dominance_ratio && dominance_ratio < 1.0) {
        return Err(TopologyError::DominanceViolated(format!(
            "dominance_ratio must be in (0,1), got {dominance_ratio}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<(f64, f64)> =
        (0..n).map(|_| (rng.gen_range(0.0..side), rng.gen_range(0.0..side))).collect();
    let mut w = Matrix::zeros(n);
    // Sample weights in a fixed (i, j) order so the graph is seed-deterministic.
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (xi, yi) = points[i];
            let (xj, yj) = points[j];
            let d2 = (xi - xj).powi(2) + (yi - yj).powi(2);
            if d2 <= radius * radius {
                w.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
    }
    for i in 0..n {
        let rowsum: f64 = (0..n).filter(|&j| j != i).map(|j| w.get(i, j).abs()).sum();
        let mut d = (rowsum / dominance_ratio).max(1.0);
        // fp guard: bump until the strict inequality actually holds
        while d <= rowsum {
            d *= 1.0 + f64::EPSILON;
        }
        w.set(i, i, d);
    }
    let g = WeightedGraph::from_matrix(w);
    debug_assert!(g.is_dominant());
    Ok(g)
}

/// Parse a graph from the matrix text format. Dominance failures are
/// reported through the flag, not as an error.
pub fn load_graph(path: &Path) -> Result<WeightedGraph, TopologyError> {
    let f = std::fs::File::open(path)?;
    parse_graph(BufReader::new(f))
}

pub fn parse_graph<R: BufRead>(reader: R) -> Result<WeightedGraph, TopologyError> {
    let mut lines = reader.lines().enumerate();
    let n: usize = match lines.next() {
        Some((_, line)) => {
            let line = line?;
            line.trim()
                .parse()
                .map_err(|e| TopologyError::Parse { line: 1, msg: format!("bad dimension: {e}") })?
        }
        None => return Err(TopologyError::Parse { line: 1, msg: "empty file".into() }),
    };
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        let row = row.map_err(|e| TopologyError::Parse { line: idx + 1, msg: e.to_string() })?;
        if row.len() != n {
            return Err(TopologyError::DimensionMismatch { expected: n, got: row.len() });
        }
        rows.push(row);
        if rows.len() == n {
            break;
        }
    }
    if rows.len() != n {
        return Err(TopologyError::DimensionMismatch { expected: n, got: rows.len() });
    }
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    Ok(WeightedGraph::from_matrix(Matrix::from_rows(&refs)))
}

fn is_connected(adjacency: &[Vec<usize>]) -> bool {
    let n = adjacency.len();
    if n == 0 {
        return true;
    }
    // undirected reachability over the union of edge directions
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for &j in &adjacency[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
        for (j, adj) in adjacency.iter().enumerate() {
            if !seen[j] && adj.contains(&i) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}
