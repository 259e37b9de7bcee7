//! Symmetric k-nearest-neighbor graphs over embedding rows.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("k = {k} must satisfy 1 <= k < M = {m}")]
    InvalidK { k: usize, m: usize },
    #[error("non-finite coordinate in row {0}")]
    NonFinite(usize),
    #[error("invalid edge ({0}, {1}) for {2} nodes")]
    InvalidEdge(usize, usize, usize),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Euclidean distance.
pub fn l2_distance(p: &[f64], q: &[f64]) -> Result<f64, GraphError> {
    if p.len() != q.len() {
        return Err(GraphError::LengthMismatch(p.len(), q.len()));
    }
    Ok(squared_distance(p, q).sqrt())
}

/// Shared by both backends so they rank candidates on identical values.
#[inline]
fn squared_distance(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| {
            let d = b - a;
            d * d
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    BruteForce,
    KdTree,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::BruteForce => "brute-force",
            Backend::KdTree => "kd-tree",
        })
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "brute-force" => Ok(Backend::BruteForce),
            "kd-tree" => Ok(Backend::KdTree),
            other => Err(format!("invalid backend {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub k: usize,
    pub backend: Backend,
    /// Scale every row to unit length before measuring distances.
    pub normalize_rows: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            k: 10,
            backend: Backend::KdTree,
            normalize_rows: false,
        }
    }
}

/// Undirected, unweighted graph without self-loops. Neighbor lists are
/// sorted and duplicate-free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnnGraph {
    adjacency: Vec<Vec<usize>>,
}

impl KnnGraph {
    /// Builds a graph from undirected edges; repeated edges collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u == v || u >= n || v >= n {
                return Err(GraphError::InvalidEdge(u, v, n));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(KnnGraph { adjacency })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adjacency[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Edges as `(u, v)` with `u < v`, ascending.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn min_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).min().unwrap_or(0)
    }

    /// Header `M E`, then one `u v` line per edge with `u < v`.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<(), GraphError> {
        writeln!(out, "{} {}", self.node_count(), self.edge_count())?;
        for (u, v) in self.edges() {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }

    pub fn read_edge_list<R: BufRead>(input: R) -> Result<Self, GraphError> {
        let mut lines = input.lines().enumerate();
        let parse_pair = |line: &str, n: usize| -> Result<(usize, usize), GraphError> {
            let fields: Vec<usize> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| GraphError::Parse {
                    line: n,
                    reason: format!("{e}"),
                })?;
            match fields[..] {
                [a, b] => Ok((a, b)),
                _ => Err(GraphError::Parse {
                    line: n,
                    reason: format!("expected 2 fields, found {}", fields.len()),
                }),
            }
        };
        let (_, header) = lines.next().ok_or(GraphError::Parse {
            line: 1,
            reason: "missing header".into(),
        })?;
        let (m, e) = parse_pair(&header?, 1)?;
        let mut edges = Vec::with_capacity(e);
        for (n, line) in lines {
            let line = line?;
            if !line.trim().is_empty() {
                edges.push(parse_pair(&line, n + 1)?);
            }
        }
        if edges.len() != e {
            return Err(GraphError::Parse {
                line: 1,
                reason: format!("header declares {e} edges, found {}", edges.len()),
            });
        }
        KnnGraph::from_edges(m, &edges)
    }
}

/// Row sums of the adjacency matrix.
pub fn degrees(graph: &KnnGraph) -> Vec<usize> {
    graph.adjacency.iter().map(Vec::len).collect()
}

/// Candidate ordered by squared distance, then node index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Row-major copy of the point set.
struct Points {
    data: Vec<f64>,
    dim: usize,
}

impl Points {
    fn new(m: &DMatrix<f64>, normalize: bool) -> Result<Self, GraphError> {
        let dim = m.ncols();
        let mut data = Vec::with_capacity(m.len());
        for (r, row) in m.row_iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(GraphError::NonFinite(r));
            }
            let scale = if normalize {
                let n = row.norm();
                if n > 0.0 {
                    1.0 / n
                } else {
                    1.0
                }
            } else {
                1.0
            };
            data.extend(row.iter().map(|v| v * scale));
        }
        Ok(Points { data, dim })
    }

    fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Fixed-capacity max-heap of the best candidates seen so far.
struct Best {
    k: usize,
    heap: BinaryHeap<Candidate>,
}

impl Best {
    fn new(k: usize) -> Self {
        Best {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    fn offer(&mut self, c: Candidate) {
        if self.heap.len() < self.k {
            self.heap.push(c);
        } else if c < *self.heap.peek().expect("k >= 1") {
            self.heap.pop();
            self.heap.push(c);
        }
    }

    /// Squared distance a point must not exceed to still matter.
    fn bound(&self) -> f64 {
        if self.heap.len() < self.k {
            f64::INFINITY
        } else {
            self.heap.peek().map_or(f64::INFINITY, |c| c.dist)
        }
    }

    fn into_indices(self) -> Vec<usize> {
        self.heap.into_iter().map(|c| c.index).collect()
    }
}

fn brute_force_neighbors(points: &Points, query: usize, k: usize) -> Vec<usize> {
    let q = points.row(query);
    let mut best = Best::new(k);
    for i in (0..points.len()).filter(|&i| i != query) {
        best.offer(Candidate {
            dist: squared_distance(q, points.row(i)),
            index: i,
        });
    }
    best.into_indices()
}

/// Relative slack on the pruning bound.
const PRUNE_SLACK: f64 = 1e-9;

enum KdNode {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Exact kd-tree. Points with coordinate below the split value sit on the
/// left, above on the right; equal values may land on either side.
struct KdTree<'a> {
    points: &'a Points,
    perm: Vec<usize>,
    /// Point coordinates in `perm` order, so leaves scan contiguous memory.
    ordered: Vec<f64>,
    nodes: Vec<KdNode>,
}

impl<'a> KdTree<'a> {
    fn build(points: &'a Points) -> Self {
        let mut tree = KdTree {
            points,
            perm: (0..points.len()).collect(),
            ordered: Vec::new(),
            nodes: Vec::new(),
        };
        tree.build_node(0, points.len());
        tree.ordered = tree
            .perm
            .iter()
            .flat_map(|&i| points.row(i).iter().copied())
            .collect();
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE || self.points.dim == 0 {
            self.nodes.push(KdNode::Leaf { start, end });
            return id;
        }
        let axis = self.widest_axis(start, end);
        let mid = start + (end - start) / 2;
        let points = self.points;
        self.perm[start..end].select_nth_unstable_by(mid - start, |&x, &y| {
            points.row(x)[axis].total_cmp(&points.row(y)[axis])
        });
        let value = points.row(self.perm[mid])[axis];
        self.nodes.push(KdNode::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = KdNode::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    fn widest_axis(&self, start: usize, end: usize) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for axis in 0..self.points.dim {
            let (lo, hi) = self.perm[start..end]
                .iter()
                .map(|&i| self.points.row(i)[axis])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            if hi - lo > best.1 {
                best = (axis, hi - lo);
            }
        }
        best.0
    }

    fn neighbors(&self, query: usize, k: usize) -> Vec<usize> {
        let mut best = Best::new(k);
        let mut offsets = vec![0.0; self.points.dim];
        self.search(
            0,
            query,
            self.points.row(query),
            &mut best,
            0.0,
            &mut offsets,
        );
        best.into_indices()
    }

    /// `cell_dist` is a lower bound on the squared distance from `q` to the
    /// node's cell, the sum of squares of the per-axis gaps in `offsets`.
    fn search(
        &self,
        node: usize,
        query: usize,
        q: &[f64],
        best: &mut Best,
        cell_dist: f64,
        offsets: &mut [f64],
    ) {
        match self.nodes[node] {
            KdNode::Leaf { start, end } => {
                let dim = self.points.dim;
                for (slot, &i) in (start..end).zip(&self.perm[start..end]) {
                    if i != query {
                        best.offer(Candidate {
                            dist: squared_distance(q, &self.ordered[slot * dim..(slot + 1) * dim]),
                            index: i,
                        });
                    }
                }
            }
            KdNode::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = value - q[axis];
                let (near, far) = if diff > 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, query, q, best, cell_dist, offsets);
                // Every point across the plane is at least |diff| away along
                // `axis`; equality must still be searched for index ties, and
                // the running sum may round up, hence the slack.
                let old = offsets[axis];
                let far_dist = cell_dist - old * old + diff * diff;
                if far_dist <= best.bound() * (1.0 + PRUNE_SLACK) {
                    offsets[axis] = diff;
                    self.search(far, query, q, best, far_dist, offsets);
                    offsets[axis] = old;
                }
            }
        }
    }
}

/// Links every row to its `k` nearest rows (ties broken by lower index)
/// and symmetrizes, so each node ends with degree at least `k`.
pub fn knn_graph(points: &DMatrix<f64>, config: &GraphConfig) -> Result<KnnGraph, GraphError> {
    let m = points.nrows();
    if config.k == 0 || config.k >= m {
        return Err(GraphError::InvalidK { k: config.k, m });
    }
    let pts = Points::new(points, config.normalize_rows)?;
    let k = config.k;
    let lists: Vec<Vec<usize>> = match config.backend {
        Backend::BruteForce => (0..m)
            .into_par_iter()
            .map(|i| brute_force_neighbors(&pts, i, k))
            .collect(),
        Backend::KdTree => {
            let tree = KdTree::build(&pts);
            (0..m)
                .into_par_iter()
                .map(|i| tree.neighbors(i, k))
                .collect()
        }
    };
    let edges: Vec<(usize, usize)> = lists
        .iter()
        .enumerate()
        .flat_map(|(u, list)| list.iter().map(move |&v| (u, v)))
        .collect();
    KnnGraph::from_edges(m, &edges)
}
