//! Directed graphs and the matrix machinery derived from them.
//!
//! Every cost construction in the crate goes through the incidence matrix,
//! the weighted Laplacian, or a Kronecker product with an identity block.
//! Edge order is canonical: the edge list order fixes the column order of
//! the incidence matrix and the diagonal order of the weight matrix, so all
//! derived matrices stay index-aligned.

use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};

/// A directed graph over vertices `0..vertex_count` (internal ids are
/// 0-based; configuration files use 1-based labels and convert at parse).
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedGraph {
    vertex_count: usize,
    edges: Vec<(usize, usize)>,
}

impl DirectedGraph {
    /// Build a graph, rejecting self-loops and out-of-range vertex ids.
    pub fn new(vertex_count: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if vertex_count == 0 {
            return Err(Error::InvalidGraph("vertex count must be positive".into()));
        }
        for &(tail, head) in &edges {
            if tail == head {
                return Err(Error::InvalidGraph(format!(
                    "self-loop at vertex {}",
                    tail + 1
                )));
            }
            if tail >= vertex_count || head >= vertex_count {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) references a vertex outside 1..{}",
                    tail + 1,
                    head + 1,
                    vertex_count
                )));
            }
        }
        Ok(Self {
            vertex_count,
            edges,
        })
    }

    /// Complete directed graph: both orientations of every vertex pair.
    pub fn complete(vertex_count: usize) -> Self {
        let mut edges = Vec::with_capacity(vertex_count * vertex_count.saturating_sub(1));
        for i in 0..vertex_count {
            for j in 0..vertex_count {
                if i != j {
                    edges.push((i, j));
                }
            }
        }
        Self {
            vertex_count,
            edges,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in canonical (construction) order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Incidence matrix `D`, one column per edge: +1 at the tail row,
    /// -1 at the head row, 0 elsewhere.
    pub fn incidence_matrix(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.vertex_count, self.edges.len());
        for (col, &(tail, head)) in self.edges.iter().enumerate() {
            d[(tail, col)] = 1.0;
            d[(head, col)] = -1.0;
        }
        d
    }

    /// Weighted Laplacian `L = D W D^T` with `W = diag(w)` in edge order.
    ///
    /// The result is symmetric positive semidefinite with zero row sums.
    pub fn weighted_laplacian(&self, weights: &[f64]) -> Result<DMatrix<f64>> {
        if weights.len() != self.edges.len() {
            return Err(Error::InvalidWeight(format!(
                "{} weights supplied for {} edges",
                weights.len(),
                self.edges.len()
            )));
        }
        for (idx, &w) in weights.iter().enumerate() {
            if !(w > 0.0) {
                let (tail, head) = self.edges[idx];
                return Err(Error::InvalidWeight(format!(
                    "weight {} on edge ({}, {}) must be strictly positive",
                    w,
                    tail + 1,
                    head + 1
                )));
            }
        }
        let mut l = DMatrix::zeros(self.vertex_count, self.vertex_count);
        for (&(tail, head), &w) in self.edges.iter().zip(weights) {
            l[(tail, tail)] += w;
            l[(head, head)] += w;
            l[(tail, head)] -= w;
            l[(head, tail)] -= w;
        }
        Ok(l)
    }

    /// Whether the underlying undirected graph is connected.
    pub fn is_connected_undirected(&self) -> bool {
        let mut adjacency = vec![Vec::new(); self.vertex_count];
        for &(tail, head) in &self.edges {
            adjacency[tail].push(head);
            adjacency[head].push(tail);
        }
        reachable_count(&adjacency, 0) == self.vertex_count
    }

    /// Whether some vertex has a directed path to every other vertex.
    pub fn has_globally_reaching_root(&self) -> bool {
        let mut adjacency = vec![Vec::new(); self.vertex_count];
        for &(tail, head) in &self.edges {
            adjacency[tail].push(head);
        }
        (0..self.vertex_count).any(|root| reachable_count(&adjacency, root) == self.vertex_count)
    }
}

fn reachable_count(adjacency: &[Vec<usize>], start: usize) -> usize {
    let mut seen = vec![false; adjacency.len()];
    let mut stack = vec![start];
    seen[start] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &next in &adjacency[v] {
            if !seen[next] {
                seen[next] = true;
                count += 1;
                stack.push(next);
            }
        }
    }
    count
}

/// Kronecker product `Y (x) I_m`: each entry `y_ij` becomes the block
/// `y_ij * I_m`.
pub fn kron_identity(y: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    let (p, q) = y.shape();
    let mut out = DMatrix::zeros(p * m, q * m);
    for i in 0..p {
        for j in 0..q {
            let v = y[(i, j)];
            if v != 0.0 {
                for k in 0..m {
                    out[(i * m + k, j * m + k)] = v;
                }
            }
        }
    }
    out
}

/// One edge of the formation graph with its running weight, terminal
/// weight, and desired offset vector (meters, tail minus head).
#[derive(Debug, Clone, PartialEq)]
pub struct FormationEdge {
    pub tail: usize,
    pub head: usize,
    /// Running formation weight, strictly positive.
    pub mu: f64,
    /// Terminal formation weight, strictly positive.
    pub omega: f64,
    /// Desired offset `p_tail - p_head` at the target formation.
    pub offset: Vector3<f64>,
}

/// The formation problem data: the formation graph with per-edge weights
/// and offsets, the complete communication graph, and per-vehicle control
/// weights.
#[derive(Debug, Clone)]
pub struct FormationSpec {
    formation_graph: DirectedGraph,
    communication_graph: DirectedGraph,
    mu: Vec<f64>,
    omega: Vec<f64>,
    offsets: Vec<Vector3<f64>>,
    gamma: Vec<f64>,
}

impl FormationSpec {
    /// Validate and freeze a formation specification.
    ///
    /// Requires a connected underlying graph with a vertex that reaches all
    /// others along directed edges, and strictly positive weights. The
    /// communication graph is always the complete directed graph.
    pub fn new(vertex_count: usize, edges: Vec<FormationEdge>, gamma: Vec<f64>) -> Result<Self> {
        let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e.tail, e.head)).collect();
        let formation_graph = DirectedGraph::new(vertex_count, pairs)?;
        if vertex_count > 1 && !formation_graph.is_connected_undirected() {
            return Err(Error::Config(
                "formation graph must be connected: every vehicle needs an undirected path to every other"
                    .into(),
            ));
        }
        if vertex_count > 1 && !formation_graph.has_globally_reaching_root() {
            return Err(Error::Config(
                "formation graph needs a globally reaching vertex: some vehicle must have a directed path to all others"
                    .into(),
            ));
        }
        if gamma.len() != vertex_count {
            return Err(Error::Config(format!(
                "{} control weights supplied for {} vehicles",
                gamma.len(),
                vertex_count
            )));
        }
        for (i, &g) in gamma.iter().enumerate() {
            if !(g > 0.0) {
                return Err(Error::InvalidWeight(format!(
                    "control weight gamma[{}] = {} must be strictly positive",
                    i + 1,
                    g
                )));
            }
        }
        let mut mu = Vec::with_capacity(edges.len());
        let mut omega = Vec::with_capacity(edges.len());
        let mut offsets = Vec::with_capacity(edges.len());
        for e in &edges {
            if !(e.mu > 0.0) {
                return Err(Error::InvalidWeight(format!(
                    "mu = {} on edge ({}, {}) must be strictly positive",
                    e.mu,
                    e.tail + 1,
                    e.head + 1
                )));
            }
            if !(e.omega > 0.0) {
                return Err(Error::InvalidWeight(format!(
                    "omega = {} on edge ({}, {}) must be strictly positive",
                    e.omega,
                    e.tail + 1,
                    e.head + 1
                )));
            }
            mu.push(e.mu);
            omega.push(e.omega);
            offsets.push(e.offset);
        }
        Ok(Self {
            formation_graph,
            communication_graph: DirectedGraph::complete(vertex_count),
            mu,
            omega,
            offsets,
            gamma,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.formation_graph.vertex_count()
    }

    pub fn formation_graph(&self) -> &DirectedGraph {
        &self.formation_graph
    }

    pub fn communication_graph(&self) -> &DirectedGraph {
        &self.communication_graph
    }

    /// Running weights in edge order.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Terminal weights in edge order.
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Offset vectors in edge order.
    pub fn offsets(&self) -> &[Vector3<f64>] {
        &self.offsets
    }

    /// Per-vehicle control effort weights.
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Offsets stacked edge-wise into a single `3|E|` vector.
    pub fn stacked_offsets(&self) -> nalgebra::DVector<f64> {
        let mut d = nalgebra::DVector::zeros(3 * self.offsets.len());
        for (k, off) in self.offsets.iter().enumerate() {
            d.fixed_rows_mut::<3>(3 * k).copy_from(off);
        }
        d
    }
}
