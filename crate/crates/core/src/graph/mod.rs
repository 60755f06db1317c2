//! Directed graphs, adjacency normalization, datasets and their file formats.

mod dataset;
pub mod io;
mod split;
mod synthetic;

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::numerics::{CsrMatrix, LinearOperator, Matrix};

pub use dataset::Dataset;
pub use split::{make_splits, DatasetSplit};
pub use synthetic::{generate_directed_sbm, SbmParams};

/// Node count above which [`normalize_adjacency`] keeps `Â` sparse.
pub const DEFAULT_DENSE_THRESHOLD: usize = 4096;

/// An unweighted directed graph. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectedGraph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    adjacency: CsrMatrix,
}

impl DirectedGraph {
    /// Builds a graph from an edge list. Repeated `(src, dst)` pairs keep their first occurrence.
    pub fn new(num_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::InvalidArgument("graph needs at least one node".into()));
        }
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        for (s, d) in edges {
            if s >= num_nodes || d >= num_nodes {
                return Err(Error::InvalidArgument(format!(
                    "edge ({s},{d}) references a node outside 0..{num_nodes}"
                )));
            }
            if seen.insert((s, d)) {
                kept.push((s, d));
            }
        }
        let adjacency = CsrMatrix::from_triplets(
            num_nodes,
            num_nodes,
            kept.iter().map(|&(s, d)| (s, d, 1.0)),
        )?;
        Ok(DirectedGraph {
            num_nodes,
            edges: kept,
            adjacency,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Binary adjacency `A` with `A[i][j] = 1` iff `i → j`.
    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    /// Same nodes, every edge flipped.
    pub fn reversed(&self) -> DirectedGraph {
        DirectedGraph::new(self.num_nodes, self.edges.iter().map(|&(s, d)| (d, s)))
            .expect("reversal keeps node ids in range")
    }

    /// Adjacency `max(A, Aᵀ)`: every edge present in both directions.
    pub fn symmetrized(&self) -> DirectedGraph {
        let both = self
            .edges
            .iter()
            .flat_map(|&(s, d)| [(s, d), (d, s)])
            .collect::<Vec<_>>();
        DirectedGraph::new(self.num_nodes, both).expect("symmetrization keeps node ids in range")
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<DirectedGraph> {
        if perm.len() != self.num_nodes {
            return Err(Error::InvalidArgument("permutation length differs from node count".into()));
        }
        DirectedGraph::new(
            self.num_nodes,
            self.edges.iter().map(|&(s, d)| (perm[s], perm[d])),
        )
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges
            .iter()
            .all(|&(s, d)| self.adjacency.get(d, s) != 0.0)
    }
}

/// Storage of a normalized adjacency: dense for small graphs, CSR above the threshold.
#[derive(Clone, Debug, PartialEq)]
pub enum AdjacencyStorage {
    Dense(Matrix),
    Sparse(CsrMatrix),
}

/// `Â = D_row^{-1/2} (A + I) D_col^{-1/2}` with degrees taken from `A + I`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    pub matrix: AdjacencyStorage,
    pub row_degrees: Vec<f64>,
    pub col_degrees: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn num_nodes(&self) -> usize {
        self.row_degrees.len()
    }

    pub fn to_dense(&self) -> Matrix {
        match &self.matrix {
            AdjacencyStorage::Dense(m) => m.clone(),
            AdjacencyStorage::Sparse(s) => s.to_dense(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.matrix, AdjacencyStorage::Sparse(_))
    }

    pub fn operator(&self) -> &dyn LinearOperator {
        match &self.matrix {
            AdjacencyStorage::Dense(m) => m,
            AdjacencyStorage::Sparse(s) => s,
        }
    }
}

/// Normalizes with the default dense/sparse threshold.
pub fn normalize_adjacency(graph: &DirectedGraph) -> NormalizedAdjacency {
    normalize_adjacency_with(graph, DEFAULT_DENSE_THRESHOLD)
}

/// Normalizes `A + I`; stored dense when `N <= dense_threshold`.
///
/// Input self-edges merge with the added identity, so every diagonal entry of `A + I` is 1.
pub fn normalize_adjacency_with(graph: &DirectedGraph, dense_threshold: usize) -> NormalizedAdjacency {
    let n = graph.num_nodes();
    let with_loops = CsrMatrix::from_triplets(
        n,
        n,
        graph
            .edges()
            .iter()
            .filter(|(s, d)| s != d)
            .map(|&(s, d)| (s, d, 1.0))
            .chain((0..n).map(|i| (i, i, 1.0))),
    )
    .expect("node ids validated at construction");

    let mut row_degrees = vec![0.0; n];
    let mut col_degrees = vec![0.0; n];
    for i in 0..n {
        for (j, v) in with_loops.row_entries(i) {
            row_degrees[i] += v;
            col_degrees[j] += v;
        }
    }
    let row_scale: Vec<f64> = row_degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let col_scale: Vec<f64> = col_degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let normalized = with_loops.map_entries(|i, j, v| v * row_scale[i] * col_scale[j]);

    let matrix = if n <= dense_threshold {
        AdjacencyStorage::Dense(normalized.to_dense())
    } else {
        AdjacencyStorage::Sparse(normalized)
    };
    NormalizedAdjacency {
        matrix,
        row_degrees,
        col_degrees,
    }
}
