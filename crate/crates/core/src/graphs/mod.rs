//! Undirected attributed graphs, SBM synthesis, personalized PageRank and
//! train/test splitting.

mod ppr;
mod sbm;
mod split;

use ndarray::Array2;

pub use ppr::{normalized_adjacency, DEFAULT_ALPHA, ppr_exact, topk_neighbors, NormalizedAdjacency, PprTable};
pub use sbm::{generate_sbm, SbmSpec};
pub use split::{label_split, make_inductive, random_test_split, InductiveSplit};

use crate::{Error, Result};

/// Undirected graph with binary symmetric adjacency, node attributes,
/// optional labels and train/test masks.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    /// Sorted neighbor lists; no self-loops, symmetric.
    neighbors: Vec<Vec<usize>>,
    pub attributes: Array2<f64>,
    pub labels: Vec<Option<usize>>,
    pub train_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
}

impl Graph {
    /// Builds a graph from an undirected edge list. Reverse duplicates are
    /// merged and self-loops dropped.
    pub fn new(
        n_nodes: usize,
        edges: &[(usize, usize)],
        attributes: Array2<f64>,
        labels: Vec<Option<usize>>,
    ) -> Result<Self> {
        if attributes.nrows() != n_nodes || labels.len() != n_nodes {
            return Err(Error::Shape(format!(
                "{n_nodes} nodes but {} attribute rows and {} labels",
                attributes.nrows(),
                labels.len()
            )));
        }
        let mut neighbors = vec![Vec::new(); n_nodes];
        for &(a, b) in edges {
            for id in [a, b] {
                if id >= n_nodes {
                    return Err(Error::NodeOutOfRange {
                        id,
                        n_nodes,
                        context: "edge list".into(),
                    });
                }
            }
            if a != b {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            neighbors,
            attributes,
            labels,
            train_mask: vec![false; n_nodes],
            test_mask: vec![false; n_nodes],
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn n_attrs(&self) -> usize {
        self.attributes.ncols()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    /// Edges as `(a, b)` with `a < b`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(a, list)| list.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
            .collect()
    }

    /// Number of classes, one more than the largest label present.
    pub fn n_classes(&self) -> usize {
        self.labels.iter().flatten().max().map_or(0, |m| m + 1)
    }

    pub fn set_split(&mut self, train_mask: Vec<bool>, test_mask: Vec<bool>) -> Result<()> {
        let n = self.n_nodes();
        if train_mask.len() != n || test_mask.len() != n {
            return Err(Error::Shape("split masks must cover every node".into()));
        }
        if let Some(i) = (0..n).find(|&i| train_mask[i] && test_mask[i]) {
            return Err(Error::Domain(format!("node {i} is in both train and test sets")));
        }
        self.train_mask = train_mask;
        self.test_mask = test_mask;
        Ok(())
    }

    pub fn train_ids(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&i| self.train_mask[i]).collect()
    }

    pub fn test_ids(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&i| self.test_mask[i]).collect()
    }
}
