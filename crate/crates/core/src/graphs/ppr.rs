use ndarray::Array2;

use super::Graph;
use crate::linalg::invert_spd_in_place;
use crate::{Error, Result};

/// `(D+I)^{-1/2} (A+I) (D+I)^{-1/2}` stored row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    rows: Vec<Vec<(usize, f64)>>,
}

impl NormalizedAdjacency {
    pub fn n_nodes(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.n_nodes();
        let mut out = Array2::zeros((n, n));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                out[[i, j]] = v;
            }
        }
        out
    }
}

pub fn normalized_adjacency(graph: &Graph) -> NormalizedAdjacency {
    let inv_sqrt: Vec<f64> = (0..graph.n_nodes())
        .map(|i| 1.0 / ((graph.degree(i) + 1) as f64).sqrt())
        .collect();
    let rows = (0..graph.n_nodes())
        .map(|i| {
            let mut row: Vec<(usize, f64)> = graph
                .neighbors(i)
                .iter()
                .chain(std::iter::once(&i))
                .map(|&j| (j, inv_sqrt[i] * inv_sqrt[j]))
                .collect();
            row.sort_unstable_by_key(|&(j, _)| j);
            row
        })
        .collect();
    NormalizedAdjacency { rows }
}

/// Teleport probability used when none is configured.
pub const DEFAULT_ALPHA: f64 = 0.25;

/// Dense personalized PageRank matrix `alpha * (I - (1 - alpha) A_norm)^{-1}`.
pub fn ppr_exact(adjacency: &NormalizedAdjacency, alpha: f64) -> Result<Array2<f64>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!("teleport probability must be in (0, 1], got {alpha}")));
    }
    let n = adjacency.n_nodes();
    let mut system = Array2::<f64>::eye(n);
    for i in 0..n {
        for &(j, v) in adjacency.row(i) {
            system[[i, j]] -= (1.0 - alpha) * v;
        }
    }
    invert_spd_in_place(&mut system)?;
    system.mapv_inplace(|v| alpha * v);
    Ok(system)
}

/// Each node's `k` highest-scoring PageRank neighbors, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct PprTable {
    k: usize,
    indices: Vec<Vec<usize>>,
    scores: Vec<Vec<f64>>,
}

impl PprTable {
    pub fn from_rows(indices: Vec<Vec<usize>>, scores: Vec<Vec<f64>>) -> Result<Self> {
        let k = indices.first().map_or(0, Vec::len);
        if indices.len() != scores.len() || indices.iter().zip(&scores).any(|(i, s)| i.len() != k || s.len() != k) {
            return Err(Error::Shape("ragged PageRank table".into()));
        }
        Ok(Self { k, indices, scores })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_nodes(&self) -> usize {
        self.indices.len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.indices[node]
    }

    pub fn scores(&self, node: usize) -> &[f64] {
        &self.scores[node]
    }
}

/// Top-`k` entries of each row of `pi`; ties go to the smaller node index.
pub fn topk_neighbors(pi: &Array2<f64>, k: usize) -> Result<PprTable> {
    let n = pi.nrows();
    if k == 0 || k > n {
        return Err(Error::Domain(format!("k must be in [1, {n}], got {k}")));
    }
    let mut indices = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for row in pi.rows() {
        // Kept sorted best-first; index order breaks ties because the scan
        // visits smaller indices first and insertion is after equal scores.
        let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        for (j, &v) in row.iter().enumerate() {
            if best.len() == k && v <= best[k - 1].1 {
                continue;
            }
            let pos = best.partition_point(|&(_, b)| b >= v);
            best.insert(pos, (j, v));
            best.truncate(k);
        }
        indices.push(best.iter().map(|&(j, _)| j).collect());
        scores.push(best.iter().map(|&(_, v)| v).collect());
    }
    PprTable::from_rows(indices, scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::new(n, edges, Array2::zeros((n, 1)), vec![None; n]).unwrap()
    }

    #[test]
    fn isolated_node_normalizes_to_one() {
        let a = normalized_adjacency(&graph(1, &[])).to_dense();
        assert_eq!(a[[0, 0]], 1.0);
        let pi = ppr_exact(&normalized_adjacency(&graph(1, &[])), 0.3).unwrap();
        assert!((pi[[0, 0]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_edge_normalizes_to_halves() {
        let a = normalized_adjacency(&graph(2, &[(0, 1)])).to_dense();
        for v in a.iter() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn alpha_one_gives_identity() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let pi = ppr_exact(&normalized_adjacency(&g), 1.0).unwrap();
        assert_eq!(pi, Array2::eye(4));
        let table = topk_neighbors(&pi, 1).unwrap();
        for i in 0..4 {
            assert_eq!(table.neighbors(i), &[i]);
            assert_eq!(table.scores(i), &[1.0]);
        }
    }

    #[test]
    fn two_node_graph_matches_closed_form_inverse() {
        // I - 0.75 * [[.5,.5],[.5,.5]] = [[.625,-.375],[-.375,.625]], det = 0.25
        let pi = ppr_exact(&normalized_adjacency(&graph(2, &[(0, 1)])), 0.25).unwrap();
        let (diag, off) = (0.25 * 0.625 / 0.25, 0.25 * 0.375 / 0.25);
        assert!((pi[[0, 0]] - diag).abs() < 1e-12 && (pi[[1, 1]] - diag).abs() < 1e-12);
        assert!((pi[[0, 1]] - off).abs() < 1e-12 && (pi[[1, 0]] - off).abs() < 1e-12);
        let table = topk_neighbors(&pi, 2).unwrap();
        assert_eq!(table.neighbors(0), &[0, 1]);
        assert_eq!(table.neighbors(1), &[1, 0]);
    }

    #[test]
    fn bad_alpha_and_k_are_domain_errors() {
        let adj = normalized_adjacency(&graph(2, &[(0, 1)]));
        assert!(ppr_exact(&adj, 0.0).is_err());
        assert!(ppr_exact(&adj, 1.5).is_err());
        let pi = ppr_exact(&adj, 0.5).unwrap();
        assert!(topk_neighbors(&pi, 0).is_err());
        assert!(topk_neighbors(&pi, 3).is_err());
    }

    #[test]
    fn ties_prefer_smaller_index() {
        let pi = ndarray::array![[0.1, 0.5, 0.5, 0.5], [1.0, 1.0, 1.0, 1.0]];
        let t = topk_neighbors(&pi, 2).unwrap();
        assert_eq!(t.neighbors(0), &[1, 2]);
        assert_eq!(t.neighbors(1), &[0, 1]);
    }

    #[test]
    fn k_equal_to_n_keeps_every_node() {
        let g = graph(5, &[(0, 1), (1, 2), (3, 4)]);
        let pi = ppr_exact(&normalized_adjacency(&g), 0.25).unwrap();
        let t = topk_neighbors(&pi, 5).unwrap();
        for i in 0..5 {
            let mut ids = t.neighbors(i).to_vec();
            ids.sort_unstable();
            assert_eq!(ids, vec![0, 1, 2, 3, 4]);
            assert!(t.scores(i).windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
