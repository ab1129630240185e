use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::{Error, Result};

/// Stochastic block model with Gaussian node attributes per community.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub n_nodes: usize,
    pub n_classes: usize,
    /// Intra-class link probability.
    pub p: f64,
    /// Inter-class link probability.
    pub q: f64,
    /// Class-indexed attribute means; `None` uses `0.8 * onehot(class) + 0.1`
    /// with one attribute per class.
    #[serde(default)]
    pub attr_means: Option<Vec<Vec<f64>>>,
    /// Isotropic attribute standard deviation.
    pub attr_sigma: f64,
    pub seed: u64,
}

impl Default for SbmSpec {
    fn default() -> Self {
        Self {
            n_nodes: 300,
            n_classes: 3,
            p: 0.1,
            q: 0.005,
            attr_means: None,
            attr_sigma: Self::DEFAULT_SIGMA,
            seed: 0,
        }
    }
}

impl SbmSpec {
    pub const DEFAULT_SIGMA: f64 = 0.4;

    fn means(&self) -> Vec<Vec<f64>> {
        self.attr_means.clone().unwrap_or_else(|| {
            (0..self.n_classes)
                .map(|c| (0..self.n_classes).map(|d| if d == c { 0.9 } else { 0.1 }).collect())
                .collect()
        })
    }
}

/// Samples an SBM graph. Node `i` belongs to class `i / (n / C)`; every pair
/// `i < j` is linked with probability `p` (same class) or `q`. Attributes are
/// drawn from the class Gaussian, then min-max scaled to `[0, 1]` per column.
pub fn generate_sbm(spec: &SbmSpec) -> Result<Graph> {
    let SbmSpec { n_nodes: n, n_classes: c, p, q, .. } = *spec;
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) || q > p {
        return Err(Error::Domain(format!("need 0 <= q <= p <= 1, got p={p}, q={q}")));
    }
    if c == 0 || n == 0 || n % c != 0 {
        return Err(Error::Domain(format!("{n} nodes cannot be split into {c} equal communities")));
    }
    if !(spec.attr_sigma >= 0.0) {
        return Err(Error::Domain(format!("attribute sigma must be >= 0, got {}", spec.attr_sigma)));
    }
    let means = spec.means();
    let dim = means.first().map_or(0, Vec::len);
    if means.len() != c || dim == 0 || means.iter().any(|m| m.len() != dim) {
        return Err(Error::Shape(format!("need {c} attribute mean vectors of equal length")));
    }
    let block = n / c;
    let labels: Vec<usize> = (0..n).map(|i| i / block).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let prob = if labels[i] == labels[j] { p } else { q };
            if rng.random::<f64>() < prob {
                edges.push((i, j));
            }
        }
    }

    let noise = Normal::new(0.0, spec.attr_sigma).map_err(|e| Error::Domain(e.to_string()))?;
    let mut attrs = Array2::from_shape_fn((n, dim), |(i, d)| means[labels[i]][d]);
    attrs.mapv_inplace(|m| m + noise.sample(&mut rng));
    for mut col in attrs.columns_mut() {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        col.mapv_inplace(|v| if span > 0.0 { (v - lo) / span } else { 0.0 });
    }
    Graph::new(n, &edges, attrs, labels.into_iter().map(Some).collect())
}
