use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};

use crate::dgnn::Encoding;
use crate::{Error, Result};

/// Interval the reduced features are rescaled into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetRange {
    Unit,
    TwoPi,
}

impl TargetRange {
    pub fn upper(self) -> f64 {
        match self {
            TargetRange::Unit => 1.0,
            TargetRange::TwoPi => 2.0 * PI,
        }
    }
}

impl From<Encoding> for TargetRange {
    fn from(e: Encoding) -> Self {
        match e {
            Encoding::Amplitude => TargetRange::Unit,
            Encoding::Phase => TargetRange::TwoPi,
        }
    }
}

/// Fitted centering, projection and per-component rescaling.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaTransform {
    pub mean: Array1<f64>,
    /// `dim x n_attrs`, rows are unit principal directions by decreasing
    /// variance.
    pub components: Array2<f64>,
    /// All covariance eigenvalues (sample covariance, `n - 1`), descending.
    pub eigenvalues: Vec<f64>,
    /// Per-component min and max of the projected fit rows.
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub range: TargetRange,
}

impl PcaTransform {
    pub fn dim(&self) -> usize {
        self.components.nrows()
    }

    /// Centered projection onto the principal directions, before rescaling.
    pub fn project(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::Shape(format!(
                "PCA fitted on {} attributes, got {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        Ok((x - &self.mean).dot(&self.components.t()))
    }

    /// Projection min-max rescaled into the target range. Rows outside the
    /// fitted extremes are clipped.
    pub fn transform(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let mut z = self.project(x)?;
        let hi = self.range.upper();
        for (j, mut col) in z.axis_iter_mut(Axis(1)).enumerate() {
            let span = self.max[j] - self.min[j];
            col.mapv_inplace(|v| {
                if span > 0.0 {
                    ((v - self.min[j]) / span * hi).clamp(0.0, hi)
                } else {
                    0.0
                }
            });
        }
        Ok(z)
    }

    /// Share of the total variance captured by each kept component.
    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.iter().map(|e| e.max(0.0)).sum();
        self.eigenvalues[..self.dim()]
            .iter()
            .map(|e| if total > 0.0 { e.max(0.0) / total } else { 0.0 })
            .collect()
    }
}

/// Reduces `x` to `dim` principal components and rescales each into
/// `range`. The transform is fitted on `fit_rows` (all rows when `None`);
/// the returned matrix covers every row of `x`.
pub fn pca_reduce(
    x: &Array2<f64>,
    dim: usize,
    range: TargetRange,
    fit_rows: Option<&[usize]>,
) -> Result<(Array2<f64>, PcaTransform)> {
    let d = x.ncols();
    if dim == 0 || dim > d {
        return Err(Error::Domain(format!("PCA dimension {dim} must be in 1..={d}")));
    }
    let fit = match fit_rows {
        Some(rows) => {
            if let Some(&bad) = rows.iter().find(|&&r| r >= x.nrows()) {
                return Err(Error::NodeOutOfRange {
                    id: bad,
                    n_nodes: x.nrows(),
                    context: "PCA fit rows".into(),
                });
            }
            x.select(Axis(0), rows)
        }
        None => x.clone(),
    };
    let n = fit.nrows();
    if n < 2 {
        return Err(Error::Domain(format!("PCA needs at least 2 fit rows, got {n}")));
    }
    let mean = fit.mean_axis(Axis(0)).expect("non-empty");
    let centered = &fit - &mean;
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components = Array2::from_shape_fn((dim, d), |(k, j)| eig.eigenvectors[(j, order[k])]);
    // Sign convention: the largest-magnitude loading of each component is positive.
    for mut row in components.rows_mut() {
        let pivot = row.iter().cloned().fold(0.0, |acc: f64, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            row.mapv_inplace(|v| -v);
        }
    }
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    let projected_fit = centered.dot(&components.t());
    let min = projected_fit
        .axis_iter(Axis(1))
        .map(|c| c.iter().cloned().fold(f64::INFINITY, f64::min))
        .collect();
    let max = projected_fit
        .axis_iter(Axis(1))
        .map(|c| c.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let transform = PcaTransform {
        mean,
        components,
        eigenvalues,
        min,
        max,
        range,
    };
    Ok((transform.transform(x)?, transform))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Cyclic Jacobi rotations; returns eigenvalues in descending order.
    fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i][j] * a[i][j])
                .sum();
            if off < 1e-26 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    fn sample_variance_sum(z: &Array2<f64>) -> f64 {
        let n = z.nrows() as f64;
        z.axis_iter(Axis(1))
            .map(|c| {
                let m = c.sum() / n;
                c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)
            })
            .sum()
    }

    #[test]
    fn projection_variance_matches_jacobi_top_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Array2::from_shape_fn((100, 50), |_| rng.random_range(-1.0..1.0));
        let (_, t) = pca_reduce(&x, 20, TargetRange::Unit, None).unwrap();
        let z = t.project(&x).unwrap();
        let mean = x.mean_axis(Axis(0)).unwrap();
        let c = &x - &mean;
        let cov = c.t().dot(&c) / 99.0;
        let oracle = jacobi_eigenvalues(cov.rows().into_iter().map(|r| r.to_vec()).collect());
        let expected: f64 = oracle[..20].iter().sum();
        assert!((sample_variance_sum(&z) - expected).abs() < 1e-8, "{} vs {expected}", sample_variance_sum(&z));
    }

    #[test]
    fn full_dim_on_orthogonal_data_is_lossless() {
        let x = ndarray::array![[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0], [-1.0, -2.0, -3.0]];
        let (_, t) = pca_reduce(&x, 3, TargetRange::Unit, None).unwrap();
        let z = t.project(&x).unwrap();
        let back = z.dot(&t.components) + &t.mean;
        assert!((back - &x).iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn rank_one_data_has_unit_explained_ratio() {
        let x = Array2::from_shape_fn((10, 4), |(i, j)| i as f64 * [1.0, -2.0, 0.5, 3.0][j]);
        let (_, t) = pca_reduce(&x, 1, TargetRange::Unit, None).unwrap();
        assert!((t.explained_variance_ratio()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn output_spans_target_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((30, 6), |_| rng.random_range(0.0..5.0));
        for range in [TargetRange::Unit, TargetRange::TwoPi] {
            let (z, _) = pca_reduce(&x, 3, range, None).unwrap();
            for col in z.axis_iter(Axis(1)) {
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(lo.abs() < 1e-12 && (hi - range.upper()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fit_rows_only_are_used_and_others_are_clipped() {
        let x = ndarray::array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [10.0, 10.0]];
        let (z, t) = pca_reduce(&x, 1, TargetRange::Unit, Some(&[0, 1, 2])).unwrap();
        assert!((t.mean[0] - 1.0).abs() < 1e-12);
        let extreme = z[[3, 0]];
        assert!(extreme == 0.0 || extreme == 1.0);
        let (a, _) = pca_reduce(&x, 1, TargetRange::Unit, Some(&[0, 1, 2])).unwrap();
        assert_eq!(a, z);
    }

    #[test]
    fn dim_too_large_is_rejected() {
        let x = Array2::<f64>::zeros((5, 3));
        assert!(matches!(pca_reduce(&x, 4, TargetRange::Unit, None), Err(Error::Domain(_))));
    }
}
