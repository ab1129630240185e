//! Small dense helpers shared by the optical and graph code.

use ndarray::Array2;
use num_complex::Complex64;

use crate::{Error, Result};

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Shape("ragged rows in complex matrix".into()));
        }
        Ok(Self {
            rows: n_rows,
            cols: n_cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `self * other`.
    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                for c in 0..other.cols {
                    out[(r, c)] += a * other[(k, c)];
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)].conj();
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

/// In-place Gauss-Jordan inversion of a symmetric positive-definite matrix.
///
/// No pivoting is performed; every pivot of an SPD matrix is positive, so a
/// non-positive pivot is reported as a numeric failure.
pub fn invert_spd_in_place(a: &mut Array2<f64>) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape(format!("expected square matrix, got {:?}", a.dim())));
    }
    let data = a
        .as_slice_mut()
        .ok_or_else(|| Error::Shape("matrix must be in standard layout".into()))?;
    let mut pivot_row = vec![0.0; n];
    for k in 0..n {
        let pivot = data[k * n + k];
        if !(pivot > f64::EPSILON * 1e-3) || !pivot.is_finite() {
            return Err(Error::Numeric(format!(
                "non-positive pivot {pivot:e} at row {k}; system is singular or indefinite"
            )));
        }
        let inv = 1.0 / pivot;
        data[k * n + k] = 1.0;
        for v in &mut data[k * n..(k + 1) * n] {
            *v *= inv;
        }
        pivot_row.copy_from_slice(&data[k * n..(k + 1) * n]);
        for i in 0..n {
            if i == k {
                continue;
            }
            let row = &mut data[i * n..(i + 1) * n];
            let factor = row[k];
            if factor == 0.0 {
                continue;
            }
            row[k] = 0.0;
            for (x, p) in row.iter_mut().zip(&pivot_row) {
                *x -= factor * p;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn spd_inverse_of_small_matrix() {
        let mut a = array![[4.0, 1.0], [1.0, 3.0]];
        invert_spd_in_place(&mut a).unwrap();
        let det = 11.0;
        let expected = array![[3.0 / det, -1.0 / det], [-1.0 / det, 4.0 / det]];
        for (x, y) in a.iter().zip(expected.iter()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let mut a = array![[0.0, 1.0], [1.0, 0.0]];
        assert!(matches!(invert_spd_in_place(&mut a), Err(Error::Numeric(_))));
    }

    #[test]
    fn adjoint_conjugates_and_transposes() {
        let m = CMatrix::from_rows(vec![vec![Complex64::new(1.0, 2.0), Complex64::new(0.0, -1.0)]]).unwrap();
        let h = m.adjoint();
        assert_eq!(h.rows(), 2);
        assert_eq!(h[(0, 0)], Complex64::new(1.0, -2.0));
        assert_eq!(h[(1, 0)], Complex64::new(0.0, 1.0));
    }
}
