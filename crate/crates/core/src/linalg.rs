//! Dense row-major matrices and a cyclic Jacobi eigensolver for the small
//! symmetric matrices (at most a few dozen variables) this crate works with.

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data.
    ///
    /// Panics if `data.len() != rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    /// Builds a `n × columns.len()` matrix, one input slice per column.
    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, |c| c.as_ref().len());
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            let c = c.as_ref();
            assert_eq!(c.len(), rows, "ragged columns");
            for (i, &v) in c.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{}", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EigenError {
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("Jacobi iteration did not converge after {0} sweeps")]
    NoConvergence(usize),
}

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues (unsorted, in diagonal order) and the matrix whose
/// columns are the corresponding orthonormal eigenvectors.
pub fn symmetric_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix), EigenError> {
    let n = a.rows();
    if n != a.cols() {
        return Err(EigenError::NotSquare(a.rows(), a.cols()));
    }
    if a.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(EigenError::NonFinite);
    }
    let scale = a.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if !a.is_symmetric(1e-12 * scale) {
        return Err(EigenError::NotSymmetric);
    }

    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let mut d: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    let mut b = d.clone();
    let mut z = vec![0.0; n];

    for sweep in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| m[(p, q)].abs())
            .sum();
        if off == 0.0 {
            return Ok((d, v));
        }
        let threshold = if sweep < 3 {
            0.2 * off / (n * n) as f64
        } else {
            0.0
        };
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let g = 100.0 * apq.abs();
                if sweep > 3 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                    m[(p, q)] = 0.0;
                    continue;
                }
                if apq.abs() <= threshold {
                    continue;
                }
                let h = d[q] - d[p];
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let h = t * apq;
                z[p] -= h;
                z[q] += h;
                d[p] -= h;
                d[q] += h;
                m[(p, q)] = 0.0;
                let rotate = |m: &mut Matrix, i: usize, j: usize, k: usize, l: usize| {
                    let g = m[(i, j)];
                    let h = m[(k, l)];
                    m[(i, j)] = g - s * (h + g * tau);
                    m[(k, l)] = h + s * (g - h * tau);
                };
                for j in 0..p {
                    rotate(&mut m, j, p, j, q);
                }
                for j in (p + 1)..q {
                    rotate(&mut m, p, j, j, q);
                }
                for j in (q + 1)..n {
                    rotate(&mut m, p, j, q, j);
                }
                for j in 0..n {
                    rotate(&mut v, j, p, j, q);
                }
            }
        }
        for p in 0..n {
            b[p] += z[p];
            d[p] = b[p];
            z[p] = 0.0;
        }
    }
    Err(EigenError::NoConvergence(MAX_SWEEPS))
}

/// Solves the 2×2 system `a x = b`. Returns `None` when `a` is numerically
/// singular relative to its own scale.
pub fn solve_2x2(a: [[f64; 2]; 2], b: [f64; 2]) -> Option<[f64; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let scale = (a[0][0].abs() * a[1][1].abs()).max(a[0][1].abs() * a[1][0].abs());
    if !(det.abs() > 1e-12 * scale) || !det.is_finite() {
        return None;
    }
    Some([
        (b[0] * a[1][1] - b[1] * a[0][1]) / det,
        (a[0][0] * b[1] - a[1][0] * b[0]) / det,
    ])
}

/// Inverse of a 2×2 matrix, with the same singularity rule as [`solve_2x2`].
pub fn inverse_2x2(a: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let c0 = solve_2x2(a, [1.0, 0.0])?;
    let c1 = solve_2x2(a, [0.0, 1.0])?;
    Some([[c0[0], c1[0]], [c0[1], c1[1]]])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(values: &[f64], vectors: &Matrix) -> Matrix {
        let n = values.len();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = (0..n).map(|k| vectors[(i, k)] * values[k] * vectors[(j, k)]).sum();
            }
        }
        out
    }

    #[test]
    fn diagonal_matrix_is_already_decomposed() {
        let a = Matrix::from_row_major(3, 3, vec![3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        assert_eq!(vals, vec![3.0, 1.0, 2.0]);
        assert_eq!(vecs, Matrix::identity(3));
    }

    #[test]
    fn two_by_two_closed_form() {
        let r = 0.6;
        let a = Matrix::from_row_major(2, 2, vec![1.0, r, r, 1.0]);
        let (mut vals, vecs) = symmetric_eigen(&a).unwrap();
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((vals[0] - 1.6).abs() < 1e-14);
        assert!((vals[1] - 0.4).abs() < 1e-14);
        assert!(reconstruct(&symmetric_eigen(&a).unwrap().0, &vecs).max_abs_diff(&a) < 1e-14);
    }

    #[test]
    fn rejects_asymmetric_input() {
        let a = Matrix::from_row_major(2, 2, vec![1.0, 0.5, 0.2, 1.0]);
        assert_eq!(symmetric_eigen(&a).unwrap_err(), EigenError::NotSymmetric);
    }

    #[test]
    fn dense_matrix_reconstructs() {
        let a = Matrix::from_row_major(
            4,
            4,
            vec![
                4.0, 1.0, -2.0, 2.0, 1.0, 2.0, 0.0, 1.0, -2.0, 0.0, 3.0, -2.0, 2.0, 1.0, -2.0, -1.0,
            ],
        );
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        assert!(reconstruct(&vals, &vecs).max_abs_diff(&a) < 1e-12);
        let vtv = vecs.transpose().matmul(&vecs);
        assert!(vtv.max_abs_diff(&Matrix::identity(4)) < 1e-12);
    }

    #[test]
    fn singular_2x2_is_detected() {
        assert!(solve_2x2([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0]).is_none());
        let x = solve_2x2([[2.0, 1.0], [1.0, 3.0]], [3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-15 && (x[1] - 1.4).abs() < 1e-15);
    }
}
