//! Small dense linear algebra: row-major matrices, LU solves, power iteration.
//!
//! Dimensions in this crate stay tiny (state and control vectors of a handful
//! of components), so everything is plain `Vec<f64>` with no blocking or
//! sparsity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix rows must be non-empty and rectangular")]
    MalformedRows,
    #[error("matrix is singular (pivot {pivot:.3e} at column {col})")]
    Singular { col: usize, pivot: f64 },
}

/// Dense row-major matrix.
///
/// Serialized as nested JSON arrays, one inner array per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = LinalgError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Matrix::from_rows(&rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        (0..m.rows).map(|i| m.row(i).to_vec()).collect()
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(LinalgError::MalformedRows);
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::MalformedRows);
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `self * v` for a column vector `v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "mul_vec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `selfᵀ * v`.
    pub fn mul_vec_transposed(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows, "mul_vec_transposed dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let row = self.row(i);
            for (j, o) in out.iter_mut().enumerate() {
                *o += row[j] * v[i];
            }
        }
        out
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "mul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * out.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn add_diagonal(&mut self, v: f64) {
        assert!(self.is_square());
        for i in 0..self.rows {
            let d = self.get(i, i);
            self.set(i, i, d + v);
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `self - other`.
    pub fn frobenius_distance(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// LU factorization with partial pivoting.
    pub fn lu(&self) -> Result<LuFactors, LinalgError> {
        assert!(self.is_square(), "lu requires a square matrix");
        let n = self.rows;
        let mut lu = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let tol = self.max_abs().max(1.0) * (n as f64) * 1e-14;
        for col in 0..n {
            let (pivot_row, pivot) = (col..n)
                .map(|r| (r, lu.get(r, col).abs()))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            if pivot <= tol {
                return Err(LinalgError::Singular { col, pivot });
            }
            if pivot_row != col {
                for j in 0..n {
                    let a = lu.get(col, j);
                    let b = lu.get(pivot_row, j);
                    lu.set(col, j, b);
                    lu.set(pivot_row, j, a);
                }
                perm.swap(col, pivot_row);
            }
            let inv = 1.0 / lu.get(col, col);
            for r in col + 1..n {
                let factor = lu.get(r, col) * inv;
                lu.set(r, col, factor);
                for j in col + 1..n {
                    let v = lu.get(r, j) - factor * lu.get(col, j);
                    lu.set(r, j, v);
                }
            }
        }
        Ok(LuFactors { lu, perm })
    }
}

/// LU factors of a square matrix, reusable across right-hand sides.
pub struct LuFactors {
    lu: Matrix,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        assert_eq!(b.len(), n, "solve dimension mismatch");
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            for j in 0..i {
                y[i] -= self.lu.get(i, j) * y[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                y[i] -= self.lu.get(i, j) * y[j];
            }
            y[i] /= self.lu.get(i, i);
        }
        y
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Fixed start vector for power iterations, chosen so it is overwhelmingly
/// unlikely to be orthogonal to the dominant eigenvector.
fn power_start(dim: usize) -> Vec<f64> {
    let mut gen = crate::rng::SplitMix64::new(0x9e37_79b9_7f4a_7c15);
    let mut v: Vec<f64> = (0..dim).map(|_| gen.next_f64() - 0.5).collect();
    let n = norm2(&v);
    for x in &mut v {
        *x /= n;
    }
    v
}

/// Dominant eigenvalue magnitude of a general square operator by the power
/// method.
///
/// Runs up to `iters` normalized iterations, stopping early once the per-step
/// growth factor stabilizes within `tol`. When growth keeps oscillating
/// (complex dominant pair, defective eigenvalues) the estimate falls back to
/// the geometric-mean growth over the last quarter of the run, which
/// telescopes to `(‖A^K v‖ / ‖A^{3K/4} v‖)^{4/K}`.
pub fn power_iteration(apply: impl Fn(&[f64]) -> Vec<f64>, dim: usize, iters: usize, tol: f64) -> f64 {
    let mut v = power_start(dim);
    let mut growth_log: Vec<f64> = Vec::with_capacity(iters);
    let mut prev_growth = f64::NAN;
    for k in 1..=iters {
        let w = apply(&v);
        let g = norm2(&w);
        if g == 0.0 {
            return 0.0;
        }
        if g.is_nan() || g.is_infinite() {
            return g;
        }
        growth_log.push(g.ln());
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / g;
        }
        if k > 4 && (g - prev_growth).abs() < tol {
            return g;
        }
        prev_growth = g;
    }
    let tail = growth_log.len() / 4;
    let window = &growth_log[growth_log.len() - tail.max(1)..];
    (window.iter().sum::<f64>() / window.len() as f64).exp()
}

/// Largest eigenvalue of the symmetric positive semidefinite operator
/// `v ↦ apply(v)`; plain power method (monotone for SPD operators).
pub fn largest_eigenvalue_spd(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    dim: usize,
    iters: usize,
    tol: f64,
) -> f64 {
    power_iteration(apply, dim, iters, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn mul_vec_matches_brute_force() {
        let a = mat(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let v = [1.0, -1.0, 2.0];
        assert_eq!(a.mul_vec(&v), vec![5.0, 11.0]);
    }

    #[test]
    fn transpose_roundtrip() {
        let a = mat(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        assert_eq!(a.transpose().transpose(), a);
    }

    #[test]
    fn lu_solves_known_system() {
        // 2x + y = 5, x + 3y = 10 -> x = 1, y = 3
        let a = mat(&[&[2.0, 1.0], &[1.0, 3.0]]);
        let x = a.lu().unwrap().solve(&[5.0, 10.0]);
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn lu_reports_singular() {
        let a = mat(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(a.lu(), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn power_iteration_diagonal() {
        let a = mat(&[&[3.0, 0.0], &[0.0, 1.0]]);
        let est = power_iteration(|v| a.mul_vec(v), 2, 1000, 1e-10);
        assert!((est - 3.0).abs() < 1e-9);
    }

    #[test]
    fn power_iteration_zero_matrix() {
        let a = Matrix::zeros(3, 3);
        assert_eq!(power_iteration(|v| a.mul_vec(v), 3, 1000, 1e-10), 0.0);
    }

    #[test]
    fn malformed_rows_rejected() {
        assert_eq!(
            Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]),
            Err(LinalgError::MalformedRows)
        );
        assert_eq!(Matrix::from_rows(&[]), Err(LinalgError::MalformedRows));
    }
}
