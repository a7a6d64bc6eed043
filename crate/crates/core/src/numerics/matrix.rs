use serde::{Deserialize, Serialize};

use crate::error::{Result, SaeError};
use crate::scalar::Scalar;

/// Row-major dense matrix of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn new(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(SaeError::invalid(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(SaeError::invalid(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SaeError::invalid(format!(
                "matrix entry ({}, {}) is not finite",
                i / cols,
                i % cols
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            values: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(SaeError::invalid("ragged rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub(crate) fn from_parts_unchecked(rows: usize, cols: usize, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Self { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.values[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        let cols = self.cols;
        &mut self.values[r * cols..(r + 1) * cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[T]> {
        self.values.chunks_exact(self.cols)
    }

    /// Gathers the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(SaeError::invalid("cannot select zero rows"));
        }
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(SaeError::invalid(format!(
                    "row {i} out of range for {} rows",
                    self.rows
                )));
            }
            values.extend_from_slice(self.row(i));
        }
        Ok(Self::from_parts_unchecked(indices.len(), self.cols, values))
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.values[c * self.rows + r] = self.values[r * self.cols + c];
            }
        }
        out
    }

    /// `self · v`.
    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.cols {
            return Err(SaeError::invalid(format!(
                "matvec: matrix has {} columns, vector has {} entries",
                self.cols,
                v.len()
            )));
        }
        Ok(self.row_iter().map(|row| dot(row, v)).collect())
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(SaeError::invalid(format!(
                "matmul: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        gemm_nn(
            self.rows,
            self.cols,
            other.cols,
            &self.values,
            &other.values,
            &mut out.values,
        );
        Ok(out)
    }

    pub fn to_f64(&self) -> DenseMatrix<f64> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|v| v.to_f64_lossless()).collect(),
        }
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc = acc + x * y;
    }
    acc
}

#[cfg(test)]
#[inline]
pub(crate) fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

fn gemm_checked<T: Scalar>(
    (m, k, n): (usize, usize, usize),
    (a, rsa, csa): (&[T], usize, usize),
    (b, rsb, csb): (&[T], usize, usize),
    c: &mut [T],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n, "gemm output too short");
    if k == 0 {
        return;
    }
    assert!((m - 1) * rsa + (k - 1) * csa < a.len(), "gemm left operand too short");
    assert!((k - 1) * rsb + (n - 1) * csb < b.len(), "gemm right operand too short");
    T::gemm_acc(
        (m, k, n),
        (a, rsa as isize, csa as isize),
        (b, rsb as isize, csb as isize),
        (c, n as isize),
    );
}

/// `c += a · b` with `a: m×k`, `b: k×n`, all row-major.
pub(crate) fn gemm_nn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    gemm_checked((m, k, n), (a, k, 1), (b, n, 1), c);
}

/// `c += a · bᵀ` with `a: m×k`, `b: n×k`.
pub(crate) fn gemm_nt<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    gemm_checked((m, k, n), (a, k, 1), (b, 1, k), c);
}

/// `c += aᵀ · b` with `a: m×k`, `b: m×n`, giving `k×n`.
pub(crate) fn gemm_tn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    gemm_checked((k, m, n), (a, 1, k), (b, n, 1), c);
}
