//! Minimal dense linear algebra: a column-major matrix, slice kernels, and a
//! Cholesky factorization used by the Newton fits and the Gaussian DGP.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix dimensions mismatch: {0}")]
    Dimension(&'static str),
    #[error("matrix is not positive definite (pivot {pivot} at column {col})")]
    NotPositiveDefinite { col: usize, pivot: f64 },
}

/// Dense column-major matrix. Column-major keeps coordinate-descent and
/// column-accumulation matvec passes contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Mat { n_rows, n_cols, data: vec![0.0; n_rows * n_cols] }
    }

    /// Build from column slices; all columns must share one length.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let n_cols = cols.len();
        let n_rows = cols.first().map(|c| c.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for c in cols {
            if c.len() != n_rows {
                return Err(LinalgError::Dimension("columns of unequal length"));
            }
            data.extend_from_slice(c);
        }
        Ok(Mat { n_rows, n_cols, data })
    }

    /// Column-major raw construction; `data.len()` must equal `n_rows * n_cols`.
    pub fn from_raw(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != n_rows * n_cols {
            return Err(LinalgError::Dimension("raw buffer length"));
        }
        Ok(Mat { n_rows, n_cols, data })
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[c * self.n_rows + r]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[c * self.n_rows + r] = v;
    }

    /// `self * v`, accumulated column by column.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.n_cols);
        let mut out = vec![0.0; self.n_rows];
        for (j, &vj) in v.iter().enumerate() {
            if vj != 0.0 {
                axpy(vj, self.col(j), &mut out);
            }
        }
        out
    }

    /// Copy of the listed rows, preserving column order.
    pub fn subset_rows(&self, rows: &[usize]) -> Mat {
        let mut out = Mat::zeros(rows.len(), self.n_cols);
        for j in 0..self.n_cols {
            let src = self.col(j);
            let dst = out.col_mut(j);
            for (t, &r) in rows.iter().enumerate() {
                dst[t] = src[r];
            }
        }
        out
    }

    pub fn iter_all(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().copied()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for i in 0..x.len() {
        y[i] += alpha * x[i];
    }
}

/// In-place lower Cholesky of a symmetric positive-definite matrix stored as a
/// full column-major square. The strict upper triangle is left untouched.
pub fn cholesky_in_place(a: &mut [f64], dim: usize) -> Result<(), LinalgError> {
    debug_assert_eq!(a.len(), dim * dim);
    for j in 0..dim {
        let mut d = a[j * dim + j];
        for k in 0..j {
            let l = a[k * dim + j];
            d -= l * l;
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { col: j, pivot: d });
        }
        let d = libm::sqrt(d);
        a[j * dim + j] = d;
        for i in (j + 1)..dim {
            let mut s = a[j * dim + i];
            for k in 0..j {
                s -= a[k * dim + i] * a[k * dim + j];
            }
            a[j * dim + i] = s / d;
        }
    }
    Ok(())
}

/// Solve `L L' x = b` given the lower factor from [`cholesky_in_place`].
pub fn cholesky_solve(l: &[f64], dim: usize, b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(b.len(), dim);
    let mut x = b.to_vec();
    // forward: L y = b
    for i in 0..dim {
        let mut s = x[i];
        for k in 0..i {
            s -= l[k * dim + i] * x[k];
        }
        x[i] = s / l[i * dim + i];
    }
    // backward: L' x = y
    for i in (0..dim).rev() {
        let mut s = x[i];
        for k in (i + 1)..dim {
            s -= l[i * dim + k] * x[k];
        }
        x[i] = s / l[i * dim + i];
    }
    x
}
