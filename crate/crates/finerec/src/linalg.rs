//! Minimal dense matrix and vector helpers for the embedding math.
//!
//! Everything is row-major `Vec<F>` storage; at desk scale this beats pulling
//! in a linear-algebra dependency and keeps gradient code transparent.

use crate::{count, Scalar};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = F::one();
        }
        m
    }

    pub fn from_data(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// `self * x`.
    pub fn matvec(&self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        let mut out = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            out.push(dot(self.row(r), x));
        }
        out
    }

    /// `self^T * x`.
    pub fn matvec_transpose(&self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.rows, "matvec_transpose dimension");
        let mut out = vec![F::zero(); self.cols];
        for r in 0..self.rows {
            let xr = x[r];
            if xr != F::zero() {
                axpy(&mut out, xr, self.row(r));
            }
        }
        out
    }

    /// `self += u * v^T`.
    pub fn add_outer(&mut self, u: &[F], v: &[F]) {
        assert_eq!(u.len(), self.rows, "outer rows");
        assert_eq!(v.len(), self.cols, "outer cols");
        for r in 0..self.rows {
            let ur = u[r];
            if ur != F::zero() {
                axpy(self.row_mut(r), ur, v);
            }
        }
    }
}

pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = F::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

pub fn norm<F: Scalar>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

/// `y += a * x`.
pub fn axpy<F: Scalar>(y: &mut [F], a: F, x: &[F]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * *xi;
    }
}

pub fn add_assign<F: Scalar>(y: &mut [F], x: &[F]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += *xi;
    }
}

pub fn scale<F: Scalar>(v: &mut [F], a: F) {
    for x in v.iter_mut() {
        *x *= a;
    }
}

/// Scale to unit L2 norm in place. A zero vector is left untouched and
/// reported as `false`.
pub fn normalize<F: Scalar>(v: &mut [F]) -> bool {
    let n = norm(v);
    if n == F::zero() {
        return false;
    }
    scale(v, F::one() / n);
    true
}

/// Cosine similarity, defined as 0 when either vector has zero norm.
pub fn cosine<F: Scalar>(a: &[F], b: &[F]) -> F {
    let na = norm(a);
    let nb = norm(b);
    if na == F::zero() || nb == F::zero() {
        return F::zero();
    }
    dot(a, b) / (na * nb)
}

/// Mean of the rows of `table` selected by `indices`; zero vector when
/// `indices` is empty.
pub fn mean_rows<F: Scalar>(table: &Matrix<F>, indices: &[usize]) -> Vec<F> {
    let mut out = vec![F::zero(); table.cols()];
    if indices.is_empty() {
        return out;
    }
    for &i in indices {
        add_assign(&mut out, table.row(i));
    }
    scale(&mut out, F::one() / count(indices.len()));
    out
}
