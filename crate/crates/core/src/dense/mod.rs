//! Dense linear algebra used by the factorization: a column-major matrix
//! type, GEMM through `matrixmultiply`, blocked Cholesky, triangular solves
//! and the interpolative decomposition.

mod chol;
mod id;
mod tri;

pub use chol::{cholesky, LowerTriangular, NotSpd};
pub use id::{interpolative_decomposition, interpolative_decomposition_rank, IdResult, RankRule};
pub use tri::{tri_solve, Side, Transpose};

use std::fmt;
use std::ops::{Index, IndexMut};

/// Column-major dense matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Mat {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(nrows * ncols);
        for j in 0..ncols {
            for i in 0..nrows {
                data.push(f(i, j));
            }
        }
        Self { nrows, ncols, data }
    }

    /// Builds a matrix from row slices; every row must have the same length.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == ncols), "ragged rows");
        Self::from_fn(nrows, ncols, |i, j| rows[i][j])
    }

    pub fn from_col_major(nrows: usize, ncols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), nrows * ncols);
        Self { nrows, ncols, data }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.ncols, self.nrows, |i, j| self[(j, i)])
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Copy of the contiguous block starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, nrows: usize, ncols: usize) -> Mat {
        assert!(r0 + nrows <= self.nrows && c0 + ncols <= self.ncols);
        let mut data = Vec::with_capacity(nrows * ncols);
        for j in c0..c0 + ncols {
            data.extend_from_slice(&self.col(j)[r0..r0 + nrows]);
        }
        Mat { nrows, ncols, data }
    }

    /// Submatrix selected by explicit row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Mat {
        Mat::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }

    pub fn as_ref(&self) -> MatRef<'_> {
        MatRef {
            data: &self.data,
            nrows: self.nrows,
            ncols: self.ncols,
            rs: 1,
            cs: self.nrows.max(1),
        }
    }

    pub fn as_mut(&mut self) -> MatMut<'_> {
        let cs = self.nrows.max(1);
        MatMut {
            data: &mut self.data,
            nrows: self.nrows,
            ncols: self.ncols,
            cs,
        }
    }

    /// `self * rhs`.
    pub fn matmul(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.ncols, rhs.nrows, "matmul: inner dimension mismatch");
        let mut out = Mat::zeros(self.nrows, rhs.ncols);
        gemm(1.0, self.as_ref(), rhs.as_ref(), 0.0, out.as_mut());
        out
    }

    /// `selfᵀ * rhs`.
    pub fn tr_matmul(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.nrows, rhs.nrows, "tr_matmul: inner dimension mismatch");
        let mut out = Mat::zeros(self.ncols, rhs.ncols);
        gemm(1.0, self.as_ref().t(), rhs.as_ref(), 0.0, out.as_mut());
        out
    }

    /// `y = alpha * self * x + beta * y`.
    pub fn gemv(&self, alpha: f64, x: &[f64], beta: f64, y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        if beta != 1.0 {
            y.iter_mut().for_each(|v| *v *= beta);
        }
        for (j, &xj) in x.iter().enumerate() {
            let s = alpha * xj;
            if s != 0.0 {
                axpy(s, self.col(j), y);
            }
        }
    }

    /// `y = alpha * selfᵀ * x + beta * y`.
    pub fn gemv_t(&self, alpha: f64, x: &[f64], beta: f64, y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        for (j, yj) in y.iter_mut().enumerate() {
            *yj = beta * *yj + alpha * dot(self.col(j), x);
        }
    }

    /// Replaces the matrix by `(A + Aᵀ)/2`. Square matrices only.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.nrows, self.ncols);
        let n = self.nrows;
        for j in 0..n {
            for i in j + 1..n {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    pub fn bytes(&self) -> usize {
        self.data.len() * std::mem::size_of::<f64>()
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.nrows && j < self.ncols);
        &self.data[i + j * self.nrows]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.nrows && j < self.ncols);
        &mut self.data[i + j * self.nrows]
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.nrows, self.ncols)?;
        for i in 0..self.nrows.min(12) {
            write!(f, "  ")?;
            for j in 0..self.ncols.min(12) {
                write!(f, "{:>12.5e} ", self[(i, j)])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Read-only strided view. Element `(i, j)` lives at `data[i * rs + j * cs]`.
#[derive(Clone, Copy)]
pub struct MatRef<'a> {
    data: &'a [f64],
    nrows: usize,
    ncols: usize,
    rs: usize,
    cs: usize,
}

impl<'a> MatRef<'a> {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Transposed view (no copy).
    pub fn t(self) -> MatRef<'a> {
        MatRef {
            data: self.data,
            nrows: self.ncols,
            ncols: self.nrows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    pub fn sub(self, r0: usize, c0: usize, nrows: usize, ncols: usize) -> MatRef<'a> {
        assert!(r0 + nrows <= self.nrows && c0 + ncols <= self.ncols);
        let data = if nrows == 0 || ncols == 0 {
            &self.data[..0]
        } else {
            &self.data[r0 * self.rs + c0 * self.cs..]
        };
        MatRef {
            data,
            nrows,
            ncols,
            rs: self.rs,
            cs: self.cs,
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.rs + j * self.cs]
    }

    fn covers(&self) -> bool {
        self.nrows == 0
            || self.ncols == 0
            || (self.nrows - 1) * self.rs + (self.ncols - 1) * self.cs < self.data.len()
    }
}

/// Mutable column-major view with column stride `cs`.
pub struct MatMut<'a> {
    data: &'a mut [f64],
    nrows: usize,
    ncols: usize,
    cs: usize,
}

impl<'a> MatMut<'a> {
    pub fn sub(self, r0: usize, c0: usize, nrows: usize, ncols: usize) -> MatMut<'a> {
        assert!(r0 + nrows <= self.nrows && c0 + ncols <= self.ncols);
        let cs = self.cs;
        let data = if nrows == 0 || ncols == 0 {
            &mut self.data[..0]
        } else {
            &mut self.data[r0 + c0 * cs..]
        };
        MatMut {
            data,
            nrows,
            ncols,
            cs,
        }
    }

    fn covers(&self) -> bool {
        self.nrows == 0
            || self.ncols == 0
            || (self.nrows - 1) + (self.ncols - 1) * self.cs < self.data.len()
    }
}

/// `c = alpha * a * b + beta * c`.
pub fn gemm(alpha: f64, a: MatRef<'_>, b: MatRef<'_>, beta: f64, c: MatMut<'_>) {
    assert_eq!(a.ncols, b.nrows, "gemm: inner dimension mismatch");
    assert_eq!(
        (a.nrows, b.ncols),
        (c.nrows, c.ncols),
        "gemm: output shape mismatch"
    );
    if c.nrows == 0 || c.ncols == 0 {
        return;
    }
    if a.ncols == 0 {
        for j in 0..c.ncols {
            for v in &mut c.data[j * c.cs..j * c.cs + c.nrows] {
                *v = if beta == 0.0 { 0.0 } else { beta * *v };
            }
        }
        return;
    }
    assert!(
        a.covers() && b.covers() && c.covers(),
        "gemm: view out of bounds"
    );
    // SAFETY: every view was checked above to address only elements inside
    // its backing slice, and `c` is borrowed mutably so it cannot alias `a`
    // or `b`.
    unsafe {
        matrixmultiply::dgemm(
            a.nrows,
            a.ncols,
            b.ncols,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr(),
            1,
            c.cs as isize,
        );
    }
}

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = [0.0; 4];
    let chunks = x.len() / 4;
    for k in 0..chunks {
        let b = 4 * k;
        acc[0] += x[b] * y[b];
        acc[1] += x[b + 1] * y[b + 1];
        acc[2] += x[b + 2] * y[b + 2];
        acc[3] += x[b + 3] * y[b + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..x.len() {
        s += x[k] * y[k];
    }
    s
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}
