//! Symmetric sparse matrices stored by their lower triangle.

use std::io::{self, Write};

use crate::dense::Mat;

/// Symmetric sparse matrix in compressed row form. Only entries with
/// `col <= row` are stored; the upper triangle is implied by symmetry.
#[derive(Clone, Debug, PartialEq)]
pub struct SymSparseMatrix {
    order: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SymSparseMatrix {
    /// Builds from `(row, col, value)` triplets. Entries above the diagonal
    /// are mirrored into the lower triangle and duplicates are summed.
    pub fn from_triplets(
        order: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut lower: Vec<(usize, usize, f64)> = triplets
            .into_iter()
            .map(|(i, j, v)| {
                assert!(i < order && j < order, "triplet ({i}, {j}) out of range");
                if j <= i {
                    (i, j, v)
                } else {
                    (j, i, v)
                }
            })
            .collect();
        lower.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; order + 1];
        let mut cols = Vec::with_capacity(lower.len());
        let mut vals: Vec<f64> = Vec::with_capacity(lower.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in lower {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            cols.push(j);
            vals.push(v);
            row_ptr[i + 1] += 1;
        }
        for i in 0..order {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            order,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn identity(order: usize) -> Self {
        Self::from_triplets(order, (0..order).map(|i| (i, i, 1.0)))
    }

    /// Sparse copy of the lower triangle of a dense symmetric matrix.
    pub fn from_dense(m: &Mat) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        let n = m.nrows();
        let mut t = Vec::new();
        for j in 0..n {
            for i in j..n {
                if m[(i, j)] != 0.0 {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(n, t)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of stored (lower-triangle) entries.
    pub fn nnz_lower(&self) -> usize {
        self.vals.len()
    }

    /// Stored entries of row `i`: columns `<= i` with their values.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.vals[r].iter().copied())
    }

    /// All stored `(row, col, value)` entries with `col <= row`.
    pub fn iter_lower(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.order).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j <= i { (i, j) } else { (j, i) };
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.order).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.order);
        assert_eq!(y.len(), self.order);
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.order {
            let mut acc = 0.0;
            let xi = x[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                let v = self.vals[k];
                acc += v * x[j];
                if j != i {
                    y[j] += v * xi;
                }
            }
            y[i] += acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.order];
        self.matvec(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.order, self.order);
        for (i, j, v) in self.iter_lower() {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }

    /// Matrix Market coordinate listing of the lower triangle, 1-based.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
        writeln!(w, "{} {} {}", self.order, self.order, self.nnz_lower())?;
        for (i, j, v) in self.iter_lower() {
            writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }

    pub fn bytes(&self) -> usize {
        self.vals.len() * 8
            + self.cols.len() * std::mem::size_of::<usize>()
            + self.row_ptr.len() * 8
    }
}
