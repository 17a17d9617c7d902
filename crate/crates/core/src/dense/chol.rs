use thiserror::Error;

use super::{axpy, dot, gemm, Mat};

const BLOCK: usize = 64;

/// A Cholesky pivot was not strictly positive. `pivot` is zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("matrix is not positive definite: pivot {pivot} is not strictly positive")]
pub struct NotSpd {
    pub pivot: usize,
}

/// Dense lower-triangular factor with strictly positive diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerTriangular(Mat);

impl LowerTriangular {
    /// Wraps `m`, keeping only its lower triangle. Fails if a diagonal entry
    /// is not strictly positive.
    pub fn new(mut m: Mat) -> Result<Self, NotSpd> {
        assert_eq!(m.nrows(), m.ncols(), "triangular factor must be square");
        let n = m.nrows();
        for j in 0..n {
            if !(m[(j, j)] > 0.0) {
                return Err(NotSpd { pivot: j });
            }
            for i in 0..j {
                m[(i, j)] = 0.0;
            }
        }
        Ok(Self(m))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    pub fn bytes(&self) -> usize {
        self.0.bytes()
    }

    /// `L Lᵀ` as a dense matrix.
    pub fn reconstruct(&self) -> Mat {
        let mut out = Mat::zeros(self.order(), self.order());
        gemm(1.0, self.0.as_ref(), self.0.as_ref().t(), 0.0, out.as_mut());
        out
    }

    /// In place `x ← L⁻¹ x`.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let l = &self.0;
        let n = l.nrows();
        assert_eq!(x.len(), n);
        for j in 0..n {
            let col = l.col(j);
            let xj = x[j] / col[j];
            x[j] = xj;
            if xj != 0.0 {
                axpy(-xj, &col[j + 1..], &mut x[j + 1..]);
            }
        }
    }

    /// In place `x ← L⁻ᵀ x`.
    pub fn solve_t_in_place(&self, x: &mut [f64]) {
        let l = &self.0;
        let n = l.nrows();
        assert_eq!(x.len(), n);
        for j in (0..n).rev() {
            let col = l.col(j);
            x[j] = (x[j] - dot(&col[j + 1..], &x[j + 1..])) / col[j];
        }
    }

    /// In place `x ← L x`.
    pub fn mul_in_place(&self, x: &mut [f64]) {
        let l = &self.0;
        let n = l.nrows();
        assert_eq!(x.len(), n);
        for j in (0..n).rev() {
            let col = l.col(j);
            let xj = x[j];
            x[j] = col[j] * xj;
            if xj != 0.0 {
                axpy(xj, &col[j + 1..], &mut x[j + 1..]);
            }
        }
    }

    /// In place `x ← Lᵀ x`.
    pub fn mul_t_in_place(&self, x: &mut [f64]) {
        let l = &self.0;
        let n = l.nrows();
        assert_eq!(x.len(), n);
        for j in 0..n {
            let col = l.col(j);
            x[j] = dot(&col[j..], &x[j..]);
        }
    }

    /// In place `B ← L⁻¹ B` for a block of right-hand sides.
    pub fn solve_mat_in_place(&self, b: &mut Mat) {
        let l = &self.0;
        let n = l.nrows();
        assert_eq!(b.nrows(), n);
        let nrhs = b.ncols();
        let mut k0 = 0;
        while k0 < n {
            let kb = BLOCK.min(n - k0);
            for c in 0..nrhs {
                let bc = b.col_mut(c);
                for j in k0..k0 + kb {
                    let col = l.col(j);
                    let xj = bc[j] / col[j];
                    bc[j] = xj;
                    if xj != 0.0 {
                        axpy(-xj, &col[j + 1..k0 + kb], &mut bc[j + 1..k0 + kb]);
                    }
                }
            }
            let rest = n - k0 - kb;
            if rest > 0 && nrhs > 0 {
                let x = b.block(k0, 0, kb, nrhs);
                gemm(
                    -1.0,
                    l.as_ref().sub(k0 + kb, k0, rest, kb),
                    x.as_ref(),
                    1.0,
                    b.as_mut().sub(k0 + kb, 0, rest, nrhs),
                );
            }
            k0 += kb;
        }
    }

    /// In place `B ← L⁻ᵀ B` for a block of right-hand sides.
    pub fn solve_t_mat_in_place(&self, b: &mut Mat) {
        let l = &self.0;
        let n = l.nrows();
        assert_eq!(b.nrows(), n);
        let nrhs = b.ncols();
        let mut end = n;
        while end > 0 {
            let kb = BLOCK.min(end);
            let k0 = end - kb;
            let rest = n - end;
            if rest > 0 && nrhs > 0 {
                let x = b.block(end, 0, rest, nrhs);
                gemm(
                    -1.0,
                    l.as_ref().sub(end, k0, rest, kb).t(),
                    x.as_ref(),
                    1.0,
                    b.as_mut().sub(k0, 0, kb, nrhs),
                );
            }
            for c in 0..nrhs {
                let bc = b.col_mut(c);
                for j in (k0..end).rev() {
                    let col = l.col(j);
                    bc[j] = (bc[j] - dot(&col[j + 1..end], &bc[j + 1..end])) / col[j];
                }
            }
            end = k0;
        }
    }
}

/// Cholesky factorization `S = L Lᵀ` of a symmetric matrix (only the lower
/// triangle of `s` is read). Fails with the index of the first pivot that is
/// not strictly positive; there is no tolerance on the pivot test.
pub fn cholesky(s: &Mat) -> Result<LowerTriangular, NotSpd> {
    assert_eq!(s.nrows(), s.ncols(), "cholesky of a non-square matrix");
    let n = s.nrows();
    let mut a = s.clone();
    let mut k0 = 0;
    while k0 < n {
        let kb = BLOCK.min(n - k0);
        let kend = k0 + kb;
        // Diagonal block, unblocked left-looking within the panel.
        for j in k0..kend {
            for p in k0..j {
                let ljp = a[(j, p)];
                if ljp != 0.0 {
                    let (cp, cj) = two_cols(&mut a, p, j);
                    axpy(-ljp, &cp[j..kend], &mut cj[j..kend]);
                }
            }
            let d = a[(j, j)];
            if !(d > 0.0) {
                return Err(NotSpd { pivot: j });
            }
            let ljj = d.sqrt();
            let cj = a.col_mut(j);
            cj[j] = ljj;
            let inv = 1.0 / ljj;
            cj[j + 1..kend].iter_mut().for_each(|v| *v *= inv);
        }
        // Panel below the diagonal block: A21 ← A21 L11⁻ᵀ.
        if kend < n {
            for j in k0..kend {
                for p in k0..j {
                    let ljp = a[(j, p)];
                    if ljp != 0.0 {
                        let (cp, cj) = two_cols(&mut a, p, j);
                        axpy(-ljp, &cp[kend..], &mut cj[kend..]);
                    }
                }
                let inv = 1.0 / a[(j, j)];
                a.col_mut(j)[kend..].iter_mut().for_each(|v| *v *= inv);
            }
            // Trailing update of the lower triangle, one block column at a time.
            let panel = a.block(kend, k0, n - kend, kb);
            let mut j0 = kend;
            while j0 < n {
                let jb = BLOCK.min(n - j0);
                gemm(
                    -1.0,
                    panel.as_ref().sub(j0 - kend, 0, n - j0, kb),
                    panel.as_ref().sub(j0 - kend, 0, jb, kb).t(),
                    1.0,
                    a.as_mut().sub(j0, j0, n - j0, jb),
                );
                j0 += jb;
            }
        }
        k0 = kend;
    }
    for j in 0..n {
        for i in 0..j {
            a[(i, j)] = 0.0;
        }
    }
    Ok(LowerTriangular(a))
}

/// Borrow column `p` immutably and column `j` mutably, `p < j`.
fn two_cols(a: &mut Mat, p: usize, j: usize) -> (&[f64], &mut [f64]) {
    debug_assert!(p < j);
    let n = a.nrows();
    let (lo, hi) = a.as_mut_slice().split_at_mut(j * n);
    (&lo[p * n..(p + 1) * n], &mut hi[..n])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize, seed: u64) -> Mat {
        // Deterministic pseudo-random SPD matrix: B Bᵀ + n I.
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let b = Mat::from_fn(n, n, |_, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        });
        let mut s = b.matmul(&b.transpose());
        for i in 0..n {
            s[(i, i)] += n as f64 * 0.1;
        }
        s
    }

    #[test]
    fn scalar() {
        let l = cholesky(&Mat::from_rows(&[&[4.0]])).unwrap();
        assert_eq!(l.as_mat()[(0, 0)], 2.0);
    }

    #[test]
    fn two_by_two_by_hand() {
        let l = cholesky(&Mat::from_rows(&[&[4.0, 2.0], &[2.0, 3.0]])).unwrap();
        let m = l.as_mat();
        assert!((m[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((m[(1, 0)] - 1.0).abs() < 1e-15);
        assert_eq!(m[(0, 1)], 0.0);
        assert!((m[(1, 1)] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn indefinite_fails_at_second_pivot() {
        let err = cholesky(&Mat::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]])).unwrap_err();
        assert_eq!(err, NotSpd { pivot: 1 });
    }

    #[test]
    fn zero_pivot_is_rejected() {
        let err = cholesky(&Mat::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap_err();
        assert_eq!(err.pivot, 1);
    }

    #[test]
    fn blocked_path_reconstructs() {
        for &n in &[1, 5, 63, 64, 65, 130, 200] {
            let s = spd(n, n as u64);
            let l = cholesky(&s).unwrap();
            let mut diff = l.reconstruct();
            for (d, v) in diff.as_mut_slice().iter_mut().zip(s.as_slice()) {
                *d -= v;
            }
            assert!(diff.norm_fro() <= 1e-12 * s.norm_fro(), "n = {n}");
        }
    }

    #[test]
    fn vector_and_block_solves_agree() {
        let n = 150;
        let s = spd(n, 3);
        let l = cholesky(&s).unwrap();
        let b = Mat::from_fn(n, 3, |i, j| (i as f64 * 0.1 - j as f64).sin());
        let mut x = b.clone();
        l.solve_mat_in_place(&mut x);
        let mut y = b.clone();
        l.solve_t_mat_in_place(&mut y);
        for c in 0..3 {
            let mut v = b.col(c).to_vec();
            l.solve_in_place(&mut v);
            let mut w = b.col(c).to_vec();
            l.solve_t_in_place(&mut w);
            for i in 0..n {
                assert!((v[i] - x[(i, c)]).abs() < 1e-10);
                assert!((w[i] - y[(i, c)]).abs() < 1e-10);
            }
            // Round trip through the multiplications.
            l.mul_in_place(&mut v);
            l.mul_t_in_place(&mut w);
            for i in 0..n {
                assert!((v[i] - b[(i, c)]).abs() < 1e-10);
                assert!((w[i] - b[(i, c)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn wrapper_rejects_nonpositive_diagonal() {
        let m = Mat::from_rows(&[&[2.0, 0.0], &[1.0, 0.0]]);
        assert_eq!(LowerTriangular::new(m).unwrap_err().pivot, 1);
    }
}
