//! Column interpolative decomposition through Householder QR with column
//! pivoting.
//!
//! For `M` with columns `I`, the decomposition returns skeleton columns `Î`,
//! redundant columns `Ĩ` and `T` with `M[:, Ĩ] ≈ M[:, Î] T`. Pivoting stops
//! at the first step whose residual column norm is at most `ε |R₁₁|`, so the
//! residual `M[:, Ĩ] − M[:, Î] T` (the trailing `R₂₂` block) satisfies
//! `‖·‖_F ≤ √|Ĩ| · ε · |R₁₁| ≤ √|I| · ε · ‖M‖_F`.

use super::{axpy, dot, norm2, Mat};

#[derive(Clone, Debug, PartialEq)]
pub struct IdResult {
    /// Skeleton columns in pivot order.
    pub skeleton: Vec<usize>,
    /// Redundant columns in pivot order.
    pub redundant: Vec<usize>,
    /// Interpolation matrix, `|skeleton| × |redundant|`.
    pub interp: Mat,
}

impl IdResult {
    pub fn rank(&self) -> usize {
        self.skeleton.len()
    }

    /// `‖M[:, Ĩ] − M[:, Î] T‖_F` for the matrix the decomposition was built from.
    pub fn residual_fro(&self, m: &Mat) -> f64 {
        let rd = m.select(&(0..m.nrows()).collect::<Vec<_>>(), &self.redundant);
        let sk = m.select(&(0..m.nrows()).collect::<Vec<_>>(), &self.skeleton);
        let mut r = sk.matmul(&self.interp);
        for (a, b) in r.as_mut_slice().iter_mut().zip(rd.as_slice()) {
            *a = b - *a;
        }
        r.norm_fro()
    }
}

/// Interpolative decomposition of the columns of `m` to relative precision
/// `eps`. With `eps = 0` only columns whose residual vanishes exactly are
/// marked redundant. A zero (or row-less) matrix has every column redundant.
pub fn interpolative_decomposition(m: &Mat, eps: f64) -> IdResult {
    assert!(eps >= 0.0, "ID tolerance must be non-negative");
    column_id(m, eps, usize::MAX)
}

/// Interpolative decomposition keeping at most `rank` skeleton columns
/// (fewer only if the matrix has exactly vanishing residual columns).
pub fn interpolative_decomposition_rank(m: &Mat, rank: usize) -> IdResult {
    column_id(m, 0.0, rank)
}

/// How the skeleton count of an ID is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankRule {
    /// Relative tolerance `ε`.
    Tolerance(f64),
    /// A fixed number of skeleton columns.
    Fixed(usize),
}

impl RankRule {
    pub fn decompose(self, m: &Mat) -> IdResult {
        match self {
            RankRule::Tolerance(eps) => interpolative_decomposition(m, eps),
            RankRule::Fixed(k) => interpolative_decomposition_rank(m, k),
        }
    }
}

fn column_id(m: &Mat, eps: f64, max_rank: usize) -> IdResult {
    let (nr, nc) = m.shape();
    let mut a = m.clone();
    let mut perm: Vec<usize> = (0..nc).collect();
    let mut norms: Vec<f64> = (0..nc).map(|j| norm2(a.col(j))).collect();
    let mut norms_ref = norms.clone();
    let kmax = nr.min(nc);
    let tol3z = f64::EPSILON.sqrt();

    let mut r11 = 0.0;
    let mut rank = kmax;
    for k in 0..kmax {
        if k >= max_rank {
            rank = k;
            break;
        }
        let p = argmax_first(&norms[k..]) + k;
        if p != k {
            swap_cols(&mut a, k, p);
            perm.swap(k, p);
            norms.swap(k, p);
            norms_ref.swap(k, p);
        }
        let nk = norm2(&a.col(k)[k..]);
        if k == 0 {
            r11 = nk;
        }
        if nk == 0.0 || nk <= eps * r11 {
            rank = k;
            break;
        }

        // Householder reflector H = I − τ v vᵀ with v[0] = 1 mapping the
        // pivot column to (β, 0, …, 0).
        let alpha = a[(k, k)];
        let beta = if alpha >= 0.0 { -nk } else { nk };
        let tau = (beta - alpha) / beta;
        let scale = 1.0 / (alpha - beta);
        {
            let col = a.col_mut(k);
            col[k] = beta;
            col[k + 1..].iter_mut().for_each(|v| *v *= scale);
        }
        let mut v = Vec::with_capacity(nr - k);
        v.push(1.0);
        v.extend_from_slice(&a.col(k)[k + 1..]);

        for j in k + 1..nc {
            let cj = &mut a.col_mut(j)[k..];
            let w = tau * dot(&v, cj);
            if w != 0.0 {
                axpy(-w, &v, cj);
            }
            if norms[j] != 0.0 {
                let ratio = cj[0].abs() / norms[j];
                let t = (1.0 - ratio * ratio).max(0.0);
                let t2 = t * (norms[j] / norms_ref[j]).powi(2);
                if t2 <= tol3z {
                    norms[j] = norm2(&cj[1..]);
                    norms_ref[j] = norms[j];
                } else {
                    norms[j] *= t.sqrt();
                }
            }
        }
    }
    if kmax == 0 || r11 == 0.0 {
        // A zero matrix, or a zero rank request.
        rank = 0;
    }

    // T = R₁₁⁻¹ R₁₂ by back substitution.
    let nred = nc - rank;
    let mut interp = Mat::zeros(rank, nred);
    for c in 0..nred {
        let src = &a.col(rank + c)[..rank];
        let dst = interp.col_mut(c);
        dst.copy_from_slice(src);
        for i in (0..rank).rev() {
            let mut s = dst[i];
            for j in i + 1..rank {
                s -= a[(i, j)] * dst[j];
            }
            dst[i] = s / a[(i, i)];
        }
    }

    IdResult {
        skeleton: perm[..rank].to_vec(),
        redundant: perm[rank..].to_vec(),
        interp,
    }
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn swap_cols(a: &mut Mat, i: usize, j: usize) {
    let n = a.nrows();
    let (lo, hi) = (i.min(j), i.max(j));
    let (left, right) = a.as_mut_slice().split_at_mut(hi * n);
    left[lo * n..(lo + 1) * n].swap_with_slice(&mut right[..n]);
}
