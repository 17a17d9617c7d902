//! Randomized power-iteration error estimators and a dense reference
//! implementation for small problems.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dense::{cholesky, norm2, LowerTriangular, Mat};
use crate::factor::Factorization;
use crate::rng::{self, Stream};
use crate::sparse::SymSparseMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Relative change between the last two estimates.
    pub rel_achieved: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    pub rel_tol: f64,
    pub maxit: usize,
    pub seed: u64,
    pub stream: Stream,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-2,
            maxit: 200,
            seed: 0,
            stream: Stream::ApplyError,
        }
    }
}

/// Spectral norm of a symmetric operator by power iteration from a random
/// unit vector. The estimate after each step is `‖Op v‖` for the current unit
/// iterate `v`. Iteration stops once two successive estimates agree to
/// `rel_tol` and the change still to come, extrapolated geometrically from
/// the recent contraction of successive changes, is below `rel_tol / 2`.
pub fn power_norm<F>(mut op: F, dim: usize, opts: &PowerOptions) -> NormEstimate
where
    F: FnMut(&[f64], &mut [f64]),
{
    if dim == 0 {
        return NormEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
            rel_achieved: 0.0,
        };
    }
    let mut r = rng::stream(opts.seed, opts.stream);
    let mut v = rng::normal_vec(&mut r, dim);
    let s = norm2(&v);
    v.iter_mut().for_each(|x| *x /= s);
    let mut w = vec![0.0; dim];
    let mut prev: Option<f64> = None;
    let mut rel = f64::INFINITY;
    let mut prev_rel = f64::INFINITY;
    let mut rates = [f64::INFINITY; 3];
    for it in 1..=opts.maxit {
        op(&v, &mut w);
        let est = norm2(&w);
        if est == 0.0 || !est.is_finite() {
            return NormEstimate {
                value: est,
                iterations: it,
                converged: est == 0.0,
                rel_achieved: 0.0,
            };
        }
        if let Some(p) = prev {
            rel = (est - p).abs() / est;
            // Geometric extrapolation of the change still to come: a small
            // step taken at a slow contraction rate is not convergence.
            // Early ratios are distorted by fast-decaying components, so
            // the slowest of the last three is used.
            rates.rotate_left(1);
            rates[2] = rel / prev_rel;
            prev_rel = rel;
            let rate = rates.iter().copied().fold(0.0, f64::max);
            let remaining = if rel == 0.0 {
                0.0
            } else if rate < 1.0 {
                rel * rate / (1.0 - rate)
            } else {
                f64::INFINITY
            };
            // `‖Op v‖` only approaches the norm from below, so keep a
            // margin for the extrapolation's own error.
            if rel <= opts.rel_tol && remaining <= 0.5 * opts.rel_tol {
                return NormEstimate {
                    value: est,
                    iterations: it,
                    converged: true,
                    rel_achieved: rel,
                };
            }
        }
        prev = Some(est);
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / est;
        }
    }
    NormEstimate {
        value: prev.unwrap_or(0.0),
        iterations: opts.maxit,
        converged: false,
        rel_achieved: rel,
    }
}

/// Spectral norm of a general operator `E` from power iteration on `EᵀE`.
pub fn power_norm_general<F, G>(
    mut op: F,
    mut op_t: G,
    dim: usize,
    opts: &PowerOptions,
) -> NormEstimate
where
    F: FnMut(&[f64], &mut [f64]),
    G: FnMut(&[f64], &mut [f64]),
{
    let mut tmp = vec![0.0; dim];
    let mut est = power_norm(
        |x, y| {
            op(x, &mut tmp);
            op_t(&tmp, y);
        },
        dim,
        &PowerOptions {
            // The squared norm converges at twice the relative rate.
            rel_tol: 2.0 * opts.rel_tol,
            ..*opts
        },
    );
    est.value = est.value.sqrt();
    est.rel_achieved /= 2.0;
    est
}

/// A relative error estimate; `converged` is false if either power
/// iteration hit its cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// `e_a = ‖A − F‖ / ‖A‖`.
pub fn estimate_apply_error(a: &SymSparseMatrix, fz: &Factorization, seed: u64) -> ErrorEstimate {
    let opts = PowerOptions {
        seed,
        stream: Stream::ApplyError,
        ..PowerOptions::default()
    };
    let num = power_norm(
        |x, y| {
            a.matvec(x, y);
            let fx = fz.apply(x);
            for (yi, fi) in y.iter_mut().zip(fx) {
                *yi -= fi;
            }
        },
        a.order(),
        &opts,
    );
    let den = power_norm(|x, y| a.matvec(x, y), a.order(), &opts);
    ErrorEstimate {
        value: num.value / den.value,
        converged: num.converged && den.converged,
        iterations: num.iterations + den.iterations,
    }
}

/// `e_s = ‖I − G⁻¹ A G⁻ᵀ‖`.
pub fn estimate_solve_error(a: &SymSparseMatrix, fz: &Factorization, seed: u64) -> ErrorEstimate {
    let opts = PowerOptions {
        seed,
        stream: Stream::SolveError,
        ..PowerOptions::default()
    };
    let mut ax = vec![0.0; a.order()];
    let est = power_norm(
        |x, y| {
            let u = fz.apply_ginv_t(x);
            a.matvec(&u, &mut ax);
            let w = fz.apply_ginv(&ax);
            for ((yi, xi), wi) in y.iter_mut().zip(x).zip(w) {
                *yi = xi - wi;
            }
        },
        a.order(),
        &opts,
    );
    ErrorEstimate {
        value: est.value,
        converged: est.converged,
        iterations: est.iterations,
    }
}

/// `‖I − A F⁻¹‖`, estimated through its normal operator.
pub fn estimate_inverse_error(a: &SymSparseMatrix, fz: &Factorization, seed: u64) -> ErrorEstimate {
    let opts = PowerOptions {
        seed,
        stream: Stream::SolveError,
        ..PowerOptions::default()
    };
    let n = a.order();
    let mut buf = vec![0.0; n];
    let mut buf_t = vec![0.0; n];
    let est = power_norm_general(
        |x, y| {
            a.matvec(&fz.apply_inverse(x), &mut buf);
            for ((yi, xi), bi) in y.iter_mut().zip(x).zip(&buf) {
                *yi = xi - bi;
            }
        },
        |x, y| {
            a.matvec(x, &mut buf_t);
            let w = fz.apply_inverse(&buf_t);
            for ((yi, xi), wi) in y.iter_mut().zip(x).zip(w) {
                *yi = xi - wi;
            }
        },
        n,
        &opts,
    );
    ErrorEstimate {
        value: est.value,
        converged: est.converged,
        iterations: est.iterations,
    }
}

const DENSE_LIMIT: usize = 4096;

/// Dense reference computations for small problems.
pub struct DenseOracle {
    a: Mat,
    chol: LowerTriangular,
}

fn to_nalgebra(m: &Mat) -> DMatrix<f64> {
    DMatrix::from_column_slice(m.nrows(), m.ncols(), m.as_slice())
}

fn sym_spectral_norm(m: &Mat) -> f64 {
    to_nalgebra(m).symmetric_eigenvalues().amax()
}

impl DenseOracle {
    pub fn new(a: &SymSparseMatrix) -> Result<Self> {
        Self::from_dense(dense_checked(a)?)
    }

    pub fn from_dense(a: Mat) -> Result<Self> {
        if a.nrows() > DENSE_LIMIT {
            return Err(Error::SizeGuard {
                size: a.nrows(),
                limit: DENSE_LIMIT,
            });
        }
        let chol = cholesky(&a).map_err(|e| Error::Breakdown(format!("oracle matrix: {e}")))?;
        Ok(Self { a, chol })
    }

    pub fn matrix(&self) -> &Mat {
        &self.a
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.chol.solve_in_place(&mut x);
        self.chol.solve_t_in_place(&mut x);
        x
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = to_nalgebra(&self.a)
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn norm2(&self) -> f64 {
        sym_spectral_norm(&self.a)
    }

    pub fn condition(&self) -> f64 {
        let ev = self.eigenvalues();
        ev[ev.len() - 1] / ev[0]
    }

    /// Dense `F`, one apply per column.
    pub fn factored_matrix(&self, fz: &Factorization) -> Mat {
        let n = self.a.nrows();
        let mut f = Mat::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            f.col_mut(j).copy_from_slice(&fz.apply(&e));
            e[j] = 0.0;
        }
        f
    }

    /// Exact `‖A − F‖ / ‖A‖`.
    pub fn apply_error(&self, fz: &Factorization) -> f64 {
        let mut d = self.factored_matrix(fz);
        for (x, a) in d.as_mut_slice().iter_mut().zip(self.a.as_slice()) {
            *x = a - *x;
        }
        d.symmetrize();
        sym_spectral_norm(&d) / self.norm2()
    }

    /// Exact `‖I − G⁻¹ A G⁻ᵀ‖`.
    pub fn solve_error(&self, fz: &Factorization) -> f64 {
        let n = self.a.nrows();
        let mut ginv = Mat::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            ginv.col_mut(j).copy_from_slice(&fz.apply_ginv(&e));
            e[j] = 0.0;
        }
        let mut c = ginv.matmul(&self.a).matmul(&ginv.transpose());
        c.symmetrize();
        for (k, x) in c.as_mut_slice().iter_mut().enumerate() {
            *x = if k % (n + 1) == 0 { 1.0 - *x } else { -*x };
        }
        sym_spectral_norm(&c)
    }

    /// Exact `‖I − A F⁻¹‖`.
    pub fn inverse_error(&self, fz: &Factorization) -> f64 {
        let n = self.a.nrows();
        let mut finv = Mat::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            finv.col_mut(j).copy_from_slice(&fz.apply_inverse(&e));
            e[j] = 0.0;
        }
        let mut r = self.a.matmul(&finv);
        for (k, x) in r.as_mut_slice().iter_mut().enumerate() {
            *x = if k % (n + 1) == 0 { 1.0 - *x } else { -*x };
        }
        to_nalgebra(&r).singular_values().max()
    }
}

fn dense_checked(a: &SymSparseMatrix) -> Result<Mat> {
    if a.order() > DENSE_LIMIT {
        return Err(Error::SizeGuard {
            size: a.order(),
            limit: DENSE_LIMIT,
        });
    }
    Ok(a.to_dense())
}
