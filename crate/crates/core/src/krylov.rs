//! Preconditioned conjugate gradients.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::dense::{dot, norm2, Mat};
use crate::factor::Factorization;
use crate::sparse::SymSparseMatrix;
use crate::{Error, Result};

/// A symmetric positive definite operator `y = A x`.
pub trait LinearOperator {
    fn order(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// `r = b − A x`.
    fn residual(&self, x: &[f64], b: &[f64], r: &mut [f64]) {
        self.apply(x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
    }
}

impl LinearOperator for SymSparseMatrix {
    fn order(&self) -> usize {
        SymSparseMatrix::order(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }

    /// Compensated evaluation: near convergence `b` and `A x` agree to
    /// almost every digit and the plain difference is dominated by rounding.
    fn residual(&self, x: &[f64], b: &[f64], r: &mut [f64]) {
        let mut c = vec![0.0; b.len()];
        r.copy_from_slice(b);
        for (i, j, v) in self.iter_lower() {
            compensated_add(&mut r[i], &mut c[i], -v, x[j]);
            if i != j {
                compensated_add(&mut r[j], &mut c[j], -v, x[i]);
            }
        }
        for (ri, ci) in r.iter_mut().zip(c) {
            *ri += ci;
        }
    }
}

/// `s + c += a b` with the rounding errors of the product and the sum
/// collected in `c`.
#[inline]
fn compensated_add(s: &mut f64, c: &mut f64, a: f64, b: f64) {
    let p = a * b;
    let pe = a.mul_add(b, -p);
    let t = *s + p;
    let z = t - *s;
    *c += (*s - (t - z)) + (p - z) + pe;
    *s = t;
}

impl LinearOperator for Mat {
    fn order(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.gemv(1.0, x, 0.0, y)
    }
}

/// Closure-backed operator.
pub struct FnOperator<F> {
    pub order: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn order(&self) -> usize {
        self.order
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

/// An SPD approximation of `A⁻¹`: `z = M⁻¹ r`.
pub trait Preconditioner {
    fn precondition(&self, r: &[f64], z: &mut [f64]);
}

impl Preconditioner for Factorization {
    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        self.apply_inverse_in_place(z);
    }
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgOptions {
    /// Target relative residual `‖b − A x‖ / ‖b‖`.
    pub tol: f64,
    pub maxit: usize,
    /// Recompute the true residual every this many iterations.
    pub refresh: usize,
}

impl Default for PcgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            maxit: 500,
            refresh: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub rel_residual: f64,
    /// Relative residual after each iteration; entry 0 is the initial one.
    pub history: Vec<f64>,
    pub wall_time_s: f64,
    pub converged: bool,
    pub hit_maxit: bool,
}

impl SolveReport {
    pub fn write_history_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["iteration", "relative_residual"])?;
        for (k, r) in self.history.iter().enumerate() {
            out.write_record([k.to_string(), format!("{r:e}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Solves `A x = b` from `x = 0`, preconditioned by `F⁻¹` when a
/// factorization is given.
pub fn pcg(
    a: &SymSparseMatrix,
    b: &[f64],
    precond: Option<&Factorization>,
    opts: &PcgOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    match precond {
        Some(f) => pcg_with(a, b, f, opts, |_, _| {}),
        None => pcg_with(a, b, &IdentityPreconditioner, opts, |_, _| {}),
    }
}

/// Plain CG on a closure operator; returns the solution or an error when
/// the target is not reached.
pub fn cg_solve_operator<F: Fn(&[f64], &mut [f64])>(
    f: F,
    b: &[f64],
    opts: &PcgOptions,
) -> Result<Vec<f64>> {
    let op = FnOperator { order: b.len(), f };
    let (x, rep) = pcg_with(&op, b, &IdentityPreconditioner, opts, |_, _| {})?;
    if !rep.converged {
        return Err(Error::Estimator {
            what: "conjugate gradients",
            iterations: rep.iterations,
            partial: rep.rel_residual,
        });
    }
    Ok(x)
}

/// PCG with an observer called as `observe(k, x_k)` for every iterate,
/// `k = 0` being the initial guess.
pub fn pcg_with<A, P, O>(
    a: &A,
    b: &[f64],
    m: &P,
    opts: &PcgOptions,
    mut observe: O,
) -> Result<(Vec<f64>, SolveReport)>
where
    A: LinearOperator + ?Sized,
    P: Preconditioner + ?Sized,
    O: FnMut(usize, &[f64]),
{
    let n = a.order();
    if b.len() != n {
        return Err(Error::Config(format!(
            "right-hand side has length {}, expected {n}",
            b.len()
        )));
    }
    if !(opts.tol > 0.0) || opts.refresh == 0 {
        return Err(Error::Config(
            "PCG tolerance and refresh interval must be positive".into(),
        ));
    }
    let start = Instant::now();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    observe(0, &x);
    if bnorm == 0.0 {
        return Ok((
            x,
            SolveReport {
                iterations: 0,
                rel_residual: 0.0,
                history: vec![0.0],
                wall_time_s: start.elapsed().as_secs_f64(),
                converged: true,
                hit_maxit: false,
            },
        ));
    }
    if !bnorm.is_finite() {
        return Err(Error::Breakdown("right-hand side is not finite".into()));
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    m.precondition(&r, &mut z);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut history = vec![1.0];
    let mut rel = 1.0;
    let mut k = 0;
    let mut converged = false;

    while k < opts.maxit {
        a.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !pq.is_finite() || !rz.is_finite() {
            return Err(Error::Breakdown(format!(
                "non-finite recurrence at iteration {}",
                k + 1
            )));
        }
        if pq <= 0.0 {
            return Err(Error::Breakdown(format!(
                "curvature pᵀAp = {pq:e} is not positive at iteration {}",
                k + 1
            )));
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        k += 1;
        rel = norm2(&r) / bnorm;
        let claimed = rel <= opts.tol;
        let mut restart = false;
        if claimed || k % opts.refresh == 0 {
            a.residual(&x, b, &mut r);
            rel = norm2(&r) / bnorm;
            // The recurrence has drifted from the true residual; continuing
            // along the old direction with the replaced residual loses
            // conjugacy, so restart from steepest descent.
            restart = claimed;
        }
        if !rel.is_finite() {
            return Err(Error::Breakdown(format!(
                "non-finite residual at iteration {k}"
            )));
        }
        history.push(rel);
        observe(k, &x);
        if rel <= opts.tol {
            converged = true;
            break;
        }
        m.precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        if restart {
            p.copy_from_slice(&z);
        } else {
            let beta = rz_new / rz;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        rz = rz_new;
    }
    Ok((
        x,
        SolveReport {
            iterations: k,
            rel_residual: rel,
            history,
            wall_time_s: start.elapsed().as_secs_f64(),
            converged,
            hit_maxit: !converged,
        },
    ))
}
