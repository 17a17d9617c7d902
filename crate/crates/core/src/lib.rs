//! Hierarchical interpolative factorization (HIF) and its block-Jacobi
//! preconditioned variant (PHIF) for sparse SPD systems from finite-difference
//! discretizations of elliptic PDEs, with the tools needed to evaluate them:
//! test-problem generation, preconditioned CG, randomized error estimators
//! and a benchmark harness.

// `!(x > 0.0)` is used deliberately so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod dense;
pub mod diagnostics;
mod error;
pub mod factor;
pub mod grid;
pub mod hierarchy;
pub mod krylov;
pub mod rng;
pub mod sparse;

pub use error::{Error, Result};
pub use factor::{factorize, Factorization, Method};
pub use grid::{assemble_operator, generate_field, CoefficientField, GridSpec};
pub use sparse::SymSparseMatrix;
