use std::io;

use thiserror::Error;

use crate::factor::NotSpdFailure;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Loss of positive definiteness during factorization.
    #[error("{0}")]
    NotSpd(Box<NotSpdFailure>),

    /// An iterative estimator hit its iteration cap; `partial` is the best
    /// value reached.
    #[error(
        "{what} did not converge within {iterations} iterations (partial estimate {partial:e})"
    )]
    Estimator {
        what: &'static str,
        iterations: usize,
        partial: f64,
    },

    #[error("problem of size {size} exceeds the dense limit of {limit}")]
    SizeGuard { size: usize, limit: usize },

    #[error("numerical breakdown: {0}")]
    Breakdown(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn is_not_spd(&self) -> bool {
        matches!(self, Error::NotSpd(_))
    }
}
