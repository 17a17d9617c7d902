//! Seeded random streams. Every random quantity in a run is drawn from a
//! ChaCha8 generator keyed by the run seed and a fixed per-purpose stream id,
//! so fields, right-hand sides and estimator start vectors never share draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const GENERATOR: &str = "ChaCha8Rng";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Field = 0,
    RightHandSide = 1,
    ApplyError = 2,
    SolveError = 3,
    Condition = 4,
    Test = 99,
}

pub fn stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

pub fn normal_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}
