//! Seeded random streams.
//!
//! Every consumer of randomness in a run draws from its own ChaCha stream so
//! that switching a feature off (for example back-stepping replay) does not
//! shift the draws seen by the others.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as SimRng;

/// Named stream indices derived from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 0,
    Task = 1,
    Explore = 2,
    Replay = 3,
    Backward = 4,
    Eval = 5,
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
