//! Seeded random streams.
//!
//! Every randomized component draws from ChaCha8 seeded with the user seed and
//! a fixed per-purpose stream id, so results are reproducible across machines
//! and independent between components that share a seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Rotation = 1,
    KMeans = 2,
    SynthData = 3,
    SynthQueries = 4,
    Sampling = 5,
    Calibration = 6,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
