//! Seeded random streams.
//!
//! Every sampler in the crate takes an explicit generator; this module fixes
//! which one the rest of the workspace uses so runs replay bit-for-bit.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as LabRng;

/// Generator for `seed`, stream 0.
pub fn seeded(seed: u64) -> LabRng {
    LabRng::seed_from_u64(seed)
}

/// Independent stream `stream` derived from `seed`, for chunked or parallel work.
pub fn stream(seed: u64, stream: u64) -> LabRng {
    let mut rng = LabRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
