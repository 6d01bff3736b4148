//! Seed derivation. Every random draw in a run comes from a stream keyed by
//! the master seed, a purpose tag and an index (usually the block index).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purpose tags for independent streams.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub enum Stream {
    Block = 1,
    Schedule = 2,
    Init = 3,
    Dataset = 4,
    Training = 5,
    Snr = 6,
    Online = 7,
}

pub fn stream(master: u64, purpose: Stream, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((purpose as u64) << 48) ^ index);
    rng
}
