//! Named random substreams derived from one run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Scene = 1,
    Agent = 2,
    Noise = 3,
    KMeans = 4,
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// A 64-bit seed for components that take a plain seed (scene generation).
pub fn derive_seed(seed: u64, stream: Stream) -> u64 {
    use rand::RngCore;
    substream(seed, stream).next_u64()
}
