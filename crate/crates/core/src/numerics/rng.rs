use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Name of the generator behind every [`RngStream`].
pub const RNG_ALGORITHM: &str = "chacha8";

pub type StreamRng = ChaCha8Rng;

/// A reproducible random stream: ChaCha8 keyed by `seed`, with `stream`
/// selecting one of 2^64 independent sequences.
///
/// Monte Carlo loops use the replication index as the stream, so results do
/// not depend on how work is split across threads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream { seed, stream }
    }

    pub fn algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }

    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Same seed, different stream.
    pub fn with_stream(&self, stream: u64) -> Self {
        RngStream { seed: self.seed, stream }
    }

    /// A new family of streams keyed by this stream and `tag`.
    ///
    /// The returned stream has index 0; callers pick their own indices with
    /// [`RngStream::with_stream`].
    pub fn child(&self, tag: u64) -> Self {
        let mixed = splitmix64(splitmix64(self.seed ^ 0x5851_f42d_4c95_7f2d) ^ self.stream)
            ^ splitmix64(tag.wrapping_add(0x9e37_79b9_7f4a_7c15));
        RngStream { seed: splitmix64(mixed), stream: 0 }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
