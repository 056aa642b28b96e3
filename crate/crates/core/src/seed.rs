//! Derivation of independent RNG streams from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named random streams of a run. Each stream's seed is a fixed function of
/// the master seed and the stream tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    Exploration,
    Sampling,
    TrainEnv,
    EvalEnv,
    Layout,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Exploration => 2,
            Stream::Sampling => 3,
            Stream::TrainEnv => 4,
            Stream::EvalEnv => 5,
            Stream::Layout => 6,
        }
    }
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: Stream) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(stream.tag().wrapping_mul(0x2545_f491_4f6c_dd1d)))
}

pub fn stream_rng(master: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream))
}
