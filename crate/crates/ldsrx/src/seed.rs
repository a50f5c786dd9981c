//! Deterministic per-trial RNG streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Name tag of the RNG algorithm backing every stream.
pub const RNG_ALGORITHM: &str = "chacha8";

/// Independent random streams of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Codebook,
    Activity,
    Gains,
    Bits,
    Noise,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Codebook => 0x636f_6465_626f_6f6b,
            Stream::Activity => 0x6163_7469_7669_7479,
            Stream::Gains => 0x6761_696e_7300_0000,
            Stream::Bits => 0x6269_7473_0000_0000,
            Stream::Noise => 0x6e6f_6973_6500_0000,
        }
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for `(master, stream, index)`; a pure function, so trials can run
/// on any worker in any order.
pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    mix(mix(mix(master) ^ stream.tag()) ^ index)
}

pub fn stream_rng(master: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}
