//! Counter-derived random substreams.
//!
//! Every Monte Carlo task owns a ChaCha stream keyed by `(seed, domain)` and
//! selected by a task index, so results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream type used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// Independent purposes that draw randomness from the same campaign seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    Realization = 1,
    ChannelNoise = 2,
    Dither = 3,
    Messages = 4,
    Quantizer = 5,
    LdpNoise = 6,
    ModelInit = 7,
    Dataset = 8,
    Adversary = 9,
    Test = 10,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Returns the stream for task `index` of `domain` under campaign `seed`.
pub fn substream(seed: u64, domain: Domain, index: u64) -> SimRng {
    let mut key = [0u8; 32];
    let mut state = seed ^ splitmix64(domain as u64);
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Combines two task coordinates (e.g. realization and block) into one index.
pub fn pair_index(outer: u64, inner: u64) -> u64 {
    splitmix64(outer.wrapping_mul(0x1000_0000_01b3) ^ splitmix64(inner))
}
