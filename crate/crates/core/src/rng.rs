//! Keyed random streams.
//!
//! Every consumer draws from a ChaCha stream keyed by `(seed, purpose tag)` and
//! selected by a stream index, so blocks and modules never share randomness and
//! any block can be regenerated on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random stream for `(seed, tag)` with the given stream index.
pub fn stream(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ fnv1a(tag);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
