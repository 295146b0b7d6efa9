//! Deterministic RNG stream derivation.
//!
//! Every chain, replica and driver gets its own ChaCha stream derived from
//! the master seed and a short id path, so results do not depend on thread
//! scheduling and any subset of chains can be replayed in isolation.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Build the generator for stream `ids` under `master`.
///
/// The 256-bit key comes from the master seed alone; the id path selects a
/// 64-bit ChaCha stream (a counter prefix), so distinct paths never share
/// output. Id paths used in this crate: `[chain]`, `[chain, replica]`, and
/// tagged singletons such as `[TAG, chain]`.
pub fn derive_rng(master: u64, ids: &[u64]) -> ChaCha8Rng {
    let mut s = master;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    let mut sid = 0x243F_6A88_85A3_08D3u64 ^ (ids.len() as u64);
    for &id in ids {
        let mut m = sid ^ id.wrapping_mul(0xD134_2543_DE82_EF95);
        sid = splitmix64(&mut m);
    }
    rng.set_stream(sid);
    rng
}
