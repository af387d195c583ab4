//! Counter-based random streams.
//!
//! Every random draw in a run comes from a ChaCha8 stream addressed by
//! `(seed, node, round, purpose)`. The key is derived from the seed with
//! SplitMix64, the ChaCha stream id encodes `(purpose, node)`, and the word
//! position starts at `round << 32`. A node's draws in a round therefore do
//! not depend on the order in which nodes are processed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// What a stream is used for; distinct purposes never share words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum Purpose {
    Gradient = 1,
    Compression = 2,
    Direction = 3,
    Anchor = 4,
    Sampling = 5,
    Topology = 6,
    Data = 7,
    Init = 8,
    ValueNoise = 9,
}

pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for repeat `index` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut s = seed ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    splitmix64(&mut s)
}

pub fn stream(seed: u64, node: usize, round: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(((purpose as u64) << 48) | (node as u64 & 0xFFFF_FFFF_FFFF));
    rng.set_word_pos((round as u128) << 32);
    rng
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform direction on the unit sphere in `n` dimensions (normalized Gaussian).
pub fn unit_sphere<R: Rng + ?Sized>(rng: &mut R, n: usize) -> nalgebra::DVector<f64> {
    loop {
        let v = nalgebra::DVector::from_fn(n, |_, _| gaussian(rng));
        let norm = v.norm();
        if norm > 1e-300 {
            return v / norm;
        }
    }
}
