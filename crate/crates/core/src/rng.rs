//! Named, independent RNG substreams derived from one master seed.
//!
//! Every randomized stage (weight init, epoch shuffling, reparameterization
//! noise, k-means seeding, synthetic generation) pulls its own stream via
//! [`substream`]. Streams are independent ChaCha8 instances, so adding draws
//! to one stage never perturbs another, and a single `--seed` reproduces an
//! entire run bit-for-bit.

use crate::matrix::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// FNV-1a 64-bit hash; stable across platforms and releases.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 step; used to expand a 64-bit state into key material.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic RNG for the substream `name` of the master `seed`.
///
/// The 256-bit ChaCha key is expanded from `seed ^ fnv1a64(name)`, so
/// distinct names yield unrelated streams under the same seed.
pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut state = seed ^ fnv1a64(name.as_bytes());
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// `rows x cols` matrix of standard normal draws in row-major index order.
pub fn normal_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = rng.sample(StandardNormal);
    }
    m
}
