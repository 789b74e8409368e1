//! Counter-style random streams.
//!
//! Every stochastic quantity in the crate is drawn from a ChaCha8 stream
//! selected by `(seed, stream)`, so results never depend on how work is
//! scheduled across threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator for stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Re-targets a generator cloned from `base` to another stream, from its start.
pub(crate) fn restream(base: &ChaCha8Rng, stream: u64) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(stream);
    rng.set_word_pos(0);
    rng
}

/// Uniform on the open interval (0, 1) with 53 bits of resolution.
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let bits = rng.next_u64() >> 11;
    (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Inverse CDF of the unit Laplace density `½e^{-|x|}`.
pub fn laplace_inverse_cdf(p: f64) -> f64 {
    if p < 0.5 {
        (2.0 * p).ln()
    } else {
        -(2.0 * (1.0 - p)).ln()
    }
}

/// Derives a child seed from a base seed and two cell coordinates.
pub fn cell_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut rng = stream_rng(base, a.rotate_left(32) ^ b);
    rng.next_u64()
}
