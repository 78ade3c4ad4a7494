//! Counter-based random streams: a ChaCha8 generator keyed by the run seed,
//! with the stream id selecting an independent sequence and the word position
//! selecting a fixed block inside it. Draws depend only on
//! `(seed, stream, slot)`, never on scheduling.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Words reserved for each slot inside a stream (four ChaCha blocks).
const SLOT_WORDS: u128 = 64;

fn zigzag(i: i64) -> u64 {
    ((i << 1) ^ (i >> 63)) as u64
}

/// Generator positioned at `slot` (any integer, e.g. a lattice index) of `stream`.
pub fn slot_rng(seed: u64, stream: u64, slot: i64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(zigzag(slot) as u128 * SLOT_WORDS);
    rng
}

/// Generator for an unbounded sequential draw on `stream`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard normal pair by Box-Muller.
pub fn normal_pair(rng: &mut impl Rng) -> (f64, f64) {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (r * c, r * s)
}

/// Circular complex gaussian with `E|g|^2 = variance`.
pub fn complex_gaussian(rng: &mut impl Rng, variance: f64) -> C64 {
    let (a, b) = normal_pair(rng);
    let s = (0.5 * variance).sqrt();
    C64::new(s * a, s * b)
}
