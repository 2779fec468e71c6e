//! Deterministic random-number streams.
//!
//! Every randomized step derives its own 64-bit seed from the user-facing
//! master seed plus fixed salts (replication index, hypothesis bits, purpose
//! tag) through a splitmix64 mix. Generators are ChaCha12 — a fixed, published
//! algorithm — so identical seeds reproduce identical draws bit-for-bit, and
//! serial/parallel schedules agree because no stream is shared.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The crate-wide generator type.
pub type StreamRng = ChaCha12Rng;

/// Purpose tags keeping unrelated streams disjoint under one master seed.
pub mod tag {
    pub const FOLDS: u64 = 0x464f_4c44;
    pub const DATASET: u64 = 0x4447_5053;
    pub const CRITICAL: u64 = 0x4352_4954;
    pub const OBSERVED: u64 = 0x4f42_5356;
}

/// splitmix64 finalizer (Steele, Lea & Flood 2014 constants).
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix two words into a stream seed.
#[inline]
pub fn mix2(a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(a) ^ b)
}

/// Mix three words into a stream seed.
#[inline]
pub fn mix3(a: u64, b: u64, c: u64) -> u64 {
    splitmix64(mix2(a, b) ^ c)
}

/// Generator for a derived seed.
#[inline]
pub fn stream(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}
