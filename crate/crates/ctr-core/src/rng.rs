//! Seed derivation and the draw primitives shared by samplers and loops.
//!
//! Every source of randomness is a ChaCha12 stream keyed by
//! `(run seed, purpose tag)`, so runs replay exactly and independent
//! concerns never share a stream.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Derive a purpose-specific seed from the run seed and a tag.
pub fn subseed(seed: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, then a splitmix64 finalizer over the combination.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in tag.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, tag: &str) -> ChaCha12Rng {
    use rand::SeedableRng;
    ChaCha12Rng::seed_from_u64(subseed(seed, tag))
}

/// Uniform index in `0..n`.
pub fn draw_index<R: Rng>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0);
    rng.random_range(0..n)
}

/// `c` distinct indices from `0..n`, in draw order, by rejection.
/// With `c == 1` this consumes exactly one draw, matching `draw_index`.
/// When `c >= n` all indices are returned in order without touching the rng.
pub fn draw_without_replacement<R: Rng>(rng: &mut R, n: usize, c: usize) -> Vec<usize> {
    if c >= n {
        return (0..n).collect();
    }
    let mut out = Vec::with_capacity(c);
    while out.len() < c {
        let i = rng.random_range(0..n);
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

/// Draw from a (normalized) probability vector by one uniform draw and a
/// cumulative walk. A single-entry vector is deterministic and consumes
/// nothing.
pub fn sample_categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    debug_assert!(!probs.is_empty());
    if probs.len() == 1 {
        return 0;
    }
    let u: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
