//! Counter-based random streams.
//!
//! Every random draw in the crate is a pure function of a 64-bit key and a
//! counter, so a particle's randomness depends only on its genealogical label
//! and never on scheduling, worker count or which other particles survived
//! pruning.

use rand::RngCore;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines two words into a new key.
#[inline(always)]
pub fn combine(a: u64, b: u64) -> u64 {
    mix64(a.wrapping_mul(GOLDEN).rotate_left(23) ^ mix64(b.wrapping_add(GOLDEN)))
}

/// Label of the root particle of a run.
#[inline]
pub fn root_label(master_seed: u64) -> u64 {
    combine(master_seed, 0x524F_4F54)
}

/// Ulam-Harris style label of the `rank`-th child of `parent`.
#[inline(always)]
pub fn child_label(parent: u64, rank: usize) -> u64 {
    combine(parent, rank as u64 + 1)
}

/// Master seed of replicate `index` in an experiment seeded with `master_seed`.
#[inline]
pub fn replicate_seed(master_seed: u64, index: u64) -> u64 {
    combine(master_seed ^ 0x5245_504C, index)
}

/// Domain tags keep streams derived from one label independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Offspring = 1,
    Spine = 2,
    Completion = 3,
    Replicate = 4,
    Bootstrap = 5,
    Pool = 6,
}

/// A counter-based stream: output `i` is `mix64(key + (i + 1) * GOLDEN)`.
#[derive(Debug, Clone)]
pub struct Stream {
    key: u64,
    counter: u64,
}

impl Stream {
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    pub fn for_purpose(label: u64, purpose: Purpose) -> Self {
        Self::new(combine(label, purpose as u64))
    }

    /// Stream for replicate `index` of an experiment seeded with `master_seed`.
    pub fn replicate(master_seed: u64, index: u64, purpose: Purpose) -> Self {
        Self::new(combine(combine(master_seed, index), purpose as u64 ^ 0xA5A5))
    }

    /// Uniform draw in the open interval (0, 1).
    #[inline]
    pub fn open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn key(&self) -> u64 {
        self.key
    }
}

impl RngCore for Stream {
    #[inline(always)]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline(always)]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
