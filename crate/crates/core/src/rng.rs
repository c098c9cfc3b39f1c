//! Reproducible, splittable random streams.
//!
//! A [`Stream`] is identified by a 64-bit key. Child streams are derived by
//! hashing the parent key with a label, so any stream in an experiment can be
//! rebuilt from the experiment seed and the path of labels leading to it
//! (for instance `seed -> replicate 17 -> proposal 4031`) without touching
//! the generator state of any other stream. Draws come from ChaCha8 keyed by
//! the derived 64-bit key.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Well-known labels for the phases of an experiment.
pub mod label {
    pub const OBSERVED: u64 = 0x6f62_7365_7276_6564;
    pub const REPLICATE: u64 = 0x7265_706c_6963_6174;
    pub const INIT: u64 = 0x696e_6974;
    pub const PILOT: u64 = 0x7069_6c6f_74;
    pub const PROPOSAL: u64 = 0x7072_6f70_6f73_616c;
    pub const ACCEPT: u64 = 0x6163_6365_7074;
    pub const EVAL: u64 = 0x6576_616c;
    pub const SIMULATION: u64 = 0x7369_6d75_6c61_7465;
    pub const METHOD: u64 = 0x6d65_7468_6f64;
    pub const GRID: u64 = 0x6772_6964;
}

/// SplitMix64 finaliser.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a hash, used to turn names into stream labels.
pub fn label_of(name: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in name.as_bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

#[derive(Clone, Debug)]
pub struct Stream {
    key: u64,
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self::from_key(mix64(seed ^ 0x9e37_79b9_7f4a_7c15))
    }

    fn from_key(key: u64) -> Self {
        Self {
            key,
            rng: ChaCha8Rng::seed_from_u64(key),
        }
    }

    /// Key identifying this stream (independent of how many draws were made).
    pub fn key(&self) -> u64 {
        self.key
    }

    /// Child stream for `label`. Does not advance `self`.
    pub fn derive(&self, label: u64) -> Self {
        let k = mix64(self.key ^ mix64(label.wrapping_add(0x2545_f491_4f6c_dd1d)));
        Self::from_key(k.rotate_left(17) ^ self.key.wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }

    /// Child stream following a path of labels.
    pub fn derive_path(&self, path: &[u64]) -> Self {
        path.iter().fold(self.clone(), |s, &l| s.derive(l))
    }

    /// Uniform draw on the open interval (0, 1).
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            if u > 0.0 {
                return u;
            }
        }
    }
}

impl RngCore for Stream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
