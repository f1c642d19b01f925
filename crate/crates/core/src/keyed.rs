//! Counter-based keyed generator.
//!
//! Every random quantity in the crate is a pure function of a 64-bit key and
//! a counter, so results never depend on query order or thread scheduling.
//!
//! Layout (all arithmetic wrapping mod 2^64):
//!
//! ```text
//! mix(z):    z ^= z >> 30; z *= 0xbf58476d1ce4e5b9;
//!            z ^= z >> 27; z *= 0x94d049bb133111eb;
//!            z ^= z >> 31
//! absorb(h, w) = mix(h ^ w)
//! tag_hash  = FNV-1a-64(experiment_tag bytes)
//! root      = absorb(absorb(mix(master_seed ^ DOMAIN), tag_hash), replica)
//! site key  = absorb over the d coordinates, each as i64 -> u64, in order
//! walk key  = absorb(site key, frog index ℓ)          (DOMAIN = DOMAIN_WALK)
//! draw(key, n) = mix(key + (n + 1) * 0x9e3779b97f4a7c15)
//! direction(key, k) = (draw(key, k) * 2d) >> 64      (128-bit product)
//! ```
//!
//! `draw` is SplitMix64 seeded at `key`, read at position `n`.

use serde::{Deserialize, Serialize};

use crate::lattice::Point;

pub const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

pub const DOMAIN_WALK: u64 = 0x5741_4c4b_0000_0001;
pub const DOMAIN_SITE: u64 = 0x5349_5445_0000_0002;
pub const DOMAIN_CONDITION: u64 = 0x434f_4e44_0000_0003;
pub const DOMAIN_FIELD: u64 = 0x4649_454c_0000_0004;
pub const DOMAIN_STAT: u64 = 0x5354_4154_0000_0005;
pub const DOMAIN_REPLICA: u64 = 0x5245_504c_0000_0006;

#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
pub fn absorb(h: u64, word: u64) -> u64 {
    mix(h ^ word)
}

#[inline]
pub fn draw(key: u64, n: u64) -> u64 {
    mix(key.wrapping_add(n.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Uniform in [0, 1) with 53 bits.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Multiply-shift reduction of 64 random bits onto {0, …, n−1}.
#[inline]
pub fn below(bits: u64, n: u64) -> u64 {
    ((bits as u128 * n as u128) >> 64) as u64
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Master seed, experiment tag and replica index; every stream in a run is
/// derived from these three values.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub experiment_tag: String,
    #[serde(default)]
    pub replica: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, experiment_tag: impl Into<String>) -> Self {
        SeedSpec { master_seed, experiment_tag: experiment_tag.into(), replica: 0 }
    }

    pub fn with_replica(&self, replica: u64) -> Self {
        SeedSpec { replica, ..self.clone() }
    }

    pub fn root(&self, domain: u64) -> u64 {
        let h = mix(self.master_seed ^ domain);
        let h = absorb(h, fnv1a(self.experiment_tag.as_bytes()));
        absorb(h, self.replica)
    }

    pub fn site_key(&self, domain: u64, x: &Point) -> u64 {
        site_key_from_root(self.root(domain), x)
    }

    pub fn walk_key(&self, x: &Point, ell: u32) -> u64 {
        walk_key_from_root(self.root(DOMAIN_WALK), x, ell)
    }
}

#[inline]
pub fn site_key_from_root(root: u64, x: &Point) -> u64 {
    x.coords().iter().fold(root, |h, &c| absorb(h, c as i64 as u64))
}

#[inline]
pub fn walk_key_from_root(root: u64, x: &Point, ell: u32) -> u64 {
    absorb(site_key_from_root(root, x), ell as u64)
}

/// Sequential reader over a keyed stream.
#[derive(Clone, Debug)]
pub struct KeyedStream {
    key: u64,
    n: u64,
}

impl KeyedStream {
    pub fn new(key: u64) -> Self {
        KeyedStream { key, n: 0 }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = draw(self.key, self.n);
        self.n += 1;
        v
    }

    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        unit_f64(self.next_u64())
    }

    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        below(self.next_u64(), n)
    }
}
