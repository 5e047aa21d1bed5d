//! Seed bundles and salted substreams.
//!
//! Every random stream in the crate is derived from a single master seed and a
//! short text tag. The derivation is part of the on-disk reproducibility
//! contract and must never change:
//!
//! ```text
//! tag_hash(tag)      = splitmix_finalize(fnv1a64(tag))
//! derive(master, tag) = splitmix_finalize((master + 0x9E3779B97F4A7C15) XOR tag_hash(tag))
//! ```
//!
//! `fnv1a64` uses offset basis `0xcbf29ce484222325` and prime `0x100000001b3`;
//! `splitmix_finalize` is the SplitMix64 output mix (shifts 30/27/31, multipliers
//! `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`). The finalizer is a bijection,
//! so two different master seeds never collide under the same tag.
//!
//! Streams are realised with ChaCha8 (`rand_chacha`), seeded from the derived
//! 64-bit value.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// The crate-wide random number generator.
pub type SimRng = ChaCha8Rng;

pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// SplitMix64 output mix.
#[inline]
pub fn splitmix_finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn tag_hash(tag: &str) -> u64 {
    splitmix_finalize(fnv1a64(tag.as_bytes()))
}

/// Derive the substream seed for `tag` under `master_seed`.
///
/// Panics on an empty tag: every stream must be named.
pub fn derive_substream(master_seed: u64, tag: &str) -> u64 {
    assert!(!tag.is_empty(), "substream tag must be nonempty");
    splitmix_finalize(master_seed.wrapping_add(GOLDEN_GAMMA) ^ tag_hash(tag))
}

/// Derive an indexed child seed (cycle numbers, per-octave streams, ...).
pub fn derive_indexed(seed: u64, index: u64) -> u64 {
    splitmix_finalize(seed ^ splitmix_finalize(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Uniform `[0, 1)` from the top 53 bits of a 64-bit word.
#[inline]
pub fn unit_from_bits(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A master seed plus the substreams derived from it.
///
/// Substreams are computed on demand; explicit overrides let tests perturb a
/// single layer while keeping every other stream fixed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedBundle {
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    overrides: BTreeMap<String, u64>,
}

impl SeedBundle {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed, overrides: BTreeMap::new() }
    }

    pub fn with_override(mut self, tag: &str, seed: u64) -> Self {
        self.overrides.insert(tag.to_string(), seed);
        self
    }

    pub fn substream(&self, tag: &str) -> u64 {
        match self.overrides.get(tag) {
            Some(&s) => s,
            None => derive_substream(self.master_seed, tag),
        }
    }

    pub fn rng(&self, tag: &str) -> SimRng {
        rng_from_seed(self.substream(tag))
    }

    /// All substreams for the given tags, keyed by tag.
    pub fn substreams<'a>(&self, tags: impl IntoIterator<Item = &'a str>) -> BTreeMap<String, u64> {
        tags.into_iter().map(|t| (t.to_string(), self.substream(t))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn derivation_is_pure() {
        assert_eq!(derive_substream(42, "layout"), derive_substream(42, "layout"));
    }

    #[test]
    fn frozen_reference_values() {
        // Pinned so that any accidental change to the derivation is caught.
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        let a = derive_substream(0, "layout");
        let b = splitmix_finalize(GOLDEN_GAMMA ^ splitmix_finalize(fnv1a64(b"layout")));
        assert_eq!(a, b);
    }

    #[test]
    fn tags_do_not_collide_across_seed_sweep() {
        for s in 0..10_000u64 {
            let l = derive_substream(s, "layout");
            let n = derive_substream(s, "noise");
            let p = derive_substream(s, "place");
            assert!(l != n && l != p && n != p, "collision at seed {s}");
        }
    }

    #[test]
    fn seeds_do_not_collide_under_one_tag() {
        let mut seen = HashSet::new();
        for s in 0..10_000u64 {
            assert!(seen.insert(derive_substream(s, "place")), "collision at seed {s}");
        }
    }

    #[test]
    fn override_replaces_only_one_stream() {
        let base = SeedBundle::new(7);
        let perturbed = base.clone().with_override("place", 123);
        assert_eq!(perturbed.substream("place"), 123);
        assert_eq!(perturbed.substream("layout"), base.substream("layout"));
    }

    #[test]
    #[should_panic]
    fn empty_tag_rejected() {
        derive_substream(1, "");
    }
}
