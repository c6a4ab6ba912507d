//! Random streams keyed by genealogy.
//!
//! Every particle draws its randomness from a ChaCha8 stream selected by its
//! genealogical id and the index of the schedule segment being simulated.
//! A subtree's randomness therefore does not depend on the order in which
//! particles are processed or on how many workers process them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Id of the initial particle.
pub const ROOT_ID: u64 = 0x243f_6a88_85a3_08d3;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Id of the `index`-th child of `parent`.
#[inline]
pub fn child_id(parent: u64, index: usize) -> u64 {
    splitmix64(parent.rotate_left(17) ^ splitmix64(index as u64 + 1))
}

/// Per-trajectory key from which particle streams are derived.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamKey {
    key: <ChaCha8Rng as SeedableRng>::Seed,
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        StreamKey { key: ChaCha8Rng::seed_from_u64(seed).get_seed() }
    }

    /// Stream for particle `id` during schedule segment `segment`.
    #[inline]
    pub fn stream(&self, id: u64, segment: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(splitmix64(id ^ splitmix64(u64::from(segment) ^ 0x5851_f42d_4c95_7f2d)));
        rng
    }

    /// Stream for auxiliary draws not tied to a particle (e.g. spine samples).
    pub fn auxiliary(&self, label: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(splitmix64(!label));
        rng
    }
}
