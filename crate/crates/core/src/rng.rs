//! Named random streams.
//!
//! Every consumer of randomness asks for a stream by purpose string and
//! indices. The stream seed is a hash of the master seed and that label, so
//! adding a new consumer never shifts the draws seen by existing ones.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Streams {
    master: u64,
}

impl Streams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Seed for the stream `purpose[indices...]`.
    pub fn seed(&self, purpose: &str, indices: &[u64]) -> u64 {
        let mut h = fnv1a(FNV_OFFSET, &self.master.to_le_bytes());
        h = fnv1a(h, purpose.as_bytes());
        for i in indices {
            h = fnv1a(h, &[0xff]);
            h = fnv1a(h, &i.to_le_bytes());
        }
        splitmix64(h)
    }

    pub fn rng(&self, purpose: &str, indices: &[u64]) -> Rng {
        Rng::seed_from_u64(self.seed(purpose, indices))
    }

    /// Child splitter rooted at a derived seed.
    pub fn child(&self, purpose: &str, indices: &[u64]) -> Streams {
        Streams::new(self.seed(purpose, indices))
    }
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
