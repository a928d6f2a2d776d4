//! Counter-based seed derivation for parallel Monte Carlo.
//!
//! Each (master seed, stream, path) tuple maps through a splitmix chain to
//! an independent generator seed, so workers can be scheduled in any order
//! without changing a single draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic seed tree rooted at a master seed.
#[derive(Debug, Clone, Copy)]
pub struct SeedLineage {
    master: u64,
}

impl SeedLineage {
    pub fn new(master: u64) -> Self {
        SeedLineage { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Derived seed for (stream, path). Streams separate independent
    /// purposes inside one experiment (main ensemble, oracle ensemble, …).
    pub fn seed(&self, stream: u64, path: u64) -> u64 {
        splitmix64(splitmix64(splitmix64(self.master) ^ stream) ^ path)
    }

    /// Generator for (stream, path).
    pub fn rng(&self, stream: u64, path: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed(stream, path))
    }
}
