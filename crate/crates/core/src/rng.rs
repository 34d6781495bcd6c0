//! Reproducible random streams.
//!
//! Every stochastic operation takes an explicit [`RngStream`]. A stream is
//! identified by `(seed, stream_id)`; ChaCha's 64-bit stream counter keeps
//! streams with different ids independent, so Monte Carlo replicates can be
//! keyed by replicate index and executed in any order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// A child stream keyed by `key`, independent of this stream's position.
    pub fn fork(&self, key: u64) -> RngStream {
        let id = splitmix64(self.stream ^ splitmix64(key.wrapping_add(0xA5A5_5A5A)));
        RngStream::new(self.seed, id)
    }

    /// `count` child streams for parallel work; advances this stream once so
    /// repeated calls give fresh children.
    pub fn spawn(&mut self, count: usize) -> Vec<RngStream> {
        let tag = self.rng.next_u64();
        (0..count as u64)
            .map(|i| RngStream::new(self.seed, splitmix64(tag ^ splitmix64(i))))
            .collect()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = StandardNormal.sample(&mut self.rng);
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
