//! Seeded random streams.
//!
//! Every stochastic step in the engine draws from an explicitly passed
//! [`SeededRng`]. The generator is ChaCha8: a 256-bit key expanded from the
//! 64-bit seed, a 64-bit block counter and a 64-bit stream id. Child
//! generators are derived with [`SeededRng::derive`], which keeps the key and
//! selects a different stream, so children never depend on how far the
//! parent has advanced.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    /// Independent generator for a labelled sub-task (stream ids are mixed
    /// with the parent's stream so grandchildren stay distinct).
    pub fn derive(&self, label: u64) -> Self {
        let stream = self
            .stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(label.wrapping_add(1));
        Self::with_stream(self.seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_in<T: Scalar>(&mut self, lo: T, hi: T) -> T {
        lo + (hi - lo) * T::of(self.uniform())
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<E>(&mut self, items: &mut [E]) {
        items.shuffle(&mut self.inner);
    }
}
