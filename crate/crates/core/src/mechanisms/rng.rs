//! Seeded random streams.
//!
//! A master seed expands into independent ChaCha streams, one per purpose
//! (subsampling, noise) and attempt. Child seeds for repeats are derived
//! with a SplitMix64 counter hash, so the stream used by repeat `r` depends
//! only on `(master, r)` and not on execution order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

/// Purpose of a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Poisson selection of kept time steps, for a given redraw attempt.
    Subsample { attempt: u32 },
    /// Gaussian perturbation, for a given redraw attempt.
    Noise { attempt: u32 },
    /// Observation noise of synthetic data.
    Observation,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Subsample { attempt } => (1 << 32) | attempt as u64,
            Stream::Noise { attempt } => (2 << 32) | attempt as u64,
            Stream::Observation => 3 << 32,
        }
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    seed: u64,
}

impl SeedStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng(&self, stream: Stream) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(stream.id());
        rng
    }

    /// Seed of the `index`-th child (e.g. a repeat or a sweep cell).
    pub fn child_seed(&self, index: u64) -> u64 {
        splitmix64(self.seed ^ splitmix64(index))
    }

    pub fn child(&self, index: u64) -> SeedStreams {
        SeedStreams::new(self.child_seed(index))
    }
}

/// Source of standard normal variates for the perturbation step.
pub trait NoiseSource {
    fn standard_normal(&mut self) -> f64;
}

/// Standard normal draws from an RNG.
#[derive(Debug, Clone)]
pub struct GaussianNoise<R>(pub R);

impl<R: Rng> NoiseSource for GaussianNoise<R> {
    fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.0)
    }
}

/// Always returns zero. Turns every mechanism into its deterministic part.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn standard_normal(&mut self) -> f64 {
        0.0
    }
}

impl<N: NoiseSource + ?Sized> NoiseSource for &mut N {
    fn standard_normal(&mut self) -> f64 {
        (**self).standard_normal()
    }
}
