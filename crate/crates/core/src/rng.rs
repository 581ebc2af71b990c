//! Per-particle random streams.
//!
//! Every particle owns a ChaCha8 stream keyed by `(seed, particle index)`:
//! the seed selects the key and the particle index selects the 64-bit stream
//! id. Particles therefore draw independent, reproducible sequences no matter
//! which thread advances them or in what order.
//!
//! Gaussians come from the Box–Muller transform, consuming two uniforms per
//! pair of normals; the second normal of each pair is cached and returned on
//! the next call.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

#[derive(Debug, Clone)]
pub struct ParticleStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl ParticleStream {
    pub fn new(seed: u64, particle: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(particle);
        Self { rng, spare: None }
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - U lies in (0, 1], keeping the logarithm finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        self.spare = Some(radius * s);
        radius * c
    }
}
