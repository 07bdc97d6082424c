//! Counter-based random streams.
//!
//! Every draw is a pure function of `(seed, purpose, a, b)`: a fresh ChaCha8
//! generator is keyed from a splitmix64 hash of those four words. Nothing is
//! shared between streams, so results do not depend on how work is scheduled
//! across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Stream purposes; keeps e.g. initial data and Brownian increments of the
/// same agent independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Brownian = 1,
    Initial = 2,
    Validation = 3,
    Repetition = 4,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mix(seed: u64, purpose: Purpose, a: u64, b: u64) -> [u8; 32] {
    let h0 = splitmix(seed ^ splitmix(purpose as u64));
    let h1 = splitmix(h0 ^ a);
    let h2 = splitmix(h1 ^ b.rotate_left(17));
    let h3 = splitmix(h2 ^ 0x6a09_e667_f3bc_c909);
    let mut key = [0u8; 32];
    for (chunk, h) in key.chunks_exact_mut(8).zip([h0, h1, h2, h3]) {
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    key
}

/// Independent generator for the stream `(seed, purpose, a, b)`.
pub fn stream(seed: u64, purpose: Purpose, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(mix(seed, purpose, a, b))
}

/// Derives a child seed, e.g. one master seed per Monte Carlo repetition.
pub fn derive_seed(seed: u64, purpose: Purpose, index: u64) -> u64 {
    let key = mix(seed, purpose, index, 0);
    // The last word is the only one that depends on every input.
    u64::from_le_bytes(key[24..].try_into().expect("8 bytes"))
}

/// Brownian increments indexed by `(agent, step)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BrownianSource {
    pub seed: u64,
}

impl BrownianSource {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Writes `out.len()` independent `N(0, dt)` draws for `(agent, step)`.
    pub fn increments(&self, agent: usize, step: usize, dt: f64, out: &mut [f64]) {
        let mut rng = stream(self.seed, Purpose::Brownian, agent as u64, step as u64);
        let scale = dt.sqrt();
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = scale * z;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn increments_are_pure_functions_of_the_index() {
        let src = BrownianSource::new(42);
        let mut a = [0.0; 3];
        let mut b = [0.0; 3];
        src.increments(7, 11, 0.01, &mut a);
        src.increments(3, 2, 0.01, &mut b);
        src.increments(7, 11, 0.01, &mut b);
        assert_eq!(a, b);
        src.increments(7, 12, 0.01, &mut b);
        assert_ne!(a, b);
        BrownianSource::new(43).increments(7, 11, 0.01, &mut b);
        assert_ne!(a, b);
    }

    #[test]
    fn derived_seeds_depend_on_the_index() {
        let seeds: std::collections::HashSet<u64> =
            (0..100).map(|i| derive_seed(7, Purpose::Repetition, i)).collect();
        assert_eq!(seeds.len(), 100);
        assert_ne!(derive_seed(7, Purpose::Repetition, 0), derive_seed(8, Purpose::Repetition, 0));
        assert_ne!(derive_seed(7, Purpose::Repetition, 0), derive_seed(7, Purpose::Initial, 0));
    }

    #[test]
    fn increment_moments() {
        let src = BrownianSource::new(2024);
        let dt = 0.01;
        let n = 1_000_000usize;
        let mut buf = [0.0; 1];
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for i in 0..n {
            src.increments(i % 1000, i / 1000, dt, &mut buf);
            sum += buf[0];
            sumsq += buf[0] * buf[0];
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        // Standard errors: sqrt(dt / n) for the mean, dt * sqrt(2 / n) for the variance.
        assert!(mean.abs() < 4.0 * (dt / n as f64).sqrt(), "mean {mean}");
        assert!((var - dt).abs() < 4.0 * dt * (2.0 / n as f64).sqrt(), "var {var}");
    }
}
