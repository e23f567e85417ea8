//! SplitMix64, fully specified by its constants so that any implementation
//! reproduces the same streams:
//!
//! ```text
//! state += 0x9E3779B97F4A7C15
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! return z ^ (z >> 31)
//! ```
//!
//! Uniform doubles take the top 53 bits: `(x >> 11) * 2^-53`, in `[0, 1)`.
//! Sample `i` of a run seeded with `s` uses its own generator seeded with
//! `s ^ mix(i)`, so results do not depend on how work is split across threads.

use num_complex::Complex64;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The SplitMix64 output function.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Generator for sample `index` of a stream seeded with `seed`.
    pub fn for_sample(seed: u64, index: u64) -> Self {
        Self::new(seed ^ mix(index))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix(self.state)
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Area-uniform point in the closed disk `B(center, radius)`.
    pub fn in_disk(&mut self, center: Complex64, radius: f64) -> Complex64 {
        let rho = radius * self.next_f64().sqrt();
        let theta = std::f64::consts::TAU * self.next_f64();
        center + Complex64::from_polar(rho, theta)
    }
}
