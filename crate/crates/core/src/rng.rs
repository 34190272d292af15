//! SplitMix64, a counter-based generator.
//!
//! The stream is fully determined by the 64-bit seed: the state advances by
//! the golden-ratio increment and each output is a fixed mix of the state.
//! Uniform reals take the top 53 bits, so any implementation of the same
//! three constants reproduces every sweep bit for bit.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform on [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one (n, run) cell of a sweep.
pub fn cell_seed(seed: u64, n: usize, run: usize) -> u64 {
    mix(seed ^ ((n as u64) << 32) ^ run as u64)
}
