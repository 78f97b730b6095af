//! SplitMix64 pseudorandom number generator.
//!
//! Chosen because it is trivially portable: the whole generator is three
//! multiplies and a few shifts over a single `u64` of state, with public
//! constants, so any implementation in any language reproduces the same
//! stream bit for bit. Every seeded entry point in this crate (matrix
//! generation, stochastic rounding) draws from it.

/// SplitMix64 generator state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    /// Next raw 64-bit output.
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform double in `[0, 1)` using the top 53 bits of one output.
    pub fn next_unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform double in `[-0.5, 0.5)`.
    pub fn next_symmetric_f64(&mut self) -> f64 {
        self.next_unit_f64() - 0.5
    }

    /// Deterministic sub-stream keyed by two salts.
    ///
    /// Used where work is distributed over rows or steps: each unit of work
    /// gets its own stream so results do not depend on execution order.
    pub fn derived(seed: u64, salt_a: u64, salt_b: u64) -> Self {
        let mut mixer = SplitMix64::new(seed ^ salt_a.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let x = mixer.next_u64() ^ salt_b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        SplitMix64::new(x)
    }
}
