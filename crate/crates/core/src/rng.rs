//! Deterministic random number generation.
//!
//! Every randomized operation in this crate (dictionary initialization, atom
//! reinitialization, patch sampling) draws from [`SplitMix64`], Steele,
//! Lea & Flood's 64-bit-state generator. The generator is fully specified
//! here so that a seed reproduces the same stream in any implementation:
//!
//! - state update: `state += 0x9E3779B97F4A7C15` (wrapping)
//! - output mix: `z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;`
//!   `z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31`
//! - `f64` in [0, 1): top 53 bits of the output, scaled by 2^-53
//! - bounded integers: Lemire's multiply-shift with rejection (unbiased)
//! - standard normals: Box-Muller on two consecutive uniforms, cosine branch
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw from [0, 1) with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Unbiased uniform draw from `0..n`.
    ///
    /// Integer-only logic (Lemire 2019), so acceptance decisions built on it
    /// are reproducible across platforms.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below requires n > 0");
        let mut x = self.next_u64();
        let mut m = u128::from(x) * u128::from(n);
        let mut low = m as u64;
        if low < n {
            let threshold = n.wrapping_neg() % n;
            while low < threshold {
                x = self.next_u64();
                m = u128::from(x) * u128::from(n);
                low = m as u64;
            }
        }
        (m >> 64) as u64
    }

    /// Standard normal via Box-Muller; consumes exactly two uniforms per call
    /// except on the measure-zero u1 = 0 draw, which is rejected.
    pub fn next_normal(&mut self) -> f64 {
        loop {
            let u1 = self.next_f64();
            let u2 = self.next_f64();
            if u1 > 0.0 {
                return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            }
        }
    }
}
