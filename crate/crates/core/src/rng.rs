//! Deterministic random number generation.
//!
//! All randomness in the crate flows from explicit `u64` seeds; nothing reads
//! the OS entropy pool or the clock. Per-unit draws are counter-based: the
//! value for unit `i` depends only on `(seed, i)`, so reordering rows or
//! appending units never perturbs the draws of other units, and parallel
//! generation reproduces the sequential result bit for bit.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix_finalize(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a seed with a stream/counter value into a well-diffused 64-bit word.
///
/// Used both to derive sub-seeds (`mix(seed, tag)`) and as the counter-based
/// generator behind [`unit_uniform`].
#[inline]
pub fn mix(seed: u64, stream: u64) -> u64 {
    let z = splitmix_finalize(seed.wrapping_add(GOLDEN));
    splitmix_finalize(z ^ stream.wrapping_mul(GOLDEN))
}

/// Uniform value in `[0, 1)` for unit `index` under `seed`.
#[inline]
pub fn unit_uniform(seed: u64, index: u64) -> f64 {
    // 53 high-quality bits -> [0, 1)
    (mix(seed, index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Small sequential generator (splitmix64) for shuffles, bootstrap draws, and
/// synthetic data. Not cryptographic.
#[derive(Clone, Debug)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        splitmix_finalize(self.state)
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)`.
    #[inline]
    pub fn next_range(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        (self.next_u64() % bound as u64) as usize
    }

    /// Uniform in `[lo, hi)`.
    #[inline]
    pub fn next_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box-Muller. One fresh pair of uniforms per call so
    /// the stream position stays easy to reason about.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.next_range(i + 1);
            xs.swap(i, j);
        }
    }
}
