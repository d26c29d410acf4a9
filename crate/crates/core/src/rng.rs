//! Platform-independent seeded randomness.
//!
//! [`Rng`] is PCG-XSH-RR with 64-bit state and 32-bit output
//! (multiplier `6364136223846793005`, increment `1442695040888963407`).
//! Every derived draw (floats, bounded integers, normals) is defined here
//! on top of the raw 32-bit stream so results never depend on an external
//! crate's sampling algorithms.

const PCG_MULTIPLIER: u64 = 6_364_136_223_846_793_005;
const PCG_INCREMENT: u64 = 1_442_695_040_888_963_407;
const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Debug, PartialEq)]
pub struct Rng {
    state: u64,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut rng = Rng { state: 0, spare_normal: None };
        rng.step();
        rng.state = rng.state.wrapping_add(seed);
        rng.step();
        rng
    }

    fn step(&mut self) {
        self.state = self.state.wrapping_mul(PCG_MULTIPLIER).wrapping_add(PCG_INCREMENT);
    }

    pub fn next_u32(&mut self) -> u32 {
        let old = self.state;
        self.step();
        let xorshifted = (((old >> 18) ^ old) >> 27) as u32;
        let rot = (old >> 59) as u32;
        xorshifted.rotate_right(rot)
    }

    pub fn next_u64(&mut self) -> u64 {
        let hi = self.next_u32() as u64;
        let lo = self.next_u32() as u64;
        (hi << 32) | lo
    }

    /// A seed for a child stream, kept below 2^53 so it survives JSON
    /// consumers that parse numbers as doubles.
    pub fn next_seed(&mut self) -> u64 {
        self.next_u64() >> 11
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`; returns `lo` when the range is empty.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        let u = self.uniform();
        if hi <= lo {
            return lo;
        }
        lo + (hi - lo) * u
    }

    /// Unbiased integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        // Rejection sampling on the top of the range.
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Integer uniform in the inclusive range `[lo, hi]`.
    pub fn int_inclusive(&mut self, lo: i64, hi: i64) -> i64 {
        if hi <= lo {
            // Keep the stream aligned regardless of the range.
            self.next_u64();
            return lo;
        }
        lo + self.below((hi - lo) as u64 + 1) as i64
    }

    /// Standard normal via the Box-Muller transform; the second variate of
    /// each pair is cached.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare_normal = Some(radius * theta.sin());
        radius * theta.cos()
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.standard_normal()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one subject in one epoch.
///
/// Chained SplitMix64 finalizers over `(global_seed, subject_index, epoch)`:
/// `h = mix(global + γ); h = mix(h ^ mix(subject + 2γ)); h = mix(h ^ mix(epoch + 3γ))`
/// with `γ = 0x9e3779b97f4a7c15`. Workers seed from this, so patch content
/// does not depend on which worker prepares a subject.
pub fn seed_for(global_seed: u64, subject_index: u64, epoch: u64) -> u64 {
    let mut h = mix64(global_seed.wrapping_add(GOLDEN_GAMMA));
    h = mix64(h ^ mix64(subject_index.wrapping_add(GOLDEN_GAMMA.wrapping_mul(2))));
    mix64(h ^ mix64(epoch.wrapping_add(GOLDEN_GAMMA.wrapping_mul(3))))
}
