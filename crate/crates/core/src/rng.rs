//! Seeded, reproducible random sampling.
//!
//! The generator is xoshiro256++ (Blackman & Vigna), with the four-word state
//! expanded from a 64-bit seed by SplitMix64. Uniform doubles take the top 53
//! bits of each output word; normal draws use the Marsaglia polar transform.
//! The transform's logarithm is evaluated by a fixed-coefficient series in
//! plain IEEE-754 arithmetic rather than libm, so a given seed produces a
//! bit-identical sample stream on every platform.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reproducible pseudo-random generator with explicit state.
#[derive(Debug, Clone)]
pub struct SeededRng {
    state: [u64; 4],
    seed: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Natural log over positive normal doubles, computed from the atanh series
/// after reducing the mantissa to [1/√2, √2). All operations are exact-IEEE
/// add/mul/div, so results do not depend on the platform's libm.
fn ln_deterministic(x: f64) -> f64 {
    debug_assert!(x > 0.0 && x.is_finite());
    let bits = x.to_bits();
    let mut exp = ((bits >> 52) & 0x7ff) as i64 - 1023;
    let mut m = f64::from_bits((bits & 0x000f_ffff_ffff_ffff) | 0x3ff0_0000_0000_0000);
    if m > std::f64::consts::SQRT_2 {
        m *= 0.5;
        exp += 1;
    }
    let z = (m - 1.0) / (m + 1.0);
    let z2 = z * z;
    // ln(m) = 2·atanh(z); |z| ≤ 0.1716 so twelve odd terms reach f64 precision.
    let mut term = z;
    let mut sum = 0.0;
    let mut k = 1.0;
    for _ in 0..12 {
        sum += term / k;
        term *= z2;
        k += 2.0;
    }
    2.0 * sum + exp as f64 * std::f64::consts::LN_2
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let state = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        SeededRng { state, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives an independent generator for a named sub-stream, so e.g. the
    /// head-init draw cannot perturb the batch-order draw.
    pub fn derive(&self, label: u64) -> SeededRng {
        let mut sm = self.seed ^ label.wrapping_mul(0xa076_1d64_78bd_642f);
        SeededRng::new(splitmix64(&mut sm))
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Unbiased integer in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below: empty range");
        let bound = n as u64;
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let r = self.next_u64();
            if r >= threshold {
                return (r % bound) as usize;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal via the polar method; the pair's second variate is
    /// discarded to keep the stream position a pure function of draw count.
    pub fn standard_normal(&mut self) -> f64 {
        loop {
            let u = 2.0 * self.next_f64() - 1.0;
            let v = 2.0 * self.next_f64() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * (-2.0 * ln_deterministic(s) / s).sqrt();
            }
        }
    }

    /// I.i.d. normal tensor with the given mean and variance. Variance zero
    /// yields the constant mean without consuming randomness.
    pub fn normal_tensor(&mut self, shape: Vec<usize>, mean: f64, variance: f64) -> Result<Tensor> {
        if variance < 0.0 || !variance.is_finite() {
            return Err(Error::arg(format!(
                "normal_tensor: variance must be finite and ≥ 0, got {variance}"
            )));
        }
        if variance == 0.0 {
            return Ok(Tensor::full(shape, mean));
        }
        let n: usize = shape.iter().product();
        let std = variance.sqrt();
        let data = (0..n)
            .map(|_| mean + std * self.standard_normal())
            .collect();
        Tensor::new(shape, data)
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.below(i + 1);
            slice.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_is_pinned() {
        // Frozen first outputs for seed 0; any change to the algorithm or
        // seeding breaks reproducibility of archived experiment runs.
        let mut rng = SeededRng::new(0);
        let got: Vec<u64> = (0..4).map(|_| rng.next_u64()).collect();
        assert_eq!(
            got,
            vec![
                5987356902031041503,
                7051070477665621255,
                6633766593972829180,
                211316841551650330
            ]
        );
    }

    #[test]
    fn same_seed_same_tensor() {
        let mut a = SeededRng::new(7);
        let mut b = SeededRng::new(7);
        let ta = a.normal_tensor(vec![3, 3], 0.0, 1.0).unwrap();
        let tb = b.normal_tensor(vec![3, 3], 0.0, 1.0).unwrap();
        assert_eq!(ta, tb);
    }

    #[test]
    fn zero_variance_is_constant() {
        let mut rng = SeededRng::new(1);
        let t = rng.normal_tensor(vec![3, 3], 0.0, 0.0).unwrap();
        assert!(t.data().iter().all(|&x| x == 0.0));
        let t = rng.normal_tensor(vec![2], 5.0, 0.0).unwrap();
        assert!(t.data().iter().all(|&x| x == 5.0));
    }

    #[test]
    fn negative_variance_rejected() {
        let mut rng = SeededRng::new(1);
        assert!(rng.normal_tensor(vec![2], 0.0, -1.0).is_err());
    }

    #[test]
    fn tiny_variance_law_of_large_numbers() {
        let mut rng = SeededRng::new(42);
        let t = rng.normal_tensor(vec![1_000_000], 0.0, 1e-12).unwrap();
        let s = t.reduce_stats().unwrap();
        assert!(
            (s.variance - 1e-12).abs() < 1e-14,
            "sample variance {} outside ±1% of 1e-12",
            s.variance
        );
    }

    #[test]
    fn normal_mean_unbiased() {
        let mut rng = SeededRng::new(9);
        let n = 100_000usize;
        let t = rng.normal_tensor(vec![n], 0.0, 1.0).unwrap();
        let s = t.reduce_stats().unwrap();
        // ±3σ/√n band for the sample mean.
        assert!(s.mean.abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn ln_matches_std_library() {
        let mut rng = SeededRng::new(5);
        for _ in 0..20_000 {
            let x = rng.next_f64();
            if x == 0.0 {
                continue;
            }
            let got = ln_deterministic(x);
            let want = x.ln();
            assert!(
                (got - want).abs() <= 4.0 * f64::EPSILON * want.abs().max(1.0),
                "ln({x}) = {got}, std gives {want}"
            );
        }
        assert!((ln_deterministic(1.0)).abs() == 0.0);
        assert!((ln_deterministic(std::f64::consts::E) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn derive_gives_distinct_streams() {
        let root = SeededRng::new(77);
        let mut a = root.derive(1);
        let mut b = root.derive(2);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn below_is_in_range_and_covers() {
        let mut rng = SeededRng::new(13);
        let mut seen = [false; 7];
        for _ in 0..1000 {
            seen[rng.below(7)] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }
}
