//! Deterministic pseudo-random sampling.
//!
//! The generator is splitmix64: a 64-bit counter advanced by a fixed odd
//! increment, then avalanched. The same seed yields the same stream on every
//! platform, which is what run metadata records.

use crate::error::{Error, Result};

pub const RNG_ALGORITHM: &str = "splitmix64";

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { seed, state: seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }

    /// Independent stream for a worker: `run seed + sample index`.
    pub fn derive(&self, index: u64) -> Rng {
        Rng::new(self.seed.wrapping_add(index))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Unbiased index in `0..n` by rejection.
    pub fn index_below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        let n = n as u64;
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.index_below(i + 1);
            xs.swap(i, j);
        }
    }

    /// `k` distinct values from `0..n`, in draw order.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        self.shuffle(&mut pool);
        pool.truncate(k);
        pool
    }
}

/// Latin hypercube sample: per dimension, each of the `n_samples` equal-width
/// bins receives exactly one point.
pub fn latin_hypercube(
    rng: &mut Rng,
    n_samples: usize,
    bounds: &[[f64; 2]],
) -> Result<Vec<Vec<f64>>> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    for (d, b) in bounds.iter().enumerate() {
        if !(b[0] < b[1]) {
            return Err(Error::InvalidArgument(format!(
                "bounds for dimension {d} must satisfy lo < hi, got [{}, {}]",
                b[0], b[1]
            )));
        }
    }
    let mut samples = vec![vec![0.0; bounds.len()]; n_samples];
    for (d, b) in bounds.iter().enumerate() {
        let width = (b[1] - b[0]) / n_samples as f64;
        let mut bins: Vec<usize> = (0..n_samples).collect();
        rng.shuffle(&mut bins);
        for (i, sample) in samples.iter_mut().enumerate() {
            sample[d] = b[0] + (bins[i] as f64 + rng.uniform()) * width;
        }
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(123);
        let mut b = Rng::new(123);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn uniform_stays_in_unit_interval() {
        let mut rng = Rng::new(5);
        for _ in 0..1000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn lhs_single_sample_in_bounds() {
        let mut rng = Rng::new(1);
        let s = latin_hypercube(&mut rng, 1, &[[0.0, 1.0]]).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s[0][0] >= 0.0 && s[0][0] < 1.0);
    }

    #[test]
    fn lhs_four_samples_stratified() {
        let mut rng = Rng::new(9);
        let s = latin_hypercube(&mut rng, 4, &[[0.0, 1.0]]).unwrap();
        let mut counts = [0usize; 4];
        for x in &s {
            counts[(x[0] * 4.0).floor() as usize] += 1;
        }
        assert_eq!(counts, [1, 1, 1, 1]);
    }

    #[test]
    fn lhs_stratified_per_dimension_on_parameter_box() {
        // μ₀, μ₁ ∈ [1, 4], 100 samples: bin counting per dimension.
        let mut rng = Rng::new(2024);
        let n = 100;
        let bounds = [[1.0, 4.0], [1.0, 4.0]];
        let s = latin_hypercube(&mut rng, n, &bounds).unwrap();
        for d in 0..2 {
            let mut counts = vec![0usize; n];
            for x in &s {
                let bin = ((x[d] - 1.0) / 3.0 * n as f64).floor() as usize;
                counts[bin.min(n - 1)] += 1;
            }
            assert!(counts.iter().all(|&c| c == 1), "dimension {d} not stratified");
        }
    }

    #[test]
    fn lhs_rejects_bad_bounds() {
        let mut rng = Rng::new(0);
        assert!(latin_hypercube(&mut rng, 4, &[[1.0, 1.0]]).is_err());
        assert!(latin_hypercube(&mut rng, 0, &[[0.0, 1.0]]).is_err());
    }

    #[test]
    fn lhs_deterministic_given_seed() {
        let a = latin_hypercube(&mut Rng::new(77), 10, &[[0.0, 2.0], [-1.0, 1.0]]).unwrap();
        let b = latin_hypercube(&mut Rng::new(77), 10, &[[0.0, 2.0], [-1.0, 1.0]]).unwrap();
        assert_eq!(a, b);
    }
}
