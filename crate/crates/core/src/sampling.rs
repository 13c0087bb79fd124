//! Seeded observation index sets.
//!
//! Every draw is a pure function of `(seed, stream)`: the generator is a
//! ChaCha8 keyed by `seed` with its 64-bit stream id set to `stream`, so trial
//! `t` of a sweep can be regenerated in isolation on any thread.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::vecspace::{SampleIndexSet, SamplingMode};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct SeedSpec {
    pub seed: u64,
    pub stream: u64,
}

impl SeedSpec {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        Self { stream, ..self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// `m` i.i.d. uniform indices from `[0, n)`.
pub fn sample_with_replacement(n: usize, m: usize, seed: SeedSpec) -> Result<SampleIndexSet> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidSize(format!("need n >= 1 and m >= 1, got n={n}, m={m}")));
    }
    let mut rng = seed.rng();
    let indices = (0..m).map(|_| rng.random_range(0..n)).collect();
    SampleIndexSet::new(indices, SamplingMode::WithReplacement, n)
}

/// The first `m` entries of a seeded Fisher–Yates shuffle of `[0, n)`.
pub fn sample_without_replacement(n: usize, m: usize, seed: SeedSpec) -> Result<SampleIndexSet> {
    if m == 0 || m > n {
        return Err(Error::InvalidSize(format!("need 1 <= m <= n, got n={n}, m={m}")));
    }
    let mut rng = seed.rng();
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(m);
    SampleIndexSet::new(pool, SamplingMode::WithoutReplacement, n)
}

pub fn sample(mode: SamplingMode, n: usize, m: usize, seed: SeedSpec) -> Result<SampleIndexSet> {
    match mode {
        SamplingMode::WithReplacement => sample_with_replacement(n, m, seed),
        SamplingMode::WithoutReplacement => sample_without_replacement(n, m, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_index_space() {
        let s = sample_with_replacement(1, 5, SeedSpec::new(9, 0)).unwrap();
        assert_eq!(s.indices(), &[0; 5]);
        assert_eq!(s.mode(), SamplingMode::WithReplacement);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = sample_with_replacement(100, 20, SeedSpec::new(3, 7)).unwrap();
        let b = sample_with_replacement(100, 20, SeedSpec::new(3, 7)).unwrap();
        assert_eq!(a, b);
        let a = sample_without_replacement(100, 20, SeedSpec::new(3, 7)).unwrap();
        let b = sample_without_replacement(100, 20, SeedSpec::new(3, 7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_invalid_sizes() {
        assert!(matches!(sample_with_replacement(0, 1, SeedSpec::default()), Err(Error::InvalidSize(_))));
        assert!(matches!(sample_with_replacement(3, 0, SeedSpec::default()), Err(Error::InvalidSize(_))));
        assert!(matches!(sample_without_replacement(3, 4, SeedSpec::default()), Err(Error::InvalidSize(_))));
        assert!(matches!(sample_without_replacement(3, 0, SeedSpec::default()), Err(Error::InvalidSize(_))));
    }

    #[test]
    fn with_replacement_frequencies_are_uniform() {
        let m = 100_000;
        let s = sample_with_replacement(10, m, SeedSpec::new(2024, 0)).unwrap();
        let mut counts = [0usize; 10];
        for &i in s.indices() {
            counts[i] += 1;
        }
        for c in counts {
            let f = c as f64 / m as f64;
            assert!((0.09..=0.11).contains(&f), "frequency {f}");
        }
    }

    #[test]
    fn full_draw_is_permutation() {
        let s = sample_without_replacement(50, 50, SeedSpec::new(1, 1)).unwrap();
        let mut sorted = s.indices().to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn single_draw_frequencies_are_uniform() {
        let n = 10;
        let draws = 100_000u64;
        let mut counts = vec![0usize; n];
        for seed in 0..draws {
            let s = sample_without_replacement(n, 1, SeedSpec::new(seed, 0)).unwrap();
            counts[s.indices()[0]] += 1;
        }
        let p = 1.0 / n as f64;
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        for c in counts {
            let f = c as f64 / draws as f64;
            assert!((f - p).abs() <= 3.0 * sigma + 1e-12, "frequency {f}");
        }
    }

    #[test]
    fn streams_are_independent() {
        let mut collisions = 0;
        for t in 0..10_000u64 {
            let a = sample_without_replacement(100, 10, SeedSpec::new(77, 2 * t)).unwrap();
            let b = sample_without_replacement(100, 10, SeedSpec::new(77, 2 * t + 1)).unwrap();
            collisions += (a == b) as usize;
        }
        assert!(collisions <= 1);
    }

    #[test]
    fn streams_differ_from_each_other() {
        let a = sample_with_replacement(1000, 50, SeedSpec::new(5, 0)).unwrap();
        let b = sample_with_replacement(1000, 50, SeedSpec::new(5, 1)).unwrap();
        assert_ne!(a, b);
    }
}
