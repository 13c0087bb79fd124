//! Matched subspace tests on incomplete observations.
//!
//! `H0: v ∈ S` against `H1: v ∉ S`, deciding on the restricted projection
//! residual `t(v_Ω)`. Without noise the threshold is a scale-relative
//! numerical zero; with white Gaussian noise of known variance it is a
//! chi-square quantile chosen for a target false-alarm rate.

mod chi2;

pub use chi2::{chi2_cdf, chi2_quantile, chi2_sf, ln_gamma, noncentral_chi2_sf, regularized_gamma};

use crate::error::{Error, Result};
use crate::estimator::observed_residual_energy;
use crate::vecspace::{restrict_vector, DenseVector, SampleIndexSet, SubspaceBasis};

/// Relative threshold `η = NOISELESS_TOLERANCE·‖v_Ω‖²` of the noiseless test.
pub const NOISELESS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Decision {
    H0,
    H1,
}

/// Degrees of freedom assumed for the residual statistic under `H0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum DofPolicy {
    /// `m − rank(U_Ω)`.
    #[default]
    Residual,
    /// A fixed count, e.g. the subspace dimension `r`.
    Fixed(usize),
    /// The subspace dimension `r` of the basis under test.
    SubspaceRank,
}

impl DofPolicy {
    pub fn resolve(self, m: usize, rank: usize, r: usize) -> usize {
        match self {
            DofPolicy::Residual => m.saturating_sub(rank),
            DofPolicy::Fixed(k) => k,
            DofPolicy::SubspaceRank => r,
        }
    }
}

impl std::str::FromStr for DofPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "residual" => Ok(DofPolicy::Residual),
            "paper-r" => Ok(DofPolicy::SubspaceRank),
            other => match other.strip_prefix("fixed:").map(str::parse) {
                Some(Ok(k)) => Ok(DofPolicy::Fixed(k)),
                _ => Err(Error::param(format!(
                    "dof policy must be `residual`, `paper-r` or `fixed:K`, got `{other}`"
                ))),
            },
        }
    }
}

impl std::fmt::Display for DofPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DofPolicy::Residual => f.write_str("residual"),
            DofPolicy::SubspaceRank => f.write_str("paper-r"),
            DofPolicy::Fixed(k) => write!(f, "fixed:{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestConfig {
    /// Target false-alarm probability `λ ∈ (0, 1)`.
    pub lambda_fa: f64,
    pub noise_sigma: f64,
    pub dof_policy: DofPolicy,
}

impl TestConfig {
    pub fn new(lambda_fa: f64, noise_sigma: f64, dof_policy: DofPolicy) -> Result<Self> {
        if !(lambda_fa > 0.0 && lambda_fa < 1.0) {
            return Err(Error::param(format!("lambda must lie in (0, 1), got {lambda_fa}")));
        }
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(Error::param(format!("noise sigma must be finite and >= 0, got {noise_sigma}")));
        }
        Ok(Self {
            lambda_fa,
            noise_sigma,
            dof_policy,
        })
    }

    /// `η_λ = σ² · F⁻¹_{χ²_dof}(1 − λ)`; zero when there are no degrees of freedom.
    pub fn threshold(&self, dof: usize) -> Result<f64> {
        if dof == 0 {
            return Ok(0.0);
        }
        Ok(self.noise_sigma.powi(2) * chi2_quantile(1.0 - self.lambda_fa, dof)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DetectionOutcome {
    pub statistic: f64,
    pub threshold: f64,
    pub decision: Decision,
    pub dof: usize,
    pub noncentrality: Option<f64>,
}

impl DetectionOutcome {
    fn new(statistic: f64, threshold: f64, dof: usize, noncentrality: Option<f64>) -> Self {
        let decision = if statistic > threshold { Decision::H1 } else { Decision::H0 };
        Self {
            statistic,
            threshold,
            decision,
            dof,
            noncentrality,
        }
    }
}

/// Noiseless test: `H1` iff `t(v_Ω) > 1e-9·‖v_Ω‖²`. The residual itself is
/// the noncentrality of the corresponding noisy problem and is reported as such.
pub fn noiseless_test(basis: &SubspaceBasis, v: &DenseVector, omega: &SampleIndexSet) -> Result<DetectionOutcome> {
    let v_omega = restrict_vector(v, omega)?;
    let rep = observed_residual_energy(basis, omega, &v_omega)?;
    let threshold = NOISELESS_TOLERANCE * v_omega.norm_squared();
    Ok(DetectionOutcome::new(rep.t, threshold, rep.m - rep.rank, Some(rep.t)))
}

/// Noisy test on a full-length vector whose entries at `omega` are the
/// noisy observations; unobserved entries are ignored.
pub fn noisy_test(
    basis: &SubspaceBasis,
    v_observed_with_noise: &DenseVector,
    omega: &SampleIndexSet,
    cfg: &TestConfig,
) -> Result<DetectionOutcome> {
    let v_omega = restrict_vector(v_observed_with_noise, omega)?;
    noisy_test_observed(basis, omega, &v_omega, cfg)
}

/// Noisy test on the observed values `ṽ_Ω` directly.
pub fn noisy_test_observed(
    basis: &SubspaceBasis,
    omega: &SampleIndexSet,
    v_omega: &DenseVector,
    cfg: &TestConfig,
) -> Result<DetectionOutcome> {
    if !(cfg.noise_sigma > 0.0) {
        return Err(Error::param("noisy test requires noise sigma > 0"));
    }
    let rep = observed_residual_energy(basis, omega, v_omega)?;
    let dof = cfg.dof_policy.resolve(rep.m, rep.rank, basis.r());
    let threshold = cfg.threshold(dof)?;
    Ok(DetectionOutcome::new(rep.t, threshold, dof, None))
}

/// `P_D = P[χ²_dof(noncentrality) > η]`.
pub fn detection_probability(noncentrality: f64, dof: usize, eta: f64) -> Result<f64> {
    noncentral_chi2_sf(eta, dof, noncentrality)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{sample_without_replacement, SeedSpec};
    use crate::vecspace::{orthonormalize, SamplingMode};
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_basis(n: usize, r: usize, seed: u64) -> SubspaceBasis {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        orthonormalize(&DMatrix::from_fn(n, r, |_, _| StandardNormal.sample(&mut rng))).unwrap()
    }

    fn in_subspace(basis: &SubspaceBasis) -> DenseVector {
        let coeffs = DVector::from_fn(basis.r(), |i, _| 1.0 + i as f64);
        DenseVector::from_dvector(basis.matrix() * coeffs).unwrap()
    }

    #[test]
    fn noiseless_accepts_subspace_vectors() {
        let basis = gaussian_basis(300, 5, 1);
        let v = in_subspace(&basis);
        for s in 0..20 {
            let omega = sample_without_replacement(300, 10 + 10 * s as usize, SeedSpec::new(2, s)).unwrap();
            assert_eq!(noiseless_test(&basis, &v, &omega).unwrap().decision, Decision::H0);
        }
    }

    #[test]
    fn noiseless_underdetermined_is_always_h0() {
        let basis = gaussian_basis(100, 8, 3);
        let v = crate::simlab::gen_perp_vector(&basis, SeedSpec::new(1, 1)).unwrap();
        let omega = sample_without_replacement(100, 8, SeedSpec::new(5, 0)).unwrap();
        let out = noiseless_test(&basis, &v, &omega).unwrap();
        assert_eq!(out.statistic, 0.0);
        assert_eq!(out.decision, Decision::H0);
    }

    #[test]
    fn noiseless_detects_perp_vectors() {
        let basis = gaussian_basis(1000, 10, 4);
        let v = crate::simlab::gen_perp_vector(&basis, SeedSpec::new(1, 2)).unwrap();
        let hits = (0..200)
            .filter(|&s| {
                let omega = sample_without_replacement(1000, 150, SeedSpec::new(6, s)).unwrap();
                noiseless_test(&basis, &v, &omega).unwrap().decision == Decision::H1
            })
            .count();
        assert_eq!(hits, 200);
    }

    #[test]
    fn threshold_goes_to_zero_as_lambda_goes_to_one() {
        let eta = |l: f64, dof| TestConfig::new(l, 1.0, DofPolicy::Residual).unwrap().threshold(dof).unwrap();
        // χ²₂ quantile is -2 ln(1 - p).
        assert!(eta(1.0 - 1e-12, 2) < 1e-11);
        for dof in [1, 5, 30] {
            let mut prev = f64::INFINITY;
            for l in [0.01, 0.1, 0.5, 0.9, 0.999999] {
                let t = eta(l, dof);
                assert!(t < prev);
                prev = t;
            }
        }
    }

    #[test]
    fn threshold_scales_with_variance() {
        let a = TestConfig::new(0.05, 1.0, DofPolicy::Residual).unwrap().threshold(12).unwrap();
        let b = TestConfig::new(0.05, 3.0, DofPolicy::Residual).unwrap().threshold(12).unwrap();
        assert!((b - 9.0 * a).abs() < 1e-12 * b);
    }

    #[test]
    fn noisy_test_requires_noise() {
        let basis = gaussian_basis(50, 2, 1);
        let cfg = TestConfig::new(0.05, 0.0, DofPolicy::Residual).unwrap();
        let omega = SampleIndexSet::full(50).unwrap();
        let v = DenseVector::new(vec![1.0; 50]).unwrap();
        assert!(noisy_test(&basis, &v, &omega, &cfg).is_err());
        assert!(TestConfig::new(0.0, 1.0, DofPolicy::Residual).is_err());
        assert!(TestConfig::new(0.5, -1.0, DofPolicy::Residual).is_err());
    }

    #[test]
    fn dof_policies() {
        assert_eq!(DofPolicy::Residual.resolve(500, 20, 20), 480);
        assert_eq!(DofPolicy::SubspaceRank.resolve(500, 20, 20), 20);
        assert_eq!(DofPolicy::Fixed(7).resolve(500, 20, 20), 7);
        assert_eq!("paper-r".parse::<DofPolicy>().unwrap(), DofPolicy::SubspaceRank);
        assert_eq!("fixed:9".parse::<DofPolicy>().unwrap(), DofPolicy::Fixed(9));
        assert!("m-r".parse::<DofPolicy>().is_err());
        for p in [DofPolicy::Residual, DofPolicy::SubspaceRank, DofPolicy::Fixed(3)] {
            assert_eq!(p.to_string().parse::<DofPolicy>().unwrap(), p);
        }
    }

    #[test]
    fn detection_probability_under_h0_is_lambda() {
        for (lambda, dof) in [(0.05, 10), (0.01, 480), (0.1, 1)] {
            let eta = chi2_quantile(1.0 - lambda, dof).unwrap();
            assert!((detection_probability(0.0, dof, eta).unwrap() - lambda).abs() < 1e-10);
        }
    }

    #[test]
    fn detection_probability_increases_with_noncentrality() {
        let eta = chi2_quantile(0.95, 20).unwrap();
        let mut prev = 0.0;
        for i in 0..50 {
            let pd = detection_probability(i as f64, 20, eta).unwrap();
            assert!(pd >= prev);
            prev = pd;
        }
        assert!(prev > 0.99);
    }

    #[test]
    fn noisy_h0_calibration_small() {
        let (n, r, m) = (400, 5, 100);
        let basis = gaussian_basis(n, r, 11);
        let v = in_subspace(&basis);
        let cfg = TestConfig::new(0.1, 1.0, DofPolicy::Residual).unwrap();
        let trials = 4000;
        let mut alarms = 0;
        for t in 0..trials {
            let omega = sample_without_replacement(n, m, SeedSpec::new(12, t)).unwrap();
            let mut rng = SeedSpec::new(13, t).rng();
            let noisy: Vec<f64> = omega
                .indices()
                .iter()
                .map(|&i| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v[i] + z
                })
                .collect();
            let v_omega = DenseVector::new(noisy).unwrap();
            let out = noisy_test_observed(&basis, &omega, &v_omega, &cfg).unwrap();
            alarms += (out.decision == Decision::H1) as usize;
        }
        let rate = alarms as f64 / trials as f64;
        let sigma = (0.1f64 * 0.9 / trials as f64).sqrt();
        assert!((rate - 0.1).abs() <= 3.0 * sigma, "rate {rate}");
    }

    #[test]
    fn noisy_test_index_set_mode_is_irrelevant_to_dof() {
        let basis = gaussian_basis(60, 3, 1);
        let omega = SampleIndexSet::new(vec![1, 1, 2, 5, 9, 11], SamplingMode::WithReplacement, 60).unwrap();
        let cfg = TestConfig::new(0.05, 1.0, DofPolicy::Residual).unwrap();
        let v = DenseVector::new(vec![1.0; 60]).unwrap();
        assert_eq!(noisy_test(&basis, &v, &omega, &cfg).unwrap().dof, 3);
    }
}
