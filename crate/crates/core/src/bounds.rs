//! Concentration constants for the incomplete-data residual, the sample
//! complexity rule, and Monte Carlo checks of the three supporting
//! probability bounds.
//!
//! Natural logarithms throughout.

use nalgebra::SymmetricEigen;
use rayon::prelude::*;

use crate::coherence::{subspace_coherence, vector_coherence};
use crate::error::{Error, Result};
use crate::sampling::{sample_with_replacement, SeedSpec};
use crate::vecspace::{project_full, restrict, restrict_vector, DenseVector, SubspaceBasis};

/// Slack allowed when checking coherence inputs against their ranges, since
/// measured coherences carry rounding error.
const COHERENCE_SLACK: f64 = 1e-9;

/// `y` counts as lying in `S⊥` when `‖P_S y‖ ≤ PERP_TOLERANCE·‖y‖`.
const PERP_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TheoremParams {
    pub n: usize,
    pub r: usize,
    pub m: usize,
    pub delta: f64,
    pub mu_s: f64,
    pub mu_y: f64,
    /// `sqrt(2 μ(y)² log(1/δ) / m)`
    pub alpha: f64,
    /// `sqrt(2 μ(y) log(1/δ))`
    pub beta: f64,
    /// `sqrt(8 r μ(S) log(2r/δ) / (3m))`
    pub gamma: f64,
}

pub fn theorem_params(n: usize, r: usize, m: usize, delta: f64, mu_s: f64, mu_y: f64) -> Result<TheoremParams> {
    if r == 0 || r > n {
        return Err(Error::param(format!("need 1 <= r <= n, got n={n}, r={r}")));
    }
    if m == 0 {
        return Err(Error::param("m must be >= 1"));
    }
    check_delta(delta)?;
    let max_mu_s = n as f64 / r as f64;
    if !(1.0 - COHERENCE_SLACK..=max_mu_s * (1.0 + COHERENCE_SLACK)).contains(&mu_s) {
        return Err(Error::param(format!("mu_S = {mu_s} outside [1, n/r = {max_mu_s}]")));
    }
    if !(1.0 - COHERENCE_SLACK..=n as f64 * (1.0 + COHERENCE_SLACK)).contains(&mu_y) {
        return Err(Error::param(format!("mu_y = {mu_y} outside [1, n = {n}]")));
    }
    let log_inv_delta = (1.0 / delta).ln();
    let (mf, rf) = (m as f64, r as f64);
    Ok(TheoremParams {
        n,
        r,
        m,
        delta,
        mu_s,
        mu_y,
        alpha: (2.0 * mu_y * mu_y * log_inv_delta / mf).sqrt(),
        beta: (2.0 * mu_y * log_inv_delta).sqrt(),
        gamma: (8.0 * rf * mu_s * (2.0 * rf / delta).ln() / (3.0 * mf)).sqrt(),
    })
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// Smallest `m` with `m ≥ (8/3) r μ(S) log(2r/δ)`.
pub fn min_samples(r: usize, mu_s: f64, delta: f64) -> Result<usize> {
    if r == 0 {
        return Err(Error::param("r must be >= 1"));
    }
    if !(mu_s >= 1.0 - COHERENCE_SLACK) || !mu_s.is_finite() {
        return Err(Error::param(format!("mu_S must be >= 1, got {mu_s}")));
    }
    check_delta(delta)?;
    let rf = r as f64;
    let bound = 8.0 / 3.0 * rf * mu_s * (2.0 * rf / delta).ln();
    Ok((bound.ceil() as usize).max(1))
}

/// Which form of the `(1 ± α)` factors to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SandwichVariant {
    /// `(1 − α)` and `(1 + α)`.
    #[default]
    Statement,
    /// `(1 − α)²` and `(1 + α)²`.
    ProofSquared,
}

impl SandwichVariant {
    fn factors(self, alpha: f64) -> (f64, f64) {
        match self {
            SandwichVariant::Statement => (1.0 - alpha, 1.0 + alpha),
            SandwichVariant::ProofSquared => ((1.0 - alpha).powi(2), (1.0 + alpha).powi(2)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SandwichBound {
    /// May be negative; not clamped.
    pub lower: f64,
    pub upper: f64,
    pub full_residual: f64,
    /// `1 − 4δ`.
    pub confidence: f64,
}

impl SandwichBound {
    pub fn contains(&self, t: f64) -> bool {
        self.lower <= t && t <= self.upper
    }
}

/// Upper bound `(1 + α)(m/n)‖v − P_S v‖²`, valid for any γ.
pub fn upper_bound(params: &TheoremParams, full_residual: f64, variant: SandwichVariant) -> f64 {
    let (_, hi) = variant.factors(params.alpha);
    hi * params.m as f64 / params.n as f64 * full_residual
}

/// Both sides of the high-probability bound on `‖v_Ω − P_{S_Ω} v_Ω‖²`.
pub fn sandwich(params: &TheoremParams, full_residual: f64, variant: SandwichVariant) -> Result<SandwichBound> {
    if !(full_residual >= 0.0) || !full_residual.is_finite() {
        return Err(Error::param(format!("full residual must be finite and >= 0, got {full_residual}")));
    }
    if params.gamma >= 1.0 {
        return Err(Error::GammaTooLarge { gamma: params.gamma });
    }
    let (lo, _) = variant.factors(params.alpha);
    let (m, n, r) = (params.m as f64, params.n as f64, params.r as f64);
    let penalty = r * params.mu_s * (1.0 + params.beta).powi(2) / (1.0 - params.gamma);
    Ok(SandwichBound {
        lower: (m * lo - penalty) / n * full_residual,
        upper: upper_bound(params, full_residual, variant),
        full_residual,
        confidence: 1.0 - 4.0 * params.delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Lemma {
    /// Two-sided concentration of `‖y_Ω‖²`.
    ObservedEnergy = 1,
    /// Upper bound on `‖U_Ωᵀ y_Ω‖²`.
    CrossTerm = 2,
    /// Lower bound on the smallest eigenvalue of `U_ΩᵀU_Ω`.
    GramConditioning = 3,
}

impl Lemma {
    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Lemma::ObservedEnergy),
            2 => Ok(Lemma::CrossTerm),
            3 => Ok(Lemma::GramConditioning),
            other => Err(Error::param(format!("lemma id must be 1, 2 or 3, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LemmaValidationReport {
    pub lemma: Lemma,
    pub trials: usize,
    pub failures: usize,
    pub empirical_rate: f64,
    /// Failure probability the bound allows: `2δ` for lemma 1, `δ` otherwise.
    pub certified_rate: f64,
}

impl LemmaValidationReport {
    fn new(lemma: Lemma, trials: usize, failures: usize, certified_rate: f64) -> Self {
        Self {
            lemma,
            trials,
            failures,
            empirical_rate: failures as f64 / trials as f64,
            certified_rate,
        }
    }

    /// Three binomial standard deviations of the certified rate.
    pub fn slack(&self) -> f64 {
        let p = self.certified_rate.min(1.0);
        3.0 * (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    pub fn within_certified(&self) -> bool {
        self.empirical_rate <= self.certified_rate + self.slack()
    }
}

fn count_failures(trials: usize, seed: u64, fails: impl Fn(SeedSpec) -> Result<bool> + Sync) -> Result<usize> {
    let outcomes: Vec<bool> = (0..trials as u64)
        .into_par_iter()
        .map(|t| fails(SeedSpec::new(seed, t)))
        .collect::<Result<_>>()?;
    Ok(outcomes.into_iter().filter(|&f| f).count())
}

fn check_trials(trials: usize, m: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::param("trials must be >= 1"));
    }
    if m == 0 {
        return Err(Error::param("m must be >= 1"));
    }
    Ok(())
}

fn check_perp(basis: &SubspaceBasis, y: &DenseVector) -> Result<()> {
    let energy = y.norm();
    if energy == 0.0 {
        return Err(Error::param("y must be nonzero"));
    }
    let inside = project_full(basis, y)?.norm();
    if inside > PERP_TOLERANCE * energy {
        return Err(Error::param(format!(
            "y must lie in the orthogonal complement (‖P_S y‖/‖y‖ = {:e})",
            inside / energy
        )));
    }
    Ok(())
}

/// Counts trials where `‖y_Ω‖²` leaves `[(1−α), (1+α)]·(m/n)‖y‖²`.
pub fn validate_lemma1(
    basis: &SubspaceBasis,
    y: &DenseVector,
    m: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<LemmaValidationReport> {
    check_trials(trials, m)?;
    check_perp(basis, y)?;
    let params = theorem_params(basis.n(), basis.r(), m, delta, subspace_coherence(basis).mu, vector_coherence(y)?.mu)?;
    let target = m as f64 / basis.n() as f64 * y.norm_squared();
    let (lo, hi) = ((1.0 - params.alpha) * target, (1.0 + params.alpha) * target);
    let failures = count_failures(trials, seed, |s| {
        let omega = sample_with_replacement(basis.n(), m, s)?;
        let observed = restrict_vector(y, &omega)?.norm_squared();
        Ok(observed < lo || observed > hi)
    })?;
    Ok(LemmaValidationReport::new(Lemma::ObservedEnergy, trials, failures, 2.0 * delta))
}

/// Counts trials where `‖U_Ωᵀ y_Ω‖² > (β+1)² (m/n) (rμ(S)/n) ‖y‖²`.
pub fn validate_lemma2(
    basis: &SubspaceBasis,
    y: &DenseVector,
    m: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<LemmaValidationReport> {
    check_trials(trials, m)?;
    check_perp(basis, y)?;
    let params = theorem_params(basis.n(), basis.r(), m, delta, subspace_coherence(basis).mu, vector_coherence(y)?.mu)?;
    let (n, r) = (basis.n() as f64, basis.r() as f64);
    let bound = (params.beta + 1.0).powi(2) * (m as f64 / n) * (r * params.mu_s / n) * y.norm_squared();
    let failures = count_failures(trials, seed, |s| {
        let omega = sample_with_replacement(basis.n(), m, s)?;
        let rb = restrict(basis, &omega)?;
        let y_omega = restrict_vector(y, &omega)?;
        let cross = rb.matrix().tr_mul(y_omega.as_dvector()).norm_squared();
        Ok(cross > bound)
    })?;
    Ok(LemmaValidationReport::new(Lemma::CrossTerm, trials, failures, delta))
}

/// Counts trials where `λ_min(U_ΩᵀU_Ω) < (1−γ) m/n`.
pub fn validate_lemma3(
    basis: &SubspaceBasis,
    m: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<LemmaValidationReport> {
    check_trials(trials, m)?;
    // μ(y) does not enter this bound; 1 is always in range.
    let params = theorem_params(basis.n(), basis.r(), m, delta, subspace_coherence(basis).mu, 1.0)?;
    if params.gamma >= 1.0 {
        return Err(Error::GammaTooLarge { gamma: params.gamma });
    }
    let floor = (1.0 - params.gamma) * m as f64 / basis.n() as f64;
    let failures = count_failures(trials, seed, |s| {
        let omega = sample_with_replacement(basis.n(), m, s)?;
        Ok(smallest_gram_eigenvalue(basis, &omega)? < floor)
    })?;
    Ok(LemmaValidationReport::new(Lemma::GramConditioning, trials, failures, delta))
}

/// `λ_min(U_ΩᵀU_Ω)`.
pub fn smallest_gram_eigenvalue(basis: &SubspaceBasis, omega: &crate::vecspace::SampleIndexSet) -> Result<f64> {
    let rb = restrict(basis, omega)?;
    let gram = rb.matrix().tr_mul(rb.matrix());
    Ok(SymmetricEigen::new(gram).eigenvalues.min())
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use crate::vecspace::{orthonormalize, SampleIndexSet, SamplingMode};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    #[test]
    fn alpha_closed_form() {
        let p = theorem_params(1000, 5, 200, 0.05, 1.0, 1.0).unwrap();
        assert_relative_eq!(p.alpha, 0.173_081_838_260_228_53, max_relative = 1e-14);
        let p = theorem_params(1000, 5, 100, 0.99, 1.0, 1.0).unwrap();
        assert_relative_eq!(p.alpha, 0.014_177_683_769_573_534, max_relative = 1e-12);
    }

    #[test]
    fn beta_is_two_at_e_minus_two() {
        let p = theorem_params(1000, 5, 100, (-2.0f64).exp(), 1.0, 1.0).unwrap();
        assert_relative_eq!(p.beta, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(theorem_params(100, 5, 10, 0.0, 1.0, 1.0).is_err());
        assert!(theorem_params(100, 5, 10, 1.0, 1.0, 1.0).is_err());
        assert!(theorem_params(100, 5, 0, 0.1, 1.0, 1.0).is_err());
        assert!(theorem_params(100, 5, 10, 0.1, 0.5, 1.0).is_err());
        assert!(theorem_params(100, 5, 10, 0.1, 21.0, 1.0).is_err());
        assert!(theorem_params(100, 5, 10, 0.1, 1.0, 101.0).is_err());
        assert!(min_samples(0, 1.0, 0.1).is_err());
        assert!(min_samples(3, 0.5, 0.1).is_err());
        assert!(min_samples(3, 1.0, 1.5).is_err());
    }

    #[test]
    fn alpha_gamma_shrink_with_m_beta_does_not() {
        let mut prev = theorem_params(10_000, 10, 100, 0.05, 2.0, 5.0).unwrap();
        for m in [1_000, 10_000, 100_000, 1_000_000] {
            let p = theorem_params(10_000, 10, m, 0.05, 2.0, 5.0).unwrap();
            assert!(p.alpha < prev.alpha && p.gamma < prev.gamma);
            assert_eq!(p.beta, prev.beta);
            prev = p;
        }
        assert!(prev.alpha < 0.02 && prev.gamma < 0.03);
    }

    #[test]
    fn min_samples_examples() {
        assert_eq!(min_samples(50, 1.0, 0.1).unwrap(), 922);
        assert_eq!(min_samples(1, 1.0, 2.0 / std::f64::consts::E).unwrap(), 3);
    }

    #[test]
    fn min_samples_is_monotone() {
        let mut last = 0;
        for r in 1..60 {
            let m = min_samples(r, 1.3, 0.05).unwrap();
            assert!(m >= last);
            last = m;
        }
        let mut last = 0;
        for k in 0..50 {
            let m = min_samples(10, 1.0 + 0.2 * k as f64, 0.05).unwrap();
            assert!(m >= last);
            last = m;
        }
        let mut last = 0;
        for delta in [0.9, 0.5, 0.1, 0.01, 1e-4, 1e-8] {
            let m = min_samples(10, 1.5, delta).unwrap();
            assert!(m >= last);
            last = m;
        }
    }

    #[test]
    fn sandwich_zero_residual() {
        let p = theorem_params(10_000, 50, 2000, 0.05, 1.5, 13.6).unwrap();
        let b = sandwich(&p, 0.0, SandwichVariant::Statement).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
        assert_relative_eq!(b.confidence, 0.8, epsilon = 1e-15);
    }

    #[test]
    fn sandwich_limit_without_deviations() {
        let p = TheoremParams {
            n: 1000,
            r: 10,
            m: 200,
            delta: 0.1,
            mu_s: 2.0,
            mu_y: 1.0,
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
        };
        let b = sandwich(&p, 3.0, SandwichVariant::Statement).unwrap();
        assert_relative_eq!(b.lower, (200.0 - 20.0) / 1000.0 * 3.0, epsilon = 1e-15);
        assert_relative_eq!(b.upper, 200.0 / 1000.0 * 3.0, epsilon = 1e-15);
    }

    #[test]
    fn sandwich_reference_values() {
        // Frozen from a 40-digit evaluation of the closed forms.
        let p = theorem_params(10_000, 50, 2000, 0.05, 1.5, 13.6).unwrap();
        assert_relative_eq!(p.alpha, 0.744_372_649_495_228_4, max_relative = 1e-13);
        assert_relative_eq!(p.beta, 9.026_844_290_263_821, max_relative = 1e-13);
        assert_relative_eq!(p.gamma, 0.871_831_546_776_215_4, max_relative = 1e-13);
        let b = sandwich(&p, 1.0, SandwichVariant::Statement).unwrap();
        assert_relative_eq!(b.lower, -5.832_007_463_105_448, max_relative = 1e-12);
        assert_relative_eq!(b.upper, 0.348_874_529_899_045_7, max_relative = 1e-13);
        let sq = sandwich(&p, 1.0, SandwichVariant::ProofSquared).unwrap();
        assert_relative_eq!(sq.lower, -5.870_063_864_741_184, max_relative = 1e-12);
        assert_relative_eq!(sq.upper, 0.608_567_188_061_400_6, max_relative = 1e-13);
    }

    #[test]
    fn sandwich_requires_small_gamma() {
        let p = theorem_params(1000, 50, 60, 0.05, 1.0, 1.0).unwrap();
        assert!(p.gamma >= 1.0);
        assert!(matches!(sandwich(&p, 1.0, SandwichVariant::Statement), Err(Error::GammaTooLarge { .. })));
        assert!(upper_bound(&p, 1.0, SandwichVariant::Statement) > 0.0);
    }

    #[test]
    fn sandwich_is_ordered() {
        for m in [500, 1000, 5000] {
            for mu_y in [1.0, 4.0, 30.0] {
                let p = theorem_params(10_000, 20, m, 0.05, 1.2, mu_y).unwrap();
                if p.gamma < 1.0 {
                    let b = sandwich(&p, 0.7, SandwichVariant::Statement).unwrap();
                    assert!(b.lower <= b.upper);
                }
            }
        }
    }

    fn gaussian_basis(n: usize, r: usize, seed: u64) -> SubspaceBasis {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        orthonormalize(&DMatrix::from_fn(n, r, |_, _| StandardNormal.sample(&mut rng))).unwrap()
    }

    #[test]
    fn lemma1_flat_vector_never_fails_at_large_m() {
        // Alternating signs are orthogonal to the constant column.
        let n = 64;
        let basis = SubspaceBasis::from_orthonormal(DMatrix::from_element(n, 1, 1.0 / (n as f64).sqrt())).unwrap();
        let y = DenseVector::new((0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect()).unwrap();
        let rep = validate_lemma1(&basis, &y, 100_000, 0.05, 1000, 3).unwrap();
        assert_eq!(rep.failures, 0);
        assert_eq!(rep.certified_rate, 0.1);
        assert!(rep.within_certified());
    }

    #[test]
    fn validators_reject_zero_trials_and_bad_vectors() {
        let basis = gaussian_basis(50, 3, 1);
        let y = DenseVector::new(vec![1.0; 50]).unwrap();
        assert!(matches!(validate_lemma1(&basis, &y, 10, 0.1, 0, 1), Err(Error::InvalidParameter(_))));
        assert!(matches!(validate_lemma1(&basis, &y, 10, 0.1, 10, 1), Err(Error::InvalidParameter(_))));
        assert!(matches!(validate_lemma3(&basis, 10, 0.1, 0, 1), Err(Error::InvalidParameter(_))));
        assert!(matches!(validate_lemma3(&basis, 10, 0.1, 5, 1), Err(Error::GammaTooLarge { .. })));
    }

    #[test]
    fn lemma2_full_space_identity() {
        // With U = I the cross term is ‖y_Ω‖² itself; y must then be zero to be
        // perpendicular, so exercise the inequality directly instead.
        let n = 6;
        let basis = SubspaceBasis::from_orthonormal(DMatrix::identity(n, n)).unwrap();
        let v = DenseVector::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let omega = SampleIndexSet::new(vec![0, 3, 3, 5], SamplingMode::WithReplacement, n).unwrap();
        let rb = restrict(&basis, &omega).unwrap();
        let v_omega = restrict_vector(&v, &omega).unwrap();
        let cross = rb.matrix().tr_mul(v_omega.as_dvector()).norm_squared();
        assert_relative_eq!(cross, 1.0 + 64.0 + 36.0, epsilon = 1e-12);
        assert!(validate_lemma2(&basis, &v, 4, 0.1, 10, 0).is_err());
    }

    #[test]
    fn lemma2_is_deterministic() {
        let basis = gaussian_basis(300, 4, 9);
        let y = crate::simlab::gen_perp_vector(&basis, SeedSpec::new(1, 0)).unwrap();
        let a = validate_lemma2(&basis, &y, 120, 0.1, 1, 55).unwrap();
        let b = validate_lemma2(&basis, &y, 120, 0.1, 1, 55).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lemma3_gram_of_axis_basis_counts_hits() {
        let n = 8;
        let u = DMatrix::from_fn(n, 3, |i, j| (i == j) as u8 as f64);
        let basis = SubspaceBasis::from_orthonormal(u).unwrap();
        let omega = SampleIndexSet::new(vec![0, 1, 2, 2, 0, 7, 1, 2], SamplingMode::WithReplacement, n).unwrap();
        assert_relative_eq!(smallest_gram_eigenvalue(&basis, &omega).unwrap(), 2.0, epsilon = 1e-12);
        let missing = SampleIndexSet::new(vec![0, 1, 7], SamplingMode::WithReplacement, n).unwrap();
        assert!(smallest_gram_eigenvalue(&basis, &missing).unwrap().abs() < 1e-12);
    }

    #[test]
    fn lemma_rates_within_certified_small() {
        let basis = gaussian_basis(400, 4, 17);
        let mu_s = subspace_coherence(&basis).mu;
        let m = min_samples(4, mu_s, 0.1).unwrap();
        let y = crate::simlab::gen_perp_vector(&basis, SeedSpec::new(2, 0)).unwrap();
        for rep in [
            validate_lemma1(&basis, &y, m, 0.1, 300, 5).unwrap(),
            validate_lemma2(&basis, &y, m, 0.1, 300, 6).unwrap(),
            validate_lemma3(&basis, m, 0.1, 300, 7).unwrap(),
        ] {
            assert!(rep.within_certified(), "{rep:?}");
            assert_eq!(rep.empirical_rate, rep.failures as f64 / rep.trials as f64);
        }
    }
}
