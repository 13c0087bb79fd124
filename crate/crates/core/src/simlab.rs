//! Experiment harness: basis and signal generators, residual sweeps over the
//! sample size, the zero-filling sweep, and empirical ROC points.
//!
//! Randomness is keyed by `(seed, stream)`. The basis and the test vector use
//! reserved streams at the top of the range; trial `t` at grid position `k`
//! uses stream `k·2³² + t`. Trials run in parallel but are aggregated in
//! trial order, so output does not depend on the thread count.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::coherence::{subspace_coherence, vector_coherence};
use crate::detect::{DofPolicy, TestConfig};
use crate::error::{Error, Result};
use crate::estimator::{observed_residual_energy, residual_energy, zero_fill_residual};
use crate::sampling::{sample, SeedSpec};
use crate::vecspace::{orthonormalize, project_full, restrict_vector, DenseVector, SamplingMode, SubspaceBasis};

pub const BASIS_STREAM: u64 = u64::MAX;
pub const VECTOR_STREAM: u64 = u64::MAX - 1;
const RETRY_STREAM_FLAG: u64 = 1 << 63;

const ROC_H0_OMEGA: u64 = 1 << 56;
const ROC_H0_NOISE: u64 = 2 << 56;
const ROC_H1_OMEGA: u64 = 3 << 56;
const ROC_H1_NOISE: u64 = 4 << 56;

/// Stream for trial `trial` at grid position `m_index`.
pub fn trial_stream(m_index: usize, trial: usize) -> u64 {
    ((m_index as u64) << 32) + trial as u64
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BasisKind {
    Gaussian,
    /// Realified DFT columns; `frequencies` are chosen automatically when empty.
    Fourier {
        #[serde(default)]
        frequencies: Vec<usize>,
    },
    Coherent {
        spike: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorKind {
    /// Unit-norm `v ∈ S⊥`.
    InPerp,
    /// Unit-norm `v ∈ S`.
    InSubspace,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub r: usize,
    pub basis_kind: BasisKind,
    pub m_grid: Vec<usize>,
    pub trials_per_m: usize,
    pub sampling_mode: SamplingMode,
    pub seed: u64,
    pub vector_kind: VectorKind,
    /// Multiplier applied to the unit-norm test vector.
    pub vector_scale: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || self.r > self.n {
            return Err(Error::param(format!("need 1 <= r <= n, got n={}, r={}", self.n, self.r)));
        }
        if self.m_grid.is_empty() {
            return Err(Error::param("m_grid must not be empty"));
        }
        if self.m_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("m_grid must be strictly increasing"));
        }
        if self.m_grid[0] == 0 {
            return Err(Error::param("m_grid entries must be >= 1"));
        }
        if self.sampling_mode == SamplingMode::WithoutReplacement && *self.m_grid.last().unwrap() > self.n {
            return Err(Error::param("m_grid exceeds n for sampling without replacement"));
        }
        if self.trials_per_m == 0 {
            return Err(Error::param("trials must be >= 1"));
        }
        if !(self.vector_scale.is_finite() && self.vector_scale != 0.0) {
            return Err(Error::param("vector_scale must be finite and nonzero"));
        }
        if self.vector_kind == VectorKind::InPerp && self.r == self.n {
            return Err(Error::DegenerateSubspace);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TrialSummary {
    pub m: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub mu_s: f64,
    pub mu_y: f64,
    pub trials: usize,
}

fn gaussian_matrix(n: usize, r: usize, seed: SeedSpec) -> DMatrix<f64> {
    let mut rng = seed.rng();
    DMatrix::from_fn(n, r, |_, _| StandardNormal.sample(&mut rng))
}

fn orthonormalize_with_retry(n: usize, r: usize, seed: SeedSpec, shape: impl Fn(&mut DMatrix<f64>)) -> Result<SubspaceBasis> {
    let mut raw = gaussian_matrix(n, r, seed);
    shape(&mut raw);
    match orthonormalize(&raw) {
        Err(Error::RankDeficient { .. }) => {
            let mut raw = gaussian_matrix(n, r, seed.with_stream(seed.stream ^ RETRY_STREAM_FLAG));
            shape(&mut raw);
            orthonormalize(&raw)
        }
        other => other,
    }
}

/// Orthonormalized `n × r` standard Gaussian matrix.
pub fn gen_gaussian_basis(n: usize, r: usize, seed: SeedSpec) -> Result<SubspaceBasis> {
    check_dims(n, r)?;
    orthonormalize_with_retry(n, r, seed, |_| {})
}

/// Gaussian basis whose first `r` rows are scaled by `1 + spike` before
/// orthonormalization. Uses the same draws as [`gen_gaussian_basis`].
pub fn gen_coherent_basis(n: usize, r: usize, spike: f64, seed: SeedSpec) -> Result<SubspaceBasis> {
    check_dims(n, r)?;
    if !(spike >= 0.0) || !spike.is_finite() {
        return Err(Error::param(format!("spike must be finite and >= 0, got {spike}")));
    }
    let amplify = 1.0 + spike;
    orthonormalize_with_retry(n, r, seed, |raw| {
        for i in 0..r.min(n) {
            raw.row_mut(i).scale_mut(amplify);
        }
    })
}

/// Finds a spike whose coherent basis has `μ(S)` within `tolerance` of
/// `target_mu`, by bisection on the spike.
pub fn calibrate_coherent_spike(
    n: usize,
    r: usize,
    target_mu: f64,
    tolerance: f64,
    seed: SeedSpec,
) -> Result<(f64, SubspaceBasis)> {
    let max_mu = n as f64 / r as f64;
    if !(target_mu >= 1.0 && target_mu < max_mu) {
        return Err(Error::param(format!("target mu must lie in [1, {max_mu}), got {target_mu}")));
    }
    let mu_at = |spike: f64| -> Result<(f64, SubspaceBasis)> {
        let b = gen_coherent_basis(n, r, spike, seed)?;
        Ok((subspace_coherence(&b).mu, b))
    };
    let (mu0, b0) = mu_at(0.0)?;
    if mu0 >= target_mu - tolerance {
        return Ok((0.0, b0));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut best = (0.0, b0);
    for _ in 0..60 {
        let (mu, b) = mu_at(hi)?;
        if mu >= target_mu {
            if (mu - target_mu).abs() <= tolerance {
                return Ok((hi, b));
            }
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let (mu, b) = mu_at(mid)?;
        if (mu - target_mu).abs() <= tolerance {
            return Ok((mid, b));
        }
        if mu < target_mu {
            lo = mid;
        } else {
            hi = mid;
        }
        best = (mid, b);
    }
    let mu = subspace_coherence(&best.1).mu;
    Err(Error::param(format!("spike calibration stalled at mu = {mu} for target {target_mu}")))
}

fn check_dims(n: usize, r: usize) -> Result<()> {
    if r == 0 || r > n {
        return Err(Error::param(format!("need 1 <= r <= n, got n={n}, r={r}")));
    }
    Ok(())
}

/// Default frequency choice giving exactly `r` realified DFT columns:
/// the constant column when `r` is odd, then cosine/sine pairs for
/// frequencies `1, 2, …`, then the Nyquist column if needed.
pub fn default_fourier_frequencies(n: usize, r: usize) -> Result<Vec<usize>> {
    check_dims(n, r)?;
    let mut freqs = Vec::new();
    let mut remaining = r;
    if remaining % 2 == 1 {
        freqs.push(0);
        remaining -= 1;
    }
    let mut k = 1;
    while remaining >= 2 && 2 * k < n {
        freqs.push(k);
        remaining -= 2;
        k += 1;
    }
    for extra in [0, n / 2] {
        if remaining == 0 {
            break;
        }
        let available = if extra == 0 { !freqs.contains(&0) } else { n.is_multiple_of(2) && n / 2 > 0 };
        if available {
            freqs.push(extra);
            remaining -= 1;
        }
    }
    if remaining > 0 {
        return Err(Error::param(format!("cannot select {r} Fourier columns in dimension {n}")));
    }
    freqs.sort_unstable();
    Ok(freqs)
}

/// Real basis spanning the DFT columns at `frequencies` (each in `[0, n/2]`).
///
/// Frequency 0 and, for even `n`, frequency `n/2` contribute one real column
/// each; every other frequency contributes its cosine and sine, scaled by
/// `√(2/n)`. Every row then has squared norm `r/n`, so `μ(S) = 1`.
pub fn gen_fourier_basis(n: usize, r: usize, frequencies: &[usize]) -> Result<SubspaceBasis> {
    check_dims(n, r)?;
    let mut sorted = frequencies.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::param("duplicate Fourier frequencies"));
    }
    if let Some(&bad) = sorted.iter().find(|&&k| 2 * k > n) {
        return Err(Error::param(format!("frequency {bad} exceeds n/2 = {}", n / 2)));
    }
    let single = |k: usize| k == 0 || 2 * k == n;
    let columns: usize = frequencies.iter().map(|&k| if single(k) { 1 } else { 2 }).sum();
    if columns != r {
        return Err(Error::param(format!("frequencies {frequencies:?} give {columns} columns, expected r = {r}")));
    }
    let nf = n as f64;
    let mut matrix = DMatrix::zeros(n, r);
    let mut col = 0;
    for &k in frequencies {
        if single(k) {
            let sign_flip = k != 0;
            for j in 0..n {
                let s = if sign_flip && j % 2 == 1 { -1.0 } else { 1.0 };
                matrix[(j, col)] = s / nf.sqrt();
            }
            col += 1;
        } else {
            let scale = (2.0 / nf).sqrt();
            for j in 0..n {
                // Reduce k·j mod n first so the angle stays small and exact.
                let phase = std::f64::consts::TAU * ((k * j) % n) as f64 / nf;
                matrix[(j, col)] = scale * phase.cos();
                matrix[(j, col + 1)] = scale * phase.sin();
            }
            col += 2;
        }
    }
    SubspaceBasis::from_orthonormal(matrix)
}

/// Unit-norm vector in `S⊥`: a Gaussian draw with its `S` component removed
/// (twice, for numerical orthogonality), then normalized.
pub fn gen_perp_vector(basis: &SubspaceBasis, seed: SeedSpec) -> Result<DenseVector> {
    if basis.r() == basis.n() {
        return Err(Error::DegenerateSubspace);
    }
    let mut rng = seed.rng();
    let mut v = DVector::from_fn(basis.n(), |_, _| StandardNormal.sample(&mut rng));
    for _ in 0..2 {
        let inside = project_full(basis, &DenseVector::from_trusted(v.clone()))?;
        v -= inside.as_dvector();
    }
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    DenseVector::from_dvector(v / norm)
}

/// Unit-norm vector in `S` with Gaussian coefficients.
pub fn gen_subspace_vector(basis: &SubspaceBasis, seed: SeedSpec) -> Result<DenseVector> {
    let mut rng = seed.rng();
    let coeffs = DVector::<f64>::from_fn(basis.r(), |_, _| StandardNormal.sample(&mut rng));
    let norm = coeffs.norm();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    DenseVector::from_dvector(basis.matrix() * (coeffs / norm))
}

/// The basis described by `cfg`.
pub fn build_basis(cfg: &ExperimentConfig) -> Result<SubspaceBasis> {
    let seed = SeedSpec::new(cfg.seed, BASIS_STREAM);
    match &cfg.basis_kind {
        BasisKind::Gaussian => gen_gaussian_basis(cfg.n, cfg.r, seed),
        BasisKind::Fourier { frequencies } if frequencies.is_empty() => {
            gen_fourier_basis(cfg.n, cfg.r, &default_fourier_frequencies(cfg.n, cfg.r)?)
        }
        BasisKind::Fourier { frequencies } => gen_fourier_basis(cfg.n, cfg.r, frequencies),
        BasisKind::Coherent { spike } => gen_coherent_basis(cfg.n, cfg.r, *spike, seed),
    }
}

/// The (scaled) test vector described by `cfg`.
pub fn build_vector(cfg: &ExperimentConfig, basis: &SubspaceBasis) -> Result<DenseVector> {
    let seed = SeedSpec::new(cfg.seed, VECTOR_STREAM);
    let unit = match cfg.vector_kind {
        VectorKind::InPerp => gen_perp_vector(basis, seed)?,
        VectorKind::InSubspace => gen_subspace_vector(basis, seed)?,
    };
    Ok(if cfg.vector_scale == 1.0 { unit } else { unit.scaled(cfg.vector_scale) })
}

fn summarize(m: usize, values: &[f64], mu_s: f64, mu_y: f64) -> TrialSummary {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &x in values {
        min = min.min(x);
        max = max.max(x);
        sum += x;
    }
    TrialSummary {
        m,
        min,
        mean: sum / values.len() as f64,
        max,
        mu_s,
        mu_y,
        trials: values.len(),
    }
}

fn sweep(
    cfg: &ExperimentConfig,
    expected: VectorKind,
    statistic: impl Fn(&SubspaceBasis, &DenseVector, &crate::vecspace::SampleIndexSet) -> Result<f64> + Sync,
) -> Result<Vec<TrialSummary>> {
    cfg.validate()?;
    if cfg.vector_kind != expected {
        return Err(Error::param(format!("this sweep needs vector_kind = {expected:?}")));
    }
    let basis = build_basis(cfg)?;
    let v = build_vector(cfg, &basis)?;
    let mu_s = subspace_coherence(&basis).mu;
    let mu_y = vector_coherence(&v)?.mu;
    cfg.m_grid
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let values: Vec<f64> = (0..cfg.trials_per_m)
                .into_par_iter()
                .map(|t| {
                    let omega = sample(cfg.sampling_mode, cfg.n, m, SeedSpec::new(cfg.seed, trial_stream(k, t)))?;
                    statistic(&basis, &v, &omega)
                })
                .collect::<Result<_>>()?;
            Ok(summarize(m, &values, mu_s, mu_y))
        })
        .collect()
}

/// Summaries of `‖v_Ω − P_{S_Ω} v_Ω‖²` over `trials_per_m` index draws per `m`,
/// for a fixed unit-norm `v ∈ S⊥`.
pub fn run_residual_sweep(cfg: &ExperimentConfig) -> Result<Vec<TrialSummary>> {
    sweep(cfg, VectorKind::InPerp, |basis, v, omega| Ok(residual_energy(basis, v, omega)?.t))
}

/// Summaries of the zero-filled residual `t₀` for a fixed `v ∈ S`.
pub fn run_zero_fill_sweep(cfg: &ExperimentConfig) -> Result<Vec<TrialSummary>> {
    sweep(cfg, VectorKind::InSubspace, zero_fill_residual)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RocSettings {
    pub m: usize,
    pub noise_sigma: f64,
    pub lambdas: Vec<f64>,
    pub trials: usize,
    pub dof_policy: DofPolicy,
    /// `‖y‖²` of the `H1` signal, which lies entirely in `S⊥`.
    pub perp_energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RocPoint {
    pub lambda: f64,
    pub p_fa: f64,
    pub p_d: f64,
    pub trials_h0: usize,
    pub trials_h1: usize,
}

/// Empirical false-alarm and detection rates of the noisy test.
///
/// `H0` trials observe a fixed unit vector in `S` plus noise, `H1` trials a
/// fixed vector in `S⊥` with energy `perp_energy` plus noise. Each trial
/// draws a fresh index set and fresh noise; all `λ` share the same trials.
pub fn run_roc(cfg: &ExperimentConfig, settings: &RocSettings) -> Result<Vec<RocPoint>> {
    check_dims(cfg.n, cfg.r)?;
    if cfg.r == cfg.n {
        return Err(Error::DegenerateSubspace);
    }
    if settings.trials == 0 || settings.lambdas.is_empty() {
        return Err(Error::param("ROC needs trials >= 1 and at least one lambda"));
    }
    if settings.m == 0 || (cfg.sampling_mode == SamplingMode::WithoutReplacement && settings.m > cfg.n) {
        return Err(Error::param(format!("invalid m = {} for n = {}", settings.m, cfg.n)));
    }
    if !(settings.perp_energy >= 0.0) || !settings.perp_energy.is_finite() {
        return Err(Error::param("perp_energy must be finite and >= 0"));
    }
    let configs: Vec<TestConfig> = settings
        .lambdas
        .iter()
        .map(|&l| TestConfig::new(l, settings.noise_sigma, settings.dof_policy))
        .collect::<Result<_>>()?;
    if !(settings.noise_sigma > 0.0) {
        return Err(Error::param("ROC requires noise sigma > 0"));
    }

    let basis = build_basis(cfg)?;
    let h0_signal = gen_subspace_vector(&basis, SeedSpec::new(cfg.seed, VECTOR_STREAM))?;
    let h1_signal = gen_perp_vector(&basis, SeedSpec::new(cfg.seed, VECTOR_STREAM - 1))?.scaled(settings.perp_energy.sqrt());

    let run = |signal: &DenseVector, omega_tag: u64, noise_tag: u64| -> Result<Vec<(f64, usize)>> {
        (0..settings.trials)
            .into_par_iter()
            .map(|t| {
                let omega = sample(cfg.sampling_mode, cfg.n, settings.m, SeedSpec::new(cfg.seed, omega_tag | t as u64))?;
                let clean = restrict_vector(signal, &omega)?;
                let mut rng = SeedSpec::new(cfg.seed, noise_tag | t as u64).rng();
                let noisy = clean
                    .as_slice()
                    .iter()
                    .map(|&x| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        x + settings.noise_sigma * z
                    })
                    .collect();
                let rep = observed_residual_energy(&basis, &omega, &DenseVector::new(noisy)?)?;
                Ok((rep.t, settings.dof_policy.resolve(rep.m, rep.rank, basis.r())))
            })
            .collect()
    };
    let h0 = run(&h0_signal, ROC_H0_OMEGA, ROC_H0_NOISE)?;
    let h1 = run(&h1_signal, ROC_H1_OMEGA, ROC_H1_NOISE)?;

    configs
        .iter()
        .map(|tc| {
            let mut thresholds = BTreeMap::new();
            let mut alarms = |stats: &[(f64, usize)]| -> Result<usize> {
                let mut count = 0;
                for &(t, dof) in stats {
                    let eta = match thresholds.get(&dof) {
                        Some(&eta) => eta,
                        None => {
                            let eta = tc.threshold(dof)?;
                            thresholds.insert(dof, eta);
                            eta
                        }
                    };
                    count += (t > eta) as usize;
                }
                Ok(count)
            };
            let fa = alarms(&h0)?;
            let det = alarms(&h1)?;
            Ok(RocPoint {
                lambda: tc.lambda_fa,
                p_fa: fa as f64 / h0.len() as f64,
                p_d: det as f64 / h1.len() as f64,
                trials_h0: h0.len(),
                trials_h1: h1.len(),
            })
        })
        .collect()
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub const SWEEP_CSV_HEADER: &str = "m,min,mean,max,mu_S,mu_y,trials,mode,seed";
pub const ROC_CSV_HEADER: &str = "lambda,p_fa,p_d,trials_h0,trials_h1";

pub fn sweep_to_csv(summaries: &[TrialSummary], cfg: &ExperimentConfig) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for s in summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.m,
            fmt_f64(s.min),
            fmt_f64(s.mean),
            fmt_f64(s.max),
            fmt_f64(s.mu_s),
            fmt_f64(s.mu_y),
            s.trials,
            cfg.sampling_mode.as_str(),
            cfg.seed
        );
    }
    out
}

pub fn roc_to_csv(points: &[RocPoint]) -> String {
    let mut out = String::from(ROC_CSV_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(p.lambda),
            fmt_f64(p.p_fa),
            fmt_f64(p.p_d),
            p.trials_h0,
            p.trials_h1
        );
    }
    out
}
