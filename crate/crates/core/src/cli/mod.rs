//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 numerical error
//! (rank deficiency, vacuous lower bound), 4 I/O error.

pub mod config;
mod manifest;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bounds::{self, Lemma, SandwichVariant};
use crate::coherence::{subspace_coherence, vector_coherence};
use crate::detect::{self, DofPolicy, TestConfig};
use crate::error::{Error, Result};
use crate::estimator;
use crate::io;
use crate::sampling::{self, SeedSpec};
use crate::simlab::{self, fmt_f64};
use crate::vecspace::{orthonormalize, DenseVector, SampleIndexSet, SamplingMode, SubspaceBasis};

pub use config::{load_config, Experiment, LoadedConfig};
pub use manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Environment variable consulted when `--threads` is not given.
pub const THREADS_ENV: &str = "MSDETECT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "msdetect", version, about = "Matched subspace detection from incomplete observations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Coherence of a basis and, optionally, of a vector.
    Coherence {
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        vector: Option<PathBuf>,
    },
    /// Residual energy of a vector observed on an index set.
    Estimate {
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        vector: PathBuf,
        #[command(flatten)]
        omega: OmegaArgs,
    },
    /// Concentration constants and the two-sided bound.
    Bounds {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long = "mu-s")]
        mu_s: f64,
        #[arg(long = "mu-y")]
        mu_y: f64,
        /// ‖v − P_S v‖² used to scale the bounds.
        #[arg(long, default_value_t = 1.0)]
        full_residual: f64,
        #[arg(long, value_enum, default_value_t = VariantArg::Statement)]
        variant: VariantArg,
    },
    /// Smallest m satisfying the sample-complexity condition.
    MinSamples {
        #[arg(long)]
        r: usize,
        #[arg(long = "mu-s")]
        mu_s: f64,
        #[arg(long)]
        delta: f64,
    },
    /// Monte Carlo failure rate of one of the three supporting bounds.
    ValidateLemma {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=3))]
        lemma: u8,
        #[command(flatten)]
        basis: BasisArgs,
        /// Vector in S⊥ (lemmas 1 and 2); a random one is drawn if omitted.
        #[arg(long)]
        vector: Option<PathBuf>,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Noiseless (sigma = 0) or noisy matched subspace test.
    Detect {
        #[arg(long)]
        basis: PathBuf,
        /// Full-length vector; only the observed entries are used.
        #[arg(long)]
        vector: PathBuf,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long = "dof-policy", default_value = "residual")]
        dof_policy: String,
        #[command(flatten)]
        omega: OmegaArgs,
    },
    /// Run an experiment from a config file and write CSV plus a manifest.
    Simulate {
        #[arg(value_enum)]
        experiment: ExperimentArg,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Re-run a recorded simulation manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Write here instead of the recorded output path.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Debug, Args)]
struct OmegaArgs {
    /// File of 0-based indices; omit together with --m to observe everything.
    #[arg(long, conflicts_with_all = ["m", "mode", "seed"])]
    indices: Option<PathBuf>,
    #[arg(long, requires = "seed")]
    m: Option<usize>,
    #[arg(long, value_enum, default_value_t = ModeArg::Without)]
    mode: ModeArg,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct BasisArgs {
    /// Basis CSV (orthonormalized on load). Without it a Gaussian basis of
    /// size --n × --r is drawn from --seed.
    #[arg(long, conflicts_with_all = ["n", "r"])]
    basis: Option<PathBuf>,
    #[arg(long, requires = "r")]
    n: Option<usize>,
    #[arg(long, requires = "n")]
    r: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    With,
    Without,
}

impl From<ModeArg> for SamplingMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::With => SamplingMode::WithReplacement,
            ModeArg::Without => SamplingMode::WithoutReplacement,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Statement,
    Squared,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Fig1,
    Fig2,
    Roc,
}

impl From<ExperimentArg> for Experiment {
    fn from(e: ExperimentArg) -> Self {
        match e {
            ExperimentArg::Fig1 => Experiment::Fig1,
            ExperimentArg::Fig2 => Experiment::Fig2,
            ExperimentArg::Roc => Experiment::Roc,
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        e if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

/// Parses `argv` (including the program name), runs the command, writes
/// results to standard output and diagnostics to standard error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    run_with_output(argv, &mut out)
}

/// Like [`run`] but with results written to `out`.
pub fn run_with_output<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|source| Error::Io {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

fn load_basis(path: &Path) -> Result<SubspaceBasis> {
    orthonormalize(&io::read_matrix(path)?)
}

fn resolve_omega(args: &OmegaArgs, n: usize) -> Result<SampleIndexSet> {
    match (&args.indices, args.m) {
        (Some(path), _) => io::read_indices(path, n),
        (None, Some(m)) => {
            let seed = args.seed.ok_or_else(|| Error::param("--m requires --seed"))?;
            sampling::sample(args.mode.into(), n, m, SeedSpec::new(seed, 0))
        }
        (None, None) => SampleIndexSet::full(n),
    }
}

fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::param(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match resolve_threads(threads)? {
        None => f(),
        Some(0) => Err(Error::param("--threads must be >= 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::param(format!("cannot build thread pool: {e}")))?
            .install(f),
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Coherence { basis, vector } => {
            let basis = load_basis(&basis)?;
            let rep = subspace_coherence(&basis);
            let mut text = format!("mu_S,argmax\n{},{}\n", fmt_f64(rep.mu), rep.argmax_index);
            if let Some(path) = vector {
                let z = io::read_vector(&path)?;
                let vrep = vector_coherence(&z)?;
                text.push_str(&format!("mu_y,argmax\n{},{}\n", fmt_f64(vrep.mu), vrep.argmax_index));
            }
            emit(out, &text)?;
        }
        Command::Estimate { basis, vector, omega } => {
            let basis = load_basis(&basis)?;
            let v = io::read_vector(&vector)?;
            let omega = resolve_omega(&omega, basis.n())?;
            let rep = estimator::residual_energy(&basis, &v, &omega)?;
            let t0 = estimator::zero_fill_residual(&basis, &v, &omega)?;
            emit(
                out,
                &format!(
                    "t,rescaled,zero_fill,m,n,rank\n{},{},{},{},{},{}\n",
                    fmt_f64(rep.t),
                    fmt_f64(rep.rescaled),
                    fmt_f64(t0),
                    rep.m,
                    rep.n,
                    rep.rank
                ),
            )?;
        }
        Command::Bounds {
            n,
            r,
            m,
            delta,
            mu_s,
            mu_y,
            full_residual,
            variant,
        } => {
            let variant = match variant {
                VariantArg::Statement => SandwichVariant::Statement,
                VariantArg::Squared => SandwichVariant::ProofSquared,
            };
            let p = bounds::theorem_params(n, r, m, delta, mu_s, mu_y)?;
            let min_m = bounds::min_samples(r, mu_s, delta)?;
            let sandwich = bounds::sandwich(&p, full_residual, variant);
            let (lower, valid) = match &sandwich {
                Ok(b) => (fmt_f64(b.lower), true),
                Err(Error::GammaTooLarge { .. }) => (String::new(), false),
                Err(_) => {
                    sandwich?;
                    unreachable!()
                }
            };
            emit(
                out,
                &format!(
                    "alpha,beta,gamma,min_samples,lower,upper,confidence,lower_valid\n{},{},{},{},{},{},{},{}\n",
                    fmt_f64(p.alpha),
                    fmt_f64(p.beta),
                    fmt_f64(p.gamma),
                    min_m,
                    lower,
                    fmt_f64(bounds::upper_bound(&p, full_residual, variant)),
                    fmt_f64(1.0 - 4.0 * delta),
                    valid
                ),
            )?;
            if let Err(e) = sandwich {
                eprintln!("error: {e}");
                return Ok(EXIT_NUMERICAL);
            }
        }
        Command::MinSamples { r, mu_s, delta } => {
            emit(out, &format!("{}\n", bounds::min_samples(r, mu_s, delta)?))?;
        }
        Command::ValidateLemma {
            lemma,
            basis,
            vector,
            m,
            delta,
            trials,
            seed,
            threads,
        } => {
            let lemma = Lemma::from_id(lemma)?;
            let basis = match (&basis.basis, basis.n, basis.r) {
                (Some(path), _, _) => load_basis(path)?,
                (None, Some(n), Some(r)) => simlab::gen_gaussian_basis(n, r, SeedSpec::new(seed, simlab::BASIS_STREAM))?,
                _ => return Err(Error::param("give --basis FILE or both --n and --r")),
            };
            let report = with_threads(threads, || {
                let y = || -> Result<DenseVector> {
                    match &vector {
                        Some(path) => io::read_vector(path),
                        None => simlab::gen_perp_vector(&basis, SeedSpec::new(seed, simlab::VECTOR_STREAM)),
                    }
                };
                match lemma {
                    Lemma::ObservedEnergy => bounds::validate_lemma1(&basis, &y()?, m, delta, trials, seed),
                    Lemma::CrossTerm => bounds::validate_lemma2(&basis, &y()?, m, delta, trials, seed),
                    Lemma::GramConditioning => bounds::validate_lemma3(&basis, m, delta, trials, seed),
                }
            })?;
            emit(
                out,
                &format!(
                    "lemma,trials,failures,empirical_rate,certified_rate,slack,within_certified\n{},{},{},{},{},{},{}\n",
                    report.lemma.id(),
                    report.trials,
                    report.failures,
                    fmt_f64(report.empirical_rate),
                    fmt_f64(report.certified_rate),
                    fmt_f64(report.slack()),
                    report.within_certified()
                ),
            )?;
        }
        Command::Detect {
            basis,
            vector,
            sigma,
            lambda,
            dof_policy,
            omega,
        } => {
            let policy: DofPolicy = dof_policy.parse()?;
            let cfg = TestConfig::new(lambda, sigma, policy)?;
            let basis = load_basis(&basis)?;
            let v = io::read_vector(&vector)?;
            let omega = resolve_omega(&omega, basis.n())?;
            let outcome = if sigma == 0.0 {
                detect::noiseless_test(&basis, &v, &omega)?
            } else {
                detect::noisy_test(&basis, &v, &omega, &cfg)?
            };
            emit(
                out,
                &format!(
                    "statistic,threshold,decision,dof\n{},{},{:?},{}\n",
                    fmt_f64(outcome.statistic),
                    fmt_f64(outcome.threshold),
                    outcome.decision,
                    outcome.dof
                ),
            )?;
        }
        Command::Simulate {
            experiment,
            config,
            out: out_path,
            threads,
        } => {
            let which: Experiment = experiment.into();
            let loaded = load_config(&config, which)?;
            let manifest = simulate(which, &loaded, &out_path, threads, Some(&config))?;
            emit(out, &format!("wrote {}\n", out_path.display()))?;
            emit(out, &format!("wrote {}\n", manifest.display()))?;
        }
        Command::Replay { manifest, out: out_override, threads } => {
            let recorded = RunManifest::read(&manifest)?;
            let which = recorded.experiment()?;
            let out_path = out_override.unwrap_or_else(|| recorded.output.clone());
            let written = simulate(which, &recorded.parameters, &out_path, threads, None)?;
            emit(out, &format!("wrote {}\n", out_path.display()))?;
            emit(out, &format!("wrote {}\n", written.display()))?;
        }
    }
    Ok(EXIT_OK)
}

/// Runs an experiment, writes its CSV to `out_path` and the manifest next
/// to it; returns the manifest path.
pub fn simulate(
    which: Experiment,
    loaded: &LoadedConfig,
    out_path: &Path,
    threads: Option<usize>,
    config_path: Option<&Path>,
) -> Result<PathBuf> {
    let started = Instant::now();
    let csv = with_threads(threads, || render_experiment(which, loaded))?;
    io::write(out_path, &csv)?;
    let manifest = RunManifest::new(which, loaded.clone(), config_path, out_path, resolve_threads(threads)?, started.elapsed());
    let path = RunManifest::path_for(out_path);
    manifest.write(&path)?;
    Ok(path)
}

/// The CSV an experiment produces.
pub fn render_experiment(which: Experiment, loaded: &LoadedConfig) -> Result<String> {
    let cfg = &loaded.experiment;
    match which {
        Experiment::Fig1 => Ok(simlab::sweep_to_csv(&simlab::run_residual_sweep(cfg)?, cfg)),
        Experiment::Fig2 => Ok(simlab::sweep_to_csv(&simlab::run_zero_fill_sweep(cfg)?, cfg)),
        Experiment::Roc => {
            let settings = loaded
                .roc
                .as_ref()
                .ok_or_else(|| Error::param("roc experiment needs ROC settings"))?;
            Ok(simlab::roc_to_csv(&simlab::run_roc(cfg, settings)?))
        }
    }
}
