//! Experiment configuration files.
//!
//! TOML with one table per experiment (`[fig1]`, `[fig2]`, `[roc]`). Keys
//! inside a table are flat; unknown keys are rejected.
//!
//! ```toml
//! [fig1]
//! n = 10000
//! r = 50
//! basis = "gaussian"      # gaussian | fourier | coherent
//! m_grid = [10, 50, 100, 500, 1000, 2000, 3000]
//! trials = 100            # default 100
//! mode = "without"        # default without
//! seed = 1                # required
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::detect::DofPolicy;
use crate::error::{Error, Result};
use crate::simlab::{BasisKind, ExperimentConfig, RocSettings, VectorKind};
use crate::vecspace::SamplingMode;

pub const DEFAULT_TRIALS: usize = 100;
pub const DEFAULT_MODE: SamplingMode = SamplingMode::WithoutReplacement;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Fig1,
    Fig2,
    Roc,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fig1 => "fig1",
            Experiment::Fig2 => "fig2",
            Experiment::Roc => "roc",
        }
    }

    fn default_vector(self) -> VectorKind {
        match self {
            Experiment::Fig1 => VectorKind::InPerp,
            Experiment::Fig2 | Experiment::Roc => VectorKind::InSubspace,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    fig1: Option<RawSection>,
    fig2: Option<RawSection>,
    roc: Option<RawSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSection {
    n: usize,
    r: usize,
    basis: Option<String>,
    spike: Option<f64>,
    frequencies: Option<Vec<usize>>,
    m_grid: Option<Vec<usize>>,
    trials: Option<usize>,
    mode: Option<SamplingMode>,
    seed: u64,
    vector: Option<VectorKind>,
    vector_scale: Option<f64>,
    // ROC only.
    m: Option<usize>,
    sigma: Option<f64>,
    lambdas: Option<Vec<f64>>,
    dof_policy: Option<String>,
    perp_energy: Option<f64>,
}

/// A loaded experiment: the sweep configuration plus ROC settings for `[roc]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LoadedConfig {
    pub experiment: ExperimentConfig,
    pub roc: Option<RocSettings>,
}

fn parse_error(origin: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        location: origin.to_string(),
        message: message.into(),
    }
}

pub fn load_config(path: &Path, which: Experiment) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, &path.display().to_string(), which)
}

pub fn parse_config(text: &str, origin: &str, which: Experiment) -> Result<LoadedConfig> {
    let raw: RawFile = toml::from_str(text).map_err(|e| parse_error(origin, e.to_string().trim_end()))?;
    let section = match which {
        Experiment::Fig1 => raw.fig1,
        Experiment::Fig2 => raw.fig2,
        Experiment::Roc => raw.roc,
    }
    .ok_or_else(|| parse_error(origin, format!("missing [{}] section", which.name())))?;
    let origin = format!("{origin} [{}]", which.name());
    build(section, &origin, which)
}

fn build(s: RawSection, origin: &str, which: Experiment) -> Result<LoadedConfig> {
    let field = |name: &str, msg: String| parse_error(&format!("{origin}.{name}"), msg);

    let basis_kind = match s.basis.as_deref().unwrap_or("gaussian") {
        "gaussian" => BasisKind::Gaussian,
        "fourier" => BasisKind::Fourier {
            frequencies: s.frequencies.clone().unwrap_or_default(),
        },
        "coherent" => BasisKind::Coherent {
            spike: s.spike.ok_or_else(|| field("spike", "required for basis = \"coherent\"".into()))?,
        },
        other => return Err(field("basis", format!("unknown basis `{other}`"))),
    };
    if s.spike.is_some() && !matches!(basis_kind, BasisKind::Coherent { .. }) {
        return Err(field("spike", "only valid for basis = \"coherent\"".into()));
    }
    if s.frequencies.is_some() && !matches!(basis_kind, BasisKind::Fourier { .. }) {
        return Err(field("frequencies", "only valid for basis = \"fourier\"".into()));
    }

    let roc_keys = [
        ("m", s.m.is_some()),
        ("sigma", s.sigma.is_some()),
        ("lambdas", s.lambdas.is_some()),
        ("dof_policy", s.dof_policy.is_some()),
        ("perp_energy", s.perp_energy.is_some()),
    ];
    let trials = s.trials.unwrap_or(DEFAULT_TRIALS);
    let (m_grid, roc) = if which == Experiment::Roc {
        if s.m_grid.is_some() {
            return Err(field("m_grid", "not used by [roc]; set `m`".into()));
        }
        let m = s.m.ok_or_else(|| field("m", "required".into()))?;
        let dof_policy = match s.dof_policy.as_deref() {
            None => DofPolicy::Residual,
            Some(p) => p.parse().map_err(|e: Error| field("dof_policy", e.to_string()))?,
        };
        let settings = RocSettings {
            m,
            noise_sigma: s.sigma.unwrap_or(1.0),
            lambdas: s.lambdas.clone().unwrap_or_else(|| vec![0.01, 0.05, 0.1]),
            trials,
            dof_policy,
            perp_energy: s.perp_energy.unwrap_or(1.0),
        };
        (vec![m], Some(settings))
    } else {
        if let Some((key, _)) = roc_keys.iter().find(|(_, set)| *set) {
            return Err(field(key, format!("only valid in [roc], not [{}]", which.name())));
        }
        (s.m_grid.ok_or_else(|| field("m_grid", "required".into()))?, None)
    };

    let experiment = ExperimentConfig {
        n: s.n,
        r: s.r,
        basis_kind,
        m_grid,
        trials_per_m: trials,
        sampling_mode: s.mode.unwrap_or(DEFAULT_MODE),
        seed: s.seed,
        vector_kind: s.vector.unwrap_or(which.default_vector()),
        vector_scale: s.vector_scale.unwrap_or(1.0),
    };
    experiment.validate().map_err(|e| parse_error(origin, e.to_string()))?;
    if let Some(roc) = &roc {
        if !(roc.noise_sigma > 0.0) {
            return Err(field("sigma", "must be > 0".into()));
        }
        if let Some(bad) = roc.lambdas.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return Err(field("lambdas", format!("{bad} is outside (0, 1)")));
        }
    }
    Ok(LoadedConfig { experiment, roc })
}
