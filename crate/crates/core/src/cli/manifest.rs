//! Run manifests: everything needed to regenerate a simulation output.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::config::{Experiment, LoadedConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub experiment: String,
    pub tool_version: String,
    pub seed: u64,
    pub config_path: Option<PathBuf>,
    pub parameters: LoadedConfig,
    pub output: PathBuf,
    /// `None` means the rayon default.
    pub threads: Option<usize>,
    pub duration_seconds: f64,
}

impl RunManifest {
    pub fn new(
        which: Experiment,
        parameters: LoadedConfig,
        config_path: Option<&Path>,
        output: &Path,
        threads: Option<usize>,
        duration: Duration,
    ) -> Self {
        RunManifest {
            command: format!("simulate {}", which.name()),
            experiment: which.name().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: parameters.experiment.seed,
            config_path: config_path.map(Path::to_path_buf),
            parameters,
            output: output.to_path_buf(),
            threads,
            duration_seconds: duration.as_secs_f64(),
        }
    }

    /// `<out>.manifest.json`
    pub fn path_for(output: &Path) -> PathBuf {
        let mut s = output.as_os_str().to_os_string();
        s.push(".manifest.json");
        PathBuf::from(s)
    }

    pub fn experiment(&self) -> Result<Experiment> {
        match self.experiment.as_str() {
            "fig1" => Ok(Experiment::Fig1),
            "fig2" => Ok(Experiment::Fig2),
            "roc" => Ok(Experiment::Roc),
            other => Err(Error::Parse {
                location: "manifest.experiment".into(),
                message: format!("unknown experiment `{other}`"),
            }),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        crate::io::write(path, &text)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            location: path.display().to_string(),
            message: e.to_string(),
        })
    }
}
