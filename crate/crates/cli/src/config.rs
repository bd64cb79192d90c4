//! Optional TOML configuration. Every key has a default and any flag given
//! on the command line overrides the file.
//!
//! ```toml
//! seed = 2024
//!
//! [bootstrap]
//! k = 20
//! threshold = 0.5
//!
//! [coref]
//! tau = 0.15
//! dim = 64
//!
//! [forecast]
//! synthetic = true
//! out = "out/forecast"
//!
//! [forecast.experiment]
//! horizons = [6, 9, 12]
//!
//! [serve]
//! addr = "127.0.0.1:8080"
//! ```

use std::path::{Path, PathBuf};

use econkg::bootstrap::BootstrapConfig;
use econkg::coref::DEFAULT_TAU;
use econkg::forecast::ExperimentConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub bootstrap: BootstrapConfig,
    pub coref: CorefSection,
    pub forecast: ForecastSection,
    pub serve: ServeSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorefSection {
    pub tau: f64,
    pub dim: usize,
    pub vectors: Option<PathBuf>,
}

impl Default for CorefSection {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            dim: 64,
            vectors: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    pub synthetic: bool,
    pub baseline: Option<PathBuf>,
    pub alternative: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub aliases: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub experiment: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub addr: String,
    pub token: Option<String>,
    pub data_dir: Option<PathBuf>,
}

impl Default for ServeSection {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:8080".into(),
            token: None,
            data_dir: None,
        }
    }
}

impl FileConfig {
    /// Reads `path`; relative paths inside are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut cfg: FileConfig = toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p {
                if inner.is_relative() {
                    *inner = base.join(&*inner);
                }
            }
        };
        fix(&mut cfg.coref.vectors);
        fix(&mut cfg.forecast.baseline);
        fix(&mut cfg.forecast.alternative);
        fix(&mut cfg.forecast.graph);
        fix(&mut cfg.forecast.aliases);
        fix(&mut cfg.forecast.out);
        fix(&mut cfg.serve.data_dir);
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map(Self::load).transpose().map(Option::unwrap_or_default)
    }
}
