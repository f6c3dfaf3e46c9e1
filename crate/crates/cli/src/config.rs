//! Run configuration: JSON on disk, validated before any numerics start.

use std::path::{Path, PathBuf};

use blaschke_core::cubicdiff::{Seed, DEFAULT_TRUNCATION};
use blaschke_core::domain::DEFAULT_EDGE_LENGTH;
use blaschke_core::flow::{DEFAULT_HORIZON, DEFAULT_SAMPLES, DEFAULT_STEP, MAX_STEP};
use blaschke_core::spectral_covariance::DEFAULT_MODES;
use blaschke_core::wang::log_grid;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// A parameter grid: either explicit values or a logarithmic range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Values(Vec<f64>),
    Log {
        start: f64,
        stop: f64,
        count: usize,
        #[serde(default)]
        include_zero: bool,
    },
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        match self {
            GridSpec::Values(v) => v.clone(),
            GridSpec::Log {
                start,
                stop,
                count,
                include_zero,
            } => log_grid(*start, *stop, *count, *include_zero),
        }
    }

    fn validate(&self, name: &str) -> Result<(), ConfigError> {
        if let GridSpec::Log { start, stop, count, .. } = self {
            if !(start.is_finite() && *start > 0.0) || !stop.is_finite() {
                return Err(ConfigError::Invalid(format!("{name}: log range needs finite start > 0")));
            }
            if *count == 0 || (*count > 1 && stop <= start) {
                return Err(ConfigError::Invalid(format!(
                    "{name}: log range needs count ≥ 1 and stop > start"
                )));
            }
        }
        let points = self.points();
        if points.is_empty() {
            return Err(ConfigError::Invalid(format!("{name}: grid is empty")));
        }
        if points.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(ConfigError::Invalid(format!("{name}: grid values must be finite and ≥ 0")));
        }
        if let Some(w) = points.windows(2).find(|w| w[1] <= w[0]) {
            return Err(ConfigError::Invalid(format!(
                "{name}: grid must be strictly increasing ({} is followed by {})",
                w[0], w[1]
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloConfig {
    pub horizon: f64,
    pub samples: usize,
    pub step: f64,
    /// Number of leading non-constant eigenfunctions to sample.
    pub eigenfunctions: usize,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            samples: DEFAULT_SAMPLES,
            step: DEFAULT_STEP,
            eigenfunctions: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct XrayConfig {
    pub forms: usize,
    /// Eigenfunctions mixed into each random potential.
    pub modes: usize,
    pub geodesics: usize,
    pub max_word_length: usize,
    /// Quadrature marching points per geodesic.
    pub points: usize,
}

impl Default for XrayConfig {
    fn default() -> Self {
        Self {
            forms: 5,
            modes: 10,
            geodesics: 10,
            max_word_length: 3,
            points: 4000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Target mesh edge length.
    pub h: f64,
    /// Word-length truncation of the Poincaré series.
    pub truncation: usize,
    /// Seed polynomial; `null` takes the first non-degenerate seed in the default order.
    pub polynomial: Option<Seed>,
    /// Continuation grid for `solve`.
    pub t_grid: GridSpec,
    pub flat_limit_grid: GridSpec,
    pub length_grid: GridSpec,
    /// Eigenpairs of the Laplacian kept by the spectral computations.
    pub modes: usize,
    /// Master seed for all sampling.
    pub seed: u64,
    pub monte_carlo: MonteCarloConfig,
    pub xray: XrayConfig,
    /// Output directory; not part of the hashed configuration.
    #[serde(skip_serializing)]
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            h: DEFAULT_EDGE_LENGTH,
            truncation: DEFAULT_TRUNCATION,
            polynomial: None,
            t_grid: GridSpec::Log {
                start: 1e-2,
                stop: 1e4,
                count: 21,
                include_zero: true,
            },
            flat_limit_grid: GridSpec::Values(vec![1e2, 1e3, 1e4, 1e5]),
            length_grid: GridSpec::Log {
                start: 1e2,
                stop: 1e6,
                count: 25,
                include_zero: false,
            },
            modes: DEFAULT_MODES,
            seed: 42,
            monte_carlo: MonteCarloConfig::default(),
            xray: XrayConfig::default(),
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{name} must be positive, got {x}")))
            }
        };
        let nonzero = |name: &str, n: usize| {
            if n > 0 {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{name} must be positive")))
            }
        };
        positive("h", self.h)?;
        nonzero("truncation", self.truncation)?;
        nonzero("modes", self.modes)?;
        positive("monte_carlo.horizon", self.monte_carlo.horizon)?;
        positive("monte_carlo.step", self.monte_carlo.step)?;
        nonzero("monte_carlo.samples", self.monte_carlo.samples)?;
        nonzero("monte_carlo.eigenfunctions", self.monte_carlo.eigenfunctions)?;
        if self.monte_carlo.step > MAX_STEP {
            return Err(ConfigError::Invalid(format!(
                "monte_carlo.step must be at most {MAX_STEP}"
            )));
        }
        nonzero("xray.forms", self.xray.forms)?;
        nonzero("xray.modes", self.xray.modes)?;
        nonzero("xray.geodesics", self.xray.geodesics)?;
        nonzero("xray.max_word_length", self.xray.max_word_length)?;
        if self.xray.points < 2 {
            return Err(ConfigError::Invalid("xray.points must be at least 2".into()));
        }
        let needed = self.monte_carlo.eigenfunctions.max(self.xray.modes);
        if self.modes <= needed {
            return Err(ConfigError::Invalid(format!(
                "modes = {} must exceed the eigenfunctions used downstream ({needed})",
                self.modes
            )));
        }
        self.t_grid.validate("t_grid")?;
        self.flat_limit_grid.validate("flat_limit_grid")?;
        self.length_grid.validate("length_grid")?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form (output directory excluded).
    pub fn hash(&self) -> String {
        let canonical = blaschke_core::io::to_json_string(self).expect("config serialises");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
