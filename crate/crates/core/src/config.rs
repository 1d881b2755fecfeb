//! TOML run configuration: a `[fit]` section for the least-squares controls
//! and a `[simgen]` section for the auction simulator.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::curvefit::FitConfig;
use crate::simgen::MarketConfig;

/// Environment variable consulted when no `--config` flag is given.
pub const CONFIG_ENV: &str = "BIDCURVE_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub fit: FitConfig,
    pub simgen: MarketConfig,
}

impl Settings {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let invalid = |message: String| ConfigError::Invalid {
            path: path.to_path_buf(),
            message,
        };
        let settings: Settings = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        settings.fit.validate().map_err(|e| invalid(e.to_string()))?;
        settings.simgen.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(settings)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Loads the explicit path, else the path named by [`CONFIG_ENV`], else
    /// defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        let from_env = std::env::var_os(CONFIG_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from);
        match explicit.map(Path::to_path_buf).or(from_env) {
            Some(path) => Self::load(&path),
            None => Ok(Self::default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_with_defaults() {
        let s = Settings::parse(
            "[fit]\nxi = 1e-6\nmax_iterations = 50\n\n[simgen]\nseed = 9\nnoise_sd = 0.0\n",
            Path::new("x.toml"),
        )
        .unwrap();
        assert_eq!(s.fit.xi, 1e-6);
        assert_eq!(s.fit.max_iterations, 50);
        assert_eq!(s.fit.damping0, 1e-3);
        assert_eq!(s.simgen.seed, 9);
        assert_eq!(s.simgen.n_bid_levels, 30);
    }

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(Settings::parse("", Path::new("e")).unwrap(), Settings::default());
    }

    #[test]
    fn rejects_bad_values_and_unknown_keys() {
        assert!(Settings::parse("[fit]\nxi = 0.0\n", Path::new("a")).is_err());
        assert!(Settings::parse("[fit]\nmax_iterations = 0\n", Path::new("a")).is_err());
        assert!(Settings::parse("[fit]\nbogus = 1\n", Path::new("a")).is_err());
        assert!(Settings::parse("[simgen]\ncompetitor_log_sd = -1.0\n", Path::new("a")).is_err());
    }
}
