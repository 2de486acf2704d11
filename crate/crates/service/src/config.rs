//! Service configuration: a TOML file plus environment overrides.

use std::path::{Path, PathBuf};

use imgsel_core::quality::{PluginHost, ProcessPlugin, QualityConfig};
use imgsel_core::selection::{PipelineDeps, PipelineOptions};
use imgsel_core::typing::{CategoryRegistry, ProfileFile, TypeClassifierModel};
use imgsel_core::ComparatorConfig;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

use crate::fetch::FetchLimits;

pub const ENV_CONFIG: &str = "IMGSEL_CONFIG";
pub const ENV_PORT: &str = "IMGSEL_PORT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{ENV_PORT}={0:?} is not a port number")]
    Port(String),
}

/// `profiles` and `models` paths are relative to the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub profiles: Option<PathBuf>,
    pub models: Vec<PathBuf>,
    pub comparator: ComparatorConfig,
    pub quality: QualityConfig,
    pub pipeline: PipelineOptions,
    pub fetch: FetchLimits,
    pub plugins: Vec<ProcessPlugin>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            profiles: None,
            models: Vec::new(),
            comparator: ComparatorConfig::default(),
            quality: QualityConfig::default(),
            pipeline: PipelineOptions::default(),
            fetch: FetchLimits::default(),
            plugins: Vec::new(),
        }
    }
}

impl ServiceConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: base_dir.display().to_string(),
            message: e.to_string(),
        })?;
        cfg.profiles = cfg.profiles.map(|p| base_dir.join(p));
        cfg.models = cfg.models.iter().map(|p| base_dir.join(p)).collect();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    /// `explicit` wins over `IMGSEL_CONFIG`; without either the defaults apply.
    /// `IMGSEL_PORT` overrides the port in every case.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        let env_path = std::env::var_os(ENV_CONFIG).map(PathBuf::from);
        let mut cfg = match explicit.map(Path::to_path_buf).or(env_path) {
            Some(path) => Self::load(&path)?,
            None => Self::default(),
        };
        if let Ok(port) = std::env::var(ENV_PORT) {
            cfg.port = port
                .trim()
                .parse()
                .map_err(|_| ConfigError::Port(port.clone()))?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.comparator
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.quality.validate().map_err(ConfigError::Invalid)?;
        self.fetch.validate().map_err(ConfigError::Invalid)?;
        if self.profiles.is_none() && !self.models.is_empty() {
            return Err(ConfigError::Invalid(
                "models given without a profiles file".into(),
            ));
        }
        Ok(())
    }

    /// Loads profiles and models. Without a profiles file every item is
    /// unrouted and passes through unchanged.
    pub fn registry(&self) -> Result<CategoryRegistry, ConfigError> {
        let Some(profiles_path) = &self.profiles else {
            return Ok(CategoryRegistry::new());
        };
        let invalid = |e: imgsel_core::typing::TypingError| ConfigError::Invalid(e.to_string());
        let profiles = ProfileFile::load(profiles_path).map_err(invalid)?;
        let models = self
            .models
            .iter()
            .map(TypeClassifierModel::load)
            .collect::<Result<Vec<_>, _>>()
            .map_err(invalid)?;
        CategoryRegistry::from_parts(profiles, models).map_err(invalid)
    }

    pub fn pipeline_deps(&self) -> Result<PipelineDeps, ConfigError> {
        let mut plugins = PluginHost::new();
        for p in &self.plugins {
            plugins.add(Arc::new(p.clone()));
        }
        Ok(PipelineDeps {
            registry: self.registry()?,
            comparator: self.comparator,
            quality: self.quality,
            plugins,
            options: self.pipeline,
        })
    }
}
