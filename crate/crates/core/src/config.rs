//! Pipeline configuration as a single JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::mock::{MockBackend, MockOptions};
use crate::agents::remote::{RemoteBackend, RemoteConfig};
use crate::agents::{AgentBackend, BackendError, Prompts};
use crate::relations::RelationParams;
use crate::render::RenderOptions;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Malformed(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    #[default]
    Mock,
    Remote(RemoteConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Spacing of the physical-refinement grid, in cm.
    pub grid_spacing: f64,
    pub relations: RelationParams,
    /// Semantic refine/re-evaluate rounds per group before moving on.
    pub max_semantic_rounds: u32,
    pub backend: BackendConfig,
    pub render: RenderOptions,
    /// Seed for the offline backend.
    pub seed: u64,
    pub mock: MockOptions,
    /// Add wall-clock timings to the trace (makes traces run-dependent).
    pub record_timing: bool,
    /// Record every request and reply in the trace.
    pub log_exchanges: bool,
    /// Directory with replacement prompt templates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompts_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            grid_spacing: 10.0,
            relations: RelationParams::default(),
            max_semantic_rounds: 2,
            backend: BackendConfig::Mock,
            render: RenderOptions::default(),
            seed: 0,
            mock: MockOptions::default(),
            record_timing: false,
            log_exchanges: true,
            prompts_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let c: Self = serde_json::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = ConfigError::Invalid;
        if !(self.grid_spacing.is_finite() && self.grid_spacing > 0.0) {
            return Err(bad(format!("grid_spacing must be positive, got {}", self.grid_spacing)));
        }
        if self.max_semantic_rounds == 0 {
            return Err(bad("max_semantic_rounds must be at least 1".into()));
        }
        self.relations.validate().map_err(bad)?;
        self.render.validate().map_err(bad)?;
        self.mock.validate().map_err(bad)?;
        if let BackendConfig::Remote(r) = &self.backend {
            r.validate().map_err(bad)?;
        }
        Ok(())
    }

    pub fn prompts(&self) -> Result<Prompts, ConfigError> {
        match &self.prompts_dir {
            None => Ok(Prompts::default()),
            Some(dir) => Prompts::from_dir(dir).map_err(|source| ConfigError::Io {
                path: dir.display().to_string(),
                source,
            }),
        }
    }

    /// Backend named by the config. The remote backend reads its key here.
    pub fn build_backend(&self) -> Result<Box<dyn AgentBackend>, BackendError> {
        Ok(match &self.backend {
            BackendConfig::Mock => Box::new(MockBackend::new(self.seed, self.mock.clone(), self.relations)),
            BackendConfig::Remote(r) => Box::new(RemoteBackend::from_env(r.clone())?),
        })
    }
}
