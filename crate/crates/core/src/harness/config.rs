use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::EndpointConfig;
use crate::mcts::{SelectionParams, DEFAULT_LAMBDA, DEFAULT_TOP_K, MAX_CHILDREN_PER_PARENT};
use crate::perception::{LoopConfig, DEFAULT_QUERY_BUDGET, DEFAULT_QUERY_RETRIES};
use crate::semantic_map::PanoramaLayout;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MovePolicy {
    /// Walk the whole shortest path to the chosen waypoint in one step.
    #[default]
    Traverse,
    /// Advance one edge along that path per step.
    SingleEdge,
}

/// Per-episode run settings. Every field has a default, so an empty TOML
/// document is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub lambda: f64,
    pub top_k: usize,
    pub n_max: usize,
    pub query_retries: usize,
    /// Overrides the episode's own cap when set; 0 ends the episode before
    /// the first step.
    pub max_steps: Option<usize>,
    pub no_bd_mcts: bool,
    pub no_pp: bool,
    pub prior_visit: bool,
    pub move_policy: MovePolicy,
    /// Parallel episodes for benchmarks; 0 uses all cores.
    pub workers: usize,
    pub panorama: PanoramaLayout,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            top_k: DEFAULT_TOP_K,
            n_max: DEFAULT_QUERY_BUDGET,
            query_retries: DEFAULT_QUERY_RETRIES,
            max_steps: None,
            no_bd_mcts: false,
            no_pp: false,
            prior_visit: false,
            move_policy: MovePolicy::Traverse,
            workers: 0,
            panorama: PanoramaLayout::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be finite and non-negative");
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1");
        }
        if self.n_max == 0 {
            return bad("n_max must be at least 1");
        }
        let p = &self.panorama;
        if !(p.width > 0.0 && p.height > 0.0 && p.width.is_finite() && p.height.is_finite()) {
            return bad("panorama size must be positive");
        }
        if p.views == 0 || !(0.0..1.0).contains(&p.overlap) {
            return bad("panorama needs at least one view and overlap in [0, 1)");
        }
        Ok(())
    }

    pub fn selection(&self) -> SelectionParams {
        SelectionParams {
            k: self.top_k,
            lambda: self.lambda,
            max_children_per_parent: MAX_CHILDREN_PER_PARENT,
        }
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            n_max: self.n_max,
            query_retries: self.query_retries,
            proactive_perception: !self.no_pp,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }
}

/// A config file: run settings at top level plus an optional `[endpoint]`
/// table for the HTTP backend.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileConfig {
    pub run: RunConfig,
    pub endpoint: Option<EndpointConfig>,
}

impl FileConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let mut table: toml::Table = toml::from_str(text)?;
        let endpoint = match table.remove("endpoint") {
            Some(v) => {
                let e: EndpointConfig = v.try_into()?;
                e.validate()
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Some(e)
            }
            None => None,
        };
        let run: RunConfig = toml::Value::Table(table).try_into()?;
        run.validate()?;
        Ok(Self { run, endpoint })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }
}
