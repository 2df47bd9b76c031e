//! Pipeline-level configuration: one JSON file, environment overrides for
//! the three service endpoints, then command-line flags on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunker::ChunkingConfig;
use crate::embed::EmbedderConfig;
use crate::generate::GeneratorConfig;
use crate::neural::AttentionConfig;
use crate::rerank::RerankConfig;

pub const EMBED_ENDPOINT_VAR: &str = "SPECRAG_EMBED_ENDPOINT";
pub const RERANK_ENDPOINT_VAR: &str = "SPECRAG_RERANK_ENDPOINT";
pub const LLM_ENDPOINT_VAR: &str = "SPECRAG_LLM_ENDPOINT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub index: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub chunking: ChunkingConfig,
    pub embedder: EmbedderConfig,
    /// Also holds `candidates_k`, the number of chunks retrieved before re-ranking.
    pub rerank: RerankConfig,
    /// Contexts placed in the prompt.
    pub n_contexts: usize,
    pub generator: GeneratorConfig,
    pub attention: AttentionConfig,
    pub paths: PathsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            chunking: ChunkingConfig::default(),
            embedder: EmbedderConfig::default(),
            rerank: RerankConfig::default(),
            n_contexts: 3,
            generator: GeneratorConfig::default(),
            attention: AttentionConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&raw).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Defaults, then the file if given, then the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        config.apply_env(|k| std::env::var(k).ok());
        Ok(config)
    }

    /// Overrides endpoints from `lookup`; empty values are ignored.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        let get = |k: &str| lookup(k).filter(|v| !v.trim().is_empty());
        if let Some(v) = get(EMBED_ENDPOINT_VAR) {
            self.embedder.endpoint = Some(v);
        }
        if let Some(v) = get(RERANK_ENDPOINT_VAR) {
            self.rerank.endpoint = Some(v);
        }
        if let Some(v) = get(LLM_ENDPOINT_VAR) {
            self.generator.endpoint = Some(v);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.chunking.validate().map_err(|e| invalid(&e))?;
        self.embedder.validate().map_err(|e| invalid(&e))?;
        self.rerank.validate().map_err(|e| invalid(&e))?;
        self.generator.validate().map_err(|e| invalid(&e))?;
        self.attention.validate().map_err(|e| invalid(&e))?;
        if self.n_contexts == 0 {
            return Err(ConfigError::Invalid("n_contexts must be positive".into()));
        }
        if self.rerank.top_m < self.n_contexts {
            return Err(ConfigError::Invalid(format!(
                "rerank.top_m ({}) must be at least n_contexts ({})",
                self.rerank.top_m, self.n_contexts
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!(c.n_contexts, 3);
        assert_eq!(c.rerank.candidates_k, 150);
        assert_eq!(c.rerank.top_m, 15);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn file_then_env() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(
            &path,
            r#"{"n_contexts": 1, "generator": {"endpoint": "http://file"}, "rerank": {"top_m": 5}}"#,
        )
        .unwrap();
        let mut c = PipelineConfig::from_file(&path).unwrap();
        assert_eq!(c.n_contexts, 1);
        assert_eq!(c.rerank.top_m, 5);
        assert_eq!(c.rerank.candidates_k, 150);
        let env: HashMap<&str, &str> = [(LLM_ENDPOINT_VAR, "http://env"), (RERANK_ENDPOINT_VAR, "")].into();
        c.apply_env(|k| env.get(k).map(|v| v.to_string()));
        assert_eq!(c.generator.endpoint.as_deref(), Some("http://env"));
        assert_eq!(c.rerank.endpoint, None);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn cross_field_and_parse_errors() {
        let c = PipelineConfig {
            n_contexts: 20,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, r#"{"n_context": 3}"#).unwrap();
        assert!(matches!(PipelineConfig::from_file(&path), Err(ConfigError::Parse { .. })));
        assert!(matches!(
            PipelineConfig::from_file(&dir.path().join("missing.json")),
            Err(ConfigError::Io { .. })
        ));
    }
}
