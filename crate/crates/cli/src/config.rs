//! Declarative job configuration. JSON with kebab-case keys; every field
//! has a default so a config file only names what it changes.
//!
//! Precedence, highest first: command-line flags, the `--config` file,
//! the `MMORE_OUT` environment variable (output directory only), built-in
//! defaults.

use std::path::{Path, PathBuf};
use std::time::Duration;

use mmore_core::dispatch::JobConfig;
use mmore_core::index::{RetrievalMode, DEFAULT_HASH_DIM, MIN_HASH_DIM};
use mmore_core::postproc::{Pipeline, PipelineConfig};
use mmore_core::rag::{PromptTemplate, DEFAULT_TEMPLATE};
use mmore_core::{ExtractionMode, PlaceholderConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const OUT_ENV: &str = "MMORE_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DispatchRole {
    Local,
    Distributed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct DispatchSettings {
    pub role: DispatchRole,
    /// Coordinator address; required for, and only allowed with, the
    /// distributed role.
    pub coordinator: Option<String>,
    pub workers: usize,
    pub batch_size: usize,
    pub max_retries: u32,
    pub heartbeat_ms: u64,
    pub lease_timeout_intervals: u32,
}

impl Default for DispatchSettings {
    fn default() -> Self {
        let job = JobConfig::default();
        Self {
            role: DispatchRole::Local,
            coordinator: None,
            workers: job.workers_per_node,
            batch_size: job.batch_size,
            max_retries: job.max_retries,
            heartbeat_ms: job.heartbeat_ms,
            lease_timeout_intervals: job.lease_timeout_intervals,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedderChoice {
    Hash,
    Sidecar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorChoice {
    Extractive,
    Echo,
    Sidecar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct IndexSettings {
    /// Defaults to `<output-dir>/index`.
    pub path: Option<PathBuf>,
    pub embedder: EmbedderChoice,
    pub dim: usize,
}

impl Default for IndexSettings {
    fn default() -> Self {
        Self { path: None, embedder: EmbedderChoice::Hash, dim: DEFAULT_HASH_DIM }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct ServiceSettings {
    pub bind: String,
    pub k: usize,
    pub retrieval_mode: RetrievalMode,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self { bind: "127.0.0.1:8000".into(), k: 3, retrieval_mode: RetrievalMode::Rrf }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct SidecarSettings {
    pub url: Option<String>,
    pub timeout_ms: u64,
    pub max_tokens: usize,
}

impl Default for SidecarSettings {
    fn default() -> Self {
        Self { url: None, timeout_ms: 30_000, max_tokens: 256 }
    }
}

impl SidecarSettings {
    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct AppConfig {
    /// Files, directories or glob patterns.
    pub inputs: Vec<String>,
    pub output_dir: Option<PathBuf>,
    pub mode: ExtractionMode,
    pub placeholder: String,
    pub dispatcher: DispatchSettings,
    pub pipeline: PipelineConfig,
    pub index: IndexSettings,
    pub service: ServiceSettings,
    pub generator: GeneratorChoice,
    pub template: String,
    pub sidecar: SidecarSettings,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            output_dir: None,
            mode: ExtractionMode::Default,
            placeholder: PlaceholderConfig::default().token,
            dispatcher: DispatchSettings::default(),
            pipeline: PipelineConfig::default(),
            index: IndexSettings::default(),
            service: ServiceSettings::default(),
            generator: GeneratorChoice::Extractive,
            template: DEFAULT_TEMPLATE.into(),
            sidecar: SidecarSettings::default(),
        }
    }
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is representable as JSON")
    }

    /// Checks everything that does not depend on which subcommand runs.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        match (self.dispatcher.role, &self.dispatcher.coordinator) {
            (DispatchRole::Distributed, None) => return bad("distributed dispatcher needs a coordinator address".into()),
            (DispatchRole::Local, Some(_)) => {
                return bad("coordinator address set but dispatcher role is local; pick one".into())
            }
            _ => {}
        }
        if self.dispatcher.workers == 0 {
            return bad("dispatcher.workers must be at least 1".into());
        }
        if self.index.dim < MIN_HASH_DIM {
            return bad(format!("index.dim must be at least {MIN_HASH_DIM}"));
        }
        PromptTemplate::new(self.template.clone()).map_err(|e| CliError::Config(e.to_string()))?;
        self.placeholder_config()?;
        Pipeline::compile(&self.pipeline, PlaceholderConfig::default())
            .map_err(|e| CliError::Config(format!("pipeline: {e}")))?;
        let wants_sidecar =
            self.index.embedder == EmbedderChoice::Sidecar || self.generator == GeneratorChoice::Sidecar;
        if wants_sidecar && self.sidecar.url.is_none() {
            return bad("sidecar embedder or generator selected but sidecar.url is unset".into());
        }
        Ok(())
    }

    pub fn placeholder_config(&self) -> Result<PlaceholderConfig, CliError> {
        if self.placeholder.is_empty() {
            return Err(CliError::Config("placeholder must be non-empty".into()));
        }
        Ok(PlaceholderConfig::new(self.placeholder.clone()))
    }

    pub fn job(&self) -> JobConfig {
        JobConfig {
            workers_per_node: self.dispatcher.workers,
            batch_size: self.dispatcher.batch_size,
            max_retries: self.dispatcher.max_retries,
            heartbeat_ms: self.dispatcher.heartbeat_ms,
            lease_timeout_intervals: self.dispatcher.lease_timeout_intervals,
            mode: self.mode,
        }
    }

    /// Flag, then config, then `MMORE_OUT`.
    pub fn output_dir(&self) -> Result<PathBuf, CliError> {
        if let Some(d) = &self.output_dir {
            return Ok(d.clone());
        }
        match std::env::var_os(OUT_ENV) {
            Some(d) if !d.is_empty() => Ok(PathBuf::from(d)),
            _ => Err(CliError::Config(format!("no output directory: pass --out, set output-dir, or set {OUT_ENV}"))),
        }
    }

    pub fn index_dir(&self) -> Result<PathBuf, CliError> {
        match &self.index.path {
            Some(p) => Ok(p.clone()),
            None => Ok(self.output_dir()?.join("index")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        AppConfig::default().validate().unwrap();
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = AppConfig::from_json(r#"{"mode":"fast","dispatcher":{"workers":3}}"#).unwrap();
        assert_eq!(c.mode, ExtractionMode::Fast);
        assert_eq!(c.dispatcher.workers, 3);
        assert_eq!(c.dispatcher.role, DispatchRole::Local);
        assert_eq!(c.service.k, 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(AppConfig::from_json(r#"{"ouptut-dir":"x"}"#).is_err());
        assert!(AppConfig::from_json(r#"{"dispatcher":{"worker":2}}"#).is_err());
    }

    #[test]
    fn dispatcher_role_must_match_coordinator() {
        let mut c = AppConfig::default();
        c.dispatcher.role = DispatchRole::Distributed;
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        c.dispatcher.coordinator = Some("127.0.0.1:7000".into());
        c.validate().unwrap();
        c.dispatcher.role = DispatchRole::Local;
        assert!(c.validate().is_err());
    }

    #[test]
    fn dump_reloads_to_equal_config() {
        let mut c = AppConfig::default();
        c.inputs = vec!["docs/*.pdf".into()];
        c.service.retrieval_mode = RetrievalMode::Weighted { alpha: 0.25 };
        c.generator = GeneratorChoice::Echo;
        assert_eq!(AppConfig::from_json(&c.to_json()).unwrap(), c);
    }
}
