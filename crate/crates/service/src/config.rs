//! Service configuration, read from a TOML file.
//!
//! ```toml
//! [backend]
//! kind = "http"                 # "mock" (default) or "http"
//! url = "http://127.0.0.1:9090"
//! timeout_secs = 120
//! retries = 2
//! initial_backoff_ms = 500
//!
//! [retrieval]
//! alpha = 0.7
//! beta = 0.3
//! k = 5
//!
//! [generation]
//! width = 960
//! height = 536
//!
//! [data]
//! catalog = "data/beach_catalog.jsonl"
//! presets = "data/presets.json"
//!
//! [server]
//! bind = "127.0.0.1:8080"
//! image_dir = "previz-images"   # omit to keep images in memory
//! ```
//!
//! Every key is optional. `PREVIZ_BACKEND_URL`, when set, selects the HTTP backend at that URL.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use previz_core::generation::HttpConfig;
use previz_core::{Backend, HttpBackend, MockBackend, Resolution, ScoreWeights};
use serde::Deserialize;

pub const BACKEND_URL_ENV: &str = "PREVIZ_BACKEND_URL";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendChoice,
    pub url: Option<String>,
    pub timeout_secs: u64,
    pub retries: u32,
    pub initial_backoff_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig { kind: BackendChoice::Mock, url: None, timeout_secs: 120, retries: 2, initial_backoff_ms: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        let w = ScoreWeights::default();
        RetrievalConfig { alpha: w.alpha, beta: w.beta, k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub width: u32,
    pub height: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        let r = Resolution::default();
        GenerationConfig { width: r.width, height: r.height }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub catalog: PathBuf,
    pub presets: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { catalog: "data/beach_catalog.jsonl".into(), presets: "data/presets.json".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    pub image_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { bind: "127.0.0.1:8080".into(), image_dir: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub backend: BackendConfig,
    pub retrieval: RetrievalConfig,
    pub generation: GenerationConfig,
    pub data: DataConfig,
    pub server: ServerConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).context("invalid configuration")
    }

    /// Reads `path` if given, then applies the environment override.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Config::from_toml(&text)?
            }
            None => Config::default(),
        };
        config.override_backend_url(std::env::var(BACKEND_URL_ENV).ok());
        Ok(config)
    }

    pub fn override_backend_url(&mut self, url: Option<String>) {
        if let Some(url) = url.filter(|u| !u.trim().is_empty()) {
            self.backend.kind = BackendChoice::Http;
            self.backend.url = Some(url);
        }
    }

    pub fn weights(&self) -> anyhow::Result<ScoreWeights> {
        ScoreWeights::new(self.retrieval.alpha, self.retrieval.beta).map_err(|e| anyhow::anyhow!("{e}"))
    }

    pub fn resolution(&self) -> Resolution {
        Resolution { width: self.generation.width, height: self.generation.height }
    }

    /// Builds the configured backend. The HTTP client is blocking; call this outside any
    /// async runtime.
    pub fn build_backend(&self) -> anyhow::Result<Arc<dyn Backend>> {
        Ok(match self.backend.kind {
            BackendChoice::Mock => Arc::new(MockBackend),
            BackendChoice::Http => {
                let Some(url) = &self.backend.url else {
                    bail!("backend kind is http but no url is configured (set backend.url or {BACKEND_URL_ENV})");
                };
                let mut http = HttpConfig::new(url.clone());
                http.timeout = Duration::from_secs(self.backend.timeout_secs);
                http.retries = self.backend.retries;
                http.initial_backoff = Duration::from_millis(self.backend.initial_backoff_ms);
                Arc::new(HttpBackend::new(http).map_err(|e| anyhow::anyhow!("{e}"))?)
            }
        })
    }
}
