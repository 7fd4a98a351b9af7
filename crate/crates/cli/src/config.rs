//! Pipeline configuration: a TOML file with environment overrides for the
//! endpoint and its secret.

use std::path::{Path, PathBuf};

use anyhow::Context;
use musiq_core::audio::CropPolicy;
use musiq_core::corpus::TaskFamily;
use musiq_core::instruct::{ModelMap, RoutingConfig};
use musiq_core::mir::MirConfig;
use musiq_core::rng::sha256_hex;
use serde::{Deserialize, Serialize};

pub const ENV_ENDPOINT: &str = "MUSIQ_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "MUSIQ_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSource {
    pub name: String,
    pub adapter: String,
    pub root: PathBuf,
    /// `native`, `official:<file>` or `random:<n>:<seed>`.
    #[serde(default = "native")]
    pub split: String,
    /// Restricts the adapter's task families.
    #[serde(default)]
    pub tasks: Option<Vec<TaskFamily>>,
}

fn native() -> String {
    "native".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub endpoint: String,
    pub temperature: f64,
    pub in_flight: usize,
    pub timeout_s: u64,
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub templates_dir: Option<PathBuf>,
    pub models: ModelMap,
    pub routing: RoutingConfig,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8089/v1/chat/completions".into(),
            temperature: 0.7,
            in_flight: 4,
            timeout_s: 120,
            max_retries: 5,
            base_delay_ms: 500,
            templates_dir: None,
            models: ModelMap::default(),
            routing: RoutingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub jobs: usize,
    pub work_dir: PathBuf,
    /// Rate clips are decoded to before cropping.
    pub sample_rate: u32,
    pub datasets: Vec<DatasetSource>,
    pub crop: CropPolicy,
    pub mir: MirConfig,
    pub generation: GenerationConfig,
    /// JSON phrase lists replacing the built-in filter.
    pub filter_phrases: Option<PathBuf>,
    pub shard_size: usize,
    /// Read from the environment only; never written out or hashed.
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 4,
            work_dir: PathBuf::from("musiq-out"),
            sample_rate: 44_100,
            datasets: Vec::new(),
            crop: CropPolicy::default(),
            mir: MirConfig::default(),
            generation: GenerationConfig::default(),
            filter_phrases: None,
            shard_size: 10_000,
            api_key: None,
        }
    }
}

impl PipelineConfig {
    /// Parses TOML, resolving relative paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> anyhow::Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).context("parsing config")?;
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.work_dir);
        for d in &mut cfg.datasets {
            rebase(&mut d.root);
        }
        if let Some(p) = cfg.generation.templates_dir.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.filter_phrases.as_mut() {
            rebase(p);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    /// Applies environment overrides for the endpoint URL and API key.
    pub fn with_env(mut self) -> Self {
        self.apply_env(|k| std::env::var(k).ok());
        self
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(url) = get(ENV_ENDPOINT).filter(|v| !v.is_empty()) {
            self.generation.endpoint = url;
        }
        self.api_key = get(ENV_API_KEY).filter(|v| !v.is_empty());
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(!self.datasets.is_empty(), "config lists no datasets");
        anyhow::ensure!(self.shard_size > 0, "shard_size must be positive");
        self.crop.validate().context("crop policy")?;
        for d in &self.datasets {
            musiq_core::corpus::adapter(&d.adapter)?;
            d.split
                .parse::<musiq_core::corpus::SplitRule>()
                .with_context(|| format!("split rule for {}", d.name))?;
        }
        Ok(())
    }

    /// SHA-256 of everything that affects outputs. Concurrency settings and
    /// the endpoint location are excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.jobs = 0;
        canonical.work_dir = PathBuf::new();
        canonical.generation.endpoint = String::new();
        canonical.generation.in_flight = 0;
        canonical.generation.timeout_s = 0;
        canonical.generation.max_retries = 0;
        canonical.generation.base_delay_ms = 0;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        sha256_hex(&bytes)
    }
}
