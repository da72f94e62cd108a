// Copyright 2026 Geoscope Contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Run configuration: one TOML file, with command-line overrides applied
//! to the parsed table before it is deserialized.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use geoscope_core::chunking::{DEFAULT_STEP, DEFAULT_WINDOW};
use geoscope_core::ragx::Condition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Base seed for every randomized step.
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "yes")]
    pub parallel: bool,
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub chunking: ChunkingConfig,
    #[serde(default)]
    pub backends: BackendsConfig,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub records: PathBuf,
    pub documents: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChunkingConfig {
    pub window: usize,
    pub step: usize,
    pub include_end_only: bool,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        ChunkingConfig { window: DEFAULT_WINDOW, step: DEFAULT_STEP, include_end_only: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TokenBackendConfig {
    /// Add-k bigram model trained on the document texts.
    Bigram {
        add_k: f64,
    },
    Constant {
        p: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderConfig {
    Bow { dim: usize },
    Onehot { dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendsConfig {
    pub token_probability: TokenBackendConfig,
    /// Embedder used to pick representative chunks.
    pub matching_embedder: EmbedderConfig,
    /// Embedder used for pairwise similarity and Vendi scores.
    pub similarity_embedder: EmbedderConfig,
}

impl Default for BackendsConfig {
    fn default() -> Self {
        BackendsConfig {
            token_probability: TokenBackendConfig::Bigram { add_k: 0.1 },
            matching_embedder: EmbedderConfig::Bow { dim: 1024 },
            similarity_embedder: EmbedderConfig::Bow { dim: 1024 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum OfflineRule {
    LowestPpl { k: usize },
    Threshold { max_ppl: f64 },
    Logistic { intercept: f64, ppl_slope: f64, pos_slope: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LlmConfig {
    /// In-tree citer with a known citation rule; polishing is the identity.
    Offline { citer: OfflineRule },
    /// OpenAI-compatible chat-completions endpoint.
    Http(HttpConfig),
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig::Offline { citer: OfflineRule::LowestPpl { k: 3 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    /// Sent only when set; otherwise the provider default applies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
}

fn default_key_env() -> String {
    "GEOSCOPE_API_KEY".into()
}
fn default_concurrency() -> usize {
    4
}
fn default_timeout() -> u64 {
    60
}
fn default_attempts() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub conditions: Vec<Condition>,
    pub independent_orders: bool,
    /// Cap on chunks per query in the RAG source document.
    pub max_chunks: Option<usize>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection { conditions: vec![Condition::Original], independent_orders: false, max_chunks: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    Full,
    TrimTopPpl,
    BalancedPerQuery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Lpm,
    Logit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub variants: Vec<VariantName>,
    pub models: Vec<ModelName>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            variants: vec![VariantName::Full, VariantName::TrimTopPpl],
            models: vec![ModelName::Lpm, ModelName::Logit],
        }
    }
}

/// Keys that look like secrets. Credentials are read from the environment
/// only, so any of these in the file is an error.
const SECRET_KEYS: [&str; 5] = ["api_key", "apikey", "token", "secret", "password"];

fn find_secret(v: &toml::Value, path: &str) -> Option<String> {
    let toml::Value::Table(t) = v else { return None };
    for (k, child) in t {
        let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
        if SECRET_KEYS.contains(&k.to_ascii_lowercase().as_str()) {
            return Some(p);
        }
        if let Some(found) = find_secret(child, &p) {
            return Some(found);
        }
    }
    None
}

fn parse_override_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Set `a.b.c = value` in `root`, creating intermediate tables.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let Some((key, raw)) = assignment.split_once('=') else {
        bail!("override {assignment:?} is not of the form key=value");
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key {key:?} is empty or malformed");
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let toml::Value::Table(t) = entry else { bail!("override {key:?}: {p} is not a table") };
        table = t;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_override_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Read `path`, apply `overrides` in order and validate. Relative
    /// corpus paths resolve against the config file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut table: toml::Table = text.parse().with_context(|| format!("invalid TOML in {}", path.display()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        if let Some(key) = find_secret(&toml::Value::Table(table.clone()), "") {
            bail!(
                "config key {key:?} looks like a credential; put the key in the environment variable named by \
                 llm.api_key_env instead"
            );
        }
        let mut cfg: RunConfig =
            toml::Value::Table(table).try_into().with_context(|| format!("invalid config {}", path.display()))?;
        let abs = std::path::absolute(path)?;
        let base = abs.parent().unwrap_or(Path::new("/"));
        for p in [&mut cfg.corpus.records, &mut cfg.corpus.documents, &mut cfg.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (what, p) in [("corpus.records", &self.corpus.records), ("corpus.documents", &self.corpus.documents)] {
            if !p.is_file() {
                bail!("{what}: {} does not exist", p.display());
            }
        }
        let c = &self.chunking;
        if c.window == 0 || c.step == 0 || c.step > c.window {
            bail!("chunking: window {} / step {} must be positive with step <= window", c.window, c.step);
        }
        match self.backends.token_probability {
            TokenBackendConfig::Bigram { add_k } if !(add_k > 0.0) => bail!("bigram add_k must be positive"),
            TokenBackendConfig::Constant { p } if !(p > 0.0 && p <= 1.0) => bail!("constant p must be in (0, 1]"),
            _ => {}
        }
        for e in [&self.backends.matching_embedder, &self.backends.similarity_embedder] {
            let (EmbedderConfig::Bow { dim } | EmbedderConfig::Onehot { dim }) = e;
            if *dim < 2 {
                bail!("embedder dimension must be at least 2");
            }
        }
        if self.experiment.conditions.is_empty() {
            bail!("experiment.conditions is empty");
        }
        if self.analysis.variants.is_empty() || self.analysis.models.is_empty() {
            bail!("analysis.variants and analysis.models must be non-empty");
        }
        if let LlmConfig::Http(h) = &self.llm {
            if h.max_concurrency == 0 || h.max_attempts == 0 {
                bail!("llm.max_concurrency and llm.max_attempts must be positive");
            }
        }
        Ok(())
    }

    /// Hex digest of everything that affects outputs. The output directory
    /// and the parallelism switch are excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.parallel = true;
        let json = serde_json::to_vec(&c).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(format!("run-{}", self.hash()))
    }
}
