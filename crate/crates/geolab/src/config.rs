//! Run configuration: one TOML file per run, CLI flags override keys,
//! secrets only via environment variables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::Budgets;
use crate::chat::ChatBackendConfig;
use crate::ecosystem::Condition;
use crate::error::{Error, Result};
use crate::scorer::RemoteScorerConfig;
use crate::searchenv::EnvConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    Live,
    Fixture,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PageStoreMode {
    Live,
    Fixture,
    Synthetic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    /// Fixture directory (fixture mode).
    #[serde(default)]
    pub fixture_dir: Option<PathBuf>,
    /// Search endpoint (live mode).
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_provider_key_env")]
    pub api_key_env: String,
    /// Organic page resolution for crawls.
    #[serde(default = "default_page_store")]
    pub page_store: PageStoreMode,
    /// Page fixture directory (fixture page store).
    #[serde(default)]
    pub page_fixture_dir: Option<PathBuf>,
}

fn default_provider_key_env() -> String {
    "GEOLAB_SEARCH_API_KEY".into()
}
fn default_page_store() -> PageStoreMode {
    PageStoreMode::Synthetic
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            mode: ProviderMode::Synthetic,
            fixture_dir: None,
            endpoint: None,
            api_key_env: default_provider_key_env(),
            page_store: PageStoreMode::Synthetic,
            page_fixture_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    Scripted,
    Greedy,
    Chat,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub mode: PolicyMode,
    /// Script file (scripted mode): JSON list of steps with `{query}`,
    /// `{name}`, `{category}` placeholders.
    #[serde(default)]
    pub script_path: Option<PathBuf>,
    /// Chat backend (chat mode).
    #[serde(default)]
    pub chat: Option<ChatBackendConfig>,
    #[serde(default = "default_history_chars")]
    pub max_history_chars: usize,
}

fn default_history_chars() -> usize {
    60_000
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            mode: PolicyMode::Greedy,
            script_path: None,
            chat: None,
            max_history_chars: default_history_chars(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    Lexical,
    Llm,
    Cassette,
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub mode: JudgeMode,
    #[serde(default)]
    pub chat: Option<ChatBackendConfig>,
    #[serde(default)]
    pub cassette_path: Option<PathBuf>,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self { mode: JudgeMode::Lexical, chat: None, cassette_path: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct JudgesConfig {
    /// Final-answer recommendation judge.
    #[serde(default)]
    pub recommendation: JudgeConfig,
    /// Brand-relevance judge for follow-up classification; `none` keeps the
    /// lexical rule.
    #[serde(default = "default_brand_judge")]
    pub brand: JudgeConfig,
    /// Intent filter judge for the filter-queries command.
    #[serde(default)]
    pub intent: JudgeConfig,
}

fn default_brand_judge() -> JudgeConfig {
    JudgeConfig { mode: JudgeMode::None, chat: None, cassette_path: None }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerBackend {
    Lexical,
    Remote,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub backend: ScorerBackend,
    #[serde(default)]
    pub remote: Option<RemoteScorerConfig>,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self { backend: ScorerBackend::Lexical, remote: None }
    }
}

/// The full run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Instance file consumed by the runner.
    pub dataset_path: PathBuf,
    /// Conditions to run, as labels ("trace", "single_page", "page_geo:<x>", ...).
    pub conditions: Vec<String>,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub environment: EnvConfig,
    #[serde(default)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub judges: JudgesConfig,
    #[serde(default)]
    pub scorer: ScorerConfig,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Frozen timestamp placeholders for the agent prompt.
    #[serde(default = "default_year")]
    pub year: String,
    #[serde(default = "default_date")]
    pub date: String,
    pub output_dir: PathBuf,
    /// Exposure-controlled ablation: force the first crawl to the injected
    /// synthetic result.
    #[serde(default)]
    pub forced_first_crawl: bool,
    /// Pages per support role in built ecosystems.
    #[serde(default = "default_pages_per_role")]
    pub pages_per_role: usize,
    /// Pre-rewritten official-page body for page_geo conditions.
    #[serde(default)]
    pub page_geo_body_path: Option<PathBuf>,
    /// Generate page bodies with the chat backend instead of the templates.
    /// Exports and runs are no longer byte-reproducible across backends.
    #[serde(default)]
    pub llm_pages: bool,
}

fn default_parallelism() -> usize {
    1
}
fn default_seed() -> u64 {
    7
}
fn default_year() -> String {
    "2026".into()
}
fn default_date() -> String {
    "2026-01-15".into()
}
fn default_pages_per_role() -> usize {
    1
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
        let config: RunConfig =
            toml::from_str(&raw).map_err(|e| Error::Config(format!("parsing config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.environment.validate()?;
        self.budgets.validate()?;
        if self.conditions.is_empty() {
            return Err(Error::Config("no conditions configured".into()));
        }
        for label in &self.conditions {
            let condition: Condition = label.parse()?;
            if matches!(condition, Condition::PageGeo(_)) && self.page_geo_body_path.is_none() {
                return Err(Error::Config(
                    "page_geo conditions need page_geo_body_path".into(),
                ));
            }
        }
        if self.parallelism == 0 || self.pages_per_role == 0 {
            return Err(Error::Config("parallelism and pages_per_role must be positive".into()));
        }
        if matches!(self.provider.mode, ProviderMode::Fixture) && self.provider.fixture_dir.is_none()
        {
            return Err(Error::Config("fixture provider needs fixture_dir".into()));
        }
        if matches!(self.provider.mode, ProviderMode::Live) && self.provider.endpoint.is_none() {
            return Err(Error::Config("live provider needs endpoint".into()));
        }
        if matches!(self.policy.mode, PolicyMode::Scripted) && self.policy.script_path.is_none() {
            return Err(Error::Config("scripted policy needs script_path".into()));
        }
        if matches!(self.policy.mode, PolicyMode::Chat) && self.policy.chat.is_none() {
            return Err(Error::Config("chat policy needs a chat backend".into()));
        }
        if matches!(self.scorer.backend, ScorerBackend::Remote) && self.scorer.remote.is_none() {
            return Err(Error::Config("remote scorer needs remote settings".into()));
        }
        if self.llm_pages && self.policy.chat.is_none() {
            return Err(Error::Config("llm_pages needs a chat backend under [policy.chat]".into()));
        }
        Ok(())
    }

    pub fn parsed_conditions(&self) -> Result<Vec<Condition>> {
        self.conditions.iter().map(|label| label.parse()).collect()
    }

    /// Serialized form embedded in output artifact headers.
    pub fn provenance_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}
