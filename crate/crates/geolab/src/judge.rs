//! LLM-backed verdicts for final-answer recommendation and follow-up
//! brand relevance, each with a deterministic lexical fallback for offline
//! tests.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chat::{parse_bool_verdict, ChatClient, ChatMessage, ChatOutcome, ChatRequest};
use crate::dataset::ProductProfile;
use crate::error::{Error, Result};
use crate::prompts;

/// How a verdict was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictSource {
    Llm,
    Lexical,
}

/// A boolean judgement with recorded provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub value: bool,
    pub source: VerdictSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

/// Judges whether a final answer recommends the target product.
pub trait RecommendationJudge: Send + Sync {
    fn judge_recommendation(&self, answer: &str, product: &ProductProfile) -> Result<Verdict>;

    /// Model identifier recorded in metrics provenance.
    fn model_name(&self) -> String;

    /// Prompt version recorded in metrics provenance.
    fn prompt_version(&self) -> String;
}

/// Judges whether a follow-up query specifically targets the product rather
/// than its broad category.
pub trait BrandJudge: Send + Sync {
    fn judge_brand_relevance(&self, query: &str, product: &ProductProfile) -> Result<Verdict>;
}

// ---------------------------------------------------------------------------
// Normalization helpers shared by the lexical paths
// ---------------------------------------------------------------------------

/// Lowercase, strip punctuation, collapse whitespace into single spaces.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
        } else {
            out.push(' ');
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// True when the normalized token sequence of `needle` appears contiguously
/// in the normalized tokens of `haystack`.
pub fn contains_token_sequence(haystack: &str, needle: &str) -> bool {
    let hay: Vec<&str> = haystack.split_whitespace().collect();
    let ned: Vec<&str> = needle.split_whitespace().collect();
    if ned.is_empty() || hay.len() < ned.len() {
        return false;
    }
    hay.windows(ned.len()).any(|w| w == ned.as_slice())
}

// ---------------------------------------------------------------------------
// Recommendation judge
// ---------------------------------------------------------------------------

/// Default cue lexicon for the lexical fallback. Config-owned in reports;
/// this list exists for CI, not for headline numbers.
pub const DEFAULT_RECOMMENDATION_CUES: &[&str] = &[
    "recommend", "best", "top pick", "top choice", "great choice", "good option",
    "good choice", "suggest", "worth buying", "worth considering", "go with",
    "solid choice", "ideal for", "stands out", "strong option",
];

/// Deterministic fallback: the product name and a recommendation cue must
/// co-occur within one sentence.
pub struct LexicalRecommendationJudge {
    cues: Vec<String>,
}

impl Default for LexicalRecommendationJudge {
    fn default() -> Self {
        Self {
            cues: DEFAULT_RECOMMENDATION_CUES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl LexicalRecommendationJudge {
    pub fn with_cues(cues: Vec<String>) -> Self {
        Self { cues }
    }
}

impl RecommendationJudge for LexicalRecommendationJudge {
    fn judge_recommendation(&self, answer: &str, product: &ProductProfile) -> Result<Verdict> {
        if answer.trim().is_empty() {
            return Err(Error::Validation("answer is empty".into()));
        }
        let name_norm = normalize(&product.name);
        let value = answer
            .split(['.', '!', '?', '\n'])
            .map(normalize)
            .any(|sentence| {
                contains_token_sequence(&sentence, &name_norm)
                    && self.cues.iter().any(|cue| sentence.contains(&normalize(cue)))
            });
        Ok(Verdict {
            value,
            source: VerdictSource::Lexical,
            rationale: None,
        })
    }

    fn model_name(&self) -> String {
        "lexical".into()
    }

    fn prompt_version(&self) -> String {
        "lexical-cues-v1".into()
    }
}

/// LLM-backed recommendation judge implementing the two-part criterion
/// (explicit mention AND recommended as suitable). Ambiguous output triggers
/// one re-ask, then an error.
pub struct LlmRecommendationJudge {
    client: Arc<dyn ChatClient>,
}

impl LlmRecommendationJudge {
    pub fn new(client: Arc<dyn ChatClient>) -> Self {
        Self { client }
    }
}

fn ask_bool(client: &dyn ChatClient, prompt: String) -> Result<bool> {
    for attempt in 0..2 {
        let request = ChatRequest {
            messages: vec![ChatMessage::user(prompt.clone())],
            tools: vec![],
            temperature: 0.0,
        };
        let text = match client.complete(&request)? {
            ChatOutcome::Text(t) => t,
            ChatOutcome::ToolCall { .. } => String::new(),
        };
        if let Some(v) = parse_bool_verdict(&text) {
            return Ok(v);
        }
        if attempt == 0 {
            continue;
        }
    }
    Err(Error::Protocol("judge did not return True/False".into()))
}

impl RecommendationJudge for LlmRecommendationJudge {
    fn judge_recommendation(&self, answer: &str, product: &ProductProfile) -> Result<Verdict> {
        if answer.trim().is_empty() {
            return Err(Error::Validation("answer is empty".into()));
        }
        let prompt = prompts::fill(
            prompts::RECOMMENDATION_JUDGE_PROMPT,
            &[
                ("name", product.name.as_str()),
                ("description", product.description.as_str()),
                ("answer", answer),
            ],
        );
        let value = ask_bool(self.client.as_ref(), prompt)?;
        Ok(Verdict {
            value,
            source: VerdictSource::Llm,
            rationale: None,
        })
    }

    fn model_name(&self) -> String {
        self.client.model_name()
    }

    fn prompt_version(&self) -> String {
        prompts::RECOMMENDATION_JUDGE_PROMPT_VERSION.into()
    }
}

// ---------------------------------------------------------------------------
// Brand-relevance judge
// ---------------------------------------------------------------------------

/// Deterministic fallback: the query must contain the product name and not
/// open with a broad category-recommendation cue.
pub struct LexicalBrandJudge;

impl BrandJudge for LexicalBrandJudge {
    fn judge_brand_relevance(&self, query: &str, product: &ProductProfile) -> Result<Verdict> {
        if query.trim().is_empty() {
            return Err(Error::Validation("query is empty".into()));
        }
        let norm_query = normalize(query);
        let name_present = contains_token_sequence(&norm_query, &normalize(&product.name));
        let broad_prefix = ["best ", "top ", "cheapest ", "recommend "]
            .iter()
            .any(|p| norm_query.starts_with(p));
        Ok(Verdict {
            value: name_present && !broad_prefix,
            source: VerdictSource::Lexical,
            rationale: None,
        })
    }
}

/// LLM-backed brand-relevance judge.
pub struct LlmBrandJudge {
    client: Arc<dyn ChatClient>,
}

impl LlmBrandJudge {
    pub fn new(client: Arc<dyn ChatClient>) -> Self {
        Self { client }
    }
}

impl BrandJudge for LlmBrandJudge {
    fn judge_brand_relevance(&self, query: &str, product: &ProductProfile) -> Result<Verdict> {
        if query.trim().is_empty() {
            return Err(Error::Validation("query is empty".into()));
        }
        let prompt = prompts::fill(
            prompts::BRAND_JUDGE_PROMPT,
            &[("name", product.name.as_str()), ("query", query)],
        );
        let value = ask_bool(self.client.as_ref(), prompt)?;
        Ok(Verdict {
            value,
            source: VerdictSource::Llm,
            rationale: None,
        })
    }
}

/// Replays recorded brand verdicts keyed by exact query text.
pub struct CassetteBrandJudge {
    verdicts: HashMap<String, bool>,
}

impl CassetteBrandJudge {
    pub fn from_map(verdicts: HashMap<String, bool>) -> Self {
        Self { verdicts }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let verdicts: HashMap<String, bool> = serde_json::from_str(&raw)?;
        Ok(Self { verdicts })
    }
}

impl BrandJudge for CassetteBrandJudge {
    fn judge_brand_relevance(&self, query: &str, _product: &ProductProfile) -> Result<Verdict> {
        let value = self
            .verdicts
            .get(query)
            .copied()
            .ok_or_else(|| Error::NotFound(format!("no recorded brand verdict for: {query}")))?;
        Ok(Verdict {
            value,
            source: VerdictSource::Llm,
            rationale: Some("replayed".into()),
        })
    }
}
