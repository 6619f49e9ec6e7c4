//! Semantic similarity scoring for follow-up result selection and
//! ecosystem-local ranking.
//!
//! The lexical scorer (cosine over term-frequency vectors) is the
//! deterministic default used in CI. A remote scorer speaks a minimal HTTP
//! contract — POST {query, passage}, numeric score back — so any reranker
//! service can be plugged in behind it.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::snippet::tokenize;

/// Compact search-result document: title, link, and query-conditioned snippet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultDoc {
    pub page_id: String,
    pub title: String,
    pub url: String,
    pub snippet: String,
}

impl ResultDoc {
    /// The scored text surface (title + snippet).
    pub fn passage(&self) -> String {
        format!("{} {}", self.title, self.snippet)
    }
}

/// A document with its score for one query. Scores are comparable across
/// docs for the same query only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc: ResultDoc,
    pub score: f64,
}

/// Outcome of one scoring call, noting whether the lexical fallback was used
/// in place of a failing remote backend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreOutcome {
    pub value: f64,
    pub fell_back: bool,
}

pub trait SemanticScorer: Send + Sync {
    fn score(&self, query: &str, doc: &ResultDoc) -> Result<ScoreOutcome>;

    /// Identifier recorded in logs and reports.
    fn name(&self) -> String;
}

/// Rank docs for a query: descending score, ties broken by page_id so the
/// order is deterministic.
pub fn rank(
    query: &str,
    docs: &[ResultDoc],
    scorer: &dyn SemanticScorer,
) -> Result<(Vec<ScoredDoc>, bool)> {
    if docs.is_empty() {
        return Err(Error::Validation("rank called with an empty doc pool".into()));
    }
    let mut fell_back = false;
    let mut scored = Vec::with_capacity(docs.len());
    for doc in docs {
        let outcome = scorer.score(query, doc).map_err(|e| {
            Error::Validation(format!("scoring doc {}: {e}", doc.page_id))
        })?;
        if !outcome.value.is_finite() {
            return Err(Error::Validation(format!(
                "scorer returned a non-finite score for doc {}",
                doc.page_id
            )));
        }
        fell_back |= outcome.fell_back;
        scored.push(ScoredDoc { doc: doc.clone(), score: outcome.value });
    }
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.doc.page_id.cmp(&b.doc.page_id))
    });
    Ok((scored, fell_back))
}

// ---------------------------------------------------------------------------
// Lexical scorer
// ---------------------------------------------------------------------------

/// Cosine similarity over case-folded term-frequency vectors of the query
/// versus title+snippet. Pure and deterministic.
#[derive(Debug, Default, Clone)]
pub struct LexicalScorer;

fn tf_vector(tokens: &[String]) -> HashMap<&str, f64> {
    let mut tf: HashMap<&str, f64> = HashMap::new();
    for t in tokens {
        *tf.entry(t.as_str()).or_insert(0.0) += 1.0;
    }
    tf
}

pub fn lexical_score(query: &str, passage: &str) -> f64 {
    let q_tokens = tokenize(query);
    let p_tokens = tokenize(passage);
    if q_tokens.is_empty() || p_tokens.is_empty() {
        return 0.0;
    }
    let q = tf_vector(&q_tokens);
    let p = tf_vector(&p_tokens);
    let dot: f64 = q
        .iter()
        .filter_map(|(term, qv)| p.get(term).map(|pv| qv * pv))
        .sum();
    let q_norm = q.values().map(|v| v * v).sum::<f64>().sqrt();
    let p_norm = p.values().map(|v| v * v).sum::<f64>().sqrt();
    if q_norm == 0.0 || p_norm == 0.0 {
        0.0
    } else {
        dot / (q_norm * p_norm)
    }
}

impl SemanticScorer for LexicalScorer {
    fn score(&self, query: &str, doc: &ResultDoc) -> Result<ScoreOutcome> {
        Ok(ScoreOutcome { value: lexical_score(query, &doc.passage()), fell_back: false })
    }

    fn name(&self) -> String {
        "lexical".into()
    }
}

// ---------------------------------------------------------------------------
// Remote scorer
// ---------------------------------------------------------------------------

/// What to do when the remote backend stays unreachable after retries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemoteFailurePolicy {
    /// Fail the episode so silent metric contamination cannot occur.
    FailEpisode,
    /// Fall back to the lexical scorer; the fallback is recorded in the
    /// trajectory.
    LexicalFallback,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteScorerConfig {
    pub endpoint: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_policy")]
    pub on_failure: RemoteFailurePolicy,
}

fn default_api_key_env() -> String {
    "GEOLAB_SCORER_API_KEY".into()
}
fn default_retries() -> u32 {
    3
}
fn default_timeout() -> u64 {
    30
}
fn default_policy() -> RemoteFailurePolicy {
    RemoteFailurePolicy::FailEpisode
}

/// Transport behind the remote scorer; swapped for a cassette in tests.
pub trait ScoreTransport: Send + Sync {
    fn post_score(&self, query: &str, passage: &str) -> Result<f64>;
}

/// Plain HTTP POST transport: request {query, passage}, response either a
/// bare number or {"score": number}.
pub struct HttpScoreTransport {
    endpoint: String,
    api_key_env: String,
    client: reqwest::blocking::Client,
}

impl HttpScoreTransport {
    pub fn new(endpoint: String, api_key_env: String, timeout_secs: u64) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(timeout_secs))
            .build()
            .map_err(|e| Error::transport(format!("building http client: {e}"), false))?;
        Ok(Self { endpoint, api_key_env, client })
    }
}

impl ScoreTransport for HttpScoreTransport {
    fn post_score(&self, query: &str, passage: &str) -> Result<f64> {
        let mut req = self
            .client
            .post(&self.endpoint)
            .json(&json!({ "query": query, "passage": passage }));
        if let Ok(key) = std::env::var(&self.api_key_env) {
            if !key.is_empty() {
                req = req.bearer_auth(key);
            }
        }
        let resp = req
            .send()
            .map_err(|e| Error::transport(format!("scorer request failed: {e}"), true))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Error::transport(format!("scorer returned {status}"), true));
        }
        if !status.is_success() {
            return Err(Error::transport(format!("scorer returned {status}"), false));
        }
        let body: serde_json::Value = resp
            .json()
            .map_err(|e| Error::Protocol(format!("scorer response not JSON: {e}")))?;
        let score = body
            .as_f64()
            .or_else(|| body.get("score").and_then(|v| v.as_f64()))
            .ok_or_else(|| Error::Protocol("scorer response carries no numeric score".into()))?;
        Ok(score)
    }
}

/// Record/replay cassette keyed by (query, passage). Missing entries are a
/// replay error so fixture drift is caught instead of masked.
pub struct CassetteScoreTransport {
    entries: Mutex<BTreeMap<String, f64>>,
}

fn cassette_key(query: &str, passage: &str) -> String {
    format!("{query}\u{1f}{passage}")
}

impl CassetteScoreTransport {
    pub fn new(pairs: &[((&str, &str), f64)]) -> Self {
        let entries = pairs
            .iter()
            .map(|((q, p), s)| (cassette_key(q, p), *s))
            .collect();
        Self { entries: Mutex::new(entries) }
    }

    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Entry {
            query: String,
            passage: String,
            score: f64,
        }
        let raw = std::fs::read_to_string(path)?;
        let entries: Vec<Entry> = serde_json::from_str(&raw)?;
        Ok(Self {
            entries: Mutex::new(
                entries
                    .into_iter()
                    .map(|e| (cassette_key(&e.query, &e.passage), e.score))
                    .collect(),
            ),
        })
    }
}

impl ScoreTransport for CassetteScoreTransport {
    fn post_score(&self, query: &str, passage: &str) -> Result<f64> {
        self.entries
            .lock()
            .unwrap()
            .get(&cassette_key(query, passage))
            .copied()
            .ok_or_else(|| Error::NotFound(format!("no recorded score for query {query:?}")))
    }
}

/// Remote reranker client with retry and a configurable failure policy.
pub struct RemoteScorer {
    transport: Box<dyn ScoreTransport>,
    max_retries: u32,
    on_failure: RemoteFailurePolicy,
    name: String,
}

impl RemoteScorer {
    pub fn new(
        transport: Box<dyn ScoreTransport>,
        max_retries: u32,
        on_failure: RemoteFailurePolicy,
        name: impl Into<String>,
    ) -> Self {
        Self { transport, max_retries, on_failure, name: name.into() }
    }

    pub fn from_config(config: &RemoteScorerConfig) -> Result<Self> {
        let transport = HttpScoreTransport::new(
            config.endpoint.clone(),
            config.api_key_env.clone(),
            config.timeout_secs,
        )?;
        Ok(Self::new(
            Box::new(transport),
            config.max_retries,
            config.on_failure,
            format!("remote:{}", config.endpoint),
        ))
    }
}

impl SemanticScorer for RemoteScorer {
    fn score(&self, query: &str, doc: &ResultDoc) -> Result<ScoreOutcome> {
        let passage = doc.passage();
        let mut last_err = None;
        for attempt in 0..=self.max_retries {
            match self.transport.post_score(query, &passage) {
                Ok(value) if value.is_finite() => {
                    return Ok(ScoreOutcome { value, fell_back: false })
                }
                Ok(_) => {
                    return Err(Error::Protocol("remote scorer returned a non-finite score".into()))
                }
                Err(e) if e.is_retryable() && attempt < self.max_retries => last_err = Some(e),
                Err(e) => {
                    last_err = Some(e);
                    break;
                }
            }
        }
        match self.on_failure {
            RemoteFailurePolicy::FailEpisode => {
                Err(last_err.unwrap_or_else(|| Error::transport("remote scorer failed", false)))
            }
            RemoteFailurePolicy::LexicalFallback => Ok(ScoreOutcome {
                value: lexical_score(query, &passage),
                fell_back: true,
            }),
        }
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}
