//! The controlled search interface.
//!
//! The initial round and general follow-up rounds use the "9+1" protocol:
//! nine organic results in provider order with one synthetic target result
//! injected at a fixed rank. Target-specific follow-ups are answered
//! entirely from the ecosystem page pool, ranked by the semantic scorer.

pub mod providers;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ProductProfile;
use crate::ecosystem::{render_page, EvidenceGraph};
use crate::error::{Error, Result};
use crate::judge::{self, BrandJudge, VerdictSource};
use crate::scorer::{rank, ResultDoc, SemanticScorer};
use crate::snippet::{clean_text, extract_snippet};

use providers::OrganicProvider;

/// Where a result came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Organic,
    Synthetic,
}

/// One entry of a ranked result list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub title: String,
    pub link: String,
    pub snippet: String,
    /// 1-based rank within the round.
    pub rank: usize,
    pub origin: Origin,
    pub round_index: usize,
}

/// How a round was routed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Routing {
    InitialControlled,
    FollowupGeneral,
    FollowupTargetSpecific,
}

impl fmt::Display for Routing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Routing::InitialControlled => "initial_controlled",
            Routing::FollowupGeneral => "followup_general",
            Routing::FollowupTargetSpecific => "followup_target_specific",
        };
        f.write_str(s)
    }
}

/// One search round: the agent query and its ranked results.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRound {
    pub round_index: usize,
    pub agent_query: String,
    pub results: Vec<SearchResult>,
    pub routing: Routing,
    /// True when any remote score call in this round fell back to lexical.
    #[serde(default)]
    pub scorer_fallback: bool,
}

impl SearchRound {
    pub fn synthetic_result(&self) -> Option<&SearchResult> {
        self.results.iter().find(|r| r.origin == Origin::Synthetic)
    }
}

/// Follow-up query classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FollowupClass {
    TargetSpecific,
    General,
}

/// How the classification was made; recorded in the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassificationSource {
    Lexical,
    Judge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FollowupDecision {
    pub class: FollowupClass,
    pub source: ClassificationSource,
}

/// What to do when a configured brand judge fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeFailurePolicy {
    FallBackToLexical,
    FailEpisode,
}

/// Classify a follow-up query as target-specific or general.
///
/// The default lexical rule checks for the product-name token sequence
/// appearing contiguously in the normalized query. A configured brand judge
/// overrides the lexical rule; its failure handling is policy-controlled.
pub fn classify_followup(
    query: &str,
    product: &ProductProfile,
    brand_judge: Option<&dyn BrandJudge>,
    on_judge_failure: JudgeFailurePolicy,
) -> Result<FollowupDecision> {
    if query.trim().is_empty() {
        return Err(Error::Validation("follow-up query is empty".into()));
    }
    let lexical_class = if judge::contains_token_sequence(
        &judge::normalize(query),
        &judge::normalize(&product.name),
    ) {
        FollowupClass::TargetSpecific
    } else {
        FollowupClass::General
    };
    if let Some(judge) = brand_judge {
        match judge.judge_brand_relevance(query, product) {
            Ok(verdict) => {
                let class = if verdict.value {
                    FollowupClass::TargetSpecific
                } else {
                    FollowupClass::General
                };
                let source = match verdict.source {
                    VerdictSource::Llm => ClassificationSource::Judge,
                    VerdictSource::Lexical => ClassificationSource::Lexical,
                };
                return Ok(FollowupDecision { class, source });
            }
            Err(e) => match on_judge_failure {
                JudgeFailurePolicy::FailEpisode => return Err(e),
                JudgeFailurePolicy::FallBackToLexical => {
                    return Ok(FollowupDecision {
                        class: lexical_class,
                        source: ClassificationSource::Lexical,
                    })
                }
            },
        }
    }
    Ok(FollowupDecision { class: lexical_class, source: ClassificationSource::Lexical })
}

/// Environment constants for round construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Results per controlled round (organic count is one less).
    pub results_per_round: usize,
    /// 1-based rank of the injected synthetic result.
    pub injection_rank: usize,
    /// Candidates sampled for general follow-up selection.
    pub candidate_sample_size: usize,
    /// Pages exposed for target-specific follow-ups.
    pub local_top_k: usize,
    /// Snippet length bound in characters.
    pub snippet_max_chars: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            results_per_round: 10,
            injection_rank: 5,
            candidate_sample_size: 30,
            local_top_k: 10,
            snippet_max_chars: 150,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.results_per_round == 0
            || self.injection_rank == 0
            || self.candidate_sample_size == 0
            || self.local_top_k == 0
            || self.snippet_max_chars == 0
        {
            return Err(Error::Config("environment constants must be positive".into()));
        }
        if self.injection_rank > self.results_per_round {
            return Err(Error::Config(format!(
                "injection rank {} exceeds results per round {}",
                self.injection_rank, self.results_per_round
            )));
        }
        Ok(())
    }
}

/// The per-episode search interface over one evidence graph.
pub struct SearchEnvironment<'a> {
    pub graph: &'a EvidenceGraph,
    pub organic: &'a dyn OrganicProvider,
    pub scorer: &'a dyn SemanticScorer,
    pub config: EnvConfig,
}

impl<'a> SearchEnvironment<'a> {
    pub fn new(
        graph: &'a EvidenceGraph,
        organic: &'a dyn OrganicProvider,
        scorer: &'a dyn SemanticScorer,
        config: EnvConfig,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self { graph, organic, scorer, config })
    }

    /// Query-conditioned result doc for a graph page.
    fn result_doc(&self, page_id: &str, agent_query: &str) -> Result<ResultDoc> {
        let page = self
            .graph
            .pages
            .get(page_id)
            .ok_or_else(|| Error::NotFound(format!("page {page_id} not in graph")))?;
        let body = render_page(self.graph, page_id)?;
        let clean = clean_text(&body, page_id);
        let snippet = extract_snippet(&clean, agent_query, self.config.snippet_max_chars);
        Ok(ResultDoc {
            page_id: page.page_id.clone(),
            title: page.title.clone(),
            url: page.url.clone(),
            snippet: snippet.text,
        })
    }

    /// All graph page ids in deterministic order.
    fn pool(&self) -> Vec<String> {
        self.graph.pages.keys().cloned().collect()
    }

    fn organic_results(&self, agent_query: &str) -> Result<Vec<providers::OrganicResult>> {
        let needed = self.config.results_per_round - 1;
        let organics = self.organic.search(agent_query, needed)?;
        if organics.len() < needed {
            return Err(Error::Environment(format!(
                "organic provider produced {} results after padding, need {needed}",
                organics.len()
            )));
        }
        Ok(organics)
    }

    /// Interleave nine organics (provider order) with one synthetic doc at
    /// the injection rank.
    fn controlled_round(
        &self,
        round_index: usize,
        agent_query: &str,
        synthetic: ResultDoc,
        routing: Routing,
        scorer_fallback: bool,
    ) -> Result<SearchRound> {
        let organics = self.organic_results(agent_query)?;
        let total = self.config.results_per_round;
        let mut results = Vec::with_capacity(total);
        let mut organic_iter = organics.into_iter();
        for rank_pos in 1..=total {
            if rank_pos == self.config.injection_rank {
                results.push(SearchResult {
                    title: synthetic.title.clone(),
                    link: synthetic.url.clone(),
                    snippet: synthetic.snippet.clone(),
                    rank: rank_pos,
                    origin: Origin::Synthetic,
                    round_index,
                });
            } else {
                let organic = organic_iter
                    .next()
                    .ok_or_else(|| Error::Environment("organic pool exhausted".into()))?;
                results.push(SearchResult {
                    title: organic.title,
                    link: organic.link,
                    snippet: organic.snippet,
                    rank: rank_pos,
                    origin: Origin::Organic,
                    round_index,
                });
            }
        }
        Ok(SearchRound {
            round_index,
            agent_query: agent_query.to_string(),
            results,
            routing,
            scorer_fallback,
        })
    }

    /// The episode's first search: entry-page result injected at the fixed
    /// rank among nine organic results in provider order.
    pub fn initial_round(&self, agent_query: &str) -> Result<SearchRound> {
        let synthetic = self.result_doc(&self.graph.entry_page_id.clone(), agent_query)?;
        self.controlled_round(1, agent_query, synthetic, Routing::InitialControlled, false)
    }

    /// A follow-up search, routed by the caller-supplied classification.
    pub fn followup_round(
        &self,
        agent_query: &str,
        round_index: usize,
        class: FollowupClass,
        rng: &mut impl Rng,
    ) -> Result<SearchRound> {
        if round_index < 2 {
            return Err(Error::Validation("follow-up rounds start at index 2".into()));
        }
        let pool = self.pool();
        if pool.is_empty() {
            return Err(Error::Environment("evidence graph has no pages".into()));
        }
        match class {
            FollowupClass::TargetSpecific => {
                let docs: Vec<ResultDoc> = pool
                    .iter()
                    .map(|id| self.result_doc(id, agent_query))
                    .collect::<Result<_>>()?;
                let (ranked, scorer_fallback) = rank(agent_query, &docs, self.scorer)?;
                let top_k = self.config.local_top_k.min(ranked.len());
                let results = ranked
                    .into_iter()
                    .take(top_k)
                    .enumerate()
                    .map(|(i, scored)| SearchResult {
                        title: scored.doc.title,
                        link: scored.doc.url,
                        snippet: scored.doc.snippet,
                        rank: i + 1,
                        origin: Origin::Synthetic,
                        round_index,
                    })
                    .collect();
                Ok(SearchRound {
                    round_index,
                    agent_query: agent_query.to_string(),
                    results,
                    routing: Routing::FollowupTargetSpecific,
                    scorer_fallback,
                })
            }
            FollowupClass::General => {
                let sampled = sample_candidates(&pool, self.config.candidate_sample_size, rng);
                let docs: Vec<ResultDoc> = sampled
                    .iter()
                    .map(|id| self.result_doc(id, agent_query))
                    .collect::<Result<_>>()?;
                let (ranked, scorer_fallback) = rank(agent_query, &docs, self.scorer)?;
                let best = ranked.into_iter().next().expect("pool is non-empty");
                self.controlled_round(
                    round_index,
                    agent_query,
                    best.doc,
                    Routing::FollowupGeneral,
                    scorer_fallback,
                )
            }
        }
    }
}

/// Sample `min(k, pool.len())` page ids without replacement. Deterministic
/// for a given rng state and pool order.
pub fn sample_candidates(pool: &[String], k: usize, rng: &mut impl Rng) -> Vec<String> {
    let amount = k.min(pool.len());
    rand::seq::index::sample(rng, pool.len(), amount)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect()
}
