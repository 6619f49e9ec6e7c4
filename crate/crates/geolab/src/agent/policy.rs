//! Agent policies: the chat-backed production policy plus the scripted and
//! greedy deterministic policies used by tests and directional checks.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::chat::{ChatClient, ChatMessage, ChatOutcome, ChatRequest, ToolSpec};
use crate::crawlenv::Provenance;
use crate::error::{Error, Result};
use crate::prompts;

use super::{Action, HistoryView};

/// Chooses the next action given a read-only view of the episode history.
pub trait AgentPolicy {
    fn next_action(&mut self, view: &HistoryView<'_>) -> Result<Action>;
}

// ---------------------------------------------------------------------------
// Scripted policy
// ---------------------------------------------------------------------------

/// One step of a scripted policy. Link references may be symbolic (round and
/// rank) so scripts stay independent of concrete urls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedStep {
    Search { query: String },
    CrawlRank { round: usize, rank: usize },
    CrawlUrl { url: String },
    Answer { text: String },
}

/// Replays a predefined action list. Script exhaustion is a policy error.
pub struct ScriptedPolicy {
    steps: Vec<ScriptedStep>,
    cursor: usize,
}

impl ScriptedPolicy {
    pub fn new(steps: Vec<ScriptedStep>) -> Self {
        Self { steps, cursor: 0 }
    }

    /// Substitute `{query}`, `{name}`, and `{category}` placeholders in all
    /// string fields, producing a per-instance script.
    pub fn instantiate(
        steps: &[ScriptedStep],
        query: &str,
        name: &str,
        category: &str,
    ) -> Vec<ScriptedStep> {
        let fill = |s: &str| {
            prompts::fill(s, &[("query", query), ("name", name), ("category", category)])
        };
        steps
            .iter()
            .map(|step| match step {
                ScriptedStep::Search { query } => ScriptedStep::Search { query: fill(query) },
                ScriptedStep::Answer { text } => ScriptedStep::Answer { text: fill(text) },
                other => other.clone(),
            })
            .collect()
    }
}

impl AgentPolicy for ScriptedPolicy {
    fn next_action(&mut self, view: &HistoryView<'_>) -> Result<Action> {
        if view.final_answer_requested {
            // Jump to the script's answer if one remains.
            if let Some(pos) = self.steps[self.cursor..]
                .iter()
                .position(|s| matches!(s, ScriptedStep::Answer { .. }))
            {
                self.cursor += pos;
            }
        }
        let step = self
            .steps
            .get(self.cursor)
            .ok_or_else(|| Error::Protocol("scripted policy exhausted".into()))?
            .clone();
        self.cursor += 1;
        match step {
            ScriptedStep::Search { query } => Ok(Action::Search(query)),
            ScriptedStep::CrawlUrl { url } => Ok(Action::Crawl(url)),
            ScriptedStep::Answer { text } => Ok(Action::Answer(text)),
            ScriptedStep::CrawlRank { round, rank } => {
                let target = view
                    .rounds
                    .iter()
                    .find(|r| r.round_index == round)
                    .and_then(|r| r.results.iter().find(|res| res.rank == rank))
                    .ok_or_else(|| {
                        Error::Protocol(format!("script references missing round {round} rank {rank}"))
                    })?;
                Ok(Action::Crawl(target.link.clone()))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Greedy evidence policy
// ---------------------------------------------------------------------------

/// Deterministic test policy: crawl the highest-priority not-yet-crawled
/// target-related observed link; otherwise search for the product by name;
/// otherwise answer with a product recommendation.
///
/// Priority order: search-result links by (round, rank), then in-page links
/// in first-observation order.
pub struct GreedyEvidencePolicy {
    target_urls: BTreeSet<String>,
    product_name: String,
}

impl GreedyEvidencePolicy {
    pub fn new(target_urls: BTreeSet<String>, product_name: impl Into<String>) -> Self {
        Self { target_urls, product_name: product_name.into() }
    }

    fn answer_text(&self) -> String {
        format!(
            "Based on the collected evidence, I recommend the {name} as the strongest option; \
             its specifications, reviews, and owner feedback line up consistently.",
            name = self.product_name
        )
    }
}

impl AgentPolicy for GreedyEvidencePolicy {
    fn next_action(&mut self, view: &HistoryView<'_>) -> Result<Action> {
        if view.final_answer_requested {
            return Ok(Action::Answer(self.answer_text()));
        }
        if view.crawls_remaining > 0 {
            let crawled: BTreeSet<&str> =
                view.crawled.iter().map(|p| p.url.as_str()).collect();
            let mut candidates: Vec<(&crate::crawlenv::ObservedLink, (usize, usize, usize))> =
                view.observed
                    .iter()
                    .filter(|l| self.target_urls.contains(&l.url) && !crawled.contains(l.url.as_str()))
                    .map(|l| {
                        let key = match &l.provenance {
                            Provenance::SearchResult { round, rank } => (0, *round, *rank),
                            Provenance::InPage { .. } => (1, l.first_observed_step, 0),
                        };
                        (l, key)
                    })
                    .collect();
            candidates.sort_by_key(|(_, key)| *key);
            if let Some((link, _)) = candidates.first() {
                return Ok(Action::Crawl(link.url.clone()));
            }
        }
        if view.searches_remaining > 0 {
            // Covers the first action too: nothing is observed before round
            // one, so the opening search already names the product.
            return Ok(Action::Search(format!("{} specifications review", self.product_name)));
        }
        Ok(Action::Answer(self.answer_text()))
    }
}

// ---------------------------------------------------------------------------
// Chat policy
// ---------------------------------------------------------------------------

/// Production policy: renders the history into the search-agent prompt and
/// drives a chat backend with `search` and `crawl` tools. A plain assistant
/// message is the final answer. Temperature is fixed at 0.
pub struct ChatPolicy {
    client: Arc<dyn ChatClient>,
    topic: String,
    year: String,
    date: String,
    /// Rendering budget in characters for the history block.
    pub max_history_chars: usize,
}

impl ChatPolicy {
    pub fn new(
        client: Arc<dyn ChatClient>,
        topic: impl Into<String>,
        year: impl Into<String>,
        date: impl Into<String>,
    ) -> Self {
        Self {
            client,
            topic: topic.into(),
            year: year.into(),
            date: date.into(),
            max_history_chars: 60_000,
        }
    }

    fn tools() -> Vec<ToolSpec> {
        vec![
            ToolSpec {
                name: "search".into(),
                description: "Issue a web search query and observe a ranked result list.".into(),
                parameters: json!({
                    "type": "object",
                    "properties": {"query": {"type": "string"}},
                    "required": ["query"]
                }),
            },
            ToolSpec {
                name: "crawl".into(),
                description: "Fetch the content of a previously observed result link.".into(),
                parameters: json!({
                    "type": "object",
                    "properties": {"url": {"type": "string"}},
                    "required": ["url"]
                }),
            },
        ]
    }
}

impl AgentPolicy for ChatPolicy {
    fn next_action(&mut self, view: &HistoryView<'_>) -> Result<Action> {
        let system = prompts::fill(
            prompts::AGENT_PROMPT,
            &[
                ("topic", self.topic.as_str()),
                ("year", self.year.as_str()),
                ("date", self.date.as_str()),
            ],
        );
        let mut user = super::render_history(view, self.max_history_chars);
        if let Some(rejection) = view.last_rejection {
            user.push_str(&format!("\nNote: your previous action was rejected: {rejection}\n"));
        }
        if view.final_answer_requested {
            user.push_str(
                "\nThe interaction budget is exhausted. Provide your final answer now as plain \
                 text, based on the evidence above.\n",
            );
        } else {
            user.push_str("\nChoose your next action: call `search`, call `crawl`, or reply with the final answer as plain text.\n");
        }
        let request = ChatRequest {
            messages: vec![ChatMessage::system(system), ChatMessage::user(user)],
            tools: if view.final_answer_requested { vec![] } else { Self::tools() },
            temperature: 0.0,
        };
        match self.client.complete(&request)? {
            ChatOutcome::Text(text) => {
                if text.trim().is_empty() {
                    return Err(Error::Protocol("policy returned an empty answer".into()));
                }
                Ok(Action::Answer(text))
            }
            ChatOutcome::ToolCall { name, arguments } => match name.as_str() {
                "search" => {
                    let query = arguments
                        .get("query")
                        .and_then(|v| v.as_str())
                        .unwrap_or_default()
                        .to_string();
                    if query.trim().is_empty() {
                        return Err(Error::Protocol("search tool call without a query".into()));
                    }
                    Ok(Action::Search(query))
                }
                "crawl" => {
                    let url = arguments
                        .get("url")
                        .and_then(|v| v.as_str())
                        .unwrap_or_default()
                        .to_string();
                    if url.trim().is_empty() {
                        return Err(Error::Protocol("crawl tool call without a url".into()));
                    }
                    Ok(Action::Crawl(url))
                }
                other => Err(Error::Protocol(format!("unknown tool call: {other}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_steps_instantiate_placeholders() {
        let steps = vec![
            ScriptedStep::Search { query: "{query}".into() },
            ScriptedStep::Search { query: "{name} details".into() },
            ScriptedStep::Answer { text: "I recommend the {name}.".into() },
        ];
        let filled = ScriptedPolicy::instantiate(&steps, "best earbuds", "NovaWave One", "earbuds");
        assert_eq!(filled[0], ScriptedStep::Search { query: "best earbuds".into() });
        assert_eq!(filled[1], ScriptedStep::Search { query: "NovaWave One details".into() });
        assert_eq!(
            filled[2],
            ScriptedStep::Answer { text: "I recommend the NovaWave One.".into() }
        );
    }
}
