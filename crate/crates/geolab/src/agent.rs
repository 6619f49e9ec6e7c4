//! The episode loop: budgets, history, action execution, and termination.
//!
//! The environment enforces the hard maxima (a sixth search or crawl is
//! rejected with a budget_violation event and the rejection is surfaced to
//! the policy); the prompt-level minima are audited into the log but never
//! enforced. When the step budget is exhausted without an answer, the
//! environment asks the policy for a final answer once.

pub mod policy;
pub mod trajectory;

use serde::{Deserialize, Serialize};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::crawlenv::{extract_links, CrawlEnvironment, CrawledPage, ObservedSet};
use crate::dataset::ExperimentInstance;
use crate::ecosystem::EvidenceGraph;
use crate::error::{Error, Result};
use crate::judge::BrandJudge;
use crate::searchenv::{
    classify_followup, JudgeFailurePolicy, Routing, SearchEnvironment, SearchRound,
};

pub use policy::{AgentPolicy, ChatPolicy, GreedyEvidencePolicy, ScriptedPolicy, ScriptedStep};
pub use trajectory::{EventBody, Termination, Trajectory, TrajectoryEvent};

/// One agent action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Search(String),
    Crawl(String),
    Answer(String),
}

/// Interaction budgets. Maxima are enforced by the environment; minima are
/// prompt-level obligations that are only audited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budgets {
    pub max_steps: usize,
    pub min_searches: usize,
    pub max_searches: usize,
    pub min_crawls: usize,
    pub max_crawls: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Self { max_steps: 10, min_searches: 2, max_searches: 5, min_crawls: 2, max_crawls: 5 }
    }
}

impl Budgets {
    pub fn validate(&self) -> Result<()> {
        if self.min_searches == 0 || self.min_crawls == 0 || self.max_steps == 0 {
            return Err(Error::Config("budget minima and step cap must be positive".into()));
        }
        if self.min_searches > self.max_searches || self.min_crawls > self.max_crawls {
            return Err(Error::Config("budget minimum exceeds maximum".into()));
        }
        Ok(())
    }
}

/// Accumulated per-episode interaction history.
#[derive(Debug, Default)]
pub struct History {
    pub user_query: String,
    pub rounds: Vec<SearchRound>,
    pub crawled: Vec<CrawledPage>,
    pub observed: ObservedSet,
    pub searches: usize,
    pub crawls: usize,
    pub answered: bool,
}

impl History {
    pub fn new(user_query: impl Into<String>) -> Self {
        Self { user_query: user_query.into(), ..Default::default() }
    }

    /// Executed actions: searches + crawls (+1 once answered).
    pub fn step_count(&self) -> usize {
        self.searches + self.crawls + usize::from(self.answered)
    }

    fn tool_steps(&self) -> usize {
        self.searches + self.crawls
    }
}

/// Read-only rendering input handed to policies.
pub struct HistoryView<'a> {
    pub user_query: &'a str,
    pub rounds: &'a [SearchRound],
    pub crawled: &'a [CrawledPage],
    pub observed: &'a ObservedSet,
    pub searches_used: usize,
    pub searches_remaining: usize,
    pub crawls_used: usize,
    pub crawls_remaining: usize,
    pub steps_used: usize,
    pub steps_remaining: usize,
    pub last_rejection: Option<&'a str>,
    pub final_answer_requested: bool,
}

/// Deterministic prompt rendering of the history: numbered result lists,
/// crawled content blocks, and budget counters. When the rendering exceeds
/// `max_chars`, crawled page contents are truncated oldest-first; result
/// lines (titles, links, snippets) are never truncated.
pub fn render_history(view: &HistoryView<'_>, max_chars: usize) -> String {
    let render = |truncate_before: usize| {
        let mut out = String::new();
        out.push_str(&format!("User question: {}\n", view.user_query));
        for round in view.rounds {
            out.push_str(&format!(
                "\nSearch round {} — query: {}\n",
                round.round_index, round.agent_query
            ));
            for result in &round.results {
                out.push_str(&format!(
                    "{}. {}\n   {}\n   {}\n",
                    result.rank, result.title, result.link, result.snippet
                ));
            }
        }
        for (idx, page) in view.crawled.iter().enumerate() {
            out.push_str(&format!("\nCrawled page {}: {}\n", idx + 1, page.url));
            out.push_str("----- begin content -----\n");
            if idx < truncate_before {
                out.push_str("[content truncated]\n");
            } else if let Some(note) = &page.error_note {
                out.push_str(&format!("[unavailable: {note}]\n"));
            } else {
                out.push_str(&page.content);
                if !page.content.ends_with('\n') {
                    out.push('\n');
                }
            }
            out.push_str("----- end content -----\n");
        }
        out.push_str(&format!(
            "\nBudgets: searches {}/{}, crawls {}/{}, steps {}/{}.\n",
            view.searches_used,
            view.searches_used + view.searches_remaining,
            view.crawls_used,
            view.crawls_used + view.crawls_remaining,
            view.steps_used,
            view.steps_used + view.steps_remaining,
        ));
        out
    };
    let mut truncate_before = 0;
    loop {
        let rendered = render(truncate_before);
        if rendered.chars().count() <= max_chars || truncate_before >= view.crawled.len() {
            return rendered;
        }
        truncate_before += 1;
    }
}

/// Environment bundle for one episode.
pub struct EpisodeEnv<'a> {
    pub search: &'a SearchEnvironment<'a>,
    pub crawl: &'a CrawlEnvironment<'a>,
    pub brand_judge: Option<&'a dyn BrandJudge>,
    pub judge_failure_policy: JudgeFailurePolicy,
}

fn wall_time_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Deterministic episode id from instance, condition, and seed.
pub fn episode_id(instance_id: &str, condition_label: &str, seed: u64) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(instance_id.as_bytes());
    hasher.update([0x1f]);
    hasher.update(condition_label.as_bytes());
    hasher.update([0x1f]);
    hasher.update(seed.to_le_bytes());
    let digest = hasher.finalize();
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

struct EpisodeState {
    history: History,
    events: Vec<TrajectoryEvent>,
    last_rejection: Option<String>,
}

impl EpisodeState {
    fn push(&mut self, body: EventBody) {
        let step = self.events.len() + 1;
        self.events.push(TrajectoryEvent { step, body, wall_time: wall_time_now() });
    }

    fn view<'a>(&'a self, budgets: &Budgets, final_answer_requested: bool) -> HistoryView<'a> {
        let h = &self.history;
        HistoryView {
            user_query: &h.user_query,
            rounds: &h.rounds,
            crawled: &h.crawled,
            observed: &h.observed,
            searches_used: h.searches,
            searches_remaining: budgets.max_searches.saturating_sub(h.searches),
            crawls_used: h.crawls,
            crawls_remaining: budgets.max_crawls.saturating_sub(h.crawls),
            steps_used: h.tool_steps(),
            steps_remaining: budgets.max_steps.saturating_sub(h.tool_steps()),
            last_rejection: self.last_rejection.as_deref(),
            final_answer_requested,
        }
    }
}

/// Run one episode to termination.
///
/// With `forced_first_crawl` set, the environment executes the initial round
/// for the user query and a mandatory crawl of the designated url before the
/// policy takes over.
pub fn run_episode(
    instance: &ExperimentInstance,
    graph: &EvidenceGraph,
    env: &EpisodeEnv<'_>,
    policy: &mut dyn AgentPolicy,
    budgets: &Budgets,
    seed: u64,
    forced_first_crawl: Option<&str>,
) -> Result<Trajectory> {
    budgets.validate()?;
    if graph.product != instance.product {
        return Err(Error::Validation(
            "graph was built for a different product than the instance".into(),
        ));
    }
    let ep_id = episode_id(&instance.instance_id, &graph.condition.label(), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = EpisodeState {
        history: History::new(&instance.query),
        events: Vec::new(),
        last_rejection: None,
    };

    let finish = |state: EpisodeState, final_answer: Option<String>, termination: Termination| {
        Trajectory {
            episode_id: ep_id.clone(),
            instance_id: instance.instance_id.clone(),
            condition: graph.condition.clone(),
            seed,
            events: state.events,
            final_answer,
            termination,
        }
    };

    // Forced-exposure mode: round one plus the designated crawl happen
    // before the policy is consulted.
    if let Some(url) = forced_first_crawl {
        let query = instance.query.clone();
        execute_search(&mut state, env, &query, &mut rng, true)?;
        if !state.history.observed.contains(url) {
            return Err(Error::Contract(format!(
                "forced first crawl url was not exposed in round one: {url}"
            )));
        }
        execute_crawl(&mut state, env, url, true)?;
    }

    let consultation_cap = 2 * budgets.max_steps;
    let mut consultations = 0;
    let mut transport_retries = 0;

    loop {
        let final_requested = state.history.tool_steps() >= budgets.max_steps;
        if consultations >= consultation_cap {
            state.push(EventBody::BudgetViolation {
                kind: "consultation_cap".into(),
                detail: format!("policy consulted {consultations} times without terminating"),
            });
            return Ok(finish(state, None, Termination::StepLimit));
        }
        let action = {
            let view = state.view(budgets, final_requested);
            policy.next_action(&view)
        };
        consultations += 1;
        let action = match action {
            Ok(a) => a,
            Err(e) if e.is_retryable() && transport_retries < 2 => {
                transport_retries += 1;
                continue;
            }
            Err(e) => {
                state.push(EventBody::BudgetViolation {
                    kind: "policy_error".into(),
                    detail: e.to_string(),
                });
                return Ok(finish(state, None, Termination::PolicyError));
            }
        };
        state.last_rejection = None;

        if final_requested {
            match action {
                Action::Answer(text) if !text.trim().is_empty() => {
                    audit_minimums(&mut state, budgets);
                    state.history.answered = true;
                    state.push(EventBody::Answer { text: text.clone() });
                    return Ok(finish(state, Some(text), Termination::Answered));
                }
                _ => {
                    state.push(EventBody::BudgetViolation {
                        kind: "no_answer_at_step_limit".into(),
                        detail: "policy did not answer when the step budget was exhausted".into(),
                    });
                    return Ok(finish(state, None, Termination::StepLimit));
                }
            }
        }

        match action {
            Action::Search(query) => {
                if query.trim().is_empty() {
                    state.push(EventBody::BudgetViolation {
                        kind: "policy_error".into(),
                        detail: "search action with an empty query".into(),
                    });
                    return Ok(finish(state, None, Termination::PolicyError));
                }
                if state.history.searches >= budgets.max_searches {
                    let detail = format!(
                        "search budget exhausted ({} of {})",
                        state.history.searches, budgets.max_searches
                    );
                    state.push(EventBody::BudgetViolation {
                        kind: "max_searches_exceeded".into(),
                        detail: detail.clone(),
                    });
                    state.last_rejection = Some(detail);
                    continue;
                }
                execute_search(&mut state, env, &query, &mut rng, false)?;
            }
            Action::Crawl(url) => {
                if url.trim().is_empty() {
                    state.push(EventBody::BudgetViolation {
                        kind: "policy_error".into(),
                        detail: "crawl action with an empty url".into(),
                    });
                    return Ok(finish(state, None, Termination::PolicyError));
                }
                if state.history.crawls >= budgets.max_crawls {
                    let detail = format!(
                        "crawl budget exhausted ({} of {})",
                        state.history.crawls, budgets.max_crawls
                    );
                    state.push(EventBody::BudgetViolation {
                        kind: "max_crawls_exceeded".into(),
                        detail: detail.clone(),
                    });
                    state.last_rejection = Some(detail);
                    continue;
                }
                if !state.history.observed.contains(&url) {
                    let detail = format!("crawl of unobserved link: {url}");
                    state.push(EventBody::BudgetViolation {
                        kind: "unobserved_link".into(),
                        detail: detail.clone(),
                    });
                    state.last_rejection = Some(detail);
                    continue;
                }
                execute_crawl(&mut state, env, &url, false)?;
            }
            Action::Answer(text) => {
                if text.trim().is_empty() {
                    state.push(EventBody::BudgetViolation {
                        kind: "policy_error".into(),
                        detail: "answer action with empty text".into(),
                    });
                    return Ok(finish(state, None, Termination::PolicyError));
                }
                audit_minimums(&mut state, budgets);
                state.history.answered = true;
                state.push(EventBody::Answer { text: text.clone() });
                return Ok(finish(state, Some(text), Termination::Answered));
            }
        }
    }
}

fn audit_minimums(state: &mut EpisodeState, budgets: &Budgets) {
    if state.history.searches < budgets.min_searches {
        state.push(EventBody::BudgetViolation {
            kind: "min_searches_unmet".into(),
            detail: format!(
                "episode used {} searches, prompt asks for at least {}",
                state.history.searches, budgets.min_searches
            ),
        });
    }
    if state.history.crawls < budgets.min_crawls {
        state.push(EventBody::BudgetViolation {
            kind: "min_crawls_unmet".into(),
            detail: format!(
                "episode used {} crawls, prompt asks for at least {}",
                state.history.crawls, budgets.min_crawls
            ),
        });
    }
}

fn execute_search(
    state: &mut EpisodeState,
    env: &EpisodeEnv<'_>,
    query: &str,
    rng: &mut ChaCha8Rng,
    forced: bool,
) -> Result<()> {
    let round_index = state.history.searches + 1;
    let (round, classification_source) = if round_index == 1 {
        (env.search.initial_round(query)?, None)
    } else {
        let decision = classify_followup(
            query,
            &env.search.graph.product,
            env.brand_judge,
            env.judge_failure_policy,
        )?;
        let round = env.search.followup_round(query, round_index, decision.class, rng)?;
        (round, Some(decision.source))
    };
    state.push(EventBody::SearchIssued { query: query.to_string(), forced });
    state.history.searches += 1;
    let observe_step = state.history.tool_steps();
    state.history.observed.register_round(&round, observe_step);
    state.push(EventBody::ResultsReturned { round: round.clone(), classification_source });
    debug_assert!(match round.routing {
        Routing::InitialControlled | Routing::FollowupGeneral =>
            round.results.len() == env.search.config.results_per_round,
        Routing::FollowupTargetSpecific => !round.results.is_empty(),
    });
    state.history.rounds.push(round);
    Ok(())
}

fn execute_crawl(
    state: &mut EpisodeState,
    env: &EpisodeEnv<'_>,
    url: &str,
    forced: bool,
) -> Result<()> {
    let step = state.history.tool_steps() + 1;
    let page = env.crawl.crawl(url, &state.history.observed, step)?;
    state.push(EventBody::CrawlIssued { url: url.to_string(), forced });
    state.history.crawls += 1;
    let links = extract_links(&page.content);
    state.history.observed.register_page_links(url, &links, state.history.tool_steps());
    state.push(EventBody::PageReturned {
        url: url.to_string(),
        is_target_related: page.is_target_related,
        provenance: page.link_provenance_at_crawl.clone(),
        content_chars: page.content.chars().count(),
        unavailable: page.error_note.is_some(),
        error_note: page.error_note.clone(),
    });
    state.history.crawled.push(page);
    Ok(())
}
