//! Shared helpers for the integration suites: fixture builders, random
//! generators, and the independent recount oracle over raw log lines.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use geolab::dataset::ProductProfile;
use geolab::searchenv::providers::OrganicResult;

pub fn cleartone() -> ProductProfile {
    ProductProfile::new(
        "ClearTone Pulse",
        "Affordable ANC earbuds built for everyday listening, with 30-hour battery life.",
        vec![
            ("category".into(), "wireless earbuds".into()),
            ("core features".into(), "active noise cancellation, 30-hour battery".into()),
            ("use cases".into(), "commuting, workouts".into()),
            ("limitations".into(), "no wireless charging".into()),
        ],
    )
    .unwrap()
}

/// A pool of distractor results, shuffled deterministically per seed.
pub fn shuffled_organic_pool(size: usize, seed: u64) -> Vec<OrganicResult> {
    let mut pool: Vec<OrganicResult> = (0..size)
        .map(|i| OrganicResult {
            title: format!("Distractor result {i}"),
            link: format!("https://distractor-{i}.example.com/info"),
            snippet: format!("organic snippet number {i} about mainstream options"),
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    pool
}

const QUERY_WORDS: &[&str] = &[
    "best", "budget", "anc", "earbuds", "wireless", "battery", "review", "under", "100",
    "quiet", "comfortable", "durable", "value", "premium", "compact", "travel",
];

/// Random plain query from a fixed vocabulary.
pub fn random_query(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..6);
    (0..n)
        .map(|_| QUERY_WORDS[rng.gen_range(0..QUERY_WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Random query that may include phrases and operators.
pub fn random_operator_query(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..5) {
        0 => String::new(),
        1 => format!("\"{} {}\"", QUERY_WORDS[rng.gen_range(0..8)], QUERY_WORDS[8 + rng.gen_range(0..8)]),
        2 => format!(
            "{} AND {}",
            QUERY_WORDS[rng.gen_range(0..QUERY_WORDS.len())],
            QUERY_WORDS[rng.gen_range(0..QUERY_WORDS.len())]
        ),
        3 => format!(
            "{} OR {}",
            QUERY_WORDS[rng.gen_range(0..QUERY_WORDS.len())],
            QUERY_WORDS[rng.gen_range(0..QUERY_WORDS.len())]
        ),
        _ => random_query(rng),
    }
}

const PAGE_WORDS: &[&str] = &[
    "audio", "gear", "notes", "earbuds", "anc", "battery", "case", "driver", "sound",
    "profile", "firmware", "update", "comfort", "fit", "seal", "codec", "latency",
    "price", "retail", "warranty", "budget", "premium", "travel", "commute",
];

/// Random multi-paragraph page body, occasionally with Markdown artifacts.
pub fn random_page(rng: &mut ChaCha8Rng) -> String {
    let paragraphs = rng.gen_range(1..6);
    let mut body = String::new();
    for p in 0..paragraphs {
        if p > 0 {
            body.push_str("\n\n");
        }
        if rng.gen_bool(0.3) {
            body.push_str("## ");
        }
        let words = rng.gen_range(3..60);
        for w in 0..words {
            if w > 0 {
                body.push(' ');
            }
            if rng.gen_bool(0.05) {
                body.push_str(&format!(
                    "[{}](https://link-{}.example.com)",
                    PAGE_WORDS[rng.gen_range(0..PAGE_WORDS.len())],
                    rng.gen_range(0..100)
                ));
            } else {
                body.push_str(PAGE_WORDS[rng.gen_range(0..PAGE_WORDS.len())]);
            }
        }
    }
    body
}

/// Five per-episode rates recomputed independently from raw log lines.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct RecountRates {
    pub n: usize,
    pub recommended: usize,
    pub initial: usize,
    pub second: usize,
    pub followup: usize,
    pub internal: usize,
}

/// Single-pass recount over raw trajectory log lines, implemented without
/// the metrics pipeline. `recommended_by_episode` carries the judge verdicts
/// (the one signal that is not derivable from the log alone).
pub fn recount_from_log_lines(
    lines: &[String],
    recommended_by_episode: &HashMap<String, bool>,
) -> RecountRates {
    #[derive(Default)]
    struct EpisodeScan {
        synthetic_round1_link: Option<String>,
        searches_seen: usize,
        initial: bool,
        second: bool,
        any_target: bool,
        internal: bool,
    }
    let mut order: Vec<String> = Vec::new();
    let mut scans: HashMap<String, EpisodeScan> = HashMap::new();
    for line in lines {
        let value: serde_json::Value = serde_json::from_str(line).expect("valid log line");
        let event_type = value.get("event_type").and_then(|v| v.as_str()).unwrap_or_default();
        if event_type == "run_header" {
            continue;
        }
        let episode = value.get("episode_id").and_then(|v| v.as_str()).unwrap().to_string();
        if !scans.contains_key(&episode) {
            order.push(episode.clone());
            scans.insert(episode.clone(), EpisodeScan::default());
        }
        let scan = scans.get_mut(&episode).unwrap();
        let payload = value.get("payload").cloned().unwrap_or_default();
        match event_type {
            "search_issued" => {
                scan.searches_seen += 1;
            }
            "results_returned" => {
                let round = payload.get("round").cloned().unwrap_or_default();
                let round_index =
                    round.get("round_index").and_then(|v| v.as_u64()).unwrap_or_default();
                if round_index == 1 {
                    for result in round.get("results").and_then(|v| v.as_array()).unwrap() {
                        if result.get("origin").and_then(|v| v.as_str()) == Some("synthetic") {
                            scan.synthetic_round1_link = result
                                .get("link")
                                .and_then(|v| v.as_str())
                                .map(|s| s.to_string());
                        }
                    }
                }
                if round_index == 2
                    && round.get("routing").and_then(|v| v.as_str())
                        == Some("followup_target_specific")
                {
                    scan.second = true;
                }
            }
            "crawl_issued" => {
                let url = payload.get("url").and_then(|v| v.as_str()).unwrap_or_default();
                if scan.searches_seen < 2 {
                    if let Some(link) = &scan.synthetic_round1_link {
                        if url == link {
                            scan.initial = true;
                        }
                    }
                }
            }
            "page_returned" => {
                if payload.get("is_target_related").and_then(|v| v.as_bool()) == Some(true) {
                    scan.any_target = true;
                }
                if payload.pointer("/provenance/kind").and_then(|v| v.as_str()) == Some("in_page")
                {
                    scan.internal = true;
                }
            }
            _ => {}
        }
    }
    let mut rates = RecountRates { n: order.len(), ..Default::default() };
    for episode in &order {
        let scan = &scans[episode];
        if recommended_by_episode.get(episode).copied().unwrap_or(false) {
            rates.recommended += 1;
        }
        if scan.initial {
            rates.initial += 1;
        }
        if scan.second {
            rates.second += 1;
        }
        if !scan.initial && scan.any_target {
            rates.followup += 1;
        }
        if scan.internal {
            rates.internal += 1;
        }
    }
    rates
}

/// Distinct target-related urls crawled in one trajectory.
pub fn distinct_target_pages_crawled(
    traj: &geolab::agent::Trajectory,
    target_urls: &HashSet<String>,
) -> usize {
    let mut seen = HashSet::new();
    for event in &traj.events {
        if let geolab::agent::EventBody::PageReturned { url, is_target_related, .. } = &event.body
        {
            if *is_target_related || target_urls.contains(url) {
                seen.insert(url.clone());
            }
        }
    }
    seen.len()
}
