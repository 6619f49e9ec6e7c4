//! Answer-level and trajectory-level influence metrics.
//!
//! Five per-episode signals are extracted from the trajectory log plus the
//! recommendation verdict, then aggregated into per-(condition, dataset)
//! rates. All denominators default to the full episode count of the cell; a
//! conditioned-denominator mode for the second-search metric exists for
//! sensitivity analysis.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::agent::trajectory::{EventBody, Trajectory};
use crate::ecosystem::EvidenceGraph;
use crate::error::{Error, Result};
use crate::searchenv::{Origin, Routing};

/// The five boolean signals of one episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSignals {
    pub episode_id: String,
    pub condition: String,
    pub dataset: String,
    /// Final answer explicitly mentions and recommends the target.
    pub recommended: bool,
    /// The round-1 synthetic result was crawled before the second search.
    pub initial_target_crawl: bool,
    /// Round 2 exists and was classified target-specific.
    pub target_specific_second_search: bool,
    /// No initial target crawl, but a later crawl hit a target-related page.
    pub followup_target_crawl: bool,
    /// Some crawl used in-page link provenance.
    pub internal_link_crawl: bool,
    /// Searches executed (used by the conditioned-denominator mode).
    pub searches: usize,
}

/// Recommendation verdict attached to one episode, with judge provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub episode_id: String,
    pub instance_id: String,
    pub condition: String,
    pub dataset: String,
    pub recommended: bool,
    /// "llm", "lexical", or "skipped_no_answer".
    pub source: String,
    pub judge_model: String,
    pub prompt_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

/// Extract the five signals from one trajectory.
///
/// Target-relatedness comes from the logged page flags, optionally widened
/// by graph membership when the graph is available. The recommendation
/// signal comes from the verdict record (false when absent or unanswered).
pub fn extract_signals(
    traj: &Trajectory,
    graph: Option<&EvidenceGraph>,
    verdict: Option<&VerdictRecord>,
) -> Result<EpisodeSignals> {
    let graph_urls: HashSet<String> = graph.map(|g| g.urls().into_iter().collect()).unwrap_or_default();

    // Locate round 1 and its synthetic marker.
    let rounds = traj.rounds();
    let round1_synthetic: Option<String> = match rounds.first() {
        Some(round) => {
            let synth = round
                .results
                .iter()
                .find(|r| r.origin == Origin::Synthetic)
                .map(|r| r.link.clone());
            match synth {
                Some(link) => Some(link),
                None => {
                    return Err(Error::Data(format!(
                        "episode {}: round 1 has no synthetic marker (corrupt log)",
                        traj.episode_id
                    )))
                }
            }
        }
        None => None,
    };

    // Initial target crawl: the round-1 synthetic link is crawled before the
    // second search_issued event.
    let mut initial_target_crawl = false;
    if let Some(synthetic_link) = &round1_synthetic {
        let mut searches_seen = 0;
        for event in &traj.events {
            match &event.body {
                EventBody::SearchIssued { .. } => {
                    searches_seen += 1;
                    if searches_seen >= 2 {
                        break;
                    }
                }
                EventBody::CrawlIssued { url, .. } if url == synthetic_link => {
                    initial_target_crawl = true;
                    break;
                }
                _ => {}
            }
        }
    }

    let target_specific_second_search = rounds
        .iter()
        .find(|r| r.round_index == 2)
        .map(|r| r.routing == Routing::FollowupTargetSpecific)
        .unwrap_or(false);

    let mut any_target_crawl = false;
    let mut internal_link_crawl = false;
    for event in &traj.events {
        if let EventBody::PageReturned { url, is_target_related, provenance, .. } = &event.body {
            if *is_target_related || graph_urls.contains(url) {
                any_target_crawl = true;
            }
            if matches!(provenance, crate::crawlenv::Provenance::InPage { .. }) {
                internal_link_crawl = true;
            }
        }
    }
    let followup_target_crawl = !initial_target_crawl && any_target_crawl;

    let recommended = traj.final_answer.is_some() && verdict.map(|v| v.recommended).unwrap_or(false);

    Ok(EpisodeSignals {
        episode_id: traj.episode_id.clone(),
        condition: traj.condition.label(),
        dataset: verdict.map(|v| v.dataset.clone()).unwrap_or_else(|| "unknown".into()),
        recommended,
        initial_target_crawl,
        target_specific_second_search,
        followup_target_crawl,
        internal_link_crawl,
        searches: traj.executed_searches(),
    })
}

/// One rate with its counts, so reports stay loss-free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub numerator: usize,
    pub denominator: usize,
}

impl Rate {
    pub fn value(&self) -> Option<f64> {
        if self.denominator == 0 {
            None
        } else {
            Some(self.numerator as f64 / self.denominator as f64)
        }
    }

    /// Percentage to one decimal, or "-" for an empty cell.
    pub fn percent(&self) -> String {
        match self.value() {
            Some(v) => format!("{:.1}", v * 100.0),
            None => "-".into(),
        }
    }
}

/// Judge provenance carried into reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct JudgeProvenance {
    pub model: String,
    pub prompt_version: String,
}

/// Aggregated rates for one (condition, dataset) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub condition: String,
    pub dataset: String,
    pub n_episodes: usize,
    pub target_recommendation: Rate,
    pub initial_target_crawl: Rate,
    pub target_specific_second_search: Rate,
    pub followup_target_crawl: Rate,
    pub internal_link_crawl: Rate,
    pub judge: JudgeProvenance,
}

/// Aggregation options. The default counts every episode in every
/// denominator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateOptions {
    /// When set, the second-search metric is conditioned on episodes that
    /// issued at least two searches.
    pub condition_second_search_on_two_searches: bool,
}

/// Aggregate signals from a single (condition, dataset) cell.
pub fn aggregate(
    signals: &[EpisodeSignals],
    judge: JudgeProvenance,
    options: AggregateOptions,
) -> Result<MetricsReport> {
    let (condition, dataset) = match signals.first() {
        Some(first) => (first.condition.clone(), first.dataset.clone()),
        None => (String::new(), String::new()),
    };
    for signal in signals {
        if signal.condition != condition || signal.dataset != dataset {
            return Err(Error::Validation(format!(
                "aggregate called with mixed cells: ({condition}, {dataset}) vs ({}, {})",
                signal.condition, signal.dataset
            )));
        }
    }
    // Mutual exclusion is definitional; a violation means corrupt signals.
    for signal in signals {
        if signal.initial_target_crawl && signal.followup_target_crawl {
            return Err(Error::Data(format!(
                "episode {}: initial and follow-up target crawl are both set",
                signal.episode_id
            )));
        }
    }
    let n = signals.len();
    let count = |f: fn(&EpisodeSignals) -> bool| signals.iter().filter(|s| f(s)).count();
    let second_search_den = if options.condition_second_search_on_two_searches {
        signals.iter().filter(|s| s.searches >= 2).count()
    } else {
        n
    };
    let second_search_num = if options.condition_second_search_on_two_searches {
        signals
            .iter()
            .filter(|s| s.searches >= 2 && s.target_specific_second_search)
            .count()
    } else {
        count(|s| s.target_specific_second_search)
    };
    Ok(MetricsReport {
        condition,
        dataset,
        n_episodes: n,
        target_recommendation: Rate { numerator: count(|s| s.recommended), denominator: n },
        initial_target_crawl: Rate { numerator: count(|s| s.initial_target_crawl), denominator: n },
        target_specific_second_search: Rate {
            numerator: second_search_num,
            denominator: second_search_den,
        },
        followup_target_crawl: Rate {
            numerator: count(|s| s.followup_target_crawl),
            denominator: n,
        },
        internal_link_crawl: Rate { numerator: count(|s| s.internal_link_crawl), denominator: n },
        judge,
    })
}

/// Report output format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    AlignedText,
    Csv,
}

const METRIC_HEADERS: [&str; 5] =
    ["recommend", "initial_crawl", "second_search", "followup_crawl", "internal_link"];

fn report_rates(report: &MetricsReport) -> [&Rate; 5] {
    [
        &report.target_recommendation,
        &report.initial_target_crawl,
        &report.target_specific_second_search,
        &report.followup_target_crawl,
        &report.internal_link_crawl,
    ]
}

/// Render reports as an aligned text table or loss-free CSV (percentages to
/// one decimal in both; the CSV adds raw numerators and denominators).
pub fn emit_report(reports: &[MetricsReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::AlignedText => emit_aligned(reports),
        ReportFormat::Csv => emit_csv(reports),
    }
}

fn emit_aligned(reports: &[MetricsReport]) -> String {
    let mut rows: Vec<Vec<String>> = vec![{
        let mut header = vec!["condition".to_string(), "dataset".to_string(), "n".to_string()];
        header.extend(METRIC_HEADERS.iter().map(|h| format!("{h}%")));
        header
    }];
    for report in reports {
        let mut row = vec![
            report.condition.clone(),
            report.dataset.clone(),
            report.n_episodes.to_string(),
        ];
        row.extend(report_rates(report).iter().map(|r| r.percent()));
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|col| rows.iter().map(|r| r[col].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, cell)| format!("{cell:<width$}", width = widths[i]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn emit_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from("condition,dataset,n_episodes,judge_model,prompt_version");
    for h in METRIC_HEADERS {
        out.push_str(&format!(",{h}_num,{h}_den,{h}_pct"));
    }
    out.push('\n');
    for report in reports {
        out.push_str(&format!(
            "{},{},{},{},{}",
            csv_field(&report.condition),
            csv_field(&report.dataset),
            report.n_episodes,
            csv_field(&report.judge.model),
            csv_field(&report.judge.prompt_version),
        ));
        for rate in report_rates(report) {
            out.push_str(&format!(",{},{},{}", rate.numerator, rate.denominator, rate.percent()));
        }
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Parse a CSV report back into reports (loss-free round trip of counts).
pub fn parse_csv_report(csv: &str) -> Result<Vec<MetricsReport>> {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Data("empty csv".into()))?;
    let expected_cols = 5 + METRIC_HEADERS.len() * 3;
    if header.split(',').count() != expected_cols {
        return Err(Error::Data("unexpected csv header shape".into()));
    }
    let mut reports = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_cols {
            return Err(Error::Data(format!("csv row has {} fields", fields.len())));
        }
        let parse_usize = |s: &str| {
            s.parse::<usize>().map_err(|e| Error::Data(format!("bad count {s:?}: {e}")))
        };
        let rate_at = |i: usize| -> Result<Rate> {
            Ok(Rate {
                numerator: parse_usize(fields[5 + i * 3])?,
                denominator: parse_usize(fields[5 + i * 3 + 1])?,
            })
        };
        reports.push(MetricsReport {
            condition: fields[0].to_string(),
            dataset: fields[1].to_string(),
            n_episodes: parse_usize(fields[2])?,
            judge: JudgeProvenance {
                model: fields[3].to_string(),
                prompt_version: fields[4].to_string(),
            },
            target_recommendation: rate_at(0)?,
            initial_target_crawl: rate_at(1)?,
            target_specific_second_search: rate_at(2)?,
            followup_target_crawl: rate_at(3)?,
            internal_link_crawl: rate_at(4)?,
        });
    }
    Ok(reports)
}
