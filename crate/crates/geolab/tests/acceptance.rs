//! Acceptance suite: protocol exactness, oracle equivalence, and directional
//! behavior with fully deterministic components. One pass/fail line prints
//! per criterion (run with `--nocapture` to see them).

mod common;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use geolab::agent::{
    run_episode, Budgets, EpisodeEnv, EventBody, GreedyEvidencePolicy, ScriptedPolicy,
    ScriptedStep, Termination, Trajectory,
};
use geolab::agent::trajectory::{normalize_log_line, trajectory_to_lines};
use geolab::config::{PolicyMode, RunConfig};
use geolab::crawlenv::{CrawlEnvironment, SyntheticPageStore};
use geolab::dataset::{synthetic_instances, write_instances, ExperimentInstance};
use geolab::ecosystem::templates::{PrewrittenBodyGenerator, TemplateGenerator};
use geolab::ecosystem::{
    build_ecosystem, build_ecosystem_with, validate_graph, Condition, EcosystemConfig,
    EvidenceGraph, PageGenerator,
};
use geolab::judge::{LexicalRecommendationJudge, RecommendationJudge};
use geolab::metrics::{
    aggregate, extract_signals, AggregateOptions, EpisodeSignals, JudgeProvenance, VerdictRecord,
};
use geolab::runner;
use geolab::scorer::{lexical_score, LexicalScorer};
use geolab::searchenv::providers::FixtureProvider;
use geolab::searchenv::{
    sample_candidates, EnvConfig, FollowupClass, JudgeFailurePolicy, Origin, Routing,
    SearchEnvironment,
};
use geolab::snippet::{clean_text, extract_snippet, parse_lenient, tokenize};

fn pass(criterion: &str) {
    println!("ACCEPTANCE {criterion}: PASS");
}

fn all_conditions() -> Vec<Condition> {
    vec![
        Condition::SinglePage,
        Condition::PageGeo("external".into()),
        Condition::Uncoordinated,
        Condition::Coordinated,
        Condition::Trace,
    ]
}

fn generator_for(condition: &Condition, product_name: &str) -> Box<dyn PageGenerator> {
    match condition {
        Condition::PageGeo(_) => Box::new(PrewrittenBodyGenerator::new(format!(
            "# {product_name}\n\nThe {product_name} page body, rewritten by an external \
             optimizer to maximize answer visibility while keeping the factual claims intact.\n\n\
             Shoppers comparing options will find {product_name} covers the essentials at a \
             competitive price."
        ))),
        _ => Box::new(TemplateGenerator),
    }
}

// ---------------------------------------------------------------------------
// 1. Injection protocol
// ---------------------------------------------------------------------------

#[test]
fn acceptance_1_injection_protocol() {
    let started = Instant::now();
    let instances = synthetic_instances(50, 1001);
    let mut case_rng = ChaCha8Rng::seed_from_u64(42);
    let mut checked_rounds = 0usize;
    for (case, condition) in (0..100).flat_map(|i| {
        all_conditions().into_iter().map(move |c| (i, c))
    }) {
        let instance = &instances[case % instances.len()];
        let generator = generator_for(&condition, &instance.product.name);
        let graph =
            build_ecosystem(&instance.product, &condition, generator.as_ref(), case as u64)
                .unwrap();
        let pool = common::shuffled_organic_pool(12, case_rng.gen());
        let pool_links: Vec<String> = pool.iter().map(|o| o.link.clone()).collect();
        let provider = FixtureProvider::from_pool(pool);
        let env =
            SearchEnvironment::new(&graph, &provider, &LexicalScorer, EnvConfig::default())
                .unwrap();
        let query = common::random_query(&mut case_rng);

        let initial = env.initial_round(&query).unwrap();
        let mut followup_rng = ChaCha8Rng::seed_from_u64(case as u64);
        let followup = env
            .followup_round(&query, 2, FollowupClass::General, &mut followup_rng)
            .unwrap();

        for round in [&initial, &followup] {
            assert_eq!(round.results.len(), 10, "round must have exactly 10 results");
            let synthetic: Vec<_> =
                round.results.iter().filter(|r| r.origin == Origin::Synthetic).collect();
            assert_eq!(synthetic.len(), 1, "exactly one synthetic result");
            assert_eq!(synthetic[0].rank, 5, "synthetic result at rank 5");
            let organic_links: Vec<&str> = round
                .results
                .iter()
                .filter(|r| r.origin == Origin::Organic)
                .map(|r| r.link.as_str())
                .collect();
            let expected: Vec<&str> = pool_links.iter().take(9).map(|s| s.as_str()).collect();
            assert_eq!(organic_links, expected, "organic provider order preserved");
            for (i, result) in round.results.iter().enumerate() {
                assert_eq!(result.rank, i + 1);
            }
            checked_rounds += 1;
        }
    }
    assert_eq!(checked_rounds, 1000);
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, budget is 10s");
    pass("1 injection-protocol (500 cases x 5 conditions, 0 violations)");
}

// ---------------------------------------------------------------------------
// 2. Snippet properties
// ---------------------------------------------------------------------------

#[test]
fn acceptance_2_snippet_properties() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..1000 {
        let page = common::random_page(&mut rng);
        let query = common::random_operator_query(&mut rng);
        let clean = clean_text(&page, &format!("page-{case}"));
        let snippet = extract_snippet(&clean, &query, 150);

        assert!(
            snippet.text.chars().count() <= 150,
            "length bound violated for case {case}"
        );
        let again = extract_snippet(&clean, &query, 150);
        assert_eq!(snippet, again, "determinism violated for case {case}");
        if snippet.matched {
            let terms: HashSet<String> = parse_lenient(&query)
                .units
                .into_iter()
                .flat_map(|u| u.tokens)
                .collect();
            let snippet_tokens: HashSet<String> = tokenize(&snippet.text).into_iter().collect();
            assert!(
                terms.iter().any(|t| snippet_tokens.contains(t)),
                "matched snippet misses all query terms for case {case}: {query:?} -> {:?}",
                snippet.text
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, budget is 10s");
    pass("2 snippet-properties (1000 random page/query pairs, 0 violations)");
}

// ---------------------------------------------------------------------------
// 3. Retrieval oracle
// ---------------------------------------------------------------------------

/// Independent doc construction: title + query-conditioned snippet straight
/// from the public page APIs, bypassing the search environment.
fn oracle_passage(graph: &EvidenceGraph, page_id: &str, query: &str) -> String {
    let page = &graph.pages[page_id];
    let body = geolab::ecosystem::render_page(graph, page_id).unwrap();
    let clean = clean_text(&body, page_id);
    let snippet = extract_snippet(&clean, query, 150);
    format!("{} {}", page.title, snippet.text)
}

#[test]
fn acceptance_3_retrieval_oracle() {
    let instances = synthetic_instances(10, 3003);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..200 {
        let instance = &instances[case % instances.len()];
        // Pool sizes sweep 5..50 via pages_per_role 1..8 (7..49 pages).
        let pages_per_role = 1 + (case % 8);
        let config = EcosystemConfig { pages_per_role };
        let graph = build_ecosystem_with(
            &instance.product,
            &Condition::Trace,
            &TemplateGenerator,
            case as u64,
            &config,
        )
        .unwrap();
        let provider = FixtureProvider::from_pool(common::shuffled_organic_pool(12, case as u64));
        let env =
            SearchEnvironment::new(&graph, &provider, &LexicalScorer, EnvConfig::default())
                .unwrap();
        let query = if case % 3 == 0 {
            format!("{} specifications", instance.product.name)
        } else {
            common::random_query(&mut rng)
        };

        // Target-specific: environment order equals a brute-force selection
        // sort by the lexical scorer with the page_id tie rule.
        let mut ts_rng = ChaCha8Rng::seed_from_u64(case as u64);
        let round = env
            .followup_round(&query, 2, FollowupClass::TargetSpecific, &mut ts_rng)
            .unwrap();
        assert_eq!(round.routing, Routing::FollowupTargetSpecific);
        let mut remaining: Vec<(String, f64)> = graph
            .pages
            .keys()
            .map(|id| (id.clone(), lexical_score(&query, &oracle_passage(&graph, id, &query))))
            .collect();
        let mut oracle_order: Vec<String> = Vec::new();
        while !remaining.is_empty() {
            let mut best = 0;
            for i in 1..remaining.len() {
                if remaining[i].1 > remaining[best].1
                    || (remaining[i].1 == remaining[best].1 && remaining[i].0 < remaining[best].0)
                {
                    best = i;
                }
            }
            oracle_order.push(remaining.remove(best).0);
        }
        let expected_links: Vec<String> = oracle_order
            .iter()
            .take(10.min(graph.pages.len()))
            .map(|id| graph.pages[id].url.clone())
            .collect();
        let actual_links: Vec<String> = round.results.iter().map(|r| r.link.clone()).collect();
        assert_eq!(actual_links, expected_links, "case {case}: target-specific order mismatch");

        // General: the rank-5 page equals the brute-force arg-max over the
        // re-derived 30-sample.
        let seed = 10_000 + case as u64;
        let mut general_rng = ChaCha8Rng::seed_from_u64(seed);
        let general = env
            .followup_round(&query, 2, FollowupClass::General, &mut general_rng)
            .unwrap();
        let pool: Vec<String> = graph.pages.keys().cloned().collect();
        let mut rederive_rng = ChaCha8Rng::seed_from_u64(seed);
        let sample = sample_candidates(&pool, 30, &mut rederive_rng);
        let mut best: Option<(String, f64, String)> = None;
        for id in &sample {
            let score = lexical_score(&query, &oracle_passage(&graph, id, &query));
            let better = match &best {
                None => true,
                Some((_, s, best_id)) => score > *s || (score == *s && id < best_id),
            };
            if better {
                best = Some((graph.pages[id].url.clone(), score, id.clone()));
            }
        }
        let rank5 = general.results.iter().find(|r| r.rank == 5).unwrap();
        assert_eq!(rank5.origin, Origin::Synthetic);
        assert_eq!(rank5.link, best.unwrap().0, "case {case}: general arg-max mismatch");
    }
    pass("3 retrieval-oracle (200 queries, pools 7-49, exact match)");
}

// ---------------------------------------------------------------------------
// 4. Trajectory/metrics oracle
// ---------------------------------------------------------------------------

struct PipelineOutcome {
    trajectory: Trajectory,
    signals: EpisodeSignals,
    verdict: VerdictRecord,
}

fn run_pipeline_episode(
    instance: &ExperimentInstance,
    condition: &Condition,
    steps: Vec<ScriptedStep>,
    seed: u64,
) -> PipelineOutcome {
    let graph =
        build_ecosystem(&instance.product, condition, &TemplateGenerator, seed).unwrap();
    let provider = FixtureProvider::from_pool(common::shuffled_organic_pool(12, seed));
    let search =
        SearchEnvironment::new(&graph, &provider, &LexicalScorer, EnvConfig::default()).unwrap();
    let store = SyntheticPageStore;
    let crawl = CrawlEnvironment::new(&graph, &store);
    let env = EpisodeEnv {
        search: &search,
        crawl: &crawl,
        brand_judge: None,
        judge_failure_policy: JudgeFailurePolicy::FailEpisode,
    };
    let mut policy = ScriptedPolicy::new(ScriptedPolicy::instantiate(
        &steps,
        &instance.query,
        &instance.product.name,
        instance.product.category(),
    ));
    let trajectory = run_episode(
        instance,
        &graph,
        &env,
        &mut policy,
        &Budgets::default(),
        seed,
        None,
    )
    .unwrap();
    let judge = LexicalRecommendationJudge::default();
    let (recommended, source) = match &trajectory.final_answer {
        Some(answer) => (
            judge.judge_recommendation(answer, &instance.product).unwrap().value,
            "lexical".to_string(),
        ),
        None => (false, "skipped_no_answer".to_string()),
    };
    let verdict = VerdictRecord {
        episode_id: trajectory.episode_id.clone(),
        instance_id: instance.instance_id.clone(),
        condition: condition.label(),
        dataset: instance.source.to_string(),
        recommended,
        source,
        judge_model: judge.model_name(),
        prompt_version: judge.prompt_version(),
        rationale: None,
    };
    let signals = extract_signals(&trajectory, Some(&graph), Some(&verdict)).unwrap();
    PipelineOutcome { trajectory, signals, verdict }
}

fn signal_vector(signals: &EpisodeSignals) -> [bool; 5] {
    [
        signals.recommended,
        signals.initial_target_crawl,
        signals.target_specific_second_search,
        signals.followup_target_crawl,
        signals.internal_link_crawl,
    ]
}

#[test]
fn acceptance_4_trajectory_metrics_oracle() {
    let started = Instant::now();
    let instances = synthetic_instances(10, 4004);

    // Hand-derived signal vectors per scripted policy:
    //   (recommended, initial, second-search, followup, internal)
    // The second crawl targets a round-1 organic result: a round-2 page
    // could carry in-page provenance (support pages are first observed
    // inside the entry body), which would make the internal-link signal
    // instance-dependent.
    let rank5_crawler = vec![
        ScriptedStep::Search { query: "{query}".into() },
        ScriptedStep::CrawlRank { round: 1, rank: 5 },
        ScriptedStep::Search { query: "{name} specifications".into() },
        ScriptedStep::CrawlRank { round: 1, rank: 1 },
        ScriptedStep::Answer { text: "I recommend the {name} for this need.".into() },
    ];
    let rank5_skipper = vec![
        ScriptedStep::Search { query: "{query}".into() },
        ScriptedStep::CrawlRank { round: 1, rank: 1 },
        ScriptedStep::Search { query: "other {category} worth considering".into() },
        ScriptedStep::CrawlRank { round: 2, rank: 5 },
        ScriptedStep::Answer { text: "I recommend the {name} for this need.".into() },
    ];
    let immediate_answerer = vec![ScriptedStep::Answer {
        text: "No single option stands out from the search results.".into(),
    }];

    let cases: [(&str, &[ScriptedStep], [bool; 5]); 3] = [
        ("rank5-crawler", &rank5_crawler, [true, true, true, false, false]),
        ("rank5-skipper", &rank5_skipper, [true, false, false, true, false]),
        ("immediate-answerer", &immediate_answerer, [false, false, false, false, false]),
    ];

    for (policy_name, steps, expected) in cases {
        let mut all_signals = Vec::new();
        let mut log_lines = Vec::new();
        let mut verdicts = HashMap::new();
        for (i, instance) in instances.iter().enumerate() {
            let outcome =
                run_pipeline_episode(instance, &Condition::Trace, steps.to_vec(), i as u64);
            assert_eq!(outcome.trajectory.termination, Termination::Answered);
            assert_eq!(
                signal_vector(&outcome.signals),
                expected,
                "{policy_name} on instance {i}: wrong signal vector"
            );
            verdicts.insert(outcome.trajectory.episode_id.clone(), outcome.verdict.recommended);
            log_lines.extend(trajectory_to_lines(&outcome.trajectory).unwrap());
            all_signals.push(outcome.signals);
        }
        let report = aggregate(
            &all_signals,
            JudgeProvenance { model: "lexical".into(), prompt_version: "lexical-cues-v1".into() },
            AggregateOptions::default(),
        )
        .unwrap();
        // Independent recount straight from the raw log lines.
        let recount = common::recount_from_log_lines(&log_lines, &verdicts);
        assert_eq!(report.n_episodes, recount.n);
        assert_eq!(report.target_recommendation.numerator, recount.recommended);
        assert_eq!(report.initial_target_crawl.numerator, recount.initial);
        assert_eq!(report.target_specific_second_search.numerator, recount.second);
        assert_eq!(report.followup_target_crawl.numerator, recount.followup);
        assert_eq!(report.internal_link_crawl.numerator, recount.internal);
        // Rates are exactly 0 or 1 for these hand-built policies.
        let expected_rate =
            |b: bool| if b { Some(1.0) } else { Some(0.0) };
        assert_eq!(report.target_recommendation.value(), expected_rate(expected[0]));
        assert_eq!(report.initial_target_crawl.value(), expected_rate(expected[1]));
        assert_eq!(report.target_specific_second_search.value(), expected_rate(expected[2]));
        assert_eq!(report.followup_target_crawl.value(), expected_rate(expected[3]));
        assert_eq!(report.internal_link_crawl.value(), expected_rate(expected[4]));
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, budget is 30s");
    pass("4 trajectory-metrics-oracle (3 policies x 10 instances, exact vectors + recount)");
}

// ---------------------------------------------------------------------------
// 5. Ecosystem structure
// ---------------------------------------------------------------------------

#[test]
fn acceptance_5_ecosystem_structure() {
    let instances = synthetic_instances(100, 5005);
    for (i, instance) in instances.iter().enumerate() {
        for condition in all_conditions() {
            let generator = generator_for(&condition, &instance.product.name);
            let graph =
                build_ecosystem(&instance.product, &condition, generator.as_ref(), i as u64)
                    .unwrap();
            let violations = validate_graph(&graph);
            assert!(
                violations.is_empty(),
                "instance {i} {condition}: {violations:?}"
            );
            match condition {
                Condition::Uncoordinated => {
                    assert!(graph.edges().is_empty(), "instance {i}: uncoordinated has edges");
                }
                Condition::Coordinated => {
                    let entry = graph.entry_page_id.clone();
                    let edges = graph.edges();
                    for page in graph.pages.values() {
                        if page.page_id != entry {
                            assert!(
                                edges.iter().any(|(src, dst)| *src == page.page_id
                                    && *dst != entry),
                                "instance {i}: support page {} not mutually connected",
                                page.page_id
                            );
                        }
                    }
                    let reachable = graph.reachable_from_entry();
                    let all: BTreeSet<String> = graph.pages.keys().cloned().collect();
                    assert_eq!(reachable, all, "instance {i}: coordinated reachability gap");
                }
                Condition::Trace => {
                    let reachable = graph.reachable_from_entry();
                    let all: BTreeSet<String> = graph.pages.keys().cloned().collect();
                    assert_eq!(reachable, all, "instance {i}: trace reachability gap");
                }
                _ => {}
            }
        }
    }
    pass("5 ecosystem-structure (100 profiles x 5 conditions, 0 violations)");
}

// ---------------------------------------------------------------------------
// 6. Directional behavior
// ---------------------------------------------------------------------------

#[test]
fn acceptance_6_directional_behavior() {
    let instances = synthetic_instances(50, 6006);
    let mut totals: HashMap<&str, (f64, usize)> = HashMap::new(); // (sum pages, internal episodes)
    for condition in [Condition::Trace, Condition::SinglePage] {
        let label = match condition {
            Condition::Trace => "trace",
            _ => "single_page",
        };
        let mut sum_pages = 0.0;
        let mut internal_episodes = 0;
        for (i, instance) in instances.iter().enumerate() {
            let graph =
                build_ecosystem(&instance.product, &condition, &TemplateGenerator, i as u64)
                    .unwrap();
            let provider =
                FixtureProvider::from_pool(common::shuffled_organic_pool(12, i as u64));
            let search =
                SearchEnvironment::new(&graph, &provider, &LexicalScorer, EnvConfig::default())
                    .unwrap();
            let store = SyntheticPageStore;
            let crawl = CrawlEnvironment::new(&graph, &store);
            let env = EpisodeEnv {
                search: &search,
                crawl: &crawl,
                brand_judge: None,
                judge_failure_policy: JudgeFailurePolicy::FailEpisode,
            };
            let target_urls: BTreeSet<String> = graph.urls();
            let mut policy =
                GreedyEvidencePolicy::new(target_urls.clone(), instance.product.name.clone());
            let traj = run_episode(
                instance,
                &graph,
                &env,
                &mut policy,
                &Budgets::default(),
                i as u64,
                None,
            )
            .unwrap();
            let target_set: HashSet<String> = target_urls.into_iter().collect();
            sum_pages += common::distinct_target_pages_crawled(&traj, &target_set) as f64;
            let has_internal = traj.events.iter().any(|e| {
                matches!(
                    &e.body,
                    EventBody::PageReturned {
                        provenance: geolab::crawlenv::Provenance::InPage { .. },
                        ..
                    }
                )
            });
            if has_internal {
                internal_episodes += 1;
            }
        }
        totals.insert(label, (sum_pages / instances.len() as f64, internal_episodes));
    }
    let (trace_mean, trace_internal) = totals["trace"];
    let (single_mean, single_internal) = totals["single_page"];
    assert!(
        trace_mean > single_mean,
        "mean distinct target pages: trace {trace_mean} must exceed single_page {single_mean}"
    );
    assert!(trace_internal > 0, "trace must produce internal-link crawls");
    assert_eq!(single_internal, 0, "single_page must have exactly zero internal-link crawls");
    pass(&format!(
        "6 directional-behavior (trace {trace_mean:.2} vs single_page {single_mean:.2} pages; \
         internal-link episodes {trace_internal} vs {single_internal})"
    ));
}

// ---------------------------------------------------------------------------
// 7. Replay determinism
// ---------------------------------------------------------------------------

#[test]
fn acceptance_7_replay_determinism() {
    use sha2::{Digest, Sha256};
    let dir = tempfile::tempdir().unwrap();
    let dataset_path = dir.path().join("instances.jsonl");
    write_instances(&dataset_path, &synthetic_instances(5, 7007)).unwrap();
    let script_path = dir.path().join("script.json");
    let script = vec![
        ScriptedStep::Search { query: "{query}".into() },
        ScriptedStep::CrawlRank { round: 1, rank: 5 },
        ScriptedStep::Search { query: "{name} owner impressions".into() },
        ScriptedStep::CrawlRank { round: 2, rank: 1 },
        ScriptedStep::Answer { text: "I recommend the {name}.".into() },
    ];
    std::fs::write(&script_path, serde_json::to_string(&script).unwrap()).unwrap();
    let page_geo_body = dir.path().join("rewritten.md");
    std::fs::write(&page_geo_body, "# {name}\n\nRewritten body.").unwrap();

    let make_config = |out: &std::path::Path| {
        let mut config = RunConfig {
            dataset_path: dataset_path.clone(),
            conditions: vec![
                "trace".into(),
                "coordinated".into(),
                "uncoordinated".into(),
                "single_page".into(),
            ],
            budgets: Budgets::default(),
            environment: EnvConfig::default(),
            provider: Default::default(),
            policy: Default::default(),
            judges: Default::default(),
            scorer: Default::default(),
            parallelism: 2,
            seed: 31,
            year: "2026".into(),
            date: "2026-01-15".into(),
            output_dir: out.to_path_buf(),
            forced_first_crawl: false,
            pages_per_role: 1,
            page_geo_body_path: None,
            llm_pages: false,
        };
        config.policy.mode = PolicyMode::Scripted;
        config.policy.script_path = Some(script_path.clone());
        config
    };

    let mut hashes = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}"));
        let config = make_config(&out);
        let summary = runner::run_experiment(&config).unwrap();
        assert_eq!(summary.episodes_run, 20);
        assert!(summary.failures.is_empty());
        // Hash all logs with wall_time stripped, in stable file order.
        let mut hasher = Sha256::new();
        let mut files: Vec<_> = std::fs::read_dir(runner::logs_dir(&config))
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| !p.to_string_lossy().contains(".verdicts"))
            .collect();
        files.sort();
        assert!(!files.is_empty());
        for file in files {
            hasher.update(file.file_name().unwrap().to_string_lossy().as_bytes());
            let raw = std::fs::read_to_string(&file).unwrap();
            // Episodes may interleave across threads; hash the sorted set of
            // normalized lines (episode content itself is untouched). Header
            // lines carry the per-run output path and are not trajectory
            // content.
            let mut lines: Vec<String> = raw
                .lines()
                .filter(|l| !l.trim().is_empty())
                .filter(|l| !l.contains("\"run_header\""))
                .map(|l| normalize_log_line(l).unwrap())
                .collect();
            lines.sort();
            for line in lines {
                hasher.update(line.as_bytes());
                hasher.update(b"\n");
            }
        }
        hashes.push(format!("{:x}", hasher.finalize()));
    }
    assert_eq!(hashes[0], hashes[1], "two identical runs must hash identically");
    pass("7 replay-determinism (two scripted runs, identical logs modulo wall_time)");
}

// ---------------------------------------------------------------------------
// 8. Report formatting + optional live smoke
// ---------------------------------------------------------------------------

#[test]
fn acceptance_8_report_row_and_optional_live_smoke() {
    // Offline part: the percentage formatting path renders to one decimal.
    let signals: Vec<EpisodeSignals> = (0..64)
        .map(|i| EpisodeSignals {
            episode_id: format!("e{i}"),
            condition: "trace".into(),
            dataset: "safesearch".into(),
            recommended: i < 43, // 43/64 = 67.2%
            initial_target_crawl: false,
            target_specific_second_search: false,
            followup_target_crawl: false,
            internal_link_crawl: false,
            searches: 2,
        })
        .collect();
    let report = aggregate(
        &signals,
        JudgeProvenance { model: "synthetic".into(), prompt_version: "v1".into() },
        AggregateOptions::default(),
    )
    .unwrap();
    assert_eq!(report.target_recommendation.percent(), "67.2");
    let rendered = geolab::metrics::emit_report(
        std::slice::from_ref(&report),
        geolab::metrics::ReportFormat::AlignedText,
    );
    assert!(rendered.contains("67.2"));
    assert!(rendered.contains("trace"));

    // Live part, never CI-gated: requires an explicitly configured backend.
    if std::env::var("GEOLAB_LIVE_SMOKE").ok().as_deref() != Some("1") {
        pass("8 report-row formatting (live smoke skipped; set GEOLAB_LIVE_SMOKE=1 to enable)");
        return;
    }
    run_live_smoke();
    pass("8 report-row formatting + live smoke");
}

fn run_live_smoke() {
    use geolab::agent::ChatPolicy;
    use geolab::chat::{ChatBackendConfig, HttpChatClient};
    use std::sync::Arc;

    let endpoint = std::env::var("GEOLAB_CHAT_ENDPOINT").expect("GEOLAB_CHAT_ENDPOINT");
    let model = std::env::var("GEOLAB_CHAT_MODEL").expect("GEOLAB_CHAT_MODEL");
    let client = Arc::new(
        HttpChatClient::new(ChatBackendConfig {
            endpoint,
            model,
            temperature: 0.0,
            api_key_env: "GEOLAB_API_KEY".into(),
            max_retries: 3,
            timeout_secs: 120,
        })
        .unwrap(),
    );
    let instance = &synthetic_instances(1, 8008)[0];
    for condition in all_conditions() {
        let generator = generator_for(&condition, &instance.product.name);
        let graph =
            build_ecosystem(&instance.product, &condition, generator.as_ref(), 1).unwrap();
        let provider = FixtureProvider::from_pool(common::shuffled_organic_pool(12, 1));
        let search =
            SearchEnvironment::new(&graph, &provider, &LexicalScorer, EnvConfig::default())
                .unwrap();
        let store = SyntheticPageStore;
        let crawl = CrawlEnvironment::new(&graph, &store);
        let env = EpisodeEnv {
            search: &search,
            crawl: &crawl,
            brand_judge: None,
            judge_failure_policy: JudgeFailurePolicy::FailEpisode,
        };
        let mut policy = ChatPolicy::new(client.clone(), &instance.query, "2026", "2026-01-15");
        let traj = run_episode(
            instance,
            &graph,
            &env,
            &mut policy,
            &Budgets::default(),
            1,
            None,
        )
        .unwrap();
        assert!(
            traj.final_answer.as_deref().map(|a| !a.trim().is_empty()).unwrap_or(false),
            "live episode must end with a non-empty answer ({})",
            condition.label()
        );
    }
}
