//! Experiment orchestration: component wiring, resumable episode execution,
//! verdict sidecars, and report computation.
//!
//! Episodes are appended to their log atomically (a completed episode's
//! lines are written in one locked block), so an interrupted run can resume
//! by skipping episode ids already present in the log.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use crate::agent::{
    episode_id, run_episode, AgentPolicy, ChatPolicy, EpisodeEnv, GreedyEvidencePolicy,
    ScriptedPolicy, ScriptedStep, Trajectory,
};
use crate::agent::trajectory::{append_trajectory, logged_episode_ids, read_trajectories};
use crate::chat::{ChatClient, HttpChatClient};
use crate::config::{
    JudgeMode, PageStoreMode, PolicyMode, ProviderMode, RunConfig, ScorerBackend,
};
use crate::crawlenv::{
    CrawlEnvironment, FixturePageStore, LivePageStore, PageStore, SyntheticPageStore,
    ConverterThresholds,
};
use crate::dataset::{
    load_instances, CassetteIntentJudge, ExperimentInstance, IntentJudge, LexicalIntentJudge,
    LlmIntentJudge,
};
use crate::ecosystem::templates::{LlmPageGenerator, PrewrittenBodyGenerator, TemplateGenerator};
use crate::ecosystem::{
    build_ecosystem_with, export_ecosystem, Condition, EcosystemConfig, EvidenceGraph,
    PageGenerator,
};
use crate::error::{Error, Result};
use crate::judge::{
    BrandJudge, CassetteBrandJudge, LexicalBrandJudge, LexicalRecommendationJudge, LlmBrandJudge,
    LlmRecommendationJudge, RecommendationJudge, VerdictSource,
};
use crate::metrics::{
    aggregate, extract_signals, AggregateOptions, EpisodeSignals, JudgeProvenance, MetricsReport,
    VerdictRecord,
};
use crate::scorer::{LexicalScorer, RemoteScorer, SemanticScorer};
use crate::searchenv::providers::{
    CachedProvider, FixtureProvider, LiveProvider, OrganicProvider, SyntheticProvider,
};
use crate::searchenv::{JudgeFailurePolicy, SearchEnvironment};

/// Wired components for one run.
pub struct RunComponents {
    pub provider: Box<dyn OrganicProvider>,
    pub store: Box<dyn PageStore>,
    pub scorer: Box<dyn SemanticScorer>,
    pub recommendation_judge: Box<dyn RecommendationJudge>,
    pub brand_judge: Option<Box<dyn BrandJudge>>,
    pub chat_client: Option<Arc<dyn ChatClient>>,
    pub script: Option<Vec<ScriptedStep>>,
}

/// Build all components described by the config. Providers are wrapped in
/// the per-run organic cache.
pub fn build_components(config: &RunConfig) -> Result<RunComponents> {
    let provider: Box<dyn OrganicProvider> = match config.provider.mode {
        ProviderMode::Synthetic => {
            Box::new(CachedProvider::new(SyntheticProvider::default()))
        }
        ProviderMode::Fixture => {
            let dir = config.provider.fixture_dir.as_ref().unwrap();
            Box::new(CachedProvider::new(FixtureProvider::from_dir(dir)?))
        }
        ProviderMode::Live => {
            let endpoint = config.provider.endpoint.clone().unwrap();
            Box::new(CachedProvider::new(LiveProvider::new(
                endpoint,
                config.provider.api_key_env.clone(),
                30,
            )?))
        }
    };
    let store: Box<dyn PageStore> = match config.provider.page_store {
        PageStoreMode::Synthetic => Box::new(SyntheticPageStore),
        PageStoreMode::Fixture => {
            let dir = config.provider.page_fixture_dir.as_ref().ok_or_else(|| {
                Error::Config("fixture page store needs page_fixture_dir".into())
            })?;
            Box::new(FixturePageStore::from_dir(dir)?)
        }
        PageStoreMode::Live => {
            Box::new(LivePageStore::new(30, ConverterThresholds::default())?)
        }
    };
    let scorer: Box<dyn SemanticScorer> = match config.scorer.backend {
        ScorerBackend::Lexical => Box::new(LexicalScorer),
        ScorerBackend::Remote => {
            Box::new(RemoteScorer::from_config(config.scorer.remote.as_ref().unwrap())?)
        }
    };
    let recommendation_judge: Box<dyn RecommendationJudge> =
        match config.judges.recommendation.mode {
            JudgeMode::Lexical | JudgeMode::None => Box::new(LexicalRecommendationJudge::default()),
            JudgeMode::Llm => {
                let chat = config.judges.recommendation.chat.clone().ok_or_else(|| {
                    Error::Config("llm recommendation judge needs a chat backend".into())
                })?;
                Box::new(LlmRecommendationJudge::new(Arc::new(HttpChatClient::new(chat)?)))
            }
            JudgeMode::Cassette => {
                return Err(Error::Config(
                    "cassette mode is not defined for the recommendation judge".into(),
                ))
            }
        };
    let brand_judge: Option<Box<dyn BrandJudge>> = match config.judges.brand.mode {
        JudgeMode::None => None,
        JudgeMode::Lexical => Some(Box::new(LexicalBrandJudge)),
        JudgeMode::Llm => {
            let chat = config.judges.brand.chat.clone().ok_or_else(|| {
                Error::Config("llm brand judge needs a chat backend".into())
            })?;
            Some(Box::new(LlmBrandJudge::new(Arc::new(HttpChatClient::new(chat)?))))
        }
        JudgeMode::Cassette => {
            let path = config.judges.brand.cassette_path.as_ref().ok_or_else(|| {
                Error::Config("cassette brand judge needs cassette_path".into())
            })?;
            Some(Box::new(CassetteBrandJudge::load(path)?))
        }
    };
    let chat_client: Option<Arc<dyn ChatClient>> = match config.policy.mode {
        PolicyMode::Chat => {
            let chat = config.policy.chat.clone().unwrap();
            Some(Arc::new(HttpChatClient::new(chat)?))
        }
        _ => None,
    };
    let script = match config.policy.mode {
        PolicyMode::Scripted => {
            let path = config.policy.script_path.as_ref().unwrap();
            let raw = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("reading script {}: {e}", path.display())))?;
            let steps: Vec<ScriptedStep> = serde_json::from_str(&raw)
                .map_err(|e| Error::Config(format!("parsing script: {e}")))?;
            Some(steps)
        }
        _ => None,
    };
    Ok(RunComponents {
        provider,
        store,
        scorer,
        recommendation_judge,
        brand_judge,
        chat_client,
        script,
    })
}

/// Intent judge for the filter-queries command.
pub fn build_intent_judge(config: &RunConfig) -> Result<Box<dyn IntentJudge>> {
    match config.judges.intent.mode {
        JudgeMode::Lexical | JudgeMode::None => Ok(Box::new(LexicalIntentJudge)),
        JudgeMode::Llm => {
            let chat = config.judges.intent.chat.clone().ok_or_else(|| {
                Error::Config("llm intent judge needs a chat backend".into())
            })?;
            Ok(Box::new(LlmIntentJudge::new(Arc::new(HttpChatClient::new(chat)?))))
        }
        JudgeMode::Cassette => {
            let path = config.judges.intent.cassette_path.as_ref().ok_or_else(|| {
                Error::Config("cassette intent judge needs cassette_path".into())
            })?;
            Ok(Box::new(CassetteIntentJudge::load(path)?))
        }
    }
}

/// Per-(instance, condition) deterministic seed derived from the run seed.
pub fn derive_seed(instance_id: &str, condition_label: &str, run_seed: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(instance_id.as_bytes());
    hasher.update([0x1e]);
    hasher.update(condition_label.as_bytes());
    hasher.update([0x1e]);
    hasher.update(run_seed.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Condition label made filesystem-safe.
pub fn condition_file_label(condition: &Condition) -> String {
    condition.label().replace([':', '/'], "-")
}

/// Graph generator for a condition. Page-level rewriting conditions always
/// serve the pre-rewritten body; other conditions use the deterministic
/// templates unless `llm_pages` routes body generation through the chat
/// backend.
///
/// `page_geo_body_path` may be a single file (applied to every instance) or
/// a directory holding one `<instance_id>.md` per instance, since rewritten
/// bodies are normally produced per product.
pub fn generator_for(
    config: &RunConfig,
    condition: &Condition,
    instance: &ExperimentInstance,
) -> Result<Box<dyn PageGenerator>> {
    match condition {
        Condition::PageGeo(_) => {
            let path = config
                .page_geo_body_path
                .as_ref()
                .ok_or_else(|| Error::Config("page_geo conditions need page_geo_body_path".into()))?;
            let body_path = if path.is_dir() {
                let candidate = path.join(format!("{}.md", instance.instance_id));
                if !candidate.exists() {
                    return Err(Error::Config(format!(
                        "no rewritten body for instance {} under {}",
                        instance.instance_id,
                        path.display()
                    )));
                }
                candidate
            } else {
                path.clone()
            };
            Ok(Box::new(PrewrittenBodyGenerator::from_file(&body_path)?))
        }
        _ if config.llm_pages => {
            let chat = config.policy.chat.clone().ok_or_else(|| {
                Error::Config("llm_pages needs a chat backend under [policy.chat]".into())
            })?;
            Ok(Box::new(LlmPageGenerator::new(Arc::new(HttpChatClient::new(chat)?))))
        }
        _ => Ok(Box::new(TemplateGenerator)),
    }
}

pub fn build_graph(
    config: &RunConfig,
    instance: &ExperimentInstance,
    condition: &Condition,
) -> Result<EvidenceGraph> {
    let generator = generator_for(config, condition, instance)?;
    let seed = derive_seed(&instance.instance_id, &condition.label(), config.seed);
    build_ecosystem_with(
        &instance.product,
        condition,
        generator.as_ref(),
        seed,
        &EcosystemConfig { pages_per_role: config.pages_per_role },
    )
}

fn make_policy(
    config: &RunConfig,
    components: &RunComponents,
    instance: &ExperimentInstance,
    graph: &EvidenceGraph,
) -> Result<Box<dyn AgentPolicy>> {
    match config.policy.mode {
        PolicyMode::Greedy => Ok(Box::new(GreedyEvidencePolicy::new(
            graph.urls().into_iter().collect(),
            instance.product.name.clone(),
        ))),
        PolicyMode::Scripted => {
            let steps = components.script.as_ref().expect("validated by config");
            Ok(Box::new(ScriptedPolicy::new(ScriptedPolicy::instantiate(
                steps,
                &instance.query,
                &instance.product.name,
                instance.product.category(),
            ))))
        }
        PolicyMode::Chat => {
            let client = components.chat_client.as_ref().expect("validated by config").clone();
            let mut policy = ChatPolicy::new(client, &instance.query, &config.year, &config.date);
            policy.max_history_chars = config.policy.max_history_chars;
            Ok(Box::new(policy))
        }
    }
}

/// Outcome counts of one run invocation.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub episodes_run: usize,
    pub episodes_skipped: usize,
    pub failures: Vec<String>,
}

pub fn logs_dir(config: &RunConfig) -> PathBuf {
    config.output_dir.join("logs")
}

fn log_paths(config: &RunConfig, source: &str, condition: &Condition) -> (PathBuf, PathBuf) {
    let dir = logs_dir(config);
    let stem = format!("{source}__{}", condition_file_label(condition));
    (dir.join(format!("{stem}.jsonl")), dir.join(format!("{stem}.verdicts.jsonl")))
}

fn run_header_line(config: &RunConfig) -> Result<String> {
    let header = serde_json::json!({
        "event_type": "run_header",
        "schema": "trajectory.v1",
        "config": config.provenance_json()?,
    });
    Ok(header.to_string())
}

/// Execute all configured (instance, condition) episodes, resuming past
/// completed episode ids. Returns counts and per-episode failures.
pub fn run_experiment(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let instances = load_instances(&config.dataset_path)?;
    let components = build_components(config)?;
    std::fs::create_dir_all(logs_dir(config))?;

    let mut summary = RunSummary::default();
    for condition in config.parsed_conditions()? {
        // Group instances by dataset source to produce one log per cell.
        let mut by_source: BTreeMap<String, Vec<&ExperimentInstance>> = BTreeMap::new();
        for instance in &instances {
            by_source.entry(instance.source.to_string()).or_default().push(instance);
        }
        for (source, cell_instances) in by_source {
            let (log_path, verdict_path) = log_paths(config, &source, &condition);
            let existing = logged_episode_ids(&log_path)?;
            let is_new = !log_path.exists();
            let log_file = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&log_path)?;
            let verdict_file = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&verdict_path)?;
            let writer = Mutex::new((log_file, verdict_file));
            if is_new {
                let mut guard = writer.lock().unwrap();
                writeln!(guard.0, "{}", run_header_line(config)?)?;
            }

            let jobs: Vec<&ExperimentInstance> = cell_instances
                .into_iter()
                .filter(|instance| {
                    let seed =
                        derive_seed(&instance.instance_id, &condition.label(), config.seed);
                    let id = episode_id(&instance.instance_id, &condition.label(), seed);
                    if existing.contains(&id) {
                        summary.episodes_skipped += 1;
                        false
                    } else {
                        true
                    }
                })
                .collect();

            let queue = Mutex::new(jobs.into_iter().collect::<Vec<_>>());
            let results: Mutex<Vec<std::result::Result<(), String>>> = Mutex::new(Vec::new());
            let workers = config.parallelism.max(1);
            std::thread::scope(|scope| {
                for _ in 0..workers {
                    scope.spawn(|| loop {
                        let instance = {
                            let mut q = queue.lock().unwrap();
                            match q.pop() {
                                Some(i) => i,
                                None => break,
                            }
                        };
                        let outcome = run_one_episode(
                            config,
                            &components,
                            instance,
                            &condition,
                            &source,
                            &writer,
                        );
                        results.lock().unwrap().push(outcome.map_err(|e| {
                            format!("{} / {}: {e}", instance.instance_id, condition.label())
                        }));
                    });
                }
            });
            for outcome in results.into_inner().unwrap() {
                match outcome {
                    Ok(()) => summary.episodes_run += 1,
                    Err(message) => summary.failures.push(message),
                }
            }
        }
    }
    Ok(summary)
}

fn run_one_episode(
    config: &RunConfig,
    components: &RunComponents,
    instance: &ExperimentInstance,
    condition: &Condition,
    source: &str,
    writer: &Mutex<(std::fs::File, std::fs::File)>,
) -> Result<()> {
    let graph = build_graph(config, instance, condition)?;
    let search = SearchEnvironment::new(
        &graph,
        components.provider.as_ref(),
        components.scorer.as_ref(),
        config.environment.clone(),
    )?;
    let crawl = CrawlEnvironment::new(&graph, components.store.as_ref());
    let env = EpisodeEnv {
        search: &search,
        crawl: &crawl,
        brand_judge: components.brand_judge.as_deref(),
        judge_failure_policy: JudgeFailurePolicy::FailEpisode,
    };
    let mut policy = make_policy(config, components, instance, &graph)?;
    let seed = derive_seed(&instance.instance_id, &condition.label(), config.seed);
    let forced_url = config.forced_first_crawl.then(|| graph.entry_page().url.clone());
    let trajectory = run_episode(
        instance,
        &graph,
        &env,
        policy.as_mut(),
        &config.budgets,
        seed,
        forced_url.as_deref(),
    )?;

    let verdict = verdict_record(
        components.recommendation_judge.as_ref(),
        instance,
        source,
        &trajectory,
    )?;

    let mut guard = writer.lock().unwrap();
    append_trajectory(&mut guard.0, &trajectory)?;
    guard.0.flush()?;
    writeln!(guard.1, "{}", serde_json::to_string(&verdict)?)?;
    guard.1.flush()?;
    Ok(())
}

fn verdict_record(
    judge: &dyn RecommendationJudge,
    instance: &ExperimentInstance,
    source: &str,
    trajectory: &Trajectory,
) -> Result<VerdictRecord> {
    let (recommended, verdict_source, rationale) = match &trajectory.final_answer {
        Some(answer) => {
            let verdict = judge.judge_recommendation(answer, &instance.product)?;
            let source_label = match verdict.source {
                VerdictSource::Llm => "llm",
                VerdictSource::Lexical => "lexical",
            };
            (verdict.value, source_label.to_string(), verdict.rationale)
        }
        None => (false, "skipped_no_answer".to_string(), None),
    };
    Ok(VerdictRecord {
        episode_id: trajectory.episode_id.clone(),
        instance_id: trajectory.instance_id.clone(),
        condition: trajectory.condition.label(),
        dataset: source.to_string(),
        recommended,
        source: verdict_source,
        judge_model: judge.model_name(),
        prompt_version: judge.prompt_version(),
        rationale,
    })
}

/// Read a verdict sidecar into an episode_id-keyed map.
pub fn read_verdicts(path: &Path) -> Result<HashMap<String, VerdictRecord>> {
    let mut map = HashMap::new();
    if !path.exists() {
        return Ok(map);
    }
    let raw = std::fs::read_to_string(path)?;
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: VerdictRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: format!("bad verdict record: {e}"),
        })?;
        map.insert(record.episode_id.clone(), record);
    }
    Ok(map)
}

/// Compute per-(condition, dataset) reports from the logs directory.
pub fn compute_reports(
    config: &RunConfig,
    logs: &Path,
    options: AggregateOptions,
) -> Result<Vec<MetricsReport>> {
    let instances = load_instances(&config.dataset_path)?;
    let by_id: HashMap<&str, &ExperimentInstance> =
        instances.iter().map(|i| (i.instance_id.as_str(), i)).collect();

    let mut cells: BTreeMap<(String, String), (Vec<EpisodeSignals>, JudgeProvenance)> =
        BTreeMap::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(logs)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension().map(|e| e == "jsonl").unwrap_or(false)
                && !p
                    .file_name()
                    .map(|n| n.to_string_lossy().contains(".verdicts"))
                    .unwrap_or(false)
        })
        .collect();
    entries.sort();

    for log_path in entries {
        let verdict_path = log_path.with_file_name(format!(
            "{}.verdicts.jsonl",
            log_path.file_stem().unwrap().to_string_lossy()
        ));
        let verdicts = read_verdicts(&verdict_path)?;
        let trajectories = read_trajectories(&log_path).map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{}: {message}", log_path.display()),
            },
            other => other,
        })?;
        for trajectory in trajectories {
            let verdict = verdicts.get(&trajectory.episode_id);
            let graph = by_id
                .get(trajectory.instance_id.as_str())
                .map(|instance| build_graph(config, instance, &trajectory.condition))
                .transpose()?;
            let mut signals = extract_signals(&trajectory, graph.as_ref(), verdict)?;
            if signals.dataset == "unknown" {
                if let Some(instance) = by_id.get(trajectory.instance_id.as_str()) {
                    signals.dataset = instance.source.to_string();
                }
            }
            let provenance = verdict
                .map(|v| JudgeProvenance {
                    model: v.judge_model.clone(),
                    prompt_version: v.prompt_version.clone(),
                })
                .unwrap_or_default();
            let key = (signals.condition.clone(), signals.dataset.clone());
            let cell = cells.entry(key).or_insert_with(|| (Vec::new(), provenance.clone()));
            cell.0.push(signals);
        }
    }

    let mut reports = Vec::new();
    for ((_condition, _dataset), (signals, provenance)) in cells {
        reports.push(aggregate(&signals, provenance, options)?);
    }
    Ok(reports)
}

/// Export every configured (instance, condition) ecosystem; validation runs
/// inside the build, so a violating graph fails the export.
pub fn export_ecosystems(
    config: &RunConfig,
    instance_filter: Option<&[String]>,
) -> Result<Vec<PathBuf>> {
    let instances = load_instances(&config.dataset_path)?;
    let root = config.output_dir.join("ecosystems");
    std::fs::create_dir_all(&root)?;
    std::fs::write(
        root.join("config.json"),
        serde_json::to_string_pretty(&config.provenance_json()?)?,
    )?;
    let mut exported = Vec::new();
    for instance in &instances {
        if let Some(filter) = instance_filter {
            if !filter.iter().any(|id| id == &instance.instance_id) {
                continue;
            }
        }
        for condition in config.parsed_conditions()? {
            let graph = build_graph(config, instance, &condition).map_err(|e| {
                Error::Validation(format!(
                    "building {} / {}: {e}",
                    instance.instance_id,
                    condition.label()
                ))
            })?;
            let dir = config
                .output_dir
                .join("ecosystems")
                .join(&instance.instance_id)
                .join(condition_file_label(&condition));
            export_ecosystem(&graph, &dir)?;
            exported.push(dir);
        }
    }
    Ok(exported)
}

/// Partition a raw query file with the configured intent judge. Lines are
/// JSON records carrying at least a `query` field and pass through verbatim.
pub fn filter_queries_file(
    config: &RunConfig,
    raw_path: &Path,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf, usize, usize)> {
    let judge = build_intent_judge(config)?;
    let raw = std::fs::read_to_string(raw_path)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("config.json"),
        serde_json::to_string_pretty(&config.provenance_json()?)?,
    )?;
    let mut retained = String::new();
    let mut rejected = String::new();
    let mut retained_count = 0;
    let mut rejected_count = 0;
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: format!("bad query record: {e}"),
        })?;
        let query = value
            .get("query")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: "record has no query field".into(),
            })?;
        let keep = crate::dataset::filter_query(query, judge.as_ref())
            .map_err(|e| Error::Validation(format!("query at line {}: {e}", idx + 1)))?;
        if keep {
            retained.push_str(line);
            retained.push('\n');
            retained_count += 1;
        } else {
            rejected.push_str(line);
            rejected.push('\n');
            rejected_count += 1;
        }
    }
    let stem = raw_path.file_stem().map(|s| s.to_string_lossy().to_string()).unwrap_or_default();
    let retained_path = out_dir.join(format!("{stem}.retained.jsonl"));
    let rejected_path = out_dir.join(format!("{stem}.rejected.jsonl"));
    std::fs::write(&retained_path, retained)?;
    std::fs::write(&rejected_path, rejected)?;
    Ok((retained_path, rejected_path, retained_count, rejected_count))
}
