//! Benchmark instances: loading, intent filtering, and synthetic fixtures.
//!
//! An instance file is line-delimited JSON, one record per line, with keys
//! `{source, query, product_name, product_desc, attributes?, instance_id?}`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chat::{parse_bool_verdict, ChatClient, ChatMessage, ChatRequest};
use crate::error::{Error, Result};
use crate::judge::{Verdict, VerdictSource};
use crate::prompts;

/// The fictional product targeted by an experiment instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductProfile {
    pub name: String,
    pub description: String,
    /// Ordered key-value pairs (category, core features, use cases,
    /// limitations). Keys are unique within a profile.
    #[serde(default)]
    pub attributes: Vec<(String, String)>,
}

impl ProductProfile {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        attributes: Vec<(String, String)>,
    ) -> Result<Self> {
        let profile = Self {
            name: normalize_whitespace(&name.into()),
            description: description.into(),
            attributes,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::Validation("product name is empty".into()));
        }
        if self.description.trim().is_empty() {
            return Err(Error::Validation("product description is empty".into()));
        }
        let mut seen = HashSet::new();
        for (key, _) in &self.attributes {
            if !seen.insert(key.as_str()) {
                return Err(Error::Validation(format!("duplicate attribute key: {key}")));
            }
        }
        Ok(())
    }

    /// Attribute value for `key`, if present.
    pub fn attribute(&self, key: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Category attribute with a generic fallback used by page templates.
    pub fn category(&self) -> &str {
        self.attribute("category").unwrap_or("products")
    }
}

/// Upstream query source of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSource {
    SafeSearch,
    ECommerce,
    EGeo,
    Custom,
}

impl InstanceSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            InstanceSource::SafeSearch => "safesearch",
            InstanceSource::ECommerce => "ecommerce",
            InstanceSource::EGeo => "egeo",
            InstanceSource::Custom => "custom",
        }
    }
}

impl fmt::Display for InstanceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InstanceSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "safesearch" => Ok(InstanceSource::SafeSearch),
            "ecommerce" => Ok(InstanceSource::ECommerce),
            "egeo" => Ok(InstanceSource::EGeo),
            "custom" => Ok(InstanceSource::Custom),
            other => Err(Error::Validation(format!("unknown source: {other}"))),
        }
    }
}

/// One benchmark item: a user query paired with a fictional target product.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentInstance {
    pub instance_id: String,
    pub source: InstanceSource,
    pub query: String,
    pub product: ProductProfile,
}

/// Raw on-disk record shape for one instance line.
#[derive(Debug, Deserialize, Serialize)]
struct InstanceRecord {
    source: String,
    query: String,
    product_name: String,
    product_desc: String,
    #[serde(default)]
    attributes: Option<Vec<(String, String)>>,
    #[serde(default)]
    instance_id: Option<String>,
}

fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Load instances from a line-delimited record file, in file order.
///
/// Missing `instance_id`s are assigned deterministically from the source and
/// 1-based line number. Duplicate ids are rejected.
pub fn load_instances(path: &Path) -> Result<Vec<ExperimentInstance>> {
    let raw = std::fs::read_to_string(path)?;
    let mut instances = Vec::new();
    let mut seen_ids = HashSet::new();
    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: InstanceRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let source = InstanceSource::from_str(&record.source).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if record.query.trim().is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "query is empty".into(),
            });
        }
        let product = ProductProfile::new(
            record.product_name,
            record.product_desc,
            record.attributes.unwrap_or_default(),
        )
        .map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        let instance_id = record
            .instance_id
            .unwrap_or_else(|| format!("{}-{:04}", source.as_str(), line_no));
        if !seen_ids.insert(instance_id.clone()) {
            return Err(Error::Validation(format!(
                "duplicate instance_id {instance_id} at line {line_no}"
            )));
        }
        instances.push(ExperimentInstance {
            instance_id,
            source,
            query: record.query,
            product,
        });
    }
    Ok(instances)
}

/// Write instances back out as a line-delimited record file.
pub fn write_instances(path: &Path, instances: &[ExperimentInstance]) -> Result<()> {
    let mut out = String::new();
    for inst in instances {
        let record = InstanceRecord {
            source: inst.source.as_str().to_string(),
            query: inst.query.clone(),
            product_name: inst.product.name.clone(),
            product_desc: inst.product.description.clone(),
            attributes: Some(inst.product.attributes.clone()),
            instance_id: Some(inst.instance_id.clone()),
        };
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Intent filtering
// ---------------------------------------------------------------------------

/// Judges whether a query expresses open-ended product-recommendation intent.
pub trait IntentJudge: Send + Sync {
    fn judge_intent(&self, query: &str) -> Result<Verdict>;

    /// Provenance label recorded in filter reports.
    fn label(&self) -> String;
}

/// Decide whether `query` is retained by the intent filter.
///
/// The empty string short-circuits to `false` without consulting the judge;
/// everything else goes to the judge verbatim.
pub fn filter_query(query: &str, judge: &dyn IntentJudge) -> Result<bool> {
    if query.trim().is_empty() {
        return Ok(false);
    }
    Ok(judge.judge_intent(query)?.value)
}

/// Order-preserving partition of `queries` into (retained, rejected).
pub fn filter_dataset(
    queries: &[String],
    judge: &dyn IntentJudge,
) -> Result<(Vec<String>, Vec<String>)> {
    let mut retained = Vec::new();
    let mut rejected = Vec::new();
    for (idx, query) in queries.iter().enumerate() {
        let keep = filter_query(query, judge).map_err(|e| {
            Error::Validation(format!("filtering query index {idx}: {e}"))
        })?;
        if keep {
            retained.push(query.clone());
        } else {
            rejected.push(query.clone());
        }
    }
    Ok((retained, rejected))
}

/// LLM-backed intent judge. Sends the filter prompt and expects a bare
/// `True`/`False`; re-asks once on any other output, then fails.
pub struct LlmIntentJudge {
    client: Arc<dyn ChatClient>,
}

impl LlmIntentJudge {
    pub fn new(client: Arc<dyn ChatClient>) -> Self {
        Self { client }
    }
}

impl IntentJudge for LlmIntentJudge {
    fn judge_intent(&self, query: &str) -> Result<Verdict> {
        let prompt = prompts::fill(prompts::INTENT_FILTER_PROMPT, &[("query", query)]);
        for attempt in 0..2 {
            let request = ChatRequest {
                messages: vec![ChatMessage::user(prompt.clone())],
                tools: vec![],
                temperature: 0.0,
            };
            let outcome = self.client.complete(&request)?;
            let text = match outcome {
                crate::chat::ChatOutcome::Text(t) => t,
                crate::chat::ChatOutcome::ToolCall { .. } => String::new(),
            };
            if let Some(value) = parse_bool_verdict(&text) {
                return Ok(Verdict {
                    value,
                    source: VerdictSource::Llm,
                    rationale: None,
                });
            }
            if attempt == 0 {
                continue; // one re-ask
            }
        }
        Err(Error::Protocol("intent judge did not return True/False".into()))
    }

    fn label(&self) -> String {
        format!("llm:{}", self.client.model_name())
    }
}

/// Replays recorded verdicts keyed by exact query text. Used to make filter
/// runs reproducible without a live judge.
pub struct CassetteIntentJudge {
    verdicts: HashMap<String, bool>,
    label: String,
}

impl CassetteIntentJudge {
    pub fn from_map(verdicts: HashMap<String, bool>, label: impl Into<String>) -> Self {
        Self { verdicts, label: label.into() }
    }

    /// Load from a JSON object file mapping query text to boolean verdicts.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let verdicts: BTreeMap<String, bool> = serde_json::from_str(&raw)?;
        Ok(Self {
            verdicts: verdicts.into_iter().collect(),
            label: format!("cassette:{}", path.display()),
        })
    }
}

impl IntentJudge for CassetteIntentJudge {
    fn judge_intent(&self, query: &str) -> Result<Verdict> {
        let value = self
            .verdicts
            .get(query)
            .copied()
            .ok_or_else(|| Error::NotFound(format!("no recorded verdict for query: {query}")))?;
        Ok(Verdict {
            value,
            source: VerdictSource::Llm,
            rationale: Some("replayed".into()),
        })
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Deterministic keyword-heuristic judge approximating the six rejection
/// rules. Exists for offline tests only; production filtering uses the LLM.
pub struct LexicalIntentJudge;

const RECOMMENDATION_CUES: &[&str] = &[
    "best", "recommend", "recommendation", "top", "looking for", "what should i buy",
    "which should i", "suggest", "good", "affordable", "budget", "under $", "help me find",
    "help me choose", "worth buying", "ideas for",
];

const COMPONENT_TERMS: &[&str] = &[
    "supplement", "supplements", "vitamin", "vitamins", "ingredient", "ingredients",
    "therapy", "therapies", "biologic", "biologics", "compound", "compounds", "peptide",
    "extract", "dosage", "serum protein",
];

const METHOD_TERMS: &[&str] = &[
    "how to", "ways to", "method", "methods", "remedy", "remedies", "treatment",
    "treatments", "strategy", "strategies", "approach", "approaches", "tips for",
    "exercises to",
];

const SITE_DATE_TERMS: &[&str] = &[
    "site:", "on amazon", "on ebay", "on reddit", "from walmart", "on aliexpress",
    "before 2", "after 2", "released in 2", "in january", "in february", "in march",
    "in april", "in june", "in july", "in august", "in september", "in october",
    "in november", "in december",
];

impl LexicalIntentJudge {
    fn rejection_rule(query_lower: &str) -> Option<&'static str> {
        let tokens: Vec<&str> = query_lower.split_whitespace().collect();
        // Rule 6: explicit comparison between named products.
        if query_lower.contains(" vs ")
            || query_lower.contains(" versus ")
            || (query_lower.contains("compare ") && query_lower.contains(" or "))
        {
            return Some("rule6_named_comparison");
        }
        // Rule 2: date or website restriction.
        if SITE_DATE_TERMS.iter().any(|t| query_lower.contains(t)) {
            return Some("rule2_site_or_date");
        }
        // Rule 3: non-product components.
        if COMPONENT_TERMS.iter().any(|t| {
            tokens.contains(t) || query_lower.contains(&format!("{t} "))
        }) {
            return Some("rule3_component");
        }
        // Rule 4: methods/treatments rather than products.
        if METHOD_TERMS.iter().any(|t| query_lower.contains(t)) {
            return Some("rule4_method");
        }
        // Rule 5: a single specific named product (model-number style token).
        let has_model_token = tokens.iter().any(|t| {
            let alnum: Vec<char> = t.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
            alnum.iter().any(|c| c.is_ascii_alphabetic())
                && alnum.iter().any(|c| c.is_ascii_digit())
                && !t.starts_with('$')
                && alnum.len() >= 4
        });
        if has_model_token && (query_lower.starts_with("is the") || query_lower.contains("review of"))
        {
            return Some("rule5_named_product");
        }
        // Rule 1: bare keyword / too vague.
        if tokens.len() < 3 && !RECOMMENDATION_CUES.iter().any(|c| query_lower.contains(c)) {
            return Some("rule1_vague");
        }
        None
    }
}

impl IntentJudge for LexicalIntentJudge {
    fn judge_intent(&self, query: &str) -> Result<Verdict> {
        let lower = query.to_lowercase();
        if let Some(rule) = Self::rejection_rule(&lower) {
            return Ok(Verdict {
                value: false,
                source: VerdictSource::Lexical,
                rationale: Some(rule.to_string()),
            });
        }
        let value = RECOMMENDATION_CUES.iter().any(|c| lower.contains(c));
        Ok(Verdict {
            value,
            source: VerdictSource::Lexical,
            rationale: if value { Some("recommendation_cue".into()) } else { Some("no_cue".into()) },
        })
    }

    fn label(&self) -> String {
        "lexical".into()
    }
}

// ---------------------------------------------------------------------------
// Synthetic fixtures
// ---------------------------------------------------------------------------

/// Deterministically generate plausible synthetic instances for offline runs
/// and tests. Same `(count, seed)` always yields the same instances.
pub fn synthetic_instances(count: usize, seed: u64) -> Vec<ExperimentInstance> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    const CATEGORIES: &[(&str, &str, &str)] = &[
        ("wireless earbuds", "active noise cancellation and 30-hour battery life", "commuting and workouts"),
        ("mechanical keyboards", "hot-swappable switches and low-latency wireless", "typing and gaming"),
        ("air purifiers", "HEPA-13 filtration and a quiet night mode", "bedrooms and small offices"),
        ("standing desks", "dual motors and a 120 kg lift capacity", "home offices"),
        ("webcams", "4K sensor with auto framing", "video calls and streaming"),
        ("robot vacuums", "lidar mapping and self-emptying base", "apartments with pets"),
        ("espresso machines", "PID temperature control and a fast-heating boiler", "home baristas"),
        ("fitness trackers", "dual-band GPS and two-week battery", "running and sleep tracking"),
        ("portable monitors", "15.6-inch 1080p panel with USB-C power", "travel and dual-screen setups"),
        ("electric kettles", "variable temperature presets and a gooseneck spout", "pour-over coffee and tea"),
    ];
    const BRAND_A: &[&str] = &[
        "Nova", "Clear", "Apex", "Lumen", "Vertex", "Echo", "Aero", "Zen", "Pulse", "Brio",
    ];
    const BRAND_B: &[&str] = &[
        "Tone", "Wave", "Core", "Peak", "Flow", "Line", "Mark", "Gear", "Form", "Craft",
    ];
    const MODELS: &[&str] = &["One", "Pro", "Air", "Max", "S2", "X3", "Mini", "Plus", "Edge", "Go"];

    (0..count)
        .map(|i| {
            let (category, features, use_cases) = CATEGORIES[rng.gen_range(0..CATEGORIES.len())];
            let name = format!(
                "{}{} {}",
                BRAND_A[rng.gen_range(0..BRAND_A.len())],
                BRAND_B[rng.gen_range(0..BRAND_B.len())],
                MODELS[rng.gen_range(0..MODELS.len())]
            );
            let price = 40 + 10 * rng.gen_range(1..20u32);
            let query = format!("best {category} under ${price}");
            let description = format!(
                "{name} is a line of {category} offering {features} at around ${price}, aimed at {use_cases}."
            );
            let attributes = vec![
                ("category".to_string(), category.to_string()),
                ("core features".to_string(), features.to_string()),
                ("use cases".to_string(), use_cases.to_string()),
                ("limitations".to_string(), "limited color options and no official retail presence yet".to_string()),
            ];
            ExperimentInstance {
                instance_id: format!("synthetic-{:04}", i + 1),
                source: InstanceSource::Custom,
                query,
                product: ProductProfile {
                    name,
                    description,
                    attributes,
                },
            }
        })
        .collect()
}
