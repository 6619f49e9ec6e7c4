//! Crawl resolution, observed-link bookkeeping, and in-page link extraction.
//!
//! A link may only be crawled after it has been observed, either in a search
//! result list or inside a previously crawled page body. Provenance records
//! the first observation and never changes afterwards.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::ecosystem::{render_page, EvidenceGraph};
use crate::error::{Error, Result};
use crate::searchenv::SearchRound;

/// Where a link was first seen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    /// Returned by a search round at the given rank.
    SearchResult { round: usize, rank: usize },
    /// Embedded in the body of a previously crawled page.
    InPage { source_page_url: String },
}

/// One observed link with its first-observation provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedLink {
    pub url: String,
    pub provenance: Provenance,
    pub first_observed_step: usize,
}

/// The growing set of links the agent may crawl. First observation wins;
/// re-observing a url never rewrites its provenance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedSet {
    links: BTreeMap<String, ObservedLink>,
    /// Urls in first-observation order.
    order: Vec<String>,
}

impl ObservedSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, url: &str) -> bool {
        self.links.contains_key(url)
    }

    pub fn get(&self, url: &str) -> Option<&ObservedLink> {
        self.links.get(url)
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Links in first-observation order.
    pub fn iter(&self) -> impl Iterator<Item = &ObservedLink> {
        self.order.iter().map(|url| &self.links[url])
    }

    fn insert(&mut self, link: ObservedLink) -> bool {
        if self.links.contains_key(&link.url) {
            return false;
        }
        self.order.push(link.url.clone());
        self.links.insert(link.url.clone(), link);
        true
    }

    /// Register every result link of a round. Returns how many were new.
    pub fn register_round(&mut self, round: &SearchRound, step: usize) -> usize {
        let mut added = 0;
        for result in &round.results {
            if self.insert(ObservedLink {
                url: result.link.clone(),
                provenance: Provenance::SearchResult {
                    round: round.round_index,
                    rank: result.rank,
                },
                first_observed_step: step,
            }) {
                added += 1;
            }
        }
        added
    }

    /// Register every link extracted from a crawled page body. Returns how
    /// many were new.
    pub fn register_page_links(
        &mut self,
        source_page_url: &str,
        links: &[(String, String)],
        step: usize,
    ) -> usize {
        let mut added = 0;
        for (_, url) in links {
            if self.insert(ObservedLink {
                url: url.clone(),
                provenance: Provenance::InPage { source_page_url: source_page_url.to_string() },
                first_observed_step: step,
            }) {
                added += 1;
            }
        }
        added
    }
}

/// A crawled page as returned to the agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawledPage {
    pub url: String,
    /// Markdown content; empty when the page was unavailable.
    pub content: String,
    pub step: usize,
    /// Whether the url belongs to the instance's evidence graph.
    pub is_target_related: bool,
    pub link_provenance_at_crawl: Provenance,
    /// Set when an organic fetch failed; the episode continues.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_note: Option<String>,
}

/// Extract Markdown links `[anchor](url)` in document order, deduplicated by
/// url keeping the first occurrence.
pub fn extract_links(content: &str) -> Vec<(String, String)> {
    let re = link_regex();
    let mut seen = std::collections::HashSet::new();
    let mut links = Vec::new();
    for caps in re.captures_iter(content) {
        let anchor = caps[1].to_string();
        let url = caps[2].to_string();
        if seen.insert(url.clone()) {
            links.push((anchor, url));
        }
    }
    links
}

fn link_regex() -> &'static regex::Regex {
    use std::sync::OnceLock;
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    RE.get_or_init(|| regex::Regex::new(r"\[([^\]]*)\]\(([^)\s]+)\)").unwrap())
}

// ---------------------------------------------------------------------------
// Organic page stores
// ---------------------------------------------------------------------------

/// Resolves organic (non-graph) urls to Markdown content. `Ok(None)` means
/// the page is unavailable; the episode continues.
pub trait PageStore: Send + Sync {
    fn fetch(&self, url: &str) -> Result<Option<String>>;
}

/// Directory of url-hash-named Markdown files plus an `index.json` manifest
/// mapping urls to filenames.
pub struct FixturePageStore {
    dir: PathBuf,
    index: BTreeMap<String, String>,
}

impl FixturePageStore {
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let index_path = dir.join("index.json");
        let index = if index_path.exists() {
            serde_json::from_str(&std::fs::read_to_string(&index_path)?)?
        } else {
            BTreeMap::new()
        };
        Ok(Self { dir: dir.to_path_buf(), index })
    }

    /// Store one page and update the index manifest.
    pub fn record(dir: &Path, url: &str, content: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let index_path = dir.join("index.json");
        let mut index: BTreeMap<String, String> = if index_path.exists() {
            serde_json::from_str(&std::fs::read_to_string(&index_path)?)?
        } else {
            BTreeMap::new()
        };
        let file = format!("{}.md", crate::searchenv::providers::query_hash(url));
        std::fs::write(dir.join(&file), content)?;
        index.insert(url.to_string(), file);
        std::fs::write(index_path, serde_json::to_string_pretty(&index)?)?;
        Ok(())
    }
}

impl PageStore for FixturePageStore {
    fn fetch(&self, url: &str) -> Result<Option<String>> {
        match self.index.get(url) {
            Some(file) => Ok(Some(std::fs::read_to_string(self.dir.join(file))?)),
            None => Ok(None),
        }
    }
}

/// Deterministic filler store for fully offline runs: any organic url
/// resolves to a short generated article seeded by the url.
#[derive(Debug, Default)]
pub struct SyntheticPageStore;

impl PageStore for SyntheticPageStore {
    fn fetch(&self, url: &str) -> Result<Option<String>> {
        use rand::Rng;
        use rand::SeedableRng;
        let seed = u64::from_str_radix(
            &crate::searchenv::providers::query_hash(url)[..16],
            16,
        )
        .unwrap_or(1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let topics = [
            "battery life", "build quality", "pricing trends", "return policies",
            "shipping times", "customer support", "firmware updates", "accessory bundles",
        ];
        let mut body = format!("# Market notes\n\nSource: {url}\n");
        for _ in 0..4 {
            let topic = topics[rng.gen_range(0..topics.len())];
            body.push_str(&format!(
                "\nShoppers comparing mainstream options keep asking about {topic}. The short \
                 version is that the mid-range picks remain competitive this season, with \
                 retailers rotating discounts every few weeks.\n"
            ));
        }
        Ok(Some(body))
    }
}

/// Markdown conversion thresholds applied by the live store. Blocks shorter
/// than `min_block_words` are dropped; pages left with fewer than
/// `min_page_words` are treated as unavailable.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConverterThresholds {
    pub min_page_words: usize,
    pub min_block_words: usize,
}

impl Default for ConverterThresholds {
    fn default() -> Self {
        Self { min_page_words: 20, min_block_words: 15 }
    }
}

/// Convert fetched HTML to Markdown-ish text under the thresholds. Returns
/// `None` when too little content survives.
pub fn html_to_markdown(html: &str, thresholds: ConverterThresholds) -> Option<String> {
    // Drop script/style bodies, then tags; anchors keep text and href.
    let mut without_scripts = html.to_string();
    for tag in ["script", "style", "noscript"] {
        let re = regex::Regex::new(&format!(r"(?is)<{tag}[^>]*>.*?</{tag}>")).unwrap();
        without_scripts = re.replace_all(&without_scripts, " ").into_owned();
    }
    let anchor_re = regex::Regex::new(r#"(?is)<a[^>]*href="([^"]+)"[^>]*>(.*?)</a>"#).unwrap();
    let with_links = anchor_re.replace_all(&without_scripts, "[$2]($1)");
    let heading_re = regex::Regex::new(r"(?is)<h[1-6][^>]*>").unwrap();
    let with_headings = heading_re.replace_all(&with_links, "\n\n## ");
    let block_re = regex::Regex::new(r"(?is)</(p|div|h[1-6]|li|tr|section|article)>|<br\s*/?>").unwrap();
    let with_breaks = block_re.replace_all(&with_headings, "\n\n");
    let tag_re = regex::Regex::new(r"(?s)<[^>]+>").unwrap();
    let text = tag_re.replace_all(&with_breaks, " ");
    let text = text
        .replace("&amp;", "&")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&nbsp;", " ");

    let mut blocks: Vec<String> = Vec::new();
    for raw_block in text.split("\n\n") {
        let block = raw_block.split_whitespace().collect::<Vec<_>>().join(" ");
        if block.split_whitespace().count() >= thresholds.min_block_words {
            blocks.push(block);
        }
    }
    let page = blocks.join("\n\n");
    if page.split_whitespace().count() < thresholds.min_page_words {
        None
    } else {
        Some(page)
    }
}

/// Fetches organic pages over plain HTTP GET and converts them to Markdown
/// under the configured thresholds.
pub struct LivePageStore {
    client: reqwest::blocking::Client,
    thresholds: ConverterThresholds,
}

impl LivePageStore {
    pub fn new(timeout_secs: u64, thresholds: ConverterThresholds) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(timeout_secs))
            .build()
            .map_err(|e| Error::transport(format!("building http client: {e}"), false))?;
        Ok(Self { client, thresholds })
    }
}

impl PageStore for LivePageStore {
    fn fetch(&self, url: &str) -> Result<Option<String>> {
        let resp = match self.client.get(url).send() {
            Ok(r) => r,
            Err(_) => return Ok(None), // unavailable, not fatal
        };
        if !resp.status().is_success() {
            return Ok(None);
        }
        let body = match resp.text() {
            Ok(b) => b,
            Err(_) => return Ok(None),
        };
        Ok(html_to_markdown(&body, self.thresholds))
    }
}

// ---------------------------------------------------------------------------
// Crawl resolution
// ---------------------------------------------------------------------------

/// Per-episode crawl interface over one graph and an organic page store.
pub struct CrawlEnvironment<'a> {
    pub graph: &'a EvidenceGraph,
    pub store: &'a dyn PageStore,
}

impl<'a> CrawlEnvironment<'a> {
    pub fn new(graph: &'a EvidenceGraph, store: &'a dyn PageStore) -> Self {
        Self { graph, store }
    }

    /// Resolve a crawl. The url must already be observed; graph urls always
    /// resolve to their rendered Markdown, organic urls go through the page
    /// store and may come back unavailable.
    pub fn crawl(&self, url: &str, observed: &ObservedSet, step: usize) -> Result<CrawledPage> {
        let link = observed
            .get(url)
            .ok_or_else(|| Error::Contract(format!("crawl of unobserved link: {url}")))?;
        if let Some(page) = self.graph.page_by_url(url) {
            let content = render_page(self.graph, &page.page_id)?;
            return Ok(CrawledPage {
                url: url.to_string(),
                content,
                step,
                is_target_related: true,
                link_provenance_at_crawl: link.provenance.clone(),
                error_note: None,
            });
        }
        match self.store.fetch(url) {
            Ok(Some(content)) => Ok(CrawledPage {
                url: url.to_string(),
                content,
                step,
                is_target_related: false,
                link_provenance_at_crawl: link.provenance.clone(),
                error_note: None,
            }),
            Ok(None) => Ok(CrawledPage {
                url: url.to_string(),
                content: String::new(),
                step,
                is_target_related: false,
                link_provenance_at_crawl: link.provenance.clone(),
                error_note: Some("page unavailable".into()),
            }),
            Err(e) => Ok(CrawledPage {
                url: url.to_string(),
                content: String::new(),
                step,
                is_target_related: false,
                link_provenance_at_crawl: link.provenance.clone(),
                error_note: Some(format!("fetch failed: {e}")),
            }),
        }
    }
}
