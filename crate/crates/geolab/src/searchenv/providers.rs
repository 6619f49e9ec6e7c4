//! Organic-result providers: recorded fixtures (canonical for CI), a fully
//! offline synthetic distractor generator, a live HTTP client, and a
//! per-query cache shared across an experiment run.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One organic result as returned by a provider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrganicResult {
    pub title: String,
    pub link: String,
    pub snippet: String,
}

/// Query in, ordered result list out. Providers pad from their own pools
/// when a query yields fewer than `min_results`; callers still verify the
/// final count.
pub trait OrganicProvider: Send + Sync {
    fn search(&self, query: &str, min_results: usize) -> Result<Vec<OrganicResult>>;
}

/// Stable hash used for per-query fixture filenames and synthetic seeds.
pub fn query_hash(query: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(query.as_bytes());
    let digest = hasher.finalize();
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// On-disk shape of one recorded query fixture.
#[derive(Debug, Serialize, Deserialize)]
pub struct QueryFixture {
    pub query: String,
    pub results: Vec<OrganicResult>,
}

/// Serves recorded per-query result lists from a fixture directory, padding
/// from a shared pool when a query has too few (or no) recorded results.
///
/// Layout: `<dir>/<query_hash>.json` per query plus optional `pool.json`.
pub struct FixtureProvider {
    dir: Option<PathBuf>,
    pool: Vec<OrganicResult>,
}

impl FixtureProvider {
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let pool_path = dir.join("pool.json");
        let pool = if pool_path.exists() {
            serde_json::from_str(&std::fs::read_to_string(&pool_path)?)?
        } else {
            Vec::new()
        };
        Ok(Self { dir: Some(dir.to_path_buf()), pool })
    }

    /// Pool-only provider; every query is served from the same padding pool.
    pub fn from_pool(pool: Vec<OrganicResult>) -> Self {
        Self { dir: None, pool }
    }

    /// Write one recorded query fixture into `dir`.
    pub fn record(dir: &Path, fixture: &QueryFixture) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.json", query_hash(&fixture.query)));
        std::fs::write(path, serde_json::to_string_pretty(fixture)?)?;
        Ok(())
    }
}

impl OrganicProvider for FixtureProvider {
    fn search(&self, query: &str, min_results: usize) -> Result<Vec<OrganicResult>> {
        let mut results: Vec<OrganicResult> = Vec::new();
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{}.json", query_hash(query)));
            if path.exists() {
                let fixture: QueryFixture =
                    serde_json::from_str(&std::fs::read_to_string(&path)?)?;
                results = fixture.results;
            }
        }
        // Pad from the pool, skipping links already present.
        if results.len() < min_results {
            for candidate in &self.pool {
                if results.len() >= min_results {
                    break;
                }
                if results.iter().all(|r| r.link != candidate.link) {
                    results.push(candidate.clone());
                }
            }
        }
        Ok(results)
    }
}

const DISTRACTOR_HOSTS: [&str; 10] = [
    "dealstackerdaily.example.com",
    "gadgetrankings.example.net",
    "shopsmartlistings.example.org",
    "topgearfinds.example.com",
    "pricewatchzone.example.net",
    "buyerbeacon.example.org",
    "techbargainbin.example.com",
    "reviewroundups.example.net",
    "marketscanner.example.org",
    "comparisoncorner.example.com",
];

const DISTRACTOR_LEADS: [&str; 8] = [
    "Roundup", "Buying guide", "Deals digest", "Hands-on notes", "Price tracker",
    "Editor's shortlist", "Community picks", "Market overview",
];

const DISTRACTOR_FILLER: [&str; 10] = [
    "compares current options across the price spectrum",
    "lists this week's most-viewed picks with pros and cons",
    "breaks down spec sheets for mainstream shoppers",
    "tracks discounts across major retailers",
    "summarizes long-term reliability reports",
    "collects verified-owner impressions",
    "ranks contenders by value per dollar",
    "highlights newly released alternatives",
    "examines warranty and support differences",
    "answers the most common buyer questions",
];

/// Fully offline distractor generator. Deterministic per query string: the
/// query seeds the generator, so re-runs reproduce the same results.
pub struct SyntheticProvider {
    /// Results generated per query before padding requests.
    pub per_query: usize,
}

impl Default for SyntheticProvider {
    fn default() -> Self {
        Self { per_query: 9 }
    }
}

impl OrganicProvider for SyntheticProvider {
    fn search(&self, query: &str, min_results: usize) -> Result<Vec<OrganicResult>> {
        let seed = u64::from_str_radix(&query_hash(query)[..16], 16)
            .unwrap_or(0xfeed_beef);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = self.per_query.max(min_results);
        let results = (0..count)
            .map(|i| {
                let host = DISTRACTOR_HOSTS[rng.gen_range(0..DISTRACTOR_HOSTS.len())];
                let lead = DISTRACTOR_LEADS[rng.gen_range(0..DISTRACTOR_LEADS.len())];
                let filler = DISTRACTOR_FILLER[rng.gen_range(0..DISTRACTOR_FILLER.len())];
                let slug: u32 = rng.gen_range(1000..9999);
                OrganicResult {
                    title: format!("{lead}: {query} ({i})", i = i + 1),
                    link: format!("https://{host}/articles/{slug}"),
                    snippet: format!("This page {filler}."),
                }
            })
            .collect();
        Ok(results)
    }
}

/// Live organic provider speaking a minimal JSON contract: GET with a query
/// parameter, response `{"results": [{title, link, snippet}, ...]}`.
pub struct LiveProvider {
    endpoint: String,
    api_key_env: String,
    client: reqwest::blocking::Client,
}

impl LiveProvider {
    pub fn new(endpoint: String, api_key_env: String, timeout_secs: u64) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(timeout_secs))
            .build()
            .map_err(|e| Error::transport(format!("building http client: {e}"), false))?;
        Ok(Self { endpoint, api_key_env, client })
    }
}

#[derive(Deserialize)]
struct LiveResponse {
    results: Vec<OrganicResult>,
}

impl OrganicProvider for LiveProvider {
    fn search(&self, query: &str, _min_results: usize) -> Result<Vec<OrganicResult>> {
        let mut req = self.client.get(&self.endpoint).query(&[("q", query)]);
        if let Ok(key) = std::env::var(&self.api_key_env) {
            if !key.is_empty() {
                req = req.bearer_auth(key);
            }
        }
        let resp = req
            .send()
            .map_err(|e| Error::transport(format!("organic search failed: {e}"), true))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Error::transport(format!("organic provider returned {status}"), true));
        }
        if !status.is_success() {
            return Err(Error::transport(format!("organic provider returned {status}"), false));
        }
        let body: LiveResponse = resp
            .json()
            .map_err(|e| Error::Protocol(format!("organic response not JSON: {e}")))?;
        Ok(body.results)
    }
}

/// Per-query cache with first-writer-wins semantics, so repeated queries in
/// one run are reproducible and provider quota is bounded.
pub struct CachedProvider<P: OrganicProvider> {
    inner: P,
    cache: Mutex<HashMap<String, Vec<OrganicResult>>>,
}

impl<P: OrganicProvider> CachedProvider<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, cache: Mutex::new(HashMap::new()) }
    }
}

impl<P: OrganicProvider> OrganicProvider for CachedProvider<P> {
    fn search(&self, query: &str, min_results: usize) -> Result<Vec<OrganicResult>> {
        if let Some(hit) = self.cache.lock().unwrap().get(query) {
            return Ok(hit.clone());
        }
        let results = self.inner.search(query, min_results)?;
        let mut cache = self.cache.lock().unwrap();
        // First writer wins; a concurrent writer's entry is kept.
        Ok(cache.entry(query.to_string()).or_insert(results).clone())
    }
}
