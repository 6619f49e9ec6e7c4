//! Coordinated evidence graphs: construction, validation, rendering, export.
//!
//! A graph is a set of Markdown pages around one fictional product, wired
//! according to the experimental condition: a navigation entry plus six
//! role-specialized support pages for the full ecosystem, a review-entry
//! variant with and without internal links for the ablation conditions, and
//! a single official page for the single-page conditions.

pub mod templates;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::ProductProfile;
use crate::error::{Error, Result};

/// The seven page roles: one navigation gateway plus six support prototypes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PageRole {
    Navigation,
    Official,
    Review,
    Expert,
    News,
    Forum,
    Social,
}

impl PageRole {
    pub const ALL: [PageRole; 7] = [
        PageRole::Navigation,
        PageRole::Official,
        PageRole::Review,
        PageRole::Expert,
        PageRole::News,
        PageRole::Forum,
        PageRole::Social,
    ];

    /// The six support roles (everything except the navigation gateway).
    pub const SUPPORT: [PageRole; 6] = [
        PageRole::Official,
        PageRole::Review,
        PageRole::Expert,
        PageRole::News,
        PageRole::Forum,
        PageRole::Social,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PageRole::Navigation => "navigation",
            PageRole::Official => "official",
            PageRole::Review => "review",
            PageRole::Expert => "expert",
            PageRole::News => "news",
            PageRole::Forum => "forum",
            PageRole::Social => "social",
        }
    }
}

impl fmt::Display for PageRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Experimental condition controlling graph shape and entry-page style.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "rewriter")]
pub enum Condition {
    /// One unoptimized official page.
    SinglePage,
    /// One official page whose body was rewritten by an external page-level
    /// optimizer; the label names that method.
    PageGeo(String),
    /// Review entry plus independent support pages, no internal links.
    Uncoordinated,
    /// Review entry linking into mutually connected support pages.
    Coordinated,
    /// Navigation entry hub linking into cross-referenced support pages.
    Trace,
}

impl Condition {
    pub fn label(&self) -> String {
        match self {
            Condition::SinglePage => "single_page".into(),
            Condition::PageGeo(rewriter) => format!("page_geo:{rewriter}"),
            Condition::Uncoordinated => "uncoordinated".into(),
            Condition::Coordinated => "coordinated".into(),
            Condition::Trace => "trace".into(),
        }
    }

    pub fn is_single_page(&self) -> bool {
        matches!(self, Condition::SinglePage | Condition::PageGeo(_))
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Condition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_page" => Ok(Condition::SinglePage),
            "uncoordinated" => Ok(Condition::Uncoordinated),
            "coordinated" => Ok(Condition::Coordinated),
            "trace" => Ok(Condition::Trace),
            other => {
                if let Some(rewriter) = other.strip_prefix("page_geo:") {
                    if rewriter.is_empty() {
                        return Err(Error::Config("page_geo condition needs a rewriter label".into()));
                    }
                    Ok(Condition::PageGeo(rewriter.to_string()))
                } else {
                    Err(Error::Config(format!("unknown condition: {other}")))
                }
            }
        }
    }
}

/// An outgoing link from a page body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outlink {
    pub anchor: String,
    pub url: String,
    /// Links pointing outside the graph must be tagged external.
    #[serde(default)]
    pub external: bool,
}

/// One synthetic page of the evidence graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidencePage {
    pub page_id: String,
    pub role: PageRole,
    pub title: String,
    pub url: String,
    /// Markdown body; the canonical served representation.
    pub body: String,
    pub outlinks: Vec<Outlink>,
    /// Product attributes as restated on this page (starting with "name").
    pub attributes_echo: Vec<(String, String)>,
}

/// The coordinated page ecosystem for one product under one condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceGraph {
    pub product: ProductProfile,
    pub condition: Condition,
    pub entry_page_id: String,
    pub pages: BTreeMap<String, EvidencePage>,
}

impl EvidenceGraph {
    pub fn entry_page(&self) -> &EvidencePage {
        &self.pages[&self.entry_page_id]
    }

    pub fn page_by_url(&self, url: &str) -> Option<&EvidencePage> {
        self.pages.values().find(|p| p.url == url)
    }

    pub fn contains_url(&self, url: &str) -> bool {
        self.page_by_url(url).is_some()
    }

    pub fn urls(&self) -> BTreeSet<String> {
        self.pages.values().map(|p| p.url.clone()).collect()
    }

    /// Internal edges derived from resolvable outlinks, as (src, dst) page ids.
    pub fn edges(&self) -> BTreeSet<(String, String)> {
        let by_url: HashMap<&str, &str> = self
            .pages
            .values()
            .map(|p| (p.url.as_str(), p.page_id.as_str()))
            .collect();
        let mut edges = BTreeSet::new();
        for page in self.pages.values() {
            for link in &page.outlinks {
                if let Some(dst) = by_url.get(link.url.as_str()) {
                    if *dst != page.page_id {
                        edges.insert((page.page_id.clone(), dst.to_string()));
                    }
                }
            }
        }
        edges
    }

    /// Page ids reachable from the entry page by following internal edges.
    pub fn reachable_from_entry(&self) -> BTreeSet<String> {
        let edges = self.edges();
        let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
        for (src, dst) in &edges {
            adj.entry(src.as_str()).or_default().push(dst.as_str());
        }
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let mut queue = VecDeque::new();
        seen.insert(self.entry_page_id.clone());
        queue.push_back(self.entry_page_id.as_str());
        while let Some(id) = queue.pop_front() {
            if let Some(next) = adj.get(id) {
                for dst in next {
                    if seen.insert(dst.to_string()) {
                        if let Some((key, _)) = self.pages.get_key_value(*dst) {
                            queue.push_back(key.as_str());
                        }
                    }
                }
            }
        }
        seen
    }
}

/// One failed invariant found by [`validate_graph`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Offending page, when the rule is page-scoped.
    pub page_id: Option<String>,
    pub rule: String,
    pub message: String,
}

impl Violation {
    fn graph(rule: &str, message: impl Into<String>) -> Self {
        Self { page_id: None, rule: rule.into(), message: message.into() }
    }
    fn page(page_id: &str, rule: &str, message: impl Into<String>) -> Self {
        Self {
            page_id: Some(page_id.to_string()),
            rule: rule.into(),
            message: message.into(),
        }
    }
}

/// Check every structural and content invariant for the graph's condition.
/// Returns an empty list iff the graph is valid. Never panics on content.
pub fn validate_graph(graph: &EvidenceGraph) -> Vec<Violation> {
    let mut violations = Vec::new();

    if !graph.pages.contains_key(&graph.entry_page_id) {
        violations.push(Violation::graph(
            "entry_exists",
            format!("entry page id {} not in graph", graph.entry_page_id),
        ));
        return violations;
    }

    // Generic page invariants.
    let mut urls_seen: HashMap<&str, &str> = HashMap::new();
    let graph_urls: HashSet<&str> = graph.pages.values().map(|p| p.url.as_str()).collect();
    for page in graph.pages.values() {
        if let Some(other) = urls_seen.insert(page.url.as_str(), page.page_id.as_str()) {
            violations.push(Violation::page(
                &page.page_id,
                "duplicate_url",
                format!("url {} already used by {other}", page.url),
            ));
        }
        match url_host(&page.url) {
            Some(host) if templates::RESERVED_HOSTS.contains(&host.as_str()) => {}
            Some(host) => violations.push(Violation::page(
                &page.page_id,
                "url_host_reserved",
                format!("host {host} is not in the reserved fictional-domain set"),
            )),
            None => violations.push(Violation::page(
                &page.page_id,
                "url_host_reserved",
                format!("url {} has no host", page.url),
            )),
        }
        if page.body.trim().is_empty() {
            violations.push(Violation::page(&page.page_id, "body_nonempty", "body is empty"));
        } else if !page.body.contains(&graph.product.name) {
            violations.push(Violation::page(
                &page.page_id,
                "body_missing_product_name",
                format!("body does not contain product name {:?}", graph.product.name),
            ));
        }
        for link in &page.outlinks {
            if !link.external && !graph_urls.contains(link.url.as_str()) {
                violations.push(Violation::page(
                    &page.page_id,
                    "unresolved_outlink",
                    format!("outlink {} neither resolves in-graph nor is tagged external", link.url),
                ));
            }
        }
        // Name echo must match exactly.
        match page.attributes_echo.iter().find(|(k, _)| k == "name") {
            Some((_, v)) if *v == graph.product.name => {}
            Some((_, v)) => violations.push(Violation::page(
                &page.page_id,
                "attribute_consistency",
                format!("page restates product name as {v:?}, expected {:?}", graph.product.name),
            )),
            None => violations.push(Violation::page(
                &page.page_id,
                "attribute_consistency",
                "page has no name entry in attributes_echo",
            )),
        }
    }

    // Cross-page attribute consistency: any key present on >=2 pages must
    // carry the same value everywhere. The name key is already pinned to the
    // exact product name by the per-page check above.
    let mut by_key: BTreeMap<&str, Vec<(&str, &str)>> = BTreeMap::new();
    for page in graph.pages.values() {
        for (key, value) in &page.attributes_echo {
            if key == "name" {
                continue;
            }
            by_key.entry(key.as_str()).or_default().push((page.page_id.as_str(), value.as_str()));
        }
    }
    for (key, entries) in by_key {
        if entries.len() >= 2 {
            let first = entries[0].1;
            if entries.iter().any(|(_, v)| *v != first) {
                let pages: Vec<&str> = entries.iter().map(|(p, _)| *p).collect();
                violations.push(Violation::graph(
                    "attribute_consistency",
                    format!("attribute {key:?} differs across pages {pages:?}"),
                ));
            }
        }
    }

    // Condition-specific structure.
    let entry = graph.entry_page();
    let edges = graph.edges();
    let internal_edges: Vec<&(String, String)> = edges.iter().collect();
    match &graph.condition {
        Condition::SinglePage | Condition::PageGeo(_) => {
            if graph.pages.len() != 1 {
                violations.push(Violation::graph(
                    "page_count",
                    format!("single-page condition has {} pages", graph.pages.len()),
                ));
            }
            if entry.role != PageRole::Official {
                violations.push(Violation::page(
                    &entry.page_id,
                    "entry_role",
                    format!("entry role is {}, expected official", entry.role),
                ));
            }
            if !internal_edges.is_empty() {
                violations.push(Violation::graph(
                    "internal_edges_present",
                    format!("expected zero internal edges, found {}", internal_edges.len()),
                ));
            }
        }
        Condition::Uncoordinated => {
            if entry.role != PageRole::Review {
                violations.push(Violation::page(
                    &entry.page_id,
                    "entry_role",
                    format!("entry role is {}, expected review", entry.role),
                ));
            }
            if !internal_edges.is_empty() {
                violations.push(Violation::graph(
                    "internal_edges_present",
                    format!("uncoordinated graph has {} internal edges", internal_edges.len()),
                ));
            }
        }
        Condition::Coordinated => {
            if entry.role != PageRole::Review {
                violations.push(Violation::page(
                    &entry.page_id,
                    "entry_role",
                    format!("entry role is {}, expected review", entry.role),
                ));
            }
            // Entry links to every support page.
            let entry_targets: HashSet<&str> = edges
                .iter()
                .filter(|(src, _)| *src == entry.page_id)
                .map(|(_, dst)| dst.as_str())
                .collect();
            for page in graph.pages.values() {
                if page.page_id != entry.page_id && !entry_targets.contains(page.page_id.as_str()) {
                    violations.push(Violation::page(
                        &page.page_id,
                        "entry_links_all",
                        "entry page does not link to this support page",
                    ));
                }
            }
            // Each support page links to at least one other support page.
            for page in graph.pages.values() {
                if page.page_id == entry.page_id {
                    continue;
                }
                let has_peer_edge = edges.iter().any(|(src, dst)| {
                    *src == page.page_id && *dst != entry.page_id
                });
                if !has_peer_edge {
                    violations.push(Violation::page(
                        &page.page_id,
                        "isolated_support_page",
                        "support page has no edge to another support page",
                    ));
                }
            }
            let reachable = graph.reachable_from_entry();
            for page in graph.pages.values() {
                if !reachable.contains(&page.page_id) {
                    violations.push(Violation::page(
                        &page.page_id,
                        "reachability",
                        "page not reachable from the entry page",
                    ));
                }
            }
        }
        Condition::Trace => {
            if entry.role != PageRole::Navigation {
                violations.push(Violation::page(
                    &entry.page_id,
                    "entry_role",
                    format!("entry role is {}, expected navigation", entry.role),
                ));
            }
            let nav_count = graph
                .pages
                .values()
                .filter(|p| p.role == PageRole::Navigation)
                .count();
            if nav_count != 1 {
                violations.push(Violation::graph(
                    "role_cardinality",
                    format!("expected exactly one navigation page, found {nav_count}"),
                ));
            }
            // Entry links to at least one page of every other role present.
            let roles_present: BTreeSet<PageRole> = graph
                .pages
                .values()
                .filter(|p| p.page_id != entry.page_id)
                .map(|p| p.role)
                .collect();
            let entry_target_roles: BTreeSet<PageRole> = edges
                .iter()
                .filter(|(src, _)| *src == entry.page_id)
                .filter_map(|(_, dst)| graph.pages.get(dst).map(|p| p.role))
                .collect();
            for role in roles_present {
                if !entry_target_roles.contains(&role) {
                    violations.push(Violation::graph(
                        "entry_links_all_roles",
                        format!("entry page has no outlink to any {role} page"),
                    ));
                }
            }
            // Every support page reachable from the entry.
            let reachable = graph.reachable_from_entry();
            for page in graph.pages.values() {
                if !reachable.contains(&page.page_id) {
                    violations.push(Violation::page(
                        &page.page_id,
                        "reachability",
                        "page not reachable from the entry page",
                    ));
                }
            }
        }
    }

    violations
}

fn url_host(url: &str) -> Option<String> {
    let rest = url.strip_prefix("https://").or_else(|| url.strip_prefix("http://"))?;
    let host = rest.split('/').next()?;
    if host.is_empty() {
        None
    } else {
        Some(host.to_string())
    }
}

/// Render a page as served Markdown. Outlinks appear as standard Markdown
/// links extractable by the crawl module's link extractor.
pub fn render_page(graph: &EvidenceGraph, page_id: &str) -> Result<String> {
    let page = graph
        .pages
        .get(page_id)
        .ok_or_else(|| Error::NotFound(format!("page {page_id} not in graph")))?;
    Ok(page.body.clone())
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

/// A planned link handed to the page generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkPlanEntry {
    pub anchor: String,
    pub url: String,
}

/// Inputs for generating one page.
#[derive(Debug, Clone)]
pub struct PageRequest<'a> {
    pub product: &'a ProductProfile,
    pub role: PageRole,
    pub link_plan: &'a [LinkPlanEntry],
    pub seed: u64,
}

/// Generated title and body for one page. Urls and ids are assigned by the
/// graph builder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageDraft {
    pub title: String,
    pub body: String,
}

/// Produces page drafts; implementations are the deterministic template
/// filler, the LLM-backed generator, and the pre-rewritten body source used
/// by the page-level optimization condition.
pub trait PageGenerator: Send + Sync {
    fn generate(&self, request: &PageRequest<'_>) -> Result<PageDraft>;
}

/// Tuning knobs for graph construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EcosystemConfig {
    /// Pages instantiated per support role (the navigation entry is always
    /// a single page).
    pub pages_per_role: usize,
}

impl Default for EcosystemConfig {
    fn default() -> Self {
        Self { pages_per_role: 1 }
    }
}

/// Slug used in page ids and urls.
pub fn slugify(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut prev_dash = true;
    for c in text.chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
            prev_dash = false;
        } else if !prev_dash {
            out.push('-');
            prev_dash = true;
        }
    }
    out.trim_end_matches('-').to_string()
}

struct PagePlan {
    page_id: String,
    role: PageRole,
    url: String,
    /// Target page ids this page links to, with role-derived anchors.
    link_targets: Vec<String>,
}

/// Build the evidence graph for `product` under `condition`.
///
/// Deterministic for a fixed (product, condition, generator, seed). The
/// result is validated before being returned; violations are an error, not
/// silently repaired.
pub fn build_ecosystem(
    product: &ProductProfile,
    condition: &Condition,
    generator: &dyn PageGenerator,
    seed: u64,
) -> Result<EvidenceGraph> {
    build_ecosystem_with(product, condition, generator, seed, &EcosystemConfig::default())
}

pub fn build_ecosystem_with(
    product: &ProductProfile,
    condition: &Condition,
    generator: &dyn PageGenerator,
    seed: u64,
    config: &EcosystemConfig,
) -> Result<EvidenceGraph> {
    product.validate()?;
    if config.pages_per_role == 0 {
        return Err(Error::Config("pages_per_role must be positive".into()));
    }
    let slug = slugify(&product.name);
    let page_id_for = |role: PageRole, idx: usize| {
        if config.pages_per_role == 1 || role == PageRole::Navigation {
            format!("{slug}-{}", role.as_str())
        } else {
            format!("{slug}-{}-{}", role.as_str(), idx + 1)
        }
    };

    // Plan the node set.
    let mut plans: Vec<PagePlan> = Vec::new();
    let support_ids = |plans: &mut Vec<PagePlan>| {
        for role in PageRole::SUPPORT {
            for idx in 0..config.pages_per_role {
                let page_id = page_id_for(role, idx);
                let url = templates::page_url(role, &slug, &page_id);
                plans.push(PagePlan { page_id, role, url, link_targets: vec![] });
            }
        }
    };

    let entry_page_id;
    match condition {
        Condition::SinglePage | Condition::PageGeo(_) => {
            let page_id = page_id_for(PageRole::Official, 0);
            let url = templates::page_url(PageRole::Official, &slug, &page_id);
            entry_page_id = page_id.clone();
            plans.push(PagePlan { page_id, role: PageRole::Official, url, link_targets: vec![] });
        }
        Condition::Uncoordinated => {
            support_ids(&mut plans);
            entry_page_id = page_id_for(PageRole::Review, 0);
            // No internal links anywhere.
        }
        Condition::Coordinated => {
            support_ids(&mut plans);
            entry_page_id = page_id_for(PageRole::Review, 0);
            let all_ids: Vec<String> = plans.iter().map(|p| p.page_id.clone()).collect();
            let peers: Vec<String> =
                all_ids.iter().filter(|id| **id != entry_page_id).cloned().collect();
            for plan in plans.iter_mut() {
                if plan.page_id == entry_page_id {
                    plan.link_targets = peers.clone();
                } else {
                    // Ring over the non-entry support pages keeps them
                    // mutually connected through citation-style links.
                    let pos = peers.iter().position(|id| *id == plan.page_id).unwrap();
                    plan.link_targets = vec![peers[(pos + 1) % peers.len()].clone()];
                }
            }
        }
        Condition::Trace => {
            let nav_id = page_id_for(PageRole::Navigation, 0);
            let nav_url = templates::page_url(PageRole::Navigation, &slug, &nav_id);
            entry_page_id = nav_id.clone();
            plans.push(PagePlan {
                page_id: nav_id.clone(),
                role: PageRole::Navigation,
                url: nav_url,
                link_targets: vec![],
            });
            support_ids(&mut plans);
            let support: Vec<String> = plans
                .iter()
                .filter(|p| p.page_id != nav_id)
                .map(|p| p.page_id.clone())
                .collect();
            for plan in plans.iter_mut() {
                if plan.page_id == nav_id {
                    plan.link_targets = support.clone();
                } else {
                    // Cross-page referencing among support pages.
                    let pos = support.iter().position(|id| *id == plan.page_id).unwrap();
                    plan.link_targets = vec![support[(pos + 1) % support.len()].clone()];
                }
            }
        }
    }

    let url_by_id: HashMap<String, String> =
        plans.iter().map(|p| (p.page_id.clone(), p.url.clone())).collect();
    let role_by_id: HashMap<String, PageRole> =
        plans.iter().map(|p| (p.page_id.clone(), p.role)).collect();

    let mut pages = BTreeMap::new();
    for plan in &plans {
        let link_plan: Vec<LinkPlanEntry> = plan
            .link_targets
            .iter()
            .map(|target| LinkPlanEntry {
                anchor: templates::anchor_for_role(role_by_id[target]).to_string(),
                url: url_by_id[target].clone(),
            })
            .collect();
        let request = PageRequest {
            product,
            role: plan.role,
            link_plan: &link_plan,
            seed: seed ^ templates::role_seed_offset(plan.role),
        };
        let draft = generator.generate(&request).map_err(|e| Error::Generation {
            role: plan.role.as_str().to_string(),
            message: e.to_string(),
        })?;
        let mut attributes_echo = vec![("name".to_string(), product.name.clone())];
        attributes_echo.extend(product.attributes.iter().cloned());
        pages.insert(
            plan.page_id.clone(),
            EvidencePage {
                page_id: plan.page_id.clone(),
                role: plan.role,
                title: draft.title,
                url: plan.url.clone(),
                body: draft.body,
                outlinks: link_plan
                    .into_iter()
                    .map(|l| Outlink { anchor: l.anchor, url: l.url, external: false })
                    .collect(),
                attributes_echo,
            },
        );
    }

    let graph = EvidenceGraph {
        product: product.clone(),
        condition: condition.clone(),
        entry_page_id,
        pages,
    };
    let violations = validate_graph(&graph);
    if !violations.is_empty() {
        let listing = violations
            .iter()
            .map(|v| format!("[{}] {}: {}", v.page_id.as_deref().unwrap_or("-"), v.rule, v.message))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Validation(format!("built graph violates invariants: {listing}")));
    }
    Ok(graph)
}

/// Generate a single page outside of graph assembly (title/url patterns and
/// body from the role template, links embedded per `link_plan`).
pub fn generate_page(
    product: &ProductProfile,
    role: PageRole,
    link_plan: &[LinkPlanEntry],
    generator: &dyn PageGenerator,
    seed: u64,
) -> Result<EvidencePage> {
    for link in link_plan {
        if url_host(&link.url).is_none() {
            return Err(Error::Validation(format!("link plan url is not absolute: {}", link.url)));
        }
    }
    let request = PageRequest { product, role, link_plan, seed };
    let draft = generator.generate(&request)?;
    if !draft.body.contains(&product.name) {
        return Err(Error::Validation(format!(
            "generated {role} body does not contain the product name"
        )));
    }
    let slug = slugify(&product.name);
    let page_id = format!("{slug}-{}", role.as_str());
    let url = templates::page_url(role, &slug, &page_id);
    let mut attributes_echo = vec![("name".to_string(), product.name.clone())];
    attributes_echo.extend(product.attributes.iter().cloned());
    Ok(EvidencePage {
        page_id,
        role,
        title: draft.title,
        url,
        body: draft.body,
        outlinks: link_plan
            .iter()
            .map(|l| Outlink { anchor: l.anchor.clone(), url: l.url.clone(), external: false })
            .collect(),
        attributes_echo,
    })
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// Manifest entry describing one exported page.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestPage {
    pub page_id: String,
    pub role: PageRole,
    pub title: String,
    pub url: String,
    pub outlinks: Vec<Outlink>,
    pub attributes_echo: Vec<(String, String)>,
    pub file: String,
}

/// Manifest written next to the exported Markdown pages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EcosystemManifest {
    pub condition: String,
    pub product: ProductProfile,
    pub entry_page_id: String,
    pub pages: Vec<ManifestPage>,
}

/// Export a graph as one Markdown file per page plus `manifest.json`.
pub fn export_ecosystem(graph: &EvidenceGraph, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest_pages = Vec::new();
    for page in graph.pages.values() {
        let file = format!("{}.md", page.page_id);
        std::fs::write(dir.join(&file), render_page(graph, &page.page_id)?)?;
        manifest_pages.push(ManifestPage {
            page_id: page.page_id.clone(),
            role: page.role,
            title: page.title.clone(),
            url: page.url.clone(),
            outlinks: page.outlinks.clone(),
            attributes_echo: page.attributes_echo.clone(),
            file,
        });
    }
    let manifest = EcosystemManifest {
        condition: graph.condition.label(),
        product: graph.product.clone(),
        entry_page_id: graph.entry_page_id.clone(),
        pages: manifest_pages,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

/// Rebuild a graph from an exported directory (manifest + page files).
pub fn import_ecosystem(dir: &Path) -> Result<EvidenceGraph> {
    let manifest_path = dir.join("manifest.json");
    let manifest: EcosystemManifest =
        serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)?;
    let condition: Condition = manifest.condition.parse()?;
    let mut pages = BTreeMap::new();
    for entry in manifest.pages {
        let body = std::fs::read_to_string(dir.join(&entry.file))?;
        pages.insert(
            entry.page_id.clone(),
            EvidencePage {
                page_id: entry.page_id,
                role: entry.role,
                title: entry.title,
                url: entry.url,
                body,
                outlinks: entry.outlinks,
                attributes_echo: entry.attributes_echo,
            },
        );
    }
    Ok(EvidenceGraph {
        product: manifest.product,
        condition,
        entry_page_id: manifest.entry_page_id,
        pages,
    })
}
