//! Role-specific page templates and the page generators.
//!
//! The template generator is the canonical deterministic source used in all
//! tests; the LLM generator produces bodies from the same role briefs for
//! higher realism. Both keep titles and urls on the role-specific patterns.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chat::{ChatClient, ChatMessage, ChatOutcome, ChatRequest};
use crate::dataset::ProductProfile;
use crate::error::{Error, Result};

use super::{LinkPlanEntry, PageDraft, PageGenerator, PageRequest, PageRole};

/// Reserved fictional hosts, one per role. Organic providers must never emit
/// these, so synthetic and organic results cannot collide.
pub const RESERVED_HOSTS: [&str; 7] = [
    "www.consumerchoicehub.com",
    "www.officialbrandpages.com",
    "www.comparereviewlab.com",
    "www.expertinsightjournal.com",
    "www.dailytechwire.com",
    "www.producttalkforum.com",
    "www.socialstreampost.com",
];

pub fn host_for_role(role: PageRole) -> &'static str {
    match role {
        PageRole::Navigation => RESERVED_HOSTS[0],
        PageRole::Official => RESERVED_HOSTS[1],
        PageRole::Review => RESERVED_HOSTS[2],
        PageRole::Expert => RESERVED_HOSTS[3],
        PageRole::News => RESERVED_HOSTS[4],
        PageRole::Forum => RESERVED_HOSTS[5],
        PageRole::Social => RESERVED_HOSTS[6],
    }
}

/// Synthetic url scheme: https://{role host}/{product slug}/{page id}.
pub fn page_url(role: PageRole, slug: &str, page_id: &str) -> String {
    format!("https://{}/{}/{}", host_for_role(role), slug, page_id)
}

/// Anchor text used when another page cites a page of this role.
pub fn anchor_for_role(role: PageRole) -> &'static str {
    match role {
        PageRole::Navigation => "buyer's guide hub",
        PageRole::Official => "official specifications",
        PageRole::Review => "head-to-head review",
        PageRole::Expert => "expert analysis",
        PageRole::News => "launch coverage",
        PageRole::Forum => "owner discussion",
        PageRole::Social => "public reactions",
    }
}

/// Per-role seed offset so sibling pages built from one graph seed differ.
pub fn role_seed_offset(role: PageRole) -> u64 {
    match role {
        PageRole::Navigation => 0x10,
        PageRole::Official => 0x20,
        PageRole::Review => 0x30,
        PageRole::Expert => 0x40,
        PageRole::News => 0x50,
        PageRole::Forum => 0x60,
        PageRole::Social => 0x70,
    }
}

/// Soft length cap applied to generated social-post bodies.
pub const SOCIAL_MAX_CHARS: usize = 700;

const RIVALS: [&str; 6] =
    ["EchoBeat Air", "VoltEdge Neo", "PrimeCast Duo", "SwiftLine S4", "OmniGear Lite", "TrueNorth M2"];

fn rival_for(seed: u64) -> &'static str {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RIVALS[rng.gen_range(0..RIVALS.len())]
}

fn score_for(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    format!("{}.{}", rng.gen_range(7..9), rng.gen_range(0..10))
}

fn attributes_block(product: &ProductProfile) -> String {
    let mut block = String::new();
    for (key, value) in &product.attributes {
        block.push_str(&format!("- {key}: {value}\n"));
    }
    if block.is_empty() {
        block.push_str(&format!("- name: {}\n", product.name));
    }
    block
}

fn links_section(heading: &str, link_plan: &[LinkPlanEntry]) -> String {
    if link_plan.is_empty() {
        return String::new();
    }
    let mut section = format!("\n## {heading}\n\n");
    for link in link_plan {
        section.push_str(&format!("- [{}]({})\n", link.anchor, link.url));
    }
    section
}

/// Deterministic slot-filling generator over the role templates.
#[derive(Debug, Default, Clone)]
pub struct TemplateGenerator;

impl TemplateGenerator {
    pub fn title_for(product: &ProductProfile, role: PageRole, seed: u64) -> String {
        let name = &product.name;
        let category = product.category();
        match role {
            PageRole::Navigation => format!("Best {category} Picks | {name} Hub"),
            PageRole::Official => {
                format!("{name} | {category} built for everyday use")
            }
            PageRole::Review => {
                format!("{name} vs {} Review: Which {category} Should You Buy", rival_for(seed))
            }
            PageRole::Expert => format!("{name} Review: What Good {category} Get Right"),
            PageRole::News => format!("[Daily Tech Wire] {name} arrives in the {category} market"),
            PageRole::Forum => format!("Looking for {category} impressions — is {name} worth it?"),
            PageRole::Social => format!("Just tried {name} and it surprised me"),
        }
    }

    fn body_for(request: &PageRequest<'_>) -> String {
        let product = request.product;
        let name = &product.name;
        let category = product.category();
        let desc = &product.description;
        let attrs = attributes_block(product);
        let rival = rival_for(request.seed);
        let score = score_for(request.seed);
        let title = Self::title_for(product, request.role, request.seed);
        let features = product.attribute("core features").unwrap_or("its feature set");
        let uses = product.attribute("use cases").unwrap_or("daily use");
        let limits = product.attribute("limitations").unwrap_or("minor trade-offs");

        match request.role {
            PageRole::Navigation => format!(
                "# {title}\n\n\
                Shopping for {category} means weighing specs, real-world impressions, and price. \
                This hub collects the sources buyers keep asking for in one place, organized around \
                {name}, a current standout candidate in the category.\n\n\
                ## Why {name} keeps coming up\n\n\
                {desc}\n\n\
                At a glance:\n\n{attrs}\n\
                ## Where to dig deeper\n\n\
                The pages below cover {name} from every angle buyers care about: identity and \
                specifications, comparative judgments, expert interpretation, market context, owner \
                experiences, and quick public reactions.\n\
                {links}",
                links = links_section("Sources", request.link_plan),
            ),
            PageRole::Official => format!(
                "# {title}\n\n\
                {desc}\n\n\
                ## Product overview\n\n\
                {name} anchors our {category} lineup. It pairs {features} with a design tuned for \
                {uses}, and ships with a two-year warranty and firmware updates.\n\n\
                ## Specifications\n\n{attrs}\n\
                ## Compatibility and support\n\n\
                {name} works out of the box with current phones, tablets, and laptops. Known \
                limitations: {limits}. Support bundles setup guides and a 30-day return window.\
                {links}",
                links = links_section("Further reading", request.link_plan),
            ),
            PageRole::Review => format!(
                "# {title}\n\n\
                We put {name} head-to-head against the {rival} across a two-week test covering \
                comfort, performance, and value.\n\n\
                ## Verdict\n\n\
                {name} scores {score}/10. It is the stronger pick for {uses}; the {rival} keeps a \
                narrow edge in accessories. {desc}\n\n\
                ## Strengths and weaknesses\n\n\
                Strengths track the spec sheet:\n\n{attrs}\n\
                Weaknesses are modest: {limits}.\n\n\
                ## Who should buy it\n\n\
                For most shoppers in the {category} aisle, {name} is the more sensible buy at this \
                price.\
                {links}",
                links = links_section("Cited sources", request.link_plan),
            ),
            PageRole::Expert => format!(
                "# {title}\n\n\
                Spec sheets rarely explain outcomes, so this analysis connects what {name} ships \
                with to the decisions {category} buyers actually face.\n\n\
                ## What the specifications imply\n\n\
                {desc} In practice, {features} translate directly into better results for {uses}. \
                The documented trade-offs ({limits}) matter mainly at the margins.\n\n\
                ## Attribute breakdown\n\n{attrs}\n\
                ## Bottom line\n\n\
                Judged on decision-relevant criteria rather than marketing, {name} holds up well \
                under scrutiny.\
                {links}",
                links = links_section("References", request.link_plan),
            ),
            PageRole::News => format!(
                "# {title}\n\n\
                The {category} market gained a new entrant this quarter as {name} reached general \
                availability, slotting into a price band that has seen intense competition.\n\n\
                ## Launch details\n\n\
                {desc} Early listings emphasize:\n\n{attrs}\n\
                ## Market context\n\n\
                Analysts read the launch as pressure on incumbents like the {rival}, with {name} \
                targeting buyers focused on {uses}.\
                {links}",
                links = links_section("Related coverage", request.link_plan),
            ),
            PageRole::Forum => format!(
                "# {title}\n\n\
                **original_poster** asked: I keep seeing {name} mentioned for {uses}. Anyone here \
                using it day to day? How does it hold up?\n\n\
                **daily_user_42** replied: Three weeks in with {name}. Short version: {desc} The \
                spec sheet is accurate in practice:\n\n{attrs}\n\
                **practical_buyer** replied: Coming from the {rival}, the switch was worth it. \
                Known gripes: {limits}. Still the easiest pick I have made in the {category} \
                category in a while.\
                {links}",
                links = links_section("Links shared in thread", request.link_plan),
            ),
            PageRole::Social => format!(
                "# {title}\n\n\
                Okay, {name} has been in my bag for a week and I get the hype. {features} — at \
                this price, wild. Perfect for {uses}.\n\n\
                Replies are full of people comparing it to the {rival}; most landed on {name}.\
                {links}",
                links = links_section("Mentioned links", request.link_plan),
            ),
        }
    }
}

impl PageGenerator for TemplateGenerator {
    fn generate(&self, request: &PageRequest<'_>) -> Result<PageDraft> {
        let title = Self::title_for(request.product, request.role, request.seed);
        let body = Self::body_for(request);
        Ok(PageDraft { title, body })
    }
}

/// Serves an externally rewritten body for the single official page of the
/// page-level optimization condition. The harness never runs the optimizer
/// itself; it consumes the rewritten text as-is.
#[derive(Debug, Clone)]
pub struct PrewrittenBodyGenerator {
    body: String,
}

impl PrewrittenBodyGenerator {
    pub fn new(body: String) -> Self {
        Self { body }
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Ok(Self { body: std::fs::read_to_string(path)? })
    }
}

impl PageGenerator for PrewrittenBodyGenerator {
    fn generate(&self, request: &PageRequest<'_>) -> Result<PageDraft> {
        if request.role != PageRole::Official {
            return Err(Error::Generation {
                role: request.role.as_str().to_string(),
                message: "prewritten bodies are only defined for the official page".into(),
            });
        }
        let mut body = self.body.clone();
        let links = trailing_links_section(request.link_plan);
        body.push_str(&links);
        Ok(PageDraft {
            title: TemplateGenerator::title_for(request.product, request.role, request.seed),
            body,
        })
    }
}

fn trailing_links_section(link_plan: &[LinkPlanEntry]) -> String {
    links_section("Further reading", link_plan)
}

/// Role brief handed to the LLM generator alongside the profile.
fn role_brief(role: PageRole) -> &'static str {
    match role {
        PageRole::Navigation => {
            "a lightweight hub page that routes readers to official, editorial, social, and \
             comparison sources for the product, with a clean entry-point structure"
        }
        PageRole::Official => {
            "a brand-backed official product page: trustworthy, formally structured, covering \
             positioning, key features, specifications, and support information"
        }
        PageRole::Review => {
            "a head-to-head comparison review with score-driven evaluation, side-by-side \
             differences, price logic, and recommendation guidance"
        }
        PageRole::Expert => {
            "a professional editorial review with a verdict block, long-form analysis, pros and \
             cons, and evaluation-oriented sections"
        }
        PageRole::News => {
            "a news-style article framing the product as a timely launch, with headline-driven \
             presentation and market context"
        }
        PageRole::Forum => {
            "a threaded community discussion around a buying question, with trade-off talk and \
             experiential feedback in question-and-answer style"
        }
        PageRole::Social => {
            "a short social-media post with creator voice and lightweight engagement, giving a \
             quick personal reaction"
        }
    }
}

/// Generates page bodies with a chat backend, keeping titles and urls on the
/// template patterns. Bodies missing the product name are rejected rather
/// than repaired; over-long social posts are trimmed at a word boundary.
pub struct LlmPageGenerator {
    client: Arc<dyn ChatClient>,
}

impl LlmPageGenerator {
    pub fn new(client: Arc<dyn ChatClient>) -> Self {
        Self { client }
    }
}

impl PageGenerator for LlmPageGenerator {
    fn generate(&self, request: &PageRequest<'_>) -> Result<PageDraft> {
        let product = request.product;
        let links_instruction = if request.link_plan.is_empty() {
            String::new()
        } else {
            let listing = request
                .link_plan
                .iter()
                .map(|l| format!("[{}]({})", l.anchor, l.url))
                .collect::<Vec<_>>()
                .join(", ");
            format!(
                "Embed each of these Markdown links somewhere natural in the page: {listing}. "
            )
        };
        let prompt = format!(
            "Write the Markdown body of {brief}.\n\nProduct name: {name}\nDescription: {desc}\n\
             Attributes:\n{attrs}\n{links_instruction}Mention the product by its exact name at \
             least once. Output only the Markdown body.",
            brief = role_brief(request.role),
            name = product.name,
            desc = product.description,
            attrs = attributes_block(product),
        );
        let outcome = self.client.complete(&ChatRequest {
            messages: vec![ChatMessage::user(prompt)],
            tools: vec![],
            temperature: 0.0,
        })?;
        let mut body = match outcome {
            ChatOutcome::Text(t) => t,
            ChatOutcome::ToolCall { .. } => {
                return Err(Error::Protocol("page generator returned a tool call".into()))
            }
        };
        if !body.contains(&product.name) {
            return Err(Error::Validation(format!(
                "generated {} body does not contain the product name",
                request.role
            )));
        }
        for link in request.link_plan {
            if !body.contains(&link.url) {
                return Err(Error::Validation(format!(
                    "generated {} body is missing the planned link to {}",
                    request.role, link.url
                )));
            }
        }
        if request.role == PageRole::Social && body.chars().count() > SOCIAL_MAX_CHARS {
            let cut: String = body.chars().take(SOCIAL_MAX_CHARS).collect();
            let end = cut.rfind(char::is_whitespace).unwrap_or(cut.len());
            body = cut[..end].trim_end().to_string();
        }
        Ok(PageDraft {
            title: TemplateGenerator::title_for(product, request.role, request.seed),
            body,
        })
    }
}
