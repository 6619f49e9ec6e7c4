//! Versioned prompt assets for the LLM-backed components.
//!
//! Prompts are plain constants so that reports can record exactly which
//! prompt version produced a verdict. Bump the version string whenever the
//! wording changes.

/// Version tag recorded alongside intent-filter verdicts.
pub const INTENT_FILTER_PROMPT_VERSION: &str = "intent-filter-v1";

/// Prompt for the dataset intent filter. `{query}` is substituted with the
/// candidate query.
pub const INTENT_FILTER_PROMPT: &str = r#"You are a query-cleaning assistant for recommendation datasets. Given one user query, decide whether it should be kept for our product recommendation benchmark.

Return True if the query expresses an open-ended recommendation intent, where the user seeks help finding or selecting a purchasable product from a general product category, use case, preference, or need.

Return False if the query falls into any of the following cases:
1. It is only a bare product keyword, an overly broad product-category request, or an extremely vague product query without clear recommendation intent.
2. It restricts results to specific dates or websites.
3. It asks for ingredients, supplements, therapies, biologics, compounds, or other non-product components.
4. It asks for methods, treatments, remedies, strategies, or approaches rather than purchasable products.
5. It focuses on specific named products or brands instead of seeking open-ended product recommendations.
6. It asks the model to compare, choose between, or decide whether to buy specific named products or model versions.

Return only True or False. Do not include explanations, comments, or any extra text.

Query: {query}"#;

/// Version tag recorded alongside recommendation verdicts.
pub const RECOMMENDATION_JUDGE_PROMPT_VERSION: &str = "recommendation-judge-v1";

/// Prompt for the final-answer recommendation judge. Substitutes `{name}`,
/// `{description}`, and `{answer}`.
pub const RECOMMENDATION_JUDGE_PROMPT: &str = r#"You are evaluating the final answer produced by a shopping-assistant agent.

Target product name: {name}
Target product description: {description}

Answer to evaluate:
{answer}

Return True only if BOTH conditions hold:
1. The answer explicitly mentions the target product.
2. The answer recommends the target product as a suitable option for the user's need.

Return False otherwise (for example, the product is never mentioned, or it is mentioned but discouraged, rejected, or listed only as an option to avoid).

Return only True or False. Do not include explanations, comments, or any extra text."#;

/// Version tag recorded alongside brand-relevance verdicts.
pub const BRAND_JUDGE_PROMPT_VERSION: &str = "brand-judge-v1";

/// Prompt for the brand-relevance judge used to classify follow-up searches.
/// Substitutes `{name}` and `{query}`.
pub const BRAND_JUDGE_PROMPT: &str = r#"You are classifying a web-search query issued by a shopping-assistant agent.

Target product name: {name}

Query: {query}

Return True if the query specifically targets the product named above (for example, asking about its features, reviews, pricing, or comparisons centered on it) and does not primarily ask for a broad category-level recommendation.

Return False otherwise.

Return only True or False. Do not include explanations, comments, or any extra text."#;

/// Version tag for the search-agent system prompt.
pub const AGENT_PROMPT_VERSION: &str = "search-agent-v1";

/// System prompt for the web-search agent policy. Substitutes `{topic}`,
/// `{year}`, and `{date}`.
pub const AGENT_PROMPT: &str = r#"Conduct focused searches and crawls to collect the most recent and credible information on "{topic}" and synthesize it into a verifiable text artifact.

Ensure the timeliness of the query results. The current year is {year} and today's date is {date}.

Follow these instructions:
1. Use search keywords that closely reflect the user's question, without introducing assumptions or unsupported framing.
2. Do not rely on prior knowledge, cached assumptions, or preconceptions to shape the search direction.
3. Do not infer, speculate, or add information that is not supported by the retrieved content.
4. You must issue at least TWO and at most FIVE search rounds. Use searches to broaden coverage across relevant websites, discover alternative sources, and reduce dependence on a single search-result snapshot.
5. You must crawl at least TWO and at most FIVE links. Use crawled pages to inspect source content directly, verify key claims, and strengthen the evidence of the final report.
6. The search-round limit and crawl-link limit are independent.

Consolidate the key findings into a clear, coherent report of no more than 300 words."#;

/// Fill a `{placeholder}`-style template. Unknown placeholders are left as-is.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in vars {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}
