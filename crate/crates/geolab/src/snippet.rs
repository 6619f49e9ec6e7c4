//! Query-conditioned snippet extraction for synthetic pages.
//!
//! Pipeline: clean the page text, split into passages, parse the agent query
//! (strict first, lenient on failure), score passages with a BM25-style
//! term-weighted function, then cut a word-boundary window of at most
//! `max_len` characters from the best passage. If nothing matches, fall back
//! to the first `max_len` characters of the cleaned text.
//!
//! Strict query grammar: bare terms, double-quoted phrases, and the uppercase
//! connectives `AND` / `OR`. Bare terms are disjunctive; `AND` makes both of
//! its operands required. Lenient parsing strips quotes and connectives and
//! treats everything as a disjunctive bag of words.

use serde::{Deserialize, Serialize};

/// Default snippet length bound in characters.
pub const DEFAULT_SNIPPET_MAX_LEN: usize = 150;

/// BM25 term-frequency saturation parameter.
pub const BM25_K1: f64 = 1.2;
/// BM25 length-normalization parameter.
pub const BM25_B: f64 = 0.75;

/// Plain text derived from a page body: no heading markers, link syntax, or
/// HTML tags; single-spaced within paragraphs, paragraphs separated by blank
/// lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanText {
    pub text: String,
    pub source_page_id: String,
}

impl CleanText {
    pub fn paragraphs(&self) -> impl Iterator<Item = &str> {
        self.text.split("\n\n").filter(|p| !p.is_empty())
    }

    /// The full text with paragraph separators flattened to single spaces.
    pub fn flattened(&self) -> String {
        self.text.replace("\n\n", " ")
    }
}

/// A search-result snippet. `matched` is true when the snippet came from a
/// scored passage rather than the first-`max_len` fallback.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub text: String,
    pub matched: bool,
}

/// Strip Markdown and lightweight HTML from `raw`, preserving paragraph
/// boundaries as blank lines.
pub fn clean_text(raw: &str, page_id: &str) -> CleanText {
    let no_html = strip_html(raw);
    let mut paragraphs: Vec<String> = Vec::new();
    let mut current = String::new();
    for line in no_html.lines() {
        let cleaned = clean_markdown_line(line);
        if cleaned.is_empty() {
            if !current.is_empty() {
                paragraphs.push(std::mem::take(&mut current));
            }
        } else {
            if !current.is_empty() {
                current.push(' ');
            }
            current.push_str(&cleaned);
        }
    }
    if !current.is_empty() {
        paragraphs.push(current);
    }
    CleanText {
        text: paragraphs.join("\n\n"),
        source_page_id: page_id.to_string(),
    }
}

fn strip_html(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut in_tag = false;
    for c in raw.chars() {
        match c {
            '<' => in_tag = true,
            '>' if in_tag => in_tag = false,
            _ if !in_tag => out.push(c),
            _ => {}
        }
    }
    out
}

/// Clean one line of Markdown: heading/emphasis/list markers removed, links
/// and images replaced by their anchor text, inline code markers dropped.
fn clean_markdown_line(line: &str) -> String {
    let mut s = line.trim();
    // Heading markers.
    while let Some(rest) = s.strip_prefix('#') {
        s = rest;
    }
    // List and blockquote markers.
    s = s.trim_start();
    for marker in ["- ", "* ", "+ ", "> "] {
        if let Some(rest) = s.strip_prefix(marker) {
            s = rest;
            break;
        }
    }
    // Numbered list marker ("1. ", "12. ").
    let trimmed = s.trim_start();
    let digits = trimmed.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 && trimmed[digits..].starts_with(". ") {
        s = &trimmed[digits + 2..];
    }

    let mut out = String::with_capacity(s.len());
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            // Image syntax: drop "![", the alt text passes through as a link.
            '!' if i + 1 < chars.len() && chars[i + 1] == '[' => {
                i += 1;
            }
            // Link syntax: keep anchor text, drop the (url) part.
            '[' => {
                if let Some(close) = find_from(&chars, i + 1, ']') {
                    if close + 1 < chars.len() && chars[close + 1] == '(' {
                        if let Some(paren) = find_from(&chars, close + 2, ')') {
                            out.extend(&chars[i + 1..close]);
                            i = paren + 1;
                            continue;
                        }
                    }
                }
                // Not link syntax: drop the bare bracket.
                i += 1;
                continue;
            }
            ']' => {}
            '*' | '_' | '`' => {}
            _ => out.push(c),
        }
        i += 1;
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn find_from(chars: &[char], start: usize, target: char) -> Option<usize> {
    chars[start..].iter().position(|&c| c == target).map(|p| p + start)
}

// ---------------------------------------------------------------------------
// Query parsing
// ---------------------------------------------------------------------------

/// One matchable unit of a parsed query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryUnit {
    /// Lowercased token sequence; length 1 for a plain term, >1 for a phrase.
    pub tokens: Vec<String>,
    /// Required units come from explicit `AND` connectives.
    pub required: bool,
}

/// Parsed query: disjunctive scoring over units, with `required` units acting
/// as conjunctive constraints.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedQuery {
    pub units: Vec<QueryUnit>,
    /// True when the lenient fallback produced this parse.
    pub lenient: bool,
}

pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[derive(Debug, PartialEq)]
enum RawToken {
    Term(String),
    Phrase(String),
    And,
    Or,
}

fn lex_strict(query: &str) -> Result<Vec<RawToken>, String> {
    let mut tokens = Vec::new();
    let mut rest = query.trim();
    while !rest.is_empty() {
        if let Some(after) = rest.strip_prefix('"') {
            let close = after.find('"').ok_or("unbalanced quote")?;
            let phrase = &after[..close];
            if phrase.trim().is_empty() {
                return Err("empty phrase".into());
            }
            tokens.push(RawToken::Phrase(phrase.to_string()));
            rest = after[close + 1..].trim_start();
        } else {
            let end = rest.find([' ', '"']).unwrap_or(rest.len());
            let word = &rest[..end];
            match word {
                "AND" => tokens.push(RawToken::And),
                "OR" => tokens.push(RawToken::Or),
                _ => tokens.push(RawToken::Term(word.to_string())),
            }
            rest = rest[end..].trim_start();
        }
    }
    Ok(tokens)
}

/// Strict parse honoring phrase quotes and `AND`/`OR`. Fails on unbalanced
/// quotes, empty phrases, and dangling or doubled connectives.
pub fn parse_strict(query: &str) -> Result<ParsedQuery, String> {
    let raw = lex_strict(query)?;
    if raw.is_empty() {
        return Ok(ParsedQuery::default());
    }
    if matches!(raw.first(), Some(RawToken::And | RawToken::Or))
        || matches!(raw.last(), Some(RawToken::And | RawToken::Or))
    {
        return Err("dangling operator".into());
    }
    let mut units: Vec<QueryUnit> = Vec::new();
    let mut prev_was_op = false;
    let mut pending_and = false;
    for token in raw {
        match token {
            RawToken::And | RawToken::Or => {
                if prev_was_op {
                    return Err("consecutive operators".into());
                }
                if matches!(token, RawToken::And) {
                    pending_and = true;
                    if let Some(last) = units.last_mut() {
                        last.required = true;
                    }
                }
                prev_was_op = true;
            }
            RawToken::Term(t) => {
                let tokens = tokenize(&t);
                if !tokens.is_empty() {
                    units.push(QueryUnit { tokens, required: pending_and });
                }
                pending_and = false;
                prev_was_op = false;
            }
            RawToken::Phrase(p) => {
                let tokens = tokenize(&p);
                if tokens.is_empty() {
                    return Err("empty phrase".into());
                }
                units.push(QueryUnit { tokens, required: pending_and });
                pending_and = false;
                prev_was_op = false;
            }
        }
    }
    Ok(ParsedQuery { units, lenient: false })
}

/// Lenient parse: quotes and connectives stripped, bag-of-words disjunction.
pub fn parse_lenient(query: &str) -> ParsedQuery {
    let cleaned = query.replace('"', " ");
    let units = cleaned
        .split_whitespace()
        .filter(|w| *w != "AND" && *w != "OR")
        .flat_map(tokenize)
        .map(|t| QueryUnit { tokens: vec![t], required: false })
        .collect();
    ParsedQuery { units, lenient: true }
}

/// Strict parse with lenient fallback.
pub fn parse_query(query: &str) -> ParsedQuery {
    parse_strict(query).unwrap_or_else(|_| parse_lenient(query))
}

// ---------------------------------------------------------------------------
// Passage scoring
// ---------------------------------------------------------------------------

fn count_unit(tokens: &[String], unit: &QueryUnit) -> usize {
    if unit.tokens.len() == 1 {
        tokens.iter().filter(|t| **t == unit.tokens[0]).count()
    } else if tokens.len() >= unit.tokens.len() {
        tokens
            .windows(unit.tokens.len())
            .filter(|w| *w == unit.tokens.as_slice())
            .count()
    } else {
        0
    }
}

/// BM25-style score of one passage against the parsed query. Returns 0 when
/// a required unit is absent or no unit matches at all.
fn score_passage(
    passage_tokens: &[String],
    query: &ParsedQuery,
    dfs: &[usize],
    passage_count: usize,
    avg_len: f64,
) -> f64 {
    let mut any = false;
    let mut score = 0.0;
    for (unit, &df) in query.units.iter().zip(dfs) {
        let tf = count_unit(passage_tokens, unit) as f64;
        if tf == 0.0 {
            if unit.required {
                return 0.0;
            }
            continue;
        }
        any = true;
        let n = passage_count as f64;
        let idf = (1.0 + (n - df as f64 + 0.5) / (df as f64 + 0.5)).ln();
        let len_norm = 1.0 - BM25_B + BM25_B * (passage_tokens.len() as f64 / avg_len.max(1.0));
        score += idf * (tf * (BM25_K1 + 1.0)) / (tf + BM25_K1 * len_norm);
    }
    if any {
        score
    } else {
        0.0
    }
}

/// Truncate `text` to at most `max_len` characters at a word boundary, with
/// no ellipsis. A single over-long word is hard-cut at the bound.
fn word_boundary_truncate(text: &str, max_len: usize) -> String {
    let chars: Vec<char> = text.chars().collect();
    if chars.len() <= max_len {
        return text.trim_end().to_string();
    }
    let mut cut = max_len;
    // chars[max_len] exists; if it's not whitespace, back up to the last space.
    if !chars[max_len].is_whitespace() {
        match chars[..max_len].iter().rposition(|c| c.is_whitespace()) {
            Some(pos) => cut = pos,
            None => cut = max_len,
        }
    }
    chars[..cut].iter().collect::<String>().trim_end().to_string()
}

/// Word-start offsets (character indices) of `text`.
fn word_starts(chars: &[char]) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut prev_space = true;
    for (i, c) in chars.iter().enumerate() {
        if !c.is_whitespace() && prev_space {
            starts.push(i);
        }
        prev_space = c.is_whitespace();
    }
    starts
}

/// Best ≤`max_len` window of `passage`: maximizes matched-unit occurrences,
/// ties resolved by earliest start.
fn best_window(passage: &str, query: &ParsedQuery, max_len: usize) -> String {
    let chars: Vec<char> = passage.chars().collect();
    if chars.len() <= max_len {
        return passage.trim_end().to_string();
    }
    let starts = word_starts(&chars);
    let mut best_text = word_boundary_truncate(passage, max_len);
    let mut best_count = window_match_count(&best_text, query);
    for &start in &starts[1..] {
        let rest: String = chars[start..].iter().collect();
        let candidate = word_boundary_truncate(&rest, max_len);
        let count = window_match_count(&candidate, query);
        if count > best_count {
            best_count = count;
            best_text = candidate;
        }
    }
    best_text
}

fn window_match_count(window: &str, query: &ParsedQuery) -> usize {
    let tokens = tokenize(window);
    query.units.iter().map(|u| count_unit(&tokens, u)).sum()
}

/// Extract the query-conditioned snippet from cleaned page text.
pub fn extract_snippet(clean: &CleanText, query: &str, max_len: usize) -> Snippet {
    let parsed = parse_query(query);
    let passages: Vec<&str> = clean.paragraphs().collect();
    let tokenized: Vec<Vec<String>> = passages.iter().map(|p| tokenize(p)).collect();

    if !parsed.units.is_empty() && !passages.is_empty() {
        let passage_count = passages.len();
        let avg_len =
            tokenized.iter().map(|t| t.len()).sum::<usize>() as f64 / passage_count as f64;
        let dfs: Vec<usize> = parsed
            .units
            .iter()
            .map(|u| tokenized.iter().filter(|t| count_unit(t, u) > 0).count())
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for (idx, tokens) in tokenized.iter().enumerate() {
            let score = score_passage(tokens, &parsed, &dfs, passage_count, avg_len);
            if score > 0.0 {
                let better = match best {
                    None => true,
                    // Earliest passage wins ties.
                    Some((_, best_score)) => score > best_score,
                };
                if better {
                    best = Some((idx, score));
                }
            }
        }
        if let Some((idx, _)) = best {
            return Snippet {
                text: best_window(passages[idx], &parsed, max_len),
                matched: true,
            };
        }
    }

    Snippet {
        text: word_boundary_truncate(&clean.flattened(), max_len),
        matched: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean(raw: &str) -> CleanText {
        clean_text(raw, "p")
    }

    #[test]
    fn clean_strips_heading_and_link() {
        let c = clean("## Title\n\n[spec](https://x)");
        assert_eq!(c.text, "Title\n\nspec");
    }

    #[test]
    fn clean_strips_html_tags() {
        let c = clean("<b>ANC</b> earbuds");
        assert_eq!(c.text, "ANC earbuds");
    }

    #[test]
    fn clean_collapses_whitespace_and_keeps_paragraphs() {
        let c = clean("a   b\nc\n\n\nd  e");
        assert_eq!(c.text, "a b c\n\nd e");
    }

    #[test]
    fn clean_empty_input_is_empty() {
        assert_eq!(clean("").text, "");
    }

    #[test]
    fn strict_parser_handles_phrases_and_operators() {
        let q = parse_strict("\"budget anc\" AND earbuds OR cheap").unwrap();
        assert_eq!(q.units.len(), 3);
        assert_eq!(q.units[0].tokens, vec!["budget", "anc"]);
        assert!(q.units[0].required);
        assert!(q.units[1].required);
        assert!(!q.units[2].required);
    }

    #[test]
    fn strict_parser_failures_fall_back_to_lenient() {
        for bad in ["\"unbalanced", "AND foo", "foo AND", "a AND AND b", "\"\""] {
            assert!(parse_strict(bad).is_err(), "{bad} should fail strict parse");
            let lenient = parse_query(bad);
            assert!(lenient.lenient);
        }
    }

    #[test]
    fn plain_queries_parse_identically_strict_and_lenient() {
        let q = "budget anc earbuds under 100";
        let strict = parse_strict(q).unwrap();
        let lenient = parse_lenient(q);
        assert_eq!(strict.units, lenient.units);
    }

    #[test]
    fn snippet_comes_from_matching_paragraph() {
        let page = "Intro paragraph about audio gear and options.\n\n\
                    Another filler paragraph mentioning nothing relevant.\n\n\
                    The budget ANC earbuds in this lineup punch far above their price.";
        let c = clean(page);
        let s = extract_snippet(&c, "budget ANC", 150);
        assert!(s.matched);
        assert!(s.text.contains("budget ANC earbuds"));
    }

    #[test]
    fn empty_query_falls_back_to_first_150() {
        let body = "word ".repeat(100);
        let c = clean(&body);
        let s = extract_snippet(&c, "", 150);
        assert!(!s.matched);
        assert!(s.text.chars().count() <= 150);
        assert!(c.flattened().starts_with(&s.text));
    }

    #[test]
    fn short_page_no_match_returns_entire_text() {
        let c = clean("A short page about kettles.");
        let s = extract_snippet(&c, "zebra quantum", 150);
        assert!(!s.matched);
        assert_eq!(s.text, "A short page about kettles.");
    }

    #[test]
    fn matched_snippet_is_at_most_150_chars_and_word_bounded() {
        let long = format!(
            "{} budget anc earbuds {}",
            "filler words here ".repeat(20),
            "trailing words follow on and on ".repeat(20)
        );
        let c = clean(&long);
        let s = extract_snippet(&c, "budget anc", 150);
        assert!(s.matched);
        assert!(s.text.chars().count() <= 150);
        // The earliest maximal window wins ties, so both terms are present
        // even if the window starts before them.
        assert!(s.text.contains("budget anc"));
        // Word-boundary: no partial trailing word (snippet is a substring that
        // ends exactly at a word end).
        assert!(c.flattened().contains(&s.text));
    }

    #[test]
    fn deterministic_for_same_inputs() {
        let c = clean("alpha beta gamma.\n\ndelta epsilon budget anc zeta.");
        let a = extract_snippet(&c, "budget anc", 150);
        let b = extract_snippet(&c, "budget anc", 150);
        assert_eq!(a, b);
    }

    #[test]
    fn required_unit_missing_forces_fallback() {
        let c = clean("This paragraph has budget gear.\n\nThis one has anc units.");
        // Both terms required but never co-occur in one passage.
        let s = extract_snippet(&c, "budget AND anc", 150);
        assert!(!s.matched);
    }

    #[test]
    fn equal_score_passages_resolve_to_earliest() {
        let c = clean("one two budget anc three.\n\nfour five budget anc six.");
        let s = extract_snippet(&c, "budget anc", 150);
        assert!(s.matched);
        assert!(s.text.starts_with("one two"));
    }

    #[test]
    fn over_long_single_word_is_hard_cut() {
        let word = "x".repeat(400);
        let c = clean(&word);
        let s = extract_snippet(&c, "", 150);
        assert_eq!(s.text.chars().count(), 150);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn length_bound_holds(raw in ".{0,800}", query in ".{0,60}") {
                let c = clean_text(&raw, "p");
                let s = extract_snippet(&c, &query, 150);
                prop_assert!(s.text.chars().count() <= 150);
            }

            #[test]
            fn matched_snippet_contains_a_query_term(
                words in proptest::collection::vec("[a-z]{2,8}", 5..40),
                term in "[a-z]{3,8}",
            ) {
                let body = format!("{} {term} {}", words[..2].join(" "), words[2..].join(" "));
                let c = clean_text(&body, "p");
                let s = extract_snippet(&c, &term, 150);
                prop_assert!(s.matched);
                prop_assert!(tokenize(&s.text).contains(&term));
            }

            #[test]
            fn plain_queries_equal_under_both_parsers(
                body in "[a-z ]{0,300}",
                query in "[a-z ]{0,40}",
            ) {
                let c = clean_text(&body, "p");
                let strict = parse_strict(&query).expect("plain query parses strictly");
                let lenient = parse_lenient(&query);
                prop_assert_eq!(strict.units, lenient.units);
                let a = extract_snippet(&c, &query, 150);
                let b = extract_snippet(&c, &query, 150);
                prop_assert_eq!(a, b);
            }
        }
    }
}
