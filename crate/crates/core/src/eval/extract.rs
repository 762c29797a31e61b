//! Deterministic extraction of the chosen answer letter and the cited
//! article IDs from an assistant's free-text response (Polish or
//! English).
//!
//! Choice rules, tried in order, first hit wins:
//! 1. Polish answer phrase: `prawidłowa/poprawna/właściwa odpowiedź to: X`
//! 2. Polish terse: `odpowiedź: X`
//! 3. English answer phrase: `the correct answer is: X`
//! 4. English terse: `answer: X`
//! 5. A standalone `a)`, `b)` or `c)` opening the first non-empty line.
//!
//! Citations match `art.` / `Art.` / `Article` / `artykuł…` followed by a
//! number with an optional superscript (caret or Unicode digits);
//! paragraph (`§`) numbers are ignored, matching happens at article
//! granularity. Bare numbers listed in the fused-superscript map are
//! repaired (e.g. `1091` -> `109^1`).

use std::sync::LazyLock;

use regex::Regex;

use super::{Choice, ExtractedResponse};
use crate::corpus::{ArticleId, SuperscriptMap};

/// Extractor knobs: the fused-superscript repair map. The default map
/// covers the known superscripted families of the Polish Civil Code.
#[derive(Debug, Clone)]
pub struct ExtractorConfig {
    pub superscript_map: SuperscriptMap,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig { superscript_map: SuperscriptMap::civil_code() }
    }
}

static CHOICE_RULES: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    [
        r"(?i)(?:prawidłowa|poprawna|właściwa)\s+odpowiedź\s+(?:to\s*)?:?\s*\(?([abc])\b",
        r"(?i)\bodpowiedź\s*[:\-–]\s*\(?([abc])\b",
        r"(?i)(?:the\s+)?correct\s+answer\s+is\s*:?\s*\(?([abc])\b",
        r"(?i)\banswer\s*[:\-–]\s*\(?([abc])\b",
    ]
    .iter()
    .map(|p| Regex::new(p).unwrap())
    .collect()
});

static LEADING_CHOICE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\(?([abc])[\).]").unwrap());

static CITATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:art\.?|article|artykuł\w*)\s*(\d+)(?:\s*\^\s*(\d+)|([⁰¹²³⁴⁵⁶⁷⁸⁹]+))?")
        .unwrap()
});

fn superscript_digits_to_u32(s: &str) -> Option<u32> {
    const DIGITS: [char; 10] = ['⁰', '¹', '²', '³', '⁴', '⁵', '⁶', '⁷', '⁸', '⁹'];
    let mut value: u32 = 0;
    for c in s.chars() {
        let d = DIGITS.iter().position(|&x| x == c)? as u32;
        value = value.checked_mul(10)?.checked_add(d)?;
    }
    Some(value)
}

fn extract_choice(text: &str) -> Option<Choice> {
    for rule in CHOICE_RULES.iter() {
        if let Some(caps) = rule.captures(text) {
            return Choice::from_letter(&caps[1]);
        }
    }
    let first_line = text.lines().find(|l| !l.trim().is_empty())?;
    let caps = LEADING_CHOICE.captures(first_line.trim_start())?;
    Choice::from_letter(&caps[1])
}

fn extract_citations(text: &str, map: &SuperscriptMap) -> Vec<ArticleId> {
    let mut cited: Vec<ArticleId> = Vec::new();
    for caps in CITATION.captures_iter(text) {
        let Ok(base) = caps[1].parse::<u32>() else { continue };
        let id = if let Some(caret) = caps.get(2) {
            match caret.as_str().parse() {
                Ok(sup) => ArticleId::with_superscript(base, sup),
                Err(_) => continue,
            }
        } else if let Some(sup) = caps.get(3) {
            match superscript_digits_to_u32(sup.as_str()) {
                Some(sup) => ArticleId::with_superscript(base, sup),
                None => continue,
            }
        } else {
            map.resolve(base).unwrap_or(ArticleId::new(base))
        };
        if !cited.contains(&id) {
            cited.push(id);
        }
    }
    cited
}

/// Extract with the default configuration.
pub fn extract_structured(raw_text: &str) -> ExtractedResponse {
    extract_structured_with(raw_text, &ExtractorConfig::default())
}

/// Extract choice and citations from `raw_text`. Never fails: an
/// unextractable choice comes back as `None` and is scored incorrect;
/// citations are deduplicated in order of first mention.
pub fn extract_structured_with(raw_text: &str, config: &ExtractorConfig) -> ExtractedResponse {
    ExtractedResponse {
        choice: extract_choice(raw_text),
        cited_articles: extract_citations(raw_text, &config.superscript_map),
        raw_text: raw_text.to_string(),
    }
}
