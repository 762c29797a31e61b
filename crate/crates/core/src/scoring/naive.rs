//! Reference implementation of the document scoring function: slide a
//! query-length window over the document, score every window with
//! [`score_part`](super::score_part), keep the maximum.

use super::{score_part, NormalizedText, Score, ScoreError, ShortDocPolicy};

/// Score `doc` against `query` with the default short-document policy
/// ([`ShortDocPolicy::Swap`]).
pub fn score_document_naive(
    doc: &NormalizedText,
    query: &NormalizedText,
) -> Result<Score, ScoreError> {
    score_document_naive_with(doc, query, ShortDocPolicy::Swap)
}

pub fn score_document_naive_with(
    doc: &NormalizedText,
    query: &NormalizedText,
    policy: ShortDocPolicy,
) -> Result<Score, ScoreError> {
    if query.is_empty() {
        return Err(ScoreError::EmptyQuery);
    }
    if doc.len() >= query.len() {
        return Ok(scan(doc.chars(), query.chars()));
    }
    match policy {
        ShortDocPolicy::Strict => Ok(Score { value: 0, best_offset: 0 }),
        ShortDocPolicy::Swap => {
            if doc.is_empty() {
                Ok(Score { value: 0, best_offset: 0 })
            } else {
                // Roles swap: the document slides over the query, so the
                // offset indexes into the query.
                Ok(scan(query.chars(), doc.chars()))
            }
        }
    }
}

fn scan(text: &[char], pattern: &[char]) -> Score {
    let mut best = Score { value: 0, best_offset: 0 };
    for start in 0..=(text.len() - pattern.len()) {
        let window = &text[start..start + pattern.len()];
        let value = score_part(window, pattern).expect("window length equals pattern length");
        if value > best.value {
            best = Score { value, best_offset: start };
        }
    }
    best
}
