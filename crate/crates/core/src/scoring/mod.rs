//! Positional fuzzy-match scoring.
//!
//! A document is scored against a query by sliding a query-length window
//! over the document and counting index-aligned equal characters inside
//! each window; the document score is the maximum over all windows. Two
//! backends implement that contract: [`score_document_naive`], a direct
//! window-by-window scan, and [`score_document_fast`], a bit-parallel
//! kernel that returns bit-identical results (value and offset) on every
//! input.

mod fast;
mod naive;

pub use fast::{score_document_fast, score_document_fast_with, CompiledQuery};
pub use naive::{score_document_naive, score_document_naive_with};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::{is_nfc, UnicodeNormalization};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScoreError {
    #[error("query is empty after normalization")]
    EmptyQuery,
    #[error("part length {part} does not match query length {query}")]
    LengthMismatch { part: usize, query: usize },
}

/// Text prepared for character-level comparison: NFC, lowercased,
/// whitespace runs collapsed to a single space, trimmed.
///
/// Polish diacritics survive normalization unchanged; the comparison unit
/// is the normalized Unicode code point, so spaces and punctuation
/// participate in matching like letters do.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedText {
    chars: Vec<char>,
    origin: Option<Vec<usize>>,
}

impl NormalizedText {
    pub fn new(s: &str) -> Self {
        Self::build(s, false)
    }

    /// As [`NormalizedText::new`], additionally recording for every
    /// normalized position the char index it came from in the input.
    ///
    /// The map is only produced when the input is already in NFC (true
    /// for ordinary text); otherwise composition shifts positions and the
    /// map is omitted.
    pub fn with_origin_map(s: &str) -> Self {
        Self::build(s, true)
    }

    fn build(s: &str, want_origin: bool) -> Self {
        let track = want_origin && is_nfc(s);
        let mut chars = Vec::with_capacity(s.len() / 2);
        let mut origin = if track { Some(Vec::with_capacity(s.len() / 2)) } else { None };

        let mut pending_space: Option<usize> = None;
        let push = |c: char, idx: usize, chars: &mut Vec<char>, origin: &mut Option<Vec<usize>>| {
            chars.push(c);
            if let Some(map) = origin {
                map.push(idx);
            }
        };

        // When the input is not NFC the source iterator recomposes it and
        // char indices no longer line up, so the map is dropped up front.
        let source: Vec<(usize, char)> = if is_nfc(s) {
            s.chars().enumerate().collect()
        } else {
            s.nfc().enumerate().collect()
        };

        for (idx, c) in source {
            if c.is_whitespace() {
                if pending_space.is_none() {
                    pending_space = Some(idx);
                }
                continue;
            }
            if let Some(ws_idx) = pending_space.take() {
                if !chars.is_empty() {
                    push(' ', ws_idx, &mut chars, &mut origin);
                }
            }
            for lc in c.to_lowercase() {
                push(lc, idx, &mut chars, &mut origin);
            }
        }

        NormalizedText { chars, origin }
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    /// Map from normalized index to original char index, when available.
    pub fn origin_map(&self) -> Option<&[usize]> {
        self.origin.as_deref()
    }

    pub fn as_string(&self) -> String {
        self.chars.iter().collect()
    }
}

/// Normalize text for scoring. Empty input yields empty output.
pub fn normalize_text(s: &str) -> NormalizedText {
    NormalizedText::new(s)
}

/// A document's positional match score: the maximum window score and the
/// lowest window start achieving it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Score {
    pub value: usize,
    pub best_offset: usize,
}

/// How to score a document shorter than the query.
///
/// The window loop never runs in that case, so a literal reading yields a
/// zero score no matter how similar the texts are. `Swap` instead slides
/// the document over the query, which preserves the matching-letter count
/// and makes the score symmetric; `Strict` keeps the literal zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShortDocPolicy {
    #[default]
    Swap,
    Strict,
}

/// Count positions where `part` and `query` hold the same code point.
/// Both slices must have equal length.
pub fn score_part(part: &[char], query: &[char]) -> Result<usize, ScoreError> {
    if part.len() != query.len() {
        return Err(ScoreError::LengthMismatch { part: part.len(), query: query.len() });
    }
    let mut score = 0;
    for i in 0..part.len() {
        if part[i] == query[i] {
            score += 1;
        }
    }
    Ok(score)
}
