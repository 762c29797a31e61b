//! Shared helpers for integration tests: seeded text and corpus
//! generators, plus an independent brute-force scorer used as the oracle.

#![allow(dead_code)]

use kodeks_core::corpus::{Article, ArticleId, LegalAct};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Lowercase letters with Polish diacritics, no whitespace.
pub const POLISH_LETTERS: &[char] = &[
    'a', 'b', 'c', 'd', 'e', 'g', 'i', 'k', 'm', 'n', 'o', 'p', 'r', 's', 't', 'u', 'w', 'y',
    'z', 'ą', 'ć', 'ę', 'ł', 'ń', 'ó', 'ś', 'ź', 'ż',
];

/// Letters plus space and punctuation, the full scoring alphabet.
pub const POLISH_TEXT: &[char] = &[
    'a', 'b', 'c', 'd', 'e', 'g', 'i', 'k', 'm', 'n', 'o', 'p', 'r', 's', 't', 'u', 'w', 'y',
    'z', 'ą', 'ć', 'ę', 'ł', 'ń', 'ó', 'ś', 'ź', 'ż', ' ', '.', ',', '§',
];

/// Small dense alphabet for high-collision cases.
pub const DENSE: &[char] = &['a', 'b', 'ł'];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_text(rng: &mut ChaCha8Rng, len: usize, alphabet: &[char]) -> String {
    (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
}

/// A synthetic act of `n` articles with bodies drawn from the Polish
/// alphabet, `body_chars` characters each. Article `i` (0-based) carries
/// the unique token `unikat{i:04}` so tests can plant exact-match
/// queries.
pub fn synthetic_act(rng: &mut ChaCha8Rng, n: usize, body_chars: usize) -> LegalAct {
    let articles = (0..n)
        .map(|i| {
            let body = random_text(rng, body_chars, POLISH_TEXT);
            let text = format!("Art. {}. {} unikat{:04}", i + 1, body, i);
            Article::new(ArticleId::new(i as u32 + 1), text, vec![])
        })
        .collect();
    LegalAct { title: "USTAWA SYNTETYCZNA".into(), units: vec![], articles }
}

/// Independent oracle: literal triple-loop window scan (windows crossed
/// with positions), role swap for short documents. Kept free of any
/// scoring-module code on purpose.
pub fn brute_force_score(doc: &[char], query: &[char]) -> (usize, usize) {
    assert!(!query.is_empty());
    let (text, pattern) = if doc.len() >= query.len() { (doc, query) } else { (query, doc) };
    if pattern.is_empty() {
        return (0, 0);
    }
    let mut best_value = 0usize;
    let mut best_offset = 0usize;
    for i in 0..=(text.len() - pattern.len()) {
        let mut score = 0usize;
        for j in 0..pattern.len() {
            if text[i + j] == pattern[j] {
                score += 1;
            }
        }
        if score > best_value {
            best_value = score;
            best_offset = i;
        }
    }
    (best_value, best_offset)
}
