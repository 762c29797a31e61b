//! Bit-parallel backend for the document scoring function.
//!
//! The window scores are column sums of a bit matrix: row `j` is the
//! occupancy bitvector of the query's `j`-th character over the document,
//! shifted right by `j`, so that bit `i` of row `j` says "document
//! position `i + j` equals query position `j`". Summing the rows
//! column-wise gives every window score at once. The kernel processes 64
//! windows per block, accumulating rows into bit-sliced counters with
//! carry-save addition and extracting the block maximum (and its lowest
//! offset) by a radix scan over the counter slices, so each block costs
//! O(|query| + log |query|) word operations instead of 64·|query|
//! character comparisons.
//!
//! Only code points that occur in the query get occupancy masks; all
//! other document characters fall into a shared "never matches" bucket.
//! Queries of at most 64 characters take a specialized path whose rows
//! live in exactly two machine words per block, with pattern positions
//! grouped by character class so each class's words are loaded once.

use std::cell::RefCell;

use super::{NormalizedText, Score, ScoreError, ShortDocPolicy};

const CLASS_NONE: u16 = u16::MAX;
/// Code points below this bound resolve through a direct-index table;
/// this covers ASCII and the Latin Extended-A block (Polish diacritics).
const TABLE_LIMIT: usize = 0x250;

thread_local! {
    static OCC_SCRATCH: RefCell<Vec<u64>> = const { RefCell::new(Vec::new()) };
}

/// A query compiled for repeated scoring: per-character equivalence
/// classes plus the class of each query position. Build once per query
/// and share read-only across documents (and threads).
#[derive(Debug, Clone)]
pub struct CompiledQuery {
    chars: Vec<char>,
    table: Vec<u16>,
    spill: Vec<(char, u16)>,
    pos_class: Vec<u16>,
    /// Pattern positions grouped by class: positions of class `c` are
    /// `group_positions[group_offsets[c]..group_offsets[c + 1]]`.
    group_offsets: Vec<u32>,
    group_positions: Vec<u32>,
    n_classes: usize,
}

impl CompiledQuery {
    pub fn new(query: &NormalizedText) -> Result<Self, ScoreError> {
        if query.is_empty() {
            return Err(ScoreError::EmptyQuery);
        }
        let chars = query.chars().to_vec();
        assert!(chars.len() < CLASS_NONE as usize, "query too long to compile");

        let mut table = vec![CLASS_NONE; TABLE_LIMIT];
        let mut spill: Vec<(char, u16)> = Vec::new();
        let mut pos_class = Vec::with_capacity(chars.len());
        let mut n_classes = 0usize;

        for &c in &chars {
            let code = c as usize;
            let existing = if code < TABLE_LIMIT {
                table[code]
            } else {
                match spill.binary_search_by_key(&c, |&(ch, _)| ch) {
                    Ok(i) => spill[i].1,
                    Err(_) => CLASS_NONE,
                }
            };
            let class = if existing != CLASS_NONE {
                existing
            } else {
                let class = n_classes as u16;
                n_classes += 1;
                if code < TABLE_LIMIT {
                    table[code] = class;
                } else {
                    let at = spill.binary_search_by_key(&c, |&(ch, _)| ch).unwrap_err();
                    spill.insert(at, (c, class));
                }
                class
            };
            pos_class.push(class);
        }

        let mut group_offsets = vec![0u32; n_classes + 1];
        for &class in &pos_class {
            group_offsets[class as usize + 1] += 1;
        }
        for c in 0..n_classes {
            group_offsets[c + 1] += group_offsets[c];
        }
        let mut cursor = group_offsets.clone();
        let mut group_positions = vec![0u32; pos_class.len()];
        for (j, &class) in pos_class.iter().enumerate() {
            group_positions[cursor[class as usize] as usize] = j as u32;
            cursor[class as usize] += 1;
        }

        Ok(CompiledQuery {
            chars,
            table,
            spill,
            pos_class,
            group_offsets,
            group_positions,
            n_classes,
        })
    }

    pub fn query_len(&self) -> usize {
        self.chars.len()
    }

    #[inline]
    fn class_of(&self, c: char) -> u16 {
        let code = c as usize;
        if code < TABLE_LIMIT {
            self.table[code]
        } else {
            match self.spill.binary_search_by_key(&c, |&(ch, _)| ch) {
                Ok(i) => self.spill[i].1,
                Err(_) => CLASS_NONE,
            }
        }
    }

    pub fn score(&self, doc: &NormalizedText) -> Score {
        self.score_with(doc, ShortDocPolicy::Swap)
    }

    pub fn score_with(&self, doc: &NormalizedText, policy: ShortDocPolicy) -> Score {
        let m = self.chars.len();
        if doc.len() >= m {
            return self.scan(doc.chars());
        }
        match policy {
            ShortDocPolicy::Strict => Score { value: 0, best_offset: 0 },
            ShortDocPolicy::Swap => {
                if doc.is_empty() {
                    Score { value: 0, best_offset: 0 }
                } else {
                    // One-off swapped compilation: the document becomes
                    // the pattern and slides over the query.
                    let swapped = CompiledQuery::new(doc).expect("non-empty document");
                    swapped.scan(&self.chars)
                }
            }
        }
    }

    fn scan(&self, text: &[char]) -> Score {
        if self.chars.len() <= 64 {
            self.scan_word(text)
        } else {
            self.scan_wide(text)
        }
    }

    /// Build per-class occupancy bitvectors over `text` into `occ`
    /// (flattened, `stride` words per class, zero-padded).
    fn fill_occupancy(&self, text: &[char], occ: &mut Vec<u64>, stride: usize) {
        occ.clear();
        occ.resize(self.n_classes * stride, 0);
        for (t, &c) in text.iter().enumerate() {
            let class = self.class_of(c);
            if class != CLASS_NONE {
                occ[class as usize * stride + (t >> 6)] |= 1u64 << (t & 63);
            }
        }
    }

    /// Hot path for patterns of at most 64 characters: every block's row
    /// fragment spans the same two occupancy words per class.
    fn scan_word(&self, text: &[char]) -> Score {
        let m = self.chars.len();
        let n = text.len();
        debug_assert!(n >= m && m >= 1 && m <= 64);
        let windows = n - m + 1;
        let stride = n / 64 + 3;
        let levels = (usize::BITS - m.leading_zeros()) as usize;

        OCC_SCRATCH.with(|scratch| {
            let occ = &mut *scratch.borrow_mut();
            self.fill_occupancy(text, occ, stride);

            let mut best = Score { value: 0, best_offset: 0 };
            let mut first = true;

            for block in 0..windows.div_ceil(64) {
                let mut slices = [0u64; 7];

                for class in 0..self.n_classes {
                    let base = class * stride + block;
                    let lo = occ[base];
                    let hi = occ[base + 1];
                    let start = self.group_offsets[class] as usize;
                    let end = self.group_offsets[class + 1] as usize;
                    for &j in &self.group_positions[start..end] {
                        // Funnel shift; the double shift keeps j = 0 in
                        // defined-behavior territory.
                        let x = (lo >> j) | ((hi << (63 - j)) << 1);
                        let mut carry = x;
                        let mut level = 0;
                        while carry != 0 {
                            let s = slices[level];
                            slices[level] = s ^ carry;
                            carry = s & carry;
                            level += 1;
                        }
                    }
                }

                let base_window = block * 64;
                let remaining = windows - base_window;
                let valid: u64 = if remaining >= 64 { !0 } else { (1u64 << remaining) - 1 };

                let mut cand = valid;
                let mut value = 0usize;
                for level in (0..levels).rev() {
                    let hits = cand & slices[level];
                    if hits != 0 {
                        cand = hits;
                        value |= 1 << level;
                    }
                }

                if first || value > best.value {
                    best =
                        Score { value, best_offset: base_window + cand.trailing_zeros() as usize };
                    first = false;
                }
            }

            best
        })
    }

    /// General path for longer patterns: row fragments may start in any
    /// occupancy word, and counters need up to 33 slices.
    fn scan_wide(&self, text: &[char]) -> Score {
        let m = self.chars.len();
        let n = text.len();
        debug_assert!(n >= m && m > 64);
        let windows = n - m + 1;
        let stride = n / 64 + 3;
        let levels = (usize::BITS - m.leading_zeros()) as usize;

        OCC_SCRATCH.with(|scratch| {
            let occ = &mut *scratch.borrow_mut();
            self.fill_occupancy(text, occ, stride);

            let mut slices = vec![0u64; levels];
            let mut best = Score { value: 0, best_offset: 0 };
            let mut first = true;

            for block in 0..windows.div_ceil(64) {
                let base_window = block * 64;
                slices.fill(0);

                for (j, &class) in self.pos_class.iter().enumerate() {
                    let bit = base_window + j;
                    let w = class as usize * stride + (bit >> 6);
                    let r = (bit & 63) as u32;
                    let x = (occ[w] >> r) | ((occ[w + 1] << (63 - r)) << 1);

                    let mut carry = x;
                    let mut level = 0;
                    while carry != 0 {
                        let s = slices[level];
                        slices[level] = s ^ carry;
                        carry = s & carry;
                        level += 1;
                    }
                }

                let remaining = windows - base_window;
                let valid: u64 = if remaining >= 64 { !0 } else { (1u64 << remaining) - 1 };

                let mut cand = valid;
                let mut value = 0usize;
                for level in (0..levels).rev() {
                    let hits = cand & slices[level];
                    if hits != 0 {
                        cand = hits;
                        value |= 1 << level;
                    }
                }

                if first || value > best.value {
                    best =
                        Score { value, best_offset: base_window + cand.trailing_zeros() as usize };
                    first = false;
                }
            }

            best
        })
    }
}

/// Score `doc` against `query` with the bit-parallel kernel. Produces the
/// same value and best offset as
/// [`score_document_naive`](super::score_document_naive) on every input.
pub fn score_document_fast(
    doc: &NormalizedText,
    query: &NormalizedText,
) -> Result<Score, ScoreError> {
    score_document_fast_with(doc, query, ShortDocPolicy::Swap)
}

pub fn score_document_fast_with(
    doc: &NormalizedText,
    query: &NormalizedText,
    policy: ShortDocPolicy,
) -> Result<Score, ScoreError> {
    let compiled = CompiledQuery::new(query)?;
    Ok(compiled.score_with(doc, policy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{normalize_text, score_document_naive};

    fn fast(doc: &str, query: &str) -> Score {
        score_document_fast(&normalize_text(doc), &normalize_text(query)).unwrap()
    }

    #[test]
    fn matches_reference_example() {
        assert_eq!(fast("xxabcyy", "abc"), Score { value: 3, best_offset: 2 });
    }

    #[test]
    fn repeated_character_query() {
        // Single window "baab" vs "aaaa": matches at positions 1 and 2.
        assert_eq!(fast("baab", "aaaa"), Score { value: 2, best_offset: 0 });
    }

    #[test]
    fn short_doc_swaps_roles() {
        assert_eq!(fast("ab", "abc"), Score { value: 2, best_offset: 0 });
    }

    #[test]
    fn empty_doc_scores_zero() {
        assert_eq!(fast("", "abc"), Score { value: 0, best_offset: 0 });
    }

    #[test]
    fn empty_query_is_an_error() {
        let err = score_document_fast(&normalize_text("abc"), &normalize_text(""));
        assert_eq!(err, Err(ScoreError::EmptyQuery));
    }

    #[test]
    fn spill_classes_for_high_code_points() {
        // Characters beyond the direct table (e.g. „ and ” quotes).
        assert_eq!(fast("x„a”y", "„a”"), Score { value: 3, best_offset: 1 });
    }

    #[test]
    fn counter_saturation_at_full_window() {
        // 64-char text equal to the query: the column sum hits m exactly.
        let s = "a".repeat(64);
        let doc = normalize_text(&s);
        let query = normalize_text(&s);
        assert_eq!(
            score_document_fast(&doc, &query).unwrap(),
            Score { value: 64, best_offset: 0 }
        );
    }

    #[test]
    fn wide_patterns_agree_with_naive() {
        // Patterns beyond one machine word exercise the general path.
        let doc_s: String =
            (0..400).map(|i| char::from(b'a' + (i % 17) as u8)).collect();
        let doc = normalize_text(&doc_s);
        for m in [65usize, 100, 180] {
            let query_s: String = (0..m).map(|i| char::from(b'a' + (i % 5) as u8)).collect();
            let query = normalize_text(&query_s);
            assert_eq!(
                score_document_fast(&doc, &query).unwrap(),
                score_document_naive(&doc, &query).unwrap(),
                "m={m}"
            );
        }
    }

    #[test]
    fn block_boundaries_agree_with_naive() {
        // Lengths straddling the 64-window block boundary.
        for n in [63usize, 64, 65, 127, 128, 129, 200] {
            let doc_s: String = (0..n).map(|i| if i % 7 == 0 { 'a' } else { 'b' }).collect();
            let doc = normalize_text(&doc_s);
            let query = normalize_text("aab");
            let naive = score_document_naive(&doc, &query).unwrap();
            let fast = score_document_fast(&doc, &query).unwrap();
            assert_eq!(naive, fast, "n={n}");
        }
    }
}
