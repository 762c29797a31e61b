//! Segmentation of a legal act's plain text into article-level documents.
//!
//! The input is the TXT export of a single act. [`normalize_source`]
//! strips non-normative matter (footnote lines, bracketed editorial
//! notes, publication headers and footers), [`parse_act`] assigns every
//! remaining line to either a structural-unit header or an article body,
//! and [`save_corpus`] / [`load_corpus`] persist the result as JSON.
//!
//! Recognized structural headers, one per line, outermost to innermost:
//! `KSIĘGA`, `TYTUŁ`, `DZIAŁ`, `ROZDZIAŁ`, `Oddział`. An article starts
//! at a line matching `Art. <digits>[<superscript>].` where the
//! superscript is written with a caret (`109^1`) or Unicode superscript
//! digits (`109¹`); a configurable map additionally repairs IDs whose
//! superscript was flattened into the number by PDF extraction
//! (`1091` -> `109^1`).

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version tag written into every corpus file.
pub const CORPUS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("input contains no article marker")]
    EmptyInput,
    #[error("line {line}: structural header cannot be classified: {text:?}")]
    MalformedHeader { line: usize, text: String },
    #[error("duplicate article id {id}")]
    DuplicateArticle { id: ArticleId },
    #[error("unparsable article marker {marker:?}")]
    UnparsableMarker { marker: String },
    #[error("act has no articles")]
    EmptyAct,
    #[error("corpus schema mismatch: found version {found}, expected {expected}")]
    SchemaMismatch { found: u32, expected: u32 },
    #[error("corpus file invalid: {0}")]
    InvalidCorpus(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("corpus file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Canonical identifier of one article: a base ordinal plus an optional
/// amendment superscript. Renders as `Art. 415` or `Art. 109^1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArticleId {
    pub base: u32,
    pub superscript: Option<u32>,
}

impl ArticleId {
    pub fn new(base: u32) -> Self {
        ArticleId { base, superscript: None }
    }

    pub fn with_superscript(base: u32, superscript: u32) -> Self {
        ArticleId { base, superscript: Some(superscript) }
    }

    /// Compact form without the `Art.` prefix, e.g. `415` or `109^1`.
    /// Used in corpus files, vector files and datasets.
    pub fn compact(&self) -> String {
        match self.superscript {
            Some(s) => format!("{}^{}", self.base, s),
            None => self.base.to_string(),
        }
    }
}

impl fmt::Display for ArticleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Art. {}", self.compact())
    }
}

impl FromStr for ArticleId {
    type Err = CorpusError;

    /// Accepts the compact form (`415`, `109^1`, `109¹`), the rendered
    /// form (`Art. 109^1`), and the marker form with a trailing dot.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        canonical_article_id(s, &SuperscriptMap::empty())
    }
}

impl Serialize for ArticleId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.compact())
    }
}

impl<'de> Deserialize<'de> for ArticleId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Known articles whose superscript got fused into the number during
/// PDF-to-text conversion, e.g. `1091` standing for `109^1`.
#[derive(Debug, Clone, Default)]
pub struct SuperscriptMap {
    fused: HashMap<u32, ArticleId>,
}

impl SuperscriptMap {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Superscripted article families of the Polish Civil Code whose
    /// fused forms exceed the code's highest plain article number and are
    /// therefore unambiguous: the 109 (commercial power of attorney),
    /// 449 (product liability) and 709 (leasing) families.
    pub fn civil_code() -> Self {
        let mut map = Self::default();
        for sup in 1..=9 {
            map.insert_fused(1090 + sup, ArticleId::with_superscript(109, sup));
        }
        for sup in 1..=11 {
            map.insert_fused(4490 + sup, ArticleId::with_superscript(449, sup));
        }
        for sup in 1..=18 {
            map.insert_fused(7090 + sup, ArticleId::with_superscript(709, sup));
        }
        map
    }

    /// Declare that the bare number `fused` stands for `id`.
    pub fn insert_fused(&mut self, fused: u32, id: ArticleId) {
        self.fused.insert(fused, id);
    }

    pub fn resolve(&self, fused: u32) -> Option<ArticleId> {
        self.fused.get(&fused).copied()
    }
}

/// Kinds of structural units a legal act is divided into, outermost
/// first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnitKind {
    Book,
    Title,
    Division,
    Chapter,
    Section,
}

impl UnitKind {
    fn depth(self) -> usize {
        match self {
            UnitKind::Book => 0,
            UnitKind::Title => 1,
            UnitKind::Division => 2,
            UnitKind::Chapter => 3,
            UnitKind::Section => 4,
        }
    }
}

/// One structural unit (book, title, ...) and the half-open range of
/// article indices it covers. Multi-line headers keep their line breaks
/// in `label`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralUnit {
    pub kind: UnitKind,
    pub label: String,
    pub span: Range<usize>,
}

/// One article: the retrieval document. `text` holds the full source
/// lines of the article, marker included, so that concatenating headers
/// and articles reproduces the cleaned act.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Article {
    pub id: ArticleId,
    pub text: String,
    pub hierarchy_path: Vec<String>,
    pub char_len: usize,
    pub approx_token_len: usize,
}

impl Article {
    pub fn new(id: ArticleId, text: String, hierarchy_path: Vec<String>) -> Self {
        let char_len = text.chars().count();
        Article { id, text, hierarchy_path, char_len, approx_token_len: approx_tokens(char_len) }
    }
}

/// chars/4 heuristic for context budgeting.
pub fn approx_tokens(char_len: usize) -> usize {
    char_len.div_ceil(4)
}

/// A parsed legal act: title lines, structural units in encounter order,
/// articles in source order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LegalAct {
    pub title: String,
    pub units: Vec<StructuralUnit>,
    pub articles: Vec<Article>,
}

impl LegalAct {
    /// Rebuild the cleaned source text from title, unit headers and
    /// article bodies, in original order. Blank lines are not restored.
    pub fn reconstruct_text(&self) -> String {
        let mut parts: Vec<&str> = Vec::new();
        if !self.title.is_empty() {
            parts.push(&self.title);
        }
        for i in 0..=self.articles.len() {
            // Units are stored in encounter order, so emitting every unit
            // opened at article index i (including empty ones) preserves
            // the original interleaving.
            for unit in &self.units {
                if unit.span.start == i {
                    parts.push(&unit.label);
                }
            }
            if let Some(article) = self.articles.get(i) {
                parts.push(&article.text);
            }
        }
        parts.join("\n")
    }
}

static FOOTNOTE_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[⁰¹²³⁴⁵⁶⁷⁸⁹]+\)\s").unwrap());
static BRACKETED_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\[.*\]$").unwrap());
static PUBLICATION_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:©\s?Kancelaria Sejmu.*|Dz\.\s?U\..*|\d{4}-\d{2}-\d{2}|\d+)$").unwrap()
});
static ARTICLE_MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^Art\.\s+(\d+)(?:\^(\d+)|([⁰¹²³⁴⁵⁶⁷⁸⁹]+))?\.(?:\s|$)").unwrap()
});
static MARKER_ONLY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:Art\.)?\s*(\d+)\s*(?:\^(\d+)|([⁰¹²³⁴⁵⁶⁷⁸⁹]+))?\.?$").unwrap()
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

/// Strip non-normative lines from a raw TXT export:
/// footnote lines (superscript index followed by `)`), lines fully
/// enclosed in square brackets, publication headers and footers
/// (chancellery stamps, journal references, bare dates and page numbers).
/// Everything else is preserved verbatim; line endings are normalized to
/// `\n`.
pub fn normalize_source(raw: &str) -> Result<String, CorpusError> {
    let unified = raw.replace("\r\n", "\n").replace('\r', "\n");
    if !unified.lines().any(|l| ARTICLE_MARKER.is_match(l.trim_end())) {
        return Err(CorpusError::EmptyInput);
    }
    let kept: Vec<&str> = unified
        .lines()
        .filter(|line| {
            let t = line.trim();
            !(FOOTNOTE_LINE.is_match(t)
                || BRACKETED_LINE.is_match(t)
                || PUBLICATION_LINE.is_match(t))
        })
        .collect();
    Ok(kept.join("\n"))
}

/// Parse a standalone article marker into its canonical ID, applying the
/// fused-superscript `map` to bare numbers it declares. Idempotent on the
/// rendered form of its own output.
pub fn canonical_article_id(marker: &str, map: &SuperscriptMap) -> Result<ArticleId, CorpusError> {
    let trimmed = marker.trim();
    let caps = MARKER_ONLY
        .captures(trimmed)
        .ok_or_else(|| CorpusError::UnparsableMarker { marker: marker.to_string() })?;
    let base: u32 = caps[1]
        .parse()
        .map_err(|_| CorpusError::UnparsableMarker { marker: marker.to_string() })?;
    if let Some(caret) = caps.get(2) {
        let sup = caret
            .as_str()
            .parse()
            .map_err(|_| CorpusError::UnparsableMarker { marker: marker.to_string() })?;
        return Ok(ArticleId::with_superscript(base, sup));
    }
    if let Some(sup) = caps.get(3) {
        let sup = superscript_digits_to_u32(sup.as_str())
            .ok_or_else(|| CorpusError::UnparsableMarker { marker: marker.to_string() })?;
        return Ok(ArticleId::with_superscript(base, sup));
    }
    Ok(map.resolve(base).unwrap_or(ArticleId::new(base)))
}

/// Parser knobs: currently just the fused-superscript repair map.
#[derive(Debug, Clone, Default)]
pub struct ParserConfig {
    pub superscript_map: SuperscriptMap,
}

/// Parse result: the act plus non-fatal findings (e.g. article ordinals
/// out of order, which real codes produce through amendments).
#[derive(Debug, Clone)]
pub struct Parsed {
    pub act: LegalAct,
    pub warnings: Vec<String>,
}

struct OpenUnit {
    kind: UnitKind,
    label: String,
    start: usize,
    order: usize,
}

fn header_kind(line: &str) -> Option<UnitKind> {
    let keyword = line.split_whitespace().next()?;
    match keyword {
        "KSIĘGA" => Some(UnitKind::Book),
        "TYTUŁ" => Some(UnitKind::Title),
        "DZIAŁ" => Some(UnitKind::Division),
        "ROZDZIAŁ" => Some(UnitKind::Chapter),
        "Oddział" | "ODDZIAŁ" => Some(UnitKind::Section),
        _ => None,
    }
}

fn is_bare_keyword(line: &str) -> bool {
    let t = line.trim().trim_end_matches(['.', ':']);
    matches!(t, "KSIĘGA" | "TYTUŁ" | "DZIAŁ" | "ROZDZIAŁ" | "Oddział" | "ODDZIAŁ")
}

fn close_units_deeper_than(
    depth: usize,
    open: &mut Vec<OpenUnit>,
    closed: &mut Vec<(usize, StructuralUnit)>,
    n_articles: usize,
) {
    while open.last().is_some_and(|u| u.kind.depth() >= depth) {
        let u = open.pop().unwrap();
        closed.push((
            u.order,
            StructuralUnit { kind: u.kind, label: u.label, span: u.start..n_articles },
        ));
    }
}

fn flush_article(
    body: &mut Option<(ArticleId, Vec<String>)>,
    articles: &mut Vec<Article>,
    open: &[OpenUnit],
) -> Result<(), CorpusError> {
    if let Some((id, lines)) = body.take() {
        if articles.iter().any(|a| a.id == id) {
            return Err(CorpusError::DuplicateArticle { id });
        }
        let path = open.iter().map(|u| u.label.clone()).collect();
        articles.push(Article::new(id, lines.join("\n"), path));
    }
    Ok(())
}

/// Segment cleaned text into a [`LegalAct`]. Every non-blank line lands
/// in exactly one place: the act title (lines before the first header or
/// marker), a unit label (header line plus its caption lines), or an
/// article body.
pub fn parse_act(clean: &str, config: &ParserConfig) -> Result<Parsed, CorpusError> {
    let mut title_lines: Vec<&str> = Vec::new();
    let mut open_units: Vec<OpenUnit> = Vec::new();
    let mut closed_units: Vec<(usize, StructuralUnit)> = Vec::new();
    let mut articles: Vec<Article> = Vec::new();
    let mut current_body: Option<(ArticleId, Vec<String>)> = None;
    let mut unit_order = 0usize;
    let mut warnings: Vec<String> = Vec::new();

    for (line_idx, line) in clean.lines().enumerate() {
        let line_no = line_idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let trimmed = line.trim_end();

        if let Some(caps) = ARTICLE_MARKER.captures(trimmed) {
            flush_article(&mut current_body, &mut articles, &open_units)?;
            let marker = caps.get(0).unwrap().as_str();
            let id = canonical_article_id(marker, &config.superscript_map)?;
            current_body = Some((id, vec![trimmed.to_string()]));
            continue;
        }

        if is_bare_keyword(trimmed) {
            return Err(CorpusError::MalformedHeader { line: line_no, text: trimmed.to_string() });
        }

        if let Some(kind) = header_kind(trimmed) {
            flush_article(&mut current_body, &mut articles, &open_units)?;
            close_units_deeper_than(kind.depth(), &mut open_units, &mut closed_units, articles.len());
            open_units.push(OpenUnit {
                kind,
                label: trimmed.to_string(),
                start: articles.len(),
                order: unit_order,
            });
            unit_order += 1;
            continue;
        }

        if let Some((_, body)) = current_body.as_mut() {
            body.push(trimmed.to_string());
        } else if let Some(unit) = open_units.last_mut() {
            // Caption line right under a header, e.g. the part name
            // following "KSIĘGA PIERWSZA".
            unit.label.push('\n');
            unit.label.push_str(trimmed);
        } else {
            title_lines.push(trimmed);
        }
    }

    flush_article(&mut current_body, &mut articles, &open_units)?;
    close_units_deeper_than(0, &mut open_units, &mut closed_units, articles.len());

    if articles.is_empty() {
        return Err(CorpusError::EmptyInput);
    }

    for pair in articles.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let key = |id: &ArticleId| (id.base, id.superscript.unwrap_or(0));
        if key(&b.id) <= key(&a.id) {
            warnings.push(format!("article {} follows {} out of order", b.id, a.id));
        }
    }

    closed_units.sort_by_key(|(order, _)| *order);
    let units = closed_units.into_iter().map(|(_, u)| u).collect();

    Ok(Parsed {
        act: LegalAct { title: title_lines.join("\n"), units, articles },
        warnings,
    })
}

#[derive(Serialize, Deserialize)]
struct CorpusFile {
    schema_version: u32,
    title: String,
    units: Vec<StructuralUnit>,
    articles: Vec<ArticleRecord>,
}

#[derive(Serialize, Deserialize)]
struct ArticleRecord {
    id: ArticleId,
    text: String,
    path: Vec<String>,
    char_len: usize,
}

/// Write the act as a JSON corpus file. Acts without articles are
/// rejected.
pub fn save_corpus(act: &LegalAct, path: &Path) -> Result<(), CorpusError> {
    if act.articles.is_empty() {
        return Err(CorpusError::EmptyAct);
    }
    let file = CorpusFile {
        schema_version: CORPUS_SCHEMA_VERSION,
        title: act.title.clone(),
        units: act.units.clone(),
        articles: act
            .articles
            .iter()
            .map(|a| ArticleRecord {
                id: a.id,
                text: a.text.clone(),
                path: a.hierarchy_path.clone(),
                char_len: a.char_len,
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file)?;
    fs::write(path, json)?;
    Ok(())
}

/// Load a corpus file saved by [`save_corpus`]; `load(save(x)) == x`.
pub fn load_corpus(path: &Path) -> Result<LegalAct, CorpusError> {
    let json = fs::read_to_string(path)?;
    let file: CorpusFile = serde_json::from_str(&json)?;
    if file.schema_version != CORPUS_SCHEMA_VERSION {
        return Err(CorpusError::SchemaMismatch {
            found: file.schema_version,
            expected: CORPUS_SCHEMA_VERSION,
        });
    }
    if file.articles.is_empty() {
        return Err(CorpusError::EmptyAct);
    }
    let mut articles = Vec::with_capacity(file.articles.len());
    let mut seen = std::collections::HashSet::new();
    for record in file.articles {
        if !seen.insert(record.id) {
            return Err(CorpusError::DuplicateArticle { id: record.id });
        }
        let article = Article::new(record.id, record.text, record.path);
        if article.char_len != record.char_len {
            return Err(CorpusError::InvalidCorpus(format!(
                "char_len of {} is {}, text has {} chars",
                article.id, record.char_len, article.char_len
            )));
        }
        articles.push(article);
    }
    Ok(LegalAct { title: file.title, units: file.units, articles })
}
