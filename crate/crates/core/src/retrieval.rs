//! In-memory index over a corpus and top-k retrieval.
//!
//! [`build_index`] normalizes every article text once; [`retrieve`] scans
//! the whole corpus with the bit-parallel scorer and returns the top-k
//! articles, sorted by score with corpus order breaking ties. With the
//! `parallel` feature the scan fans out over rayon; the merge step is
//! deterministic either way, so thread count never changes a result.
//!
//! The alternative backend ranks by cosine similarity over externally
//! supplied embedding vectors ([`load_vectors`], [`retrieve_vector`]);
//! the engine never computes embeddings itself, though
//! [`EmbeddingClient`] can fetch them from a provider endpoint.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Article, ArticleId, LegalAct};
use crate::scoring::{normalize_text, CompiledQuery, NormalizedText, Score, ScoreError};

/// Number of documents retrieved when the caller does not say otherwise.
pub const DEFAULT_TOP_K: usize = 50;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("corpus has no articles")]
    EmptyCorpus,
    #[error("query is empty after normalization")]
    EmptyQuery,
    #[error("vector dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vector file line {line}: unknown article id {id}")]
    UnknownArticleId { line: usize, id: ArticleId },
    #[error("vector file line {line}: {msg}")]
    InvalidVector { line: usize, msg: String },
    #[error("no vector for article {id}")]
    MissingVector { id: ArticleId },
    #[error("no vectors attached to the index")]
    VectorsNotAttached,
    #[error("query vector invalid: {0}")]
    InvalidQueryVector(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("embedding endpoint failed: {0}")]
    Embedding(String),
}

/// Retrieval backend selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    PositionalMatch,
    VectorCosine,
}

/// One embedding record from a vector file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorRecord {
    pub article_id: ArticleId,
    pub vector: Vec<f64>,
}

struct IndexEntry {
    article: Arc<Article>,
    normalized: NormalizedText,
}

/// Immutable index over one corpus: articles in source order, each with
/// its normalized text precomputed, plus optional embedding vectors.
/// Safe to share across threads.
pub struct Index {
    entries: Vec<IndexEntry>,
    vectors: Option<Vec<Vec<f64>>>,
    dim: usize,
}

/// Build an index from a parsed act. Deterministic: the same act always
/// produces the same index.
pub fn build_index(act: &LegalAct) -> Result<Index, RetrievalError> {
    if act.articles.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    let entries = act
        .articles
        .iter()
        .map(|a| IndexEntry {
            article: Arc::new(a.clone()),
            normalized: NormalizedText::with_origin_map(&a.text),
        })
        .collect();
    Ok(Index { entries, vectors: None, dim: 0 })
}

impl Index {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn articles(&self) -> impl Iterator<Item = &Arc<Article>> {
        self.entries.iter().map(|e| &e.article)
    }

    pub fn article(&self, pos: usize) -> &Arc<Article> {
        &self.entries[pos].article
    }

    /// Normalized text of the article at `pos` (corpus order).
    pub fn normalized(&self, pos: usize) -> &NormalizedText {
        &self.entries[pos].normalized
    }

    pub fn has_vectors(&self) -> bool {
        self.vectors.is_some()
    }

    pub fn vector_dim(&self) -> Option<usize> {
        self.vectors.as_ref().map(|_| self.dim)
    }

    /// Attach one embedding per article. Every article must be covered,
    /// all vectors must share one dimension, and zero or non-finite
    /// vectors are rejected.
    pub fn attach_vectors(&mut self, records: &[VectorRecord]) -> Result<(), RetrievalError> {
        let mut slots: Vec<Option<Vec<f64>>> = vec![None; self.entries.len()];
        let mut dim = 0usize;
        for (i, record) in records.iter().enumerate() {
            let line = i + 1;
            validate_vector(&record.vector)
                .map_err(|msg| RetrievalError::InvalidVector { line, msg })?;
            if dim == 0 {
                dim = record.vector.len();
            } else if record.vector.len() != dim {
                return Err(RetrievalError::DimensionMismatch {
                    expected: dim,
                    got: record.vector.len(),
                });
            }
            let pos = self
                .entries
                .iter()
                .position(|e| e.article.id == record.article_id)
                .ok_or(RetrievalError::UnknownArticleId { line, id: record.article_id })?;
            slots[pos] = Some(record.vector.clone());
        }
        let mut vectors = Vec::with_capacity(slots.len());
        for (pos, slot) in slots.into_iter().enumerate() {
            match slot {
                Some(v) => vectors.push(v),
                None => {
                    return Err(RetrievalError::MissingVector { id: self.entries[pos].article.id })
                }
            }
        }
        self.vectors = Some(vectors);
        self.dim = dim;
        Ok(())
    }
}

fn validate_vector(v: &[f64]) -> Result<(), String> {
    if v.is_empty() {
        return Err("vector is empty".into());
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err("vector has non-finite components".into());
    }
    if v.iter().all(|&x| x == 0.0) {
        return Err("zero vector".into());
    }
    Ok(())
}

/// Relevance of a retrieved document under either backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relevance {
    Positional(Score),
    Cosine(f64),
}

impl Relevance {
    pub fn positional(&self) -> Option<Score> {
        match self {
            Relevance::Positional(s) => Some(*s),
            Relevance::Cosine(_) => None,
        }
    }

    pub fn cosine(&self) -> Option<f64> {
        match self {
            Relevance::Cosine(c) => Some(*c),
            Relevance::Positional(_) => None,
        }
    }
}

/// One ranked retrieval result.
#[derive(Debug, Clone)]
pub struct ScoredDocument {
    pub article: Arc<Article>,
    pub relevance: Relevance,
    /// 1-based rank in the result list.
    pub rank: usize,
    /// Position of the article in corpus order.
    pub corpus_pos: usize,
}

/// Retrieve the top-`k` articles for `query` using the positional-match
/// scorer. Results are sorted by score, non-increasing; equal scores keep
/// corpus order. Returns `min(k, corpus size)` documents.
pub fn retrieve(index: &Index, query: &str, k: usize) -> Result<Vec<ScoredDocument>, RetrievalError> {
    let compiled = compile_query(query)?;
    let scores = score_all(index, &compiled);
    Ok(rank_positional(index, scores, k))
}

/// As [`retrieve`], but always scanning on the calling thread. Exists so
/// the parallel scan has an in-tree baseline to compare against.
pub fn retrieve_sequential(
    index: &Index,
    query: &str,
    k: usize,
) -> Result<Vec<ScoredDocument>, RetrievalError> {
    let compiled = compile_query(query)?;
    let scores = score_all_sequential(index, &compiled);
    Ok(rank_positional(index, scores, k))
}

fn compile_query(query: &str) -> Result<CompiledQuery, RetrievalError> {
    let normalized = normalize_text(query);
    CompiledQuery::new(&normalized).map_err(|e| match e {
        ScoreError::EmptyQuery | ScoreError::LengthMismatch { .. } => RetrievalError::EmptyQuery,
    })
}

#[cfg(feature = "parallel")]
fn score_all(index: &Index, compiled: &CompiledQuery) -> Vec<Score> {
    index.entries.par_iter().map(|e| compiled.score(&e.normalized)).collect()
}

#[cfg(not(feature = "parallel"))]
fn score_all(index: &Index, compiled: &CompiledQuery) -> Vec<Score> {
    score_all_sequential(index, compiled)
}

fn score_all_sequential(index: &Index, compiled: &CompiledQuery) -> Vec<Score> {
    index.entries.iter().map(|e| compiled.score(&e.normalized)).collect()
}

fn rank_positional(index: &Index, scores: Vec<Score>, k: usize) -> Vec<ScoredDocument> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].value.cmp(&scores[a].value).then(a.cmp(&b)));
    order
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, pos)| ScoredDocument {
            article: Arc::clone(&index.entries[pos].article),
            relevance: Relevance::Positional(scores[pos]),
            rank: i + 1,
            corpus_pos: pos,
        })
        .collect()
}

/// Load embedding records from a JSONL file: one
/// `{"article_id": "...", "vector": [...]}` object per line.
pub fn load_vectors(path: &Path) -> Result<Vec<VectorRecord>, RetrievalError> {
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: VectorRecord = serde_json::from_str(&line)
            .map_err(|e| RetrievalError::InvalidVector { line: i + 1, msg: e.to_string() })?;
        records.push(record);
    }
    Ok(records)
}

/// Rank all articles by cosine similarity to `query_vector`. Same sort
/// and tie rules as [`retrieve`].
pub fn retrieve_vector(
    index: &Index,
    query_vector: &[f64],
    k: usize,
) -> Result<Vec<ScoredDocument>, RetrievalError> {
    let vectors = index.vectors.as_ref().ok_or(RetrievalError::VectorsNotAttached)?;
    validate_vector(query_vector).map_err(RetrievalError::InvalidQueryVector)?;
    if query_vector.len() != index.dim {
        return Err(RetrievalError::DimensionMismatch {
            expected: index.dim,
            got: query_vector.len(),
        });
    }

    let query_norm = norm(query_vector);
    let similarities: Vec<f64> =
        vectors.iter().map(|v| dot(query_vector, v) / (query_norm * norm(v))).collect();

    let mut order: Vec<usize> = (0..similarities.len()).collect();
    order.sort_by(|&a, &b| {
        similarities[b].partial_cmp(&similarities[a]).expect("finite similarities").then(a.cmp(&b))
    });
    Ok(order
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, pos)| ScoredDocument {
            article: Arc::clone(&index.entries[pos].article),
            relevance: Relevance::Cosine(similarities[pos]),
            rank: i + 1,
            corpus_pos: pos,
        })
        .collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Client for an external embedding provider: POSTs `{"texts": [...]}`
/// and expects `{"vectors": [[...], ...]}` back.
pub struct EmbeddingClient {
    url: String,
    retries: u32,
    http: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingClient {
    pub fn new(url: String, timeout_secs: u64, retries: u32) -> Result<Self, RetrievalError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(timeout_secs))
            .build()
            .map_err(|e| RetrievalError::Embedding(e.to_string()))?;
        Ok(EmbeddingClient { url, retries, http })
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        let mut last_err = String::new();
        for _ in 0..=self.retries {
            match self.try_embed(texts) {
                Ok(vectors) => return Ok(vectors),
                Err(e) => last_err = e,
            }
        }
        Err(RetrievalError::Embedding(last_err))
    }

    fn try_embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, String> {
        let response = self
            .http
            .post(&self.url)
            .json(&EmbedRequest { texts })
            .send()
            .map_err(|e| e.to_string())?;
        if !response.status().is_success() {
            return Err(format!("status {}", response.status()));
        }
        let body: EmbedResponse = response.json().map_err(|e| e.to_string())?;
        if body.vectors.len() != texts.len() {
            return Err(format!("expected {} vectors, got {}", texts.len(), body.vectors.len()));
        }
        Ok(body.vectors)
    }
}
