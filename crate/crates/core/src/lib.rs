//! Statute retrieval over article-level chunks of a legal code.
//!
//! The crate covers the full pipeline of a code-grounded legal assistant:
//!
//! - [`corpus`]: segmentation of a legal act's plain text into articles
//!   with hierarchical metadata (books, titles, divisions, chapters,
//!   sections).
//! - [`scoring`]: positional fuzzy-match scoring of a document against a
//!   query, as a naive reference implementation and a bit-parallel kernel
//!   that produces bit-identical results.
//! - [`retrieval`]: an in-memory index returning the top-k scored
//!   articles, with an alternative cosine-similarity backend over
//!   externally supplied vectors.
//! - [`model`]: a chat-completion client abstraction with an HTTP
//!   implementation and a scripted mock for deterministic runs.
//! - [`agent`]: a single-agent loop that reformulates the question, calls
//!   the retriever tool, and answers with article citations.
//! - [`eval`]: an exam-style harness computing answer / context / joint
//!   scores over a question dataset.
//!
//! With the default `parallel` feature, corpus-scale scans fan out over
//! rayon; disabling it yields a fully sequential build with identical
//! output.

pub mod agent;
pub mod corpus;
pub mod eval;
pub mod model;
pub mod retrieval;
pub mod scoring;

pub use corpus::{Article, ArticleId, LegalAct, StructuralUnit, UnitKind};
pub use retrieval::{Index, ScoredDocument};
pub use scoring::{NormalizedText, Score};
