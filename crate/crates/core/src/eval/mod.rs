//! Exam-style evaluation harness.
//!
//! Loads a JSONL dataset of single-choice questions with gold answers and
//! gold article references, runs an assistant over every item (a raw
//! model call or the full agent loop), extracts the structured response,
//! and counts three metrics: correctly answered questions (answer
//! score), correctly referenced articles (context score), and both at
//! once (joint score). A context is correct when every gold article is
//! cited and at most two extra articles appear.

mod extract;

pub use extract::{extract_structured, extract_structured_with, ExtractorConfig};

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{run_agent, AgentConfig, AgentTranscript};
use crate::corpus::ArticleId;
use crate::model::{ChatMessage, ModelClient};
use crate::retrieval::Index;

/// Extra citations tolerated beyond the gold set before a context stops
/// counting as correct.
pub const EXTRA_CITATION_TOLERANCE: usize = 2;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset line {line}: {msg}")]
    Schema { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("agent subject requires an index")]
    MissingIndex,
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Answer option of a single-choice question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    A,
    B,
    C,
}

impl Choice {
    pub fn from_letter(s: &str) -> Option<Choice> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Some(Choice::A),
            "b" => Some(Choice::B),
            "c" => Some(Choice::C),
            _ => None,
        }
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let letter = match self {
            Choice::A => "a",
            Choice::B => "b",
            Choice::C => "c",
        };
        write!(f, "{letter}")
    }
}

/// The three option texts, keyed a/b/c. Exactly three are required.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    pub a: String,
    pub b: String,
    pub c: String,
}

/// One exam question with its gold answer and gold article references.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamItem {
    pub id: String,
    pub question: String,
    pub options: Options,
    pub gold_answer: Choice,
    pub gold_articles: Vec<ArticleId>,
}

/// The structured content pulled out of a free-text response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedResponse {
    pub choice: Option<Choice>,
    /// Deduplicated, order of first mention.
    pub cited_articles: Vec<ArticleId>,
    pub raw_text: String,
}

/// Per-item verdict. `joint_ok` is always `answer_ok && context_ok`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemResult {
    pub answer_ok: bool,
    pub context_ok: bool,
    pub joint_ok: bool,
}

/// Aggregate counts over a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_items: usize,
    pub answer_score: usize,
    pub context_score: usize,
    pub joint_score: usize,
    pub per_item: Vec<ItemResult>,
}

impl MetricsReport {
    /// Plain-text table with one row per assistant label.
    pub fn render_table(&self, assistant: &str) -> String {
        let header = format!(
            "{:<40} {:>12} {:>14} {:>12}",
            "Assistant", "Answer score", "Context score", "Joint score"
        );
        let row = format!(
            "{:<40} {:>12} {:>14} {:>12}",
            assistant, self.answer_score, self.context_score, self.joint_score
        );
        format!("{header}\n{row}\n({} questions)", self.n_items)
    }
}

/// Load a JSONL dataset: one [`ExamItem`] per line. Blank lines are
/// skipped; schema violations, empty gold references and duplicate IDs
/// are errors carrying the line number.
pub fn load_dataset(path: &Path) -> Result<Vec<ExamItem>, EvalError> {
    let raw = fs::read_to_string(path)?;
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let item: ExamItem = serde_json::from_str(line)
            .map_err(|e| EvalError::Schema { line: line_no, msg: e.to_string() })?;
        if item.gold_articles.is_empty() {
            return Err(EvalError::Schema {
                line: line_no,
                msg: "gold_articles must not be empty".into(),
            });
        }
        if !seen.insert(item.id.clone()) {
            return Err(EvalError::Schema {
                line: line_no,
                msg: format!("duplicate item id {:?}", item.id),
            });
        }
        items.push(item);
    }
    Ok(items)
}

/// Score one response against one item. The answer must match the gold
/// choice; the context must cite every gold article and stay within the
/// extra-citation tolerance.
pub fn score_item(item: &ExamItem, resp: &ExtractedResponse) -> ItemResult {
    let answer_ok = resp.choice == Some(item.gold_answer);
    let all_gold_cited = item.gold_articles.iter().all(|g| resp.cited_articles.contains(g));
    let within_tolerance =
        resp.cited_articles.len() <= item.gold_articles.len() + EXTRA_CITATION_TOLERANCE;
    let context_ok = all_gold_cited && within_tolerance;
    ItemResult { answer_ok, context_ok, joint_ok: answer_ok && context_ok }
}

/// Component-wise counts of true flags.
pub fn aggregate(results: &[ItemResult]) -> MetricsReport {
    MetricsReport {
        n_items: results.len(),
        answer_score: results.iter().filter(|r| r.answer_ok).count(),
        context_score: results.iter().filter(|r| r.context_ok).count(),
        joint_score: results.iter().filter(|r| r.joint_ok).count(),
        per_item: results.to_vec(),
    }
}

/// What answers the questions: a bare model call or the agent loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subject {
    RawModel,
    Agent,
}

/// How structured answers are extracted from the response text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorMode {
    /// Deterministic pattern rules.
    #[default]
    Patterns,
    /// Ask the model to emit `{"choice": ..., "articles": [...]}`; falls
    /// back to the pattern rules when that fails.
    Model,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub subject: Subject,
    pub agent: AgentConfig,
    /// Concurrent items; 1 runs strictly in dataset order. Scripted
    /// mocks replay a shared step list, so use 1 with a mock.
    pub parallelism: usize,
    pub extractor_mode: ExtractorMode,
}

impl EvalConfig {
    pub fn new(subject: Subject) -> Self {
        EvalConfig {
            subject,
            agent: AgentConfig::default(),
            parallelism: 1,
            extractor_mode: ExtractorMode::Patterns,
        }
    }
}

/// A per-item model failure, reported separately and scored incorrect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub item_id: String,
    pub error: String,
}

/// Audit record for one item: verdict, extraction, and the full
/// transcript of how the response was produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: String,
    pub result: ItemResult,
    pub choice: Option<Choice>,
    pub cited_articles: Vec<ArticleId>,
    pub raw_text: String,
    pub transcript: Option<AgentTranscript>,
    pub error: Option<String>,
}

/// Full evaluation output: the aggregate report plus per-item audit
/// records and the failure list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalOutcome {
    #[serde(flatten)]
    pub report: MetricsReport,
    pub failures: Vec<Failure>,
    pub items: Vec<ItemRecord>,
}

fn compose_user_prompt(item: &ExamItem) -> String {
    format!(
        "{}\na) {}\nb) {}\nc) {}",
        item.question, item.options.a, item.options.b, item.options.c
    )
}

fn model_extract(model: &dyn ModelClient, raw_text: &str) -> Option<ExtractedResponse> {
    let prompt = format!(
        "Extract the chosen answer letter and every cited article number from the exam \
         response below. Reply with only a JSON object of the form \
         {{\"choice\": \"a\"|\"b\"|\"c\"|null, \"articles\": [\"415\", \"109^1\"]}}.\n\n{raw_text}"
    );
    let messages = [ChatMessage::system("You extract structured data."), ChatMessage::user(&prompt)];
    let reply = model.chat(&messages, &[], 0.0).ok()?;
    let body = reply.content.trim().trim_start_matches("```json").trim_matches('`').trim();

    #[derive(Deserialize)]
    struct Extraction {
        choice: Option<String>,
        articles: Vec<String>,
    }
    let parsed: Extraction = serde_json::from_str(body).ok()?;
    let mut cited = Vec::new();
    for raw_id in parsed.articles {
        if let Ok(id) = raw_id.parse::<ArticleId>() {
            if !cited.contains(&id) {
                cited.push(id);
            }
        }
    }
    Some(ExtractedResponse {
        choice: parsed.choice.as_deref().and_then(Choice::from_letter),
        cited_articles: cited,
        raw_text: raw_text.to_string(),
    })
}

fn run_one(
    item: &ExamItem,
    index: Option<&Index>,
    model: &dyn ModelClient,
    config: &EvalConfig,
) -> ItemRecord {
    let prompt = compose_user_prompt(item);

    let outcome: Result<(String, AgentTranscript), String> = match config.subject {
        Subject::RawModel => {
            let messages = vec![
                ChatMessage::system(&config.agent.system_prompt),
                ChatMessage::user(&prompt),
            ];
            match model.chat(&messages, &[], config.agent.temperature) {
                Ok(reply) => {
                    let text = reply.content.clone();
                    let mut all = messages;
                    all.push(reply);
                    Ok((text, AgentTranscript { messages: all, tool_call_count: 0 }))
                }
                Err(e) => Err(e.to_string()),
            }
        }
        Subject::Agent => {
            let index = index.expect("checked by run_eval");
            match run_agent(&prompt, index, model, &config.agent) {
                Ok(answer) => Ok((answer.final_text, answer.transcript)),
                Err(e) => Err(e.to_string()),
            }
        }
    };

    match outcome {
        Ok((raw_text, transcript)) => {
            let extracted = match config.extractor_mode {
                ExtractorMode::Patterns => {
                    extract_structured_with(&raw_text, &config.agent.extractor)
                }
                ExtractorMode::Model => model_extract(model, &raw_text)
                    .unwrap_or_else(|| extract_structured_with(&raw_text, &config.agent.extractor)),
            };
            ItemRecord {
                item_id: item.id.clone(),
                result: score_item(item, &extracted),
                choice: extracted.choice,
                cited_articles: extracted.cited_articles,
                raw_text,
                transcript: Some(transcript),
                error: None,
            }
        }
        Err(error) => ItemRecord {
            item_id: item.id.clone(),
            result: ItemResult { answer_ok: false, context_ok: false, joint_ok: false },
            choice: None,
            cited_articles: Vec::new(),
            raw_text: String::new(),
            transcript: None,
            error: Some(error),
        },
    }
}

/// Evaluate every item and aggregate. Per-item model failures are
/// recorded in `failures` and scored incorrect, never dropped. With
/// `parallelism > 1` (and the `parallel` feature) items run concurrently
/// under that bound; results keep dataset order either way.
pub fn run_eval(
    items: &[ExamItem],
    index: Option<&Index>,
    model: &dyn ModelClient,
    config: &EvalConfig,
) -> Result<EvalOutcome, EvalError> {
    if config.subject == Subject::Agent && index.is_none() {
        return Err(EvalError::MissingIndex);
    }

    let records: Vec<ItemRecord> = run_items(items, index, model, config)?;

    let results: Vec<ItemResult> = records.iter().map(|r| r.result).collect();
    let failures = records
        .iter()
        .filter_map(|r| {
            r.error.as_ref().map(|e| Failure { item_id: r.item_id.clone(), error: e.clone() })
        })
        .collect();
    Ok(EvalOutcome { report: aggregate(&results), failures, items: records })
}

#[cfg(feature = "parallel")]
fn run_items(
    items: &[ExamItem],
    index: Option<&Index>,
    model: &dyn ModelClient,
    config: &EvalConfig,
) -> Result<Vec<ItemRecord>, EvalError> {
    if config.parallelism <= 1 {
        return Ok(items.iter().map(|item| run_one(item, index, model, config)).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))?;
    Ok(pool.install(|| {
        items.par_iter().map(|item| run_one(item, index, model, config)).collect()
    }))
}

#[cfg(not(feature = "parallel"))]
fn run_items(
    items: &[ExamItem],
    index: Option<&Index>,
    model: &dyn ModelClient,
    config: &EvalConfig,
) -> Result<Vec<ItemRecord>, EvalError> {
    Ok(items.iter().map(|item| run_one(item, index, model, config)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MockModelClient, MockStep};

    fn item(id: &str, gold: Choice, gold_articles: &[ArticleId]) -> ExamItem {
        ExamItem {
            id: id.into(),
            question: format!("Pytanie {id}?"),
            options: Options { a: "opcja a".into(), b: "opcja b".into(), c: "opcja c".into() },
            gold_answer: gold,
            gold_articles: gold_articles.to_vec(),
        }
    }

    fn resp(choice: Option<Choice>, cited: &[ArticleId]) -> ExtractedResponse {
        ExtractedResponse { choice, cited_articles: cited.to_vec(), raw_text: String::new() }
    }

    #[test]
    fn exact_match_scores_fully() {
        let gold = [ArticleId::with_superscript(109, 1)];
        let result = score_item(&item("q", Choice::C, &gold), &resp(Some(Choice::C), &gold));
        assert_eq!(result, ItemResult { answer_ok: true, context_ok: true, joint_ok: true });
    }

    #[test]
    fn three_extra_citations_break_the_context() {
        let gold = [ArticleId::with_superscript(109, 1)];
        let cited = [
            ArticleId::with_superscript(109, 1),
            ArticleId::new(415),
            ArticleId::new(416),
            ArticleId::new(417),
        ];
        let result = score_item(&item("q", Choice::C, &gold), &resp(Some(Choice::C), &cited));
        assert_eq!(result, ItemResult { answer_ok: true, context_ok: false, joint_ok: false });
    }

    #[test]
    fn two_extra_citations_stay_within_tolerance() {
        let gold = [ArticleId::with_superscript(109, 1)];
        let cited =
            [ArticleId::with_superscript(109, 1), ArticleId::new(415), ArticleId::new(416)];
        let result = score_item(&item("q", Choice::C, &gold), &resp(Some(Choice::C), &cited));
        assert!(result.context_ok);
    }

    #[test]
    fn wrong_choice_with_right_context() {
        let gold = [ArticleId::with_superscript(109, 1)];
        let result = score_item(&item("q", Choice::C, &gold), &resp(Some(Choice::B), &gold));
        assert_eq!(result, ItemResult { answer_ok: false, context_ok: true, joint_ok: false });
    }

    #[test]
    fn missing_choice_scores_incorrect() {
        let gold = [ArticleId::new(5)];
        let result = score_item(&item("q", Choice::A, &gold), &resp(None, &gold));
        assert!(!result.answer_ok);
        assert!(result.context_ok);
    }

    #[test]
    fn aggregate_counts_componentwise() {
        let results = [
            ItemResult { answer_ok: true, context_ok: true, joint_ok: true },
            ItemResult { answer_ok: true, context_ok: false, joint_ok: false },
            ItemResult { answer_ok: false, context_ok: true, joint_ok: false },
        ];
        let report = aggregate(&results);
        assert_eq!(
            (report.answer_score, report.context_score, report.joint_score),
            (2, 2, 1)
        );
        assert_eq!(report.n_items, 3);
    }

    #[test]
    fn aggregate_of_nothing_is_zero() {
        let report = aggregate(&[]);
        assert_eq!(
            (report.n_items, report.answer_score, report.context_score, report.joint_score),
            (0, 0, 0, 0)
        );
    }

    #[test]
    fn aggregate_upper_bound() {
        let results =
            vec![ItemResult { answer_ok: true, context_ok: true, joint_ok: true }; 146];
        let report = aggregate(&results);
        assert_eq!(
            (report.answer_score, report.context_score, report.joint_score),
            (146, 146, 146)
        );
    }

    fn write_dataset(lines: &[&str]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exam.jsonl");
        std::fs::write(&path, lines.join("\n")).unwrap();
        (dir, path)
    }

    const VALID_ITEM: &str = r#"{"id": "q1", "question": "Prokura:", "options": {"a": "zawsze", "b": "nigdy", "c": "chyba że przepis"}, "gold_answer": "c", "gold_articles": ["109^1"]}"#;

    #[test]
    fn dataset_loads_valid_items() {
        let (_dir, path) = write_dataset(&[
            VALID_ITEM,
            r#"{"id": "q2", "question": "Wina?", "options": {"a": "x", "b": "y", "c": "z"}, "gold_answer": "a", "gold_articles": ["415"]}"#,
            "",
            r#"{"id": "q3", "question": "Zdolność?", "options": {"a": "x", "b": "y", "c": "z"}, "gold_answer": "b", "gold_articles": ["11", "12"]}"#,
        ]);
        let items = load_dataset(&path).unwrap();
        assert_eq!(items.len(), 3);
        assert_eq!(items[0].gold_articles, vec![ArticleId::with_superscript(109, 1)]);
    }

    #[test]
    fn two_option_item_is_a_schema_error() {
        let (_dir, path) = write_dataset(&[
            r#"{"id": "q1", "question": "?", "options": {"a": "x", "b": "y"}, "gold_answer": "a", "gold_articles": ["1"]}"#,
        ]);
        assert!(matches!(load_dataset(&path), Err(EvalError::Schema { line: 1, .. })));
    }

    #[test]
    fn empty_gold_articles_is_a_schema_error() {
        let (_dir, path) = write_dataset(&[
            r#"{"id": "q1", "question": "?", "options": {"a": "x", "b": "y", "c": "z"}, "gold_answer": "a", "gold_articles": []}"#,
        ]);
        assert!(matches!(load_dataset(&path), Err(EvalError::Schema { line: 1, .. })));
    }

    #[test]
    fn duplicate_ids_are_a_schema_error() {
        let (_dir, path) = write_dataset(&[VALID_ITEM, VALID_ITEM]);
        assert!(matches!(load_dataset(&path), Err(EvalError::Schema { line: 2, .. })));
    }

    fn three_items() -> Vec<ExamItem> {
        vec![
            item("q1", Choice::C, &[ArticleId::new(13)]),
            item("q2", Choice::A, &[ArticleId::new(16)]),
            item("q3", Choice::B, &[ArticleId::new(415)]),
        ]
    }

    fn two_right_one_wrong_script() -> Vec<MockStep> {
        vec![
            MockStep::Final("Prawidłowa odpowiedź to: c). Zgodnie z art. 13 k.c.".into()),
            MockStep::Final("Odpowiedź: a). Podstawa prawna: art. 16 k.c.".into()),
            MockStep::Final("Odpowiedź: c). Podstawa prawna: art. 999 k.c.".into()),
        ]
    }

    #[test]
    fn scripted_raw_model_run_scores_two_of_three() {
        let items = three_items();
        let model = MockModelClient::new(two_right_one_wrong_script());
        let outcome =
            run_eval(&items, None, &model, &EvalConfig::new(Subject::RawModel)).unwrap();
        assert_eq!(outcome.report.answer_score, 2);
        assert_eq!(outcome.report.context_score, 2);
        assert_eq!(outcome.report.joint_score, 2);
        assert!(outcome.failures.is_empty());
        assert!(outcome.items.iter().all(|r| r.transcript.is_some()));
    }

    #[test]
    fn model_failure_is_recorded_not_dropped() {
        let items = three_items();
        let model = MockModelClient::new(vec![
            MockStep::Final("Odpowiedź: c). art. 13 k.c.".into()),
            MockStep::Error("timeout".into()),
            MockStep::Final("Odpowiedź: b). art. 415 k.c.".into()),
        ]);
        let outcome =
            run_eval(&items, None, &model, &EvalConfig::new(Subject::RawModel)).unwrap();
        assert_eq!(outcome.report.n_items, 3);
        assert_eq!(outcome.failures.len(), 1);
        assert_eq!(outcome.failures[0].item_id, "q2");
        let q2 = &outcome.report.per_item[1];
        assert!(!q2.answer_ok && !q2.context_ok && !q2.joint_ok);
    }

    #[test]
    fn eval_runs_are_deterministic() {
        let items = three_items();
        let a = run_eval(
            &items,
            None,
            &MockModelClient::new(two_right_one_wrong_script()),
            &EvalConfig::new(Subject::RawModel),
        )
        .unwrap();
        let b = run_eval(
            &items,
            None,
            &MockModelClient::new(two_right_one_wrong_script()),
            &EvalConfig::new(Subject::RawModel),
        )
        .unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn agent_subject_needs_an_index() {
        let items = three_items();
        let model = MockModelClient::new(vec![]);
        let err = run_eval(&items, None, &model, &EvalConfig::new(Subject::Agent));
        assert!(matches!(err, Err(EvalError::MissingIndex)));
    }

    #[test]
    fn model_extractor_parses_json_reply() {
        let items = vec![item("q1", Choice::C, &[ArticleId::new(13)])];
        let model = MockModelClient::new(vec![
            MockStep::Final("Swobodny tekst wskazujący na c oraz art. 13.".into()),
            // Second step answers the extraction prompt.
            MockStep::Final(r#"{"choice": "c", "articles": ["13"]}"#.into()),
        ]);
        let mut config = EvalConfig::new(Subject::RawModel);
        config.extractor_mode = ExtractorMode::Model;
        let outcome = run_eval(&items, None, &model, &config).unwrap();
        assert_eq!(outcome.report.joint_score, 1);
    }

    #[test]
    fn report_table_mirrors_row_shape() {
        let report = aggregate(&[ItemResult { answer_ok: true, context_ok: true, joint_ok: true }]);
        let table = report.render_table("agent");
        assert!(table.contains("Answer score"));
        assert!(table.contains("Context score"));
        assert!(table.contains("Joint score"));
        assert!(table.contains("agent"));
    }
}
