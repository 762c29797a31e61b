//! Single-agent query flow: the model receives the user question,
//! reformulates it into retrieval queries for the `retriever` tool (up to
//! a fixed call budget), and finalizes an answer citing article IDs.
//!
//! Retrieved articles are serialized into the tool response as ranked
//! `«Art. id» text` blocks, truncated by [`fit_context`] so a response
//! never exceeds the configured token budget. Citations in the final
//! answer are checked against the set of article IDs actually shown to
//! the model; anything outside that set is flagged as ungrounded rather
//! than suppressed.

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::corpus::ArticleId;
use crate::eval::{extract_structured_with, ExtractorConfig};
use crate::model::{ChatMessage, ModelClient, ModelError, ToolSpec};
use crate::retrieval::{retrieve, Index, RetrievalError, ScoredDocument};

/// Name under which the retriever is declared to the model.
pub const RETRIEVER_TOOL_NAME: &str = "retriever";

/// System prompt used for exam-style evaluation runs.
pub const DEFAULT_SYSTEM_PROMPT: &str = "You are a helpful assistant specializing \
in Polish law. You will receive questions from \
an exam, each consisting of a question or an \
incomplete sentence followed by three possible \
answers labeled a, b, and c.\n\n\
Your task is to:\n\
1. Choose the correct answer.\n\
2. Provide a detailed explanation for \
your choice.\n\
3. Refer to the relevant article(s) \
in the one of polish regulations.\n\n\
Please ensure your responses are precise and \
informative. Respond in polish.";

const FORCE_ANSWER_PROMPT: &str =
    "The retriever budget is used up. Answer the question now based on the articles already retrieved.";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("context budget of {budget} tokens cannot fit even one retrieved article (first needs {first})")]
    BudgetExhausted { budget: usize, first: usize },
}

/// Agent knobs. Defaults: 3 tool calls, top-50 retrieval, 4200-token
/// context budget, temperature 0, the exam system prompt.
#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub max_tool_calls: usize,
    pub k: usize,
    pub context_budget_tokens: usize,
    pub temperature: f64,
    pub system_prompt: String,
    pub extractor: ExtractorConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            max_tool_calls: 3,
            k: crate::retrieval::DEFAULT_TOP_K,
            context_budget_tokens: 4200,
            temperature: 0.0,
            system_prompt: DEFAULT_SYSTEM_PROMPT.to_string(),
            extractor: ExtractorConfig::default(),
        }
    }
}

/// An article ID cited in the final answer, with its grounding status:
/// `grounded` is true when the article was part of a tool response the
/// model actually saw during this run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitedArticle {
    pub id: ArticleId,
    pub grounded: bool,
}

/// Full message history of one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTranscript {
    pub messages: Vec<ChatMessage>,
    /// Number of retriever invocations actually executed.
    pub tool_call_count: usize,
}

/// Outcome of one agent run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentAnswer {
    pub final_text: String,
    pub cited_articles: Vec<CitedArticle>,
    pub retrieval_queries: Vec<String>,
    pub transcript: AgentTranscript,
}

/// Tool declaration for the retriever.
pub fn retriever_tool_spec() -> ToolSpec {
    ToolSpec {
        name: RETRIEVER_TOOL_NAME.to_string(),
        description: "Search the legal code for articles matching a short, general query. \
                      Returns the best-matching articles with their IDs."
            .to_string(),
        parameters: json!({
            "type": "object",
            "properties": {
                "query": {
                    "type": "string",
                    "description": "Retrieval query, e.g. a legal concept or key phrase",
                }
            },
            "required": ["query"],
        }),
    }
}

/// Keep the longest ranked prefix whose cumulative approximate token
/// length fits the budget. Order is preserved; the result may be empty.
pub fn fit_context(docs: &[ScoredDocument], budget_tokens: usize) -> &[ScoredDocument] {
    let mut used = 0usize;
    let mut keep = 0usize;
    for doc in docs {
        let next = used + doc.article.approx_token_len;
        if next > budget_tokens {
            break;
        }
        used = next;
        keep += 1;
    }
    &docs[..keep]
}

/// Serialize retrieved articles into a tool response: one
/// `«Art. id» text` block per document, ranked order, blank-line
/// separated. The ID prefix is what the model is expected to echo when
/// citing.
pub fn render_tool_response(docs: &[ScoredDocument]) -> String {
    let blocks: Vec<String> =
        docs.iter().map(|d| format!("«{}» {}", d.article.id, d.article.text)).collect();
    blocks.join("\n\n")
}

/// Run one query flow against the index. The loop ends when the model
/// answers without a tool call, or when the tool budget is exhausted, in
/// which case the model is asked once more to answer from what it has.
pub fn run_agent(
    question: &str,
    index: &Index,
    model: &dyn ModelClient,
    config: &AgentConfig,
) -> Result<AgentAnswer, AgentError> {
    let tools = [retriever_tool_spec()];
    let mut messages =
        vec![ChatMessage::system(&config.system_prompt), ChatMessage::user(question)];
    let mut retrieval_queries: Vec<String> = Vec::new();
    let mut shown_ids: Vec<ArticleId> = Vec::new();
    let mut executed = 0usize;

    let final_text = loop {
        let tools_open = executed < config.max_tool_calls;
        let offered: &[ToolSpec] = if tools_open { &tools } else { &[] };
        let reply = model.chat(&messages, offered, config.temperature)?;

        let Some(tool_call) = reply.tool_call.clone() else {
            let text = reply.content.clone();
            messages.push(reply);
            break text;
        };

        if !tools_open {
            // The model ignored the withheld tools; record its attempt
            // and demand a final answer.
            messages.push(reply);
            messages.push(ChatMessage::user(FORCE_ANSWER_PROMPT));
            let last = model.chat(&messages, &[], config.temperature)?;
            let text = last.content.clone();
            messages.push(ChatMessage::assistant(last.content));
            break text;
        }

        let query = tool_call
            .arguments
            .get("query")
            .and_then(|v| v.as_str())
            .unwrap_or_default()
            .to_string();
        messages.push(reply);
        retrieval_queries.push(query.clone());
        executed += 1;

        let tool_content = match retrieve(index, &query, config.k) {
            Ok(docs) => {
                let fitted = fit_context(&docs, config.context_budget_tokens);
                if fitted.is_empty() && !docs.is_empty() {
                    return Err(AgentError::BudgetExhausted {
                        budget: config.context_budget_tokens,
                        first: docs[0].article.approx_token_len,
                    });
                }
                for doc in fitted {
                    if !shown_ids.contains(&doc.article.id) {
                        shown_ids.push(doc.article.id);
                    }
                }
                render_tool_response(fitted)
            }
            Err(RetrievalError::EmptyQuery) => "retriever error: empty query".to_string(),
            Err(e) => return Err(e.into()),
        };
        messages.push(ChatMessage::tool(tool_content));
    };

    let extracted = extract_structured_with(&final_text, &config.extractor);
    let cited_articles = extracted
        .cited_articles
        .into_iter()
        .map(|id| CitedArticle { id, grounded: shown_ids.contains(&id) })
        .collect();

    Ok(AgentAnswer {
        final_text,
        cited_articles,
        retrieval_queries,
        transcript: AgentTranscript { messages, tool_call_count: executed },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Article, LegalAct};
    use crate::model::MockStep;
    use crate::retrieval::build_index;

    fn mini_index() -> Index {
        let articles = vec![
            Article::new(
                ArticleId::new(13),
                "Art. 13. § 1. Osoba, która ukończyła lat trzynaście, może być ubezwłasnowolniona całkowicie.".into(),
                vec![],
            ),
            Article::new(
                ArticleId::new(16),
                "Art. 16. § 1. Osoba pełnoletnia może być ubezwłasnowolniona częściowo.".into(),
                vec![],
            ),
            Article::new(
                ArticleId::new(415),
                "Art. 415. Kto z winy swej wyrządził drugiemu szkodę, obowiązany jest do jej naprawienia.".into(),
                vec![],
            ),
        ];
        build_index(&LegalAct { title: String::new(), units: vec![], articles }).unwrap()
    }

    fn mock(steps: Vec<MockStep>) -> crate::model::MockModelClient {
        crate::model::MockModelClient::new(steps)
    }

    #[test]
    fn reformulated_query_reaches_the_retriever() {
        let index = mini_index();
        let client = mock(vec![
            MockStep::ToolCall { query: "Incapacitation".into() },
            MockStep::Final("Odpowiedź: a). Podstawa prawna: art. 13 k.c.".into()),
        ]);
        let answer =
            run_agent("Who can be incapacitated?", &index, &client, &AgentConfig::default())
                .unwrap();
        assert_eq!(answer.retrieval_queries, vec!["Incapacitation".to_string()]);
        assert_eq!(answer.transcript.tool_call_count, 1);
        assert_eq!(answer.cited_articles, vec![CitedArticle { id: ArticleId::new(13), grounded: true }]);
    }

    #[test]
    fn direct_answer_skips_retrieval() {
        let index = mini_index();
        let client = mock(vec![MockStep::Final("Odpowiedź: b). Bez kwerendy.".into())]);
        let answer = run_agent("Pytanie?", &index, &client, &AgentConfig::default()).unwrap();
        assert!(answer.retrieval_queries.is_empty());
        assert_eq!(answer.transcript.tool_call_count, 0);
    }

    #[test]
    fn tool_budget_forces_a_final_answer() {
        let index = mini_index();
        let client = mock(vec![
            MockStep::ToolCall { query: "q1".into() },
            MockStep::ToolCall { query: "q2".into() },
            MockStep::ToolCall { query: "q3".into() },
            MockStep::ToolCall { query: "q4".into() },
            MockStep::Final("Odpowiedź: c). Wymuszona.".into()),
        ]);
        let config = AgentConfig::default();
        let answer = run_agent("Pytanie?", &index, &client, &config).unwrap();
        assert_eq!(answer.transcript.tool_call_count, 3);
        assert_eq!(answer.retrieval_queries.len(), 3);
        assert_eq!(answer.final_text, "Odpowiedź: c). Wymuszona.");
        // The refused fourth call is still visible in the transcript.
        let refused = answer
            .transcript
            .messages
            .iter()
            .filter(|m| m.tool_call.is_some())
            .count();
        assert_eq!(refused, 4);
    }

    #[test]
    fn citations_outside_retrieved_set_are_ungrounded() {
        let index = mini_index();
        let client = mock(vec![
            MockStep::ToolCall { query: "wina".into() },
            MockStep::Final("Odpowiedź: a). Zob. art. 415 k.c. oraz art. 999 k.c.".into()),
        ]);
        let answer = run_agent("Pytanie?", &index, &client, &AgentConfig::default()).unwrap();
        let grounded: Vec<bool> = answer.cited_articles.iter().map(|c| c.grounded).collect();
        assert_eq!(
            answer.cited_articles.iter().map(|c| c.id).collect::<Vec<_>>(),
            vec![ArticleId::new(415), ArticleId::new(999)]
        );
        assert_eq!(grounded, vec![true, false]);
    }

    #[test]
    fn budget_too_small_for_any_article_errors() {
        let index = mini_index();
        let client = mock(vec![MockStep::ToolCall { query: "wina".into() }]);
        let config = AgentConfig { context_budget_tokens: 1, ..AgentConfig::default() };
        let err = run_agent("Pytanie?", &index, &client, &config);
        assert!(matches!(err, Err(AgentError::BudgetExhausted { budget: 1, .. })));
    }

    #[test]
    fn mock_runs_are_deterministic() {
        let index = mini_index();
        let steps = vec![
            MockStep::ToolCall { query: "ubezwłasnowolnienie".into() },
            MockStep::Final("Odpowiedź: a). Art. 13 k.c.".into()),
        ];
        let a = run_agent("Pytanie?", &index, &mock(steps.clone()), &AgentConfig::default())
            .unwrap();
        let b = run_agent("Pytanie?", &index, &mock(steps), &AgentConfig::default()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn fit_context_takes_greedy_prefix() {
        let index = mini_index();
        let docs = retrieve(&index, "ubezwłasnowolniona", 3).unwrap();
        let total: usize = docs.iter().map(|d| d.article.approx_token_len).sum();
        assert_eq!(fit_context(&docs, total).len(), 3);
        assert_eq!(fit_context(&docs, total - 1).len(), 2);
        assert!(fit_context(&docs, 0).is_empty());
    }

    #[test]
    fn tool_response_blocks_carry_id_prefix() {
        let index = mini_index();
        let docs = retrieve(&index, "szkodę", 1).unwrap();
        let rendered = render_tool_response(&docs);
        assert!(rendered.starts_with("«Art. 415» Art. 415."));
    }
}
