//! Chat-completion model clients.
//!
//! [`ModelClient`] is the single seam between the agent loop and a
//! language model: it takes a message history plus tool declarations and
//! returns the next assistant message, which either requests a tool or
//! finalizes the answer. [`HttpModelClient`] speaks the common
//! chat-completions wire format; [`MockModelClient`] replays a scripted
//! step list for deterministic tests and offline runs.

use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("model unavailable: {0}")]
    Unavailable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

/// A tool invocation requested by the assistant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool_name: String,
    pub arguments: Value,
}

/// One message of a conversation. A `Tool` message always follows the
/// assistant message that requested the call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into(), tool_call: None }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into(), tool_call: None }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into(), tool_call: None }
    }

    pub fn tool(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Tool, content: content.into(), tool_call: None }
    }
}

/// Declaration of a callable tool, handed to the model with each request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    /// JSON schema of the arguments object.
    pub parameters: Value,
}

/// Anything that can produce the next assistant message.
pub trait ModelClient: Send + Sync {
    fn chat(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
        temperature: f64,
    ) -> Result<ChatMessage, ModelError>;
}

/// Connection settings for a chat-completions endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpModelConfig {
    /// Base URL up to the API root, e.g. `https://api.example.com/v1`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token; `None` sends no
    /// auth header.
    pub auth_env: Option<String>,
    pub timeout_secs: u64,
    pub retries: u32,
}

impl Default for HttpModelConfig {
    fn default() -> Self {
        HttpModelConfig {
            base_url: "http://localhost:8080/v1".into(),
            model: "default".into(),
            auth_env: None,
            timeout_secs: 60,
            retries: 2,
        }
    }
}

/// Blocking client for any chat-completions-style endpoint.
pub struct HttpModelClient {
    config: HttpModelConfig,
    token: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpModelClient {
    pub fn new(config: HttpModelConfig) -> Result<Self, ModelError> {
        let token = match &config.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                ModelError::Unavailable(format!("auth environment variable {var} is not set"))
            })?),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ModelError::Unavailable(e.to_string()))?;
        Ok(HttpModelClient { config, token, http })
    }

    fn request_body(&self, messages: &[ChatMessage], tools: &[ToolSpec], temperature: f64) -> Value {
        let mut call_counter = 0usize;
        let mut wire_messages = Vec::with_capacity(messages.len());
        for msg in messages {
            match msg.role {
                Role::Assistant if msg.tool_call.is_some() => {
                    let tc = msg.tool_call.as_ref().unwrap();
                    call_counter += 1;
                    wire_messages.push(json!({
                        "role": "assistant",
                        "content": msg.content,
                        "tool_calls": [{
                            "id": format!("call_{call_counter}"),
                            "type": "function",
                            "function": {
                                "name": tc.tool_name,
                                "arguments": tc.arguments.to_string(),
                            },
                        }],
                    }));
                }
                Role::Tool => {
                    wire_messages.push(json!({
                        "role": "tool",
                        "tool_call_id": format!("call_{call_counter}"),
                        "content": msg.content,
                    }));
                }
                Role::System => wire_messages.push(json!({"role": "system", "content": msg.content})),
                Role::User => wire_messages.push(json!({"role": "user", "content": msg.content})),
                Role::Assistant => {
                    wire_messages.push(json!({"role": "assistant", "content": msg.content}))
                }
            }
        }

        let mut body = json!({
            "model": self.config.model,
            "messages": wire_messages,
            "temperature": temperature,
        });
        if !tools.is_empty() {
            body["tools"] = Value::Array(
                tools
                    .iter()
                    .map(|t| {
                        json!({
                            "type": "function",
                            "function": {
                                "name": t.name,
                                "description": t.description,
                                "parameters": t.parameters,
                            },
                        })
                    })
                    .collect(),
            );
        }
        body
    }

    fn parse_response(value: Value) -> Result<ChatMessage, ModelError> {
        let message = value
            .pointer("/choices/0/message")
            .ok_or_else(|| ModelError::Unavailable("response has no choices".into()))?;
        let content = message.get("content").and_then(Value::as_str).unwrap_or("").to_string();
        let tool_call = match message.pointer("/tool_calls/0/function") {
            Some(function) => {
                let name = function
                    .get("name")
                    .and_then(Value::as_str)
                    .ok_or_else(|| ModelError::Unavailable("tool call without a name".into()))?;
                let raw_args = function.get("arguments").and_then(Value::as_str).unwrap_or("{}");
                let arguments: Value = serde_json::from_str(raw_args).map_err(|e| {
                    ModelError::Unavailable(format!("tool call arguments are not JSON: {e}"))
                })?;
                Some(ToolCall { tool_name: name.to_string(), arguments })
            }
            None => None,
        };
        Ok(ChatMessage { role: Role::Assistant, content, tool_call })
    }
}

impl ModelClient for HttpModelClient {
    fn chat(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
        temperature: f64,
    ) -> Result<ChatMessage, ModelError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = self.request_body(messages, tools, temperature);

        let mut last_err = String::new();
        for _ in 0..=self.config.retries {
            let mut request = self.http.post(&url).json(&body);
            if let Some(token) = &self.token {
                request = request.bearer_auth(token);
            }
            match request.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_server_error() {
                        last_err = format!("status {status}");
                        continue;
                    }
                    if !status.is_success() {
                        return Err(ModelError::Unavailable(format!("status {status}")));
                    }
                    let value: Value = response
                        .json()
                        .map_err(|e| ModelError::Unavailable(format!("malformed payload: {e}")))?;
                    return Self::parse_response(value);
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(ModelError::Unavailable(last_err))
    }
}

/// One scripted step of a mock conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockStep {
    /// The assistant requests the retriever with this query.
    ToolCall { query: String },
    /// The assistant finalizes with this text.
    Final(String),
    /// The call fails, e.g. to script a timeout.
    Error(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MockScript {
    steps: Vec<MockStep>,
}

/// Replays a fixed step list, one step per `chat` call, regardless of the
/// incoming messages. Exhausting the script is an error so tests cannot
/// silently under-specify a run.
pub struct MockModelClient {
    steps: Vec<MockStep>,
    cursor: Mutex<usize>,
}

impl MockModelClient {
    pub fn new(steps: Vec<MockStep>) -> Self {
        MockModelClient { steps, cursor: Mutex::new(0) }
    }

    /// Load a script file: `{"steps": [{"tool_call": {"query": "..."}},
    /// {"final": "..."}, {"error": "..."}]}`.
    pub fn from_file(path: &Path) -> Result<Self, ModelError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Unavailable(format!("mock script {}: {e}", path.display())))?;
        let script: MockScript = serde_json::from_str(&raw)
            .map_err(|e| ModelError::Unavailable(format!("mock script {}: {e}", path.display())))?;
        Ok(Self::new(script.steps))
    }

    pub fn remaining_steps(&self) -> usize {
        self.steps.len() - *self.cursor.lock().unwrap()
    }
}

impl ModelClient for MockModelClient {
    fn chat(
        &self,
        _messages: &[ChatMessage],
        _tools: &[ToolSpec],
        _temperature: f64,
    ) -> Result<ChatMessage, ModelError> {
        let mut cursor = self.cursor.lock().unwrap();
        let step = self
            .steps
            .get(*cursor)
            .cloned()
            .ok_or_else(|| ModelError::Unavailable("mock script exhausted".into()))?;
        *cursor += 1;
        match step {
            MockStep::ToolCall { query } => Ok(ChatMessage {
                role: Role::Assistant,
                content: String::new(),
                tool_call: Some(ToolCall {
                    tool_name: crate::agent::RETRIEVER_TOOL_NAME.to_string(),
                    arguments: json!({ "query": query }),
                }),
            }),
            MockStep::Final(text) => Ok(ChatMessage::assistant(text)),
            MockStep::Error(msg) => Err(ModelError::Unavailable(msg)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_replays_steps_in_order() {
        let mock = MockModelClient::new(vec![
            MockStep::ToolCall { query: "Incapacitation".into() },
            MockStep::Final("answer c, Art. 16".into()),
        ]);
        let first = mock.chat(&[], &[], 0.0).unwrap();
        assert_eq!(first.tool_call.as_ref().unwrap().arguments["query"], "Incapacitation");
        let second = mock.chat(&[], &[], 0.0).unwrap();
        assert_eq!(second.content, "answer c, Art. 16");
        assert!(second.tool_call.is_none());
        let exhausted = mock.chat(&[], &[], 0.0);
        assert!(matches!(exhausted, Err(ModelError::Unavailable(_))));
    }

    #[test]
    fn mock_error_step_fails_the_call() {
        let mock = MockModelClient::new(vec![MockStep::Error("timeout".into())]);
        assert_eq!(mock.chat(&[], &[], 0.0), Err(ModelError::Unavailable("timeout".into())));
    }

    #[test]
    fn script_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        std::fs::write(
            &path,
            r#"{"steps": [{"tool_call": {"query": "Prokura"}}, {"final": "Odpowiedź: c)"}]}"#,
        )
        .unwrap();
        let mock = MockModelClient::from_file(&path).unwrap();
        assert_eq!(mock.remaining_steps(), 2);
        let first = mock.chat(&[], &[], 0.0).unwrap();
        assert_eq!(first.tool_call.unwrap().arguments["query"], "Prokura");
    }

    #[test]
    fn response_parsing_handles_tool_calls_and_finals() {
        let value = json!({
            "choices": [{"message": {
                "content": null,
                "tool_calls": [{"id": "call_1", "type": "function",
                    "function": {"name": "retriever", "arguments": "{\"query\": \"Prokura\"}"}}],
            }}]
        });
        let msg = HttpModelClient::parse_response(value).unwrap();
        let tc = msg.tool_call.unwrap();
        assert_eq!(tc.tool_name, "retriever");
        assert_eq!(tc.arguments["query"], "Prokura");

        let value = json!({"choices": [{"message": {"content": "done"}}]});
        let msg = HttpModelClient::parse_response(value).unwrap();
        assert_eq!(msg.content, "done");
        assert!(msg.tool_call.is_none());

        let malformed = json!({"unexpected": true});
        assert!(HttpModelClient::parse_response(malformed).is_err());
    }
}
