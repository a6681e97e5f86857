//! LLM transports: a chat-completion HTTP client and a fixture-replaying mock.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub const KEY_ENV: &str = "EVOSTAGE_LLM_KEY";
pub const URL_ENV: &str = "EVOSTAGE_LLM_URL";
pub const DEFAULT_URL: &str = "https://api.openai.com/v1/chat/completions";

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("no fixture for request key at {0}")]
    MissingFixture(PathBuf),
    #[error("cannot read fixtures: {0}")]
    FixtureIo(String),
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unexpected provider response: {0}")]
    BadResponse(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentRole {
    Coordinator,
    Coder(String),
}

impl AgentRole {
    /// Directory name used in fixture layouts.
    pub fn dir_name(&self) -> String {
        match self {
            AgentRole::Coordinator => "coordinator".to_string(),
            AgentRole::Coder(component) => format!("coder-{component}"),
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dir_name())
    }
}

/// Identifies one agent call. The mock provider is a pure function of it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequestKey {
    pub role: AgentRole,
    pub template_id: String,
    pub stage_index: usize,
    pub generation_index: usize,
    /// Position of the offspring within its generation.
    pub offspring_index: usize,
    pub attempt: usize,
}

impl RequestKey {
    /// `<role>/<template_id>/g<generation>_o<offspring>_s<stage>_a<attempt>.txt`
    pub fn fixture_path(&self) -> PathBuf {
        PathBuf::from(self.role.dir_name())
            .join(&self.template_id)
            .join(format!(
                "g{}_o{}_s{}_a{}.txt",
                self.generation_index, self.offspring_index, self.stage_index, self.attempt
            ))
    }

    /// Fallback shared by every offspring of a generation:
    /// `<role>/<template_id>/g<generation>_s<stage>_a<attempt>.txt`
    pub fn shared_fixture_path(&self) -> PathBuf {
        PathBuf::from(self.role.dir_name())
            .join(&self.template_id)
            .join(format!(
                "g{}_s{}_a{}.txt",
                self.generation_index, self.stage_index, self.attempt
            ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub key: RequestKey,
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
}

pub trait LlmProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError>;
}

/// Replays recorded responses from a fixture directory. All files are read
/// at load time; unknown keys are an error. A per-offspring file wins over
/// the shared per-generation file.
#[derive(Debug, Clone, Default)]
pub struct MockProvider {
    root: PathBuf,
    responses: HashMap<PathBuf, String>,
}

impl MockProvider {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let root = dir.as_ref().to_path_buf();
        if !root.is_dir() {
            return Err(ProviderError::FixtureIo(format!("{} is not a directory", root.display())));
        }
        let mut responses = HashMap::new();
        let mut stack = vec![root.clone()];
        while let Some(dir) = stack.pop() {
            let entries = std::fs::read_dir(&dir)
                .map_err(|e| ProviderError::FixtureIo(format!("{}: {e}", dir.display())))?;
            for entry in entries {
                let path = entry
                    .map_err(|e| ProviderError::FixtureIo(e.to_string()))?
                    .path();
                if path.is_dir() {
                    stack.push(path);
                } else if path.extension().is_some_and(|e| e == "txt") {
                    let body = std::fs::read_to_string(&path)
                        .map_err(|e| ProviderError::FixtureIo(format!("{}: {e}", path.display())))?;
                    let rel = path.strip_prefix(&root).expect("walked under root").to_path_buf();
                    responses.insert(rel, body);
                }
            }
        }
        Ok(Self { root, responses })
    }

    /// Builds a mock from in-memory responses.
    pub fn from_responses(responses: impl IntoIterator<Item = (RequestKey, String)>) -> Self {
        Self {
            root: PathBuf::new(),
            responses: responses
                .into_iter()
                .map(|(k, v)| (k.fixture_path(), v))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl LlmProvider for MockProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let rel = request.key.fixture_path();
        self.responses
            .get(&rel)
            .or_else(|| self.responses.get(&request.key.shared_fixture_path()))
            .cloned()
            .ok_or_else(|| ProviderError::MissingFixture(self.root.join(rel)))
    }
}

/// Chat-completion client (`POST {model, temperature, messages}`, reply in
/// `choices[0].message.content`).
pub struct HttpProvider {
    url: String,
    key: String,
    agent: ureq::Agent,
}

impl fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpProvider").field("url", &self.url).finish_non_exhaustive()
    }
}

impl HttpProvider {
    pub fn new(url: impl Into<String>, key: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            url: url.into(),
            key: key.into(),
            agent,
        }
    }

    /// Reads the endpoint from `EVOSTAGE_LLM_URL` (optional) and the bearer
    /// token from `EVOSTAGE_LLM_KEY` (required).
    pub fn from_env() -> Result<Self, ProviderError> {
        let key = std::env::var(KEY_ENV)
            .map_err(|_| ProviderError::Config(format!("{KEY_ENV} is not set")))?;
        let url = std::env::var(URL_ENV).unwrap_or_else(|_| DEFAULT_URL.to_string());
        Ok(Self::new(url, key, Duration::from_secs(180)))
    }

    pub fn request_body(request: &ChatRequest) -> Value {
        json!({
            "model": request.model,
            "temperature": request.temperature,
            "messages": request.messages,
        })
    }
}

impl LlmProvider for HttpProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let body = Self::request_body(request);
        let mut response = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.key))
            .send_json(&body)
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let value: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ProviderError::BadResponse(truncate(&value.to_string(), 300)))
    }
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}
