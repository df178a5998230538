//! Molecule proposers: an OpenAI-compatible chat client, a scripted
//! proposer for deterministic runs and a content-addressed disk cache.

mod cache;
mod remote;
mod scripted;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use cache::CachedProposer;
pub use remote::{RemoteChat, RemoteChatConfig};
pub use scripted::{ScriptRule, ScriptedProposer, ScriptedScenario};

#[derive(Debug, thiserror::Error)]
pub enum ProposerError {
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport failure after {attempts} attempt(s): {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("proposer returned empty content")]
    Empty,
    #[error("scripted scenario exhausted after {served} response(s)")]
    ScenarioUnderrun { served: usize },
    #[error("no scripted rule matches the prompt")]
    NoMatchingRule,
    #[error("invalid proposer configuration: {0}")]
    Config(String),
    #[error("cache error at {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ProposerError {
    /// Transport-level failures abort a trace; other errors are bugs or
    /// configuration problems.
    pub fn is_transport(&self) -> bool {
        matches!(self, ProposerError::Http { .. } | ProposerError::Transport { .. } | ProposerError::Empty)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams { temperature: 0.0, max_tokens: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposerRequest {
    pub system: Option<String>,
    /// Alternating user/assistant turns ending with a user turn.
    pub messages: Vec<ChatMessage>,
    pub params: GenerationParams,
}

impl ProposerRequest {
    /// The last user message.
    pub fn prompt(&self) -> &str {
        self.messages.iter().rev().find(|m| m.role == Role::User).map_or("", |m| m.content.as_str())
    }

    /// System message (if any) followed by the history.
    pub fn wire_messages(&self) -> Vec<ChatMessage> {
        let mut out = Vec::with_capacity(self.messages.len() + 1);
        if let Some(s) = &self.system {
            out.push(ChatMessage { role: Role::System, content: s.clone() });
        }
        out.extend(self.messages.iter().cloned());
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposerResponse {
    pub text: String,
    pub usage: Option<TokenUsage>,
    pub latency_ms: u64,
    /// Remote attempts made for this call (0 when served locally).
    pub attempts: u32,
    pub cached: bool,
}

impl ProposerResponse {
    pub fn local(text: impl Into<String>) -> Self {
        ProposerResponse { text: text.into(), usage: None, latency_ms: 0, attempts: 0, cached: false }
    }
}

/// One call per refinement step. Implementations are safe to share between
/// threads.
pub trait Proposer: Send + Sync {
    fn propose(&self, request: &ProposerRequest) -> Result<ProposerResponse, ProposerError>;

    /// Model identifier used in cache keys and reports.
    fn model(&self) -> String;
}

/// Serializable proposer selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProposerConfig {
    RemoteChat(RemoteChatConfig),
    Scripted {
        #[serde(flatten)]
        scenario: ScriptedSource,
    },
    Cached {
        dir: PathBuf,
        inner: Box<ProposerConfig>,
    },
}

/// Scripted scenario given inline or as a JSON file path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptedSource {
    File { path: PathBuf },
    Inline(ScriptedScenario),
}

impl ScriptedSource {
    pub fn load(&self, base: &Path) -> Result<ScriptedScenario, ProposerError> {
        match self {
            ScriptedSource::Inline(s) => Ok(s.clone()),
            ScriptedSource::File { path } => ScriptedScenario::from_file(&base.join(path)),
        }
    }
}

/// Produces the proposer used by each conversation. Scripted scenarios
/// restart for every conversation; remote clients (and their rate limits)
/// are shared.
#[derive(Clone)]
pub enum ProposerFactory {
    Shared(Arc<dyn Proposer>),
    PerConversation(ScriptedScenario),
}

impl ProposerFactory {
    pub fn create(&self) -> Arc<dyn Proposer> {
        match self {
            ProposerFactory::Shared(p) => Arc::clone(p),
            ProposerFactory::PerConversation(s) => Arc::new(ScriptedProposer::new(s.clone())),
        }
    }
}

impl ProposerConfig {
    /// Builds the factory; relative paths resolve against `base`.
    pub fn factory(&self, base: &Path) -> Result<ProposerFactory, ProposerError> {
        match self {
            ProposerConfig::RemoteChat(c) => Ok(ProposerFactory::Shared(Arc::new(RemoteChat::new(c.clone())?))),
            ProposerConfig::Scripted { scenario } => Ok(ProposerFactory::PerConversation(scenario.load(base)?)),
            ProposerConfig::Cached { dir, inner } => match inner.factory(base)? {
                ProposerFactory::Shared(p) => {
                    Ok(ProposerFactory::Shared(Arc::new(CachedProposer::new(p, base.join(dir))?)))
                }
                ProposerFactory::PerConversation(_) => {
                    Err(ProposerError::Config("caching a scripted proposer is not supported".into()))
                }
            },
        }
    }

    /// Parameters that reports should echo (never the key itself).
    pub fn describe(&self) -> String {
        match self {
            ProposerConfig::RemoteChat(c) => {
                format!("remote_chat {} model={} temperature={} max_tokens={}", c.base_url, c.model, c.temperature, c.max_tokens)
            }
            ProposerConfig::Scripted { .. } => "scripted".to_string(),
            ProposerConfig::Cached { inner, .. } => format!("cached({})", inner.describe()),
        }
    }
}
