// SPDX-License-Identifier: Apache-2.0

//! Text generation against pluggable backends and the repeated-run
//! experiment protocol.
//!
//! Backends speak one wire contract: a POST of
//! `{"prompt": ..} | {"messages": [..]}` plus `temperature`, `max_new_tokens`
//! and `seed`, answered by `{"text": ..}`.

mod backend;
mod experiment;

use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompt::{ChatMessage, ChatTemplate, PromptError, PromptStrategy};

pub use backend::{backend_for_url, Backend, EchoBackend, HttpBackend, RetryPolicy, DEFAULT_TIMEOUT, ECHO_URL};
pub use experiment::{
    build_request, generate, run_experiment, CellFailure, ExperimentReport, ExperimentSpec, MemoryRuns, RunLedger,
    DEFAULT_CONCURRENCY, DEFAULT_REPETITIONS,
};

pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_MAX_NEW_TOKENS: u32 = 768;
pub const DEFAULT_CHAT_TEMPLATE: &str = "mixtral-system";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("backend unavailable after {attempts} attempts: {reason}")]
    BackendUnavailable { attempts: u32, reason: String },
    #[error("backend rejected the request with status {status}: {body}")]
    BackendRejected { status: u16, body: String },
    #[error("backend timed out after {0:?}")]
    Timeout(Duration),
    #[error("backend response is malformed: {0}")]
    MalformedResponse(String),
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("facility `{0}` belongs to the training split")]
    SplitViolation(String),
    #[error("run store: {0}")]
    Store(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

impl GenerationError {
    /// Transport failures and server errors are worth retrying.
    pub fn is_retryable(&self) -> bool {
        matches!(self, GenerationError::BackendUnavailable { .. })
    }
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

fn default_max_new_tokens() -> u32 {
    DEFAULT_MAX_NEW_TOKENS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub model_id: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    pub strategy: PromptStrategy,
    /// Template used to record chat prompts; defaults to [`DEFAULT_CHAT_TEMPLATE`].
    #[serde(default)]
    pub chat_template: Option<String>,
    /// Overrides the shipped system prompt.
    #[serde(default)]
    pub system_prompt: Option<String>,
}

impl GenerationConfig {
    pub fn new(model_id: impl Into<String>, strategy: PromptStrategy) -> Self {
        Self {
            model_id: model_id.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            seed: None,
            strategy,
            chat_template: None,
            system_prompt: None,
        }
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        let invalid = |m: &str| Err(GenerationError::InvalidConfig(m.into()));
        if self.model_id.trim().is_empty() {
            return invalid("empty model id");
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return invalid("temperature must be a non-negative number");
        }
        if self.max_new_tokens == 0 {
            return invalid("max_new_tokens must be at least 1");
        }
        if self.strategy == PromptStrategy::SystemPromptChat {
            self.template()?;
        }
        Ok(())
    }

    pub fn template(&self) -> Result<ChatTemplate, GenerationError> {
        Ok(ChatTemplate::builtin(self.chat_template.as_deref().unwrap_or(DEFAULT_CHAT_TEMPLATE))?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Prompt(String),
    Messages(Vec<ChatMessage>),
}

/// Body of a backend call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    #[serde(flatten)]
    pub payload: Payload,
    pub temperature: f64,
    pub max_new_tokens: u32,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRun {
    pub run_id: String,
    pub facility_id: String,
    pub model_id: String,
    pub repetition_index: u32,
    pub prompt_text: String,
    /// Backend text, stored verbatim.
    pub output_text: String,
    pub latency_ms: u64,
    pub created_at: DateTime<Utc>,
}

/// Stable id derived from the idempotency key.
pub fn run_id(facility_id: &str, model_id: &str, repetition: u32) -> String {
    let mut h = Sha256::new();
    h.update(facility_id.as_bytes());
    h.update([0x1f]);
    h.update(model_id.as_bytes());
    h.update([0x1f]);
    h.update(repetition.to_string().as_bytes());
    format!("run-{}", &hex::encode(h.finalize())[..16])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_ids_are_stable_and_distinct() {
        let a = run_id("f1", "m", 1);
        assert_eq!(a, run_id("f1", "m", 1));
        assert_eq!(a.len(), 20);
        assert_ne!(a, run_id("f1", "m", 2));
        assert_ne!(run_id("f1", "m1", 1), run_id("f1m", "1", 1));
    }

    #[test]
    fn config_validation() {
        let mut c = GenerationConfig::new("m", PromptStrategy::FineTuneInstruction);
        assert!(c.validate().is_ok());
        c.temperature = -0.1;
        assert!(c.validate().is_err());
        c.temperature = 0.0;
        c.max_new_tokens = 0;
        assert!(c.validate().is_err());
        let mut chat = GenerationConfig::new("m", PromptStrategy::SystemPromptChat);
        chat.chat_template = Some("nope".into());
        assert!(matches!(chat.validate(), Err(GenerationError::Prompt(PromptError::UnknownTemplate(_)))));
    }

    #[test]
    fn wire_format() {
        let r = GenerationRequest {
            payload: Payload::Prompt("p".into()),
            temperature: 0.5,
            max_new_tokens: 10,
            seed: Some(3),
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"prompt":"p","temperature":0.5,"max_new_tokens":10,"seed":3}"#
        );
        let back: GenerationRequest = serde_json::from_str(
            r#"{"messages":[{"role":"user","content":"hi"}],"temperature":0,"max_new_tokens":1,"seed":null}"#,
        )
        .unwrap();
        assert!(matches!(back.payload, Payload::Messages(m) if m.len() == 1));
    }
}
