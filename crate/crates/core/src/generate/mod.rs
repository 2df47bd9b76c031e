//! Prompt assembly, generator clients and answer parsing.

mod http;
mod prompt;
mod stub;
mod toy;

use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunker::Chunk;
use crate::http::{HttpError, HttpSettings};
use crate::neural::{AttentionConfig, NeuralError};

pub use http::HttpGenerator;
pub use prompt::{assemble_open_prompt, assemble_prompt, AssembledPrompt, MCQItem, PromptTemplate};
pub use stub::{stub_generate, StubGenerator};
pub use toy::ToyGenerator;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("invalid item: {0}")]
    InvalidItem(String),
    #[error("prompt of {tokens} tokens exceeds the {window}-token context window")]
    ContextOverflow { tokens: usize, window: usize },
    #[error("no option label in generated text {text:?}")]
    UnparsableAnswer { text: String },
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// How a generator treats prompts longer than its trained window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextWindow {
    /// Longer prompts are accepted but flagged.
    Advisory(usize),
    /// Longer prompts are rejected with `ContextOverflow`.
    Strict(usize),
}

pub struct GenerationRequest<'a> {
    pub prompt: &'a AssembledPrompt,
    pub item: Option<&'a MCQItem>,
    pub contexts: &'a [Chunk],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Generation {
    pub text: String,
    /// Set when the prompt exceeded an advisory window.
    pub window_warning: bool,
}

pub trait Generator: Send + Sync {
    fn window(&self) -> ContextWindow;
    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, GenerateError>;
}

/// Runs one generation after checking the prompt against the generator's
/// window. The generated text is returned unmodified.
pub fn generate(generator: &dyn Generator, request: &GenerationRequest<'_>) -> Result<Generation, GenerateError> {
    if request.prompt.text.trim().is_empty() {
        return Err(GenerateError::EmptyPrompt);
    }
    let tokens = request.prompt.token_estimate;
    let window_warning = match generator.window() {
        ContextWindow::Advisory(w) => tokens > w,
        ContextWindow::Strict(w) if tokens > w => {
            return Err(GenerateError::ContextOverflow { tokens, window: w })
        }
        ContextWindow::Strict(_) => false,
    };
    Ok(Generation {
        text: generator.complete(request)?,
        window_warning,
    })
}

/// Returns the 0-based index named by the first `option <n>` in `generated`.
/// Later mentions are ignored even if the first is out of range.
pub fn parse_answer(generated: &str, n_options: usize) -> Result<usize, GenerateError> {
    static LABEL: OnceLock<Regex> = OnceLock::new();
    let re = LABEL.get_or_init(|| Regex::new(r"(?i)\boption\s*(\d+)").unwrap());
    let unparsable = || GenerateError::UnparsableAnswer {
        text: generated.to_string(),
    };
    let caps = re.captures(generated).ok_or_else(unparsable)?;
    let n: usize = caps[1].parse().map_err(|_| unparsable())?;
    if n == 0 || n > n_options {
        return Err(unparsable());
    }
    Ok(n - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    #[default]
    Stub,
    Toy,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    pub endpoint: Option<String>,
    pub max_tokens: usize,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
    pub max_retries: usize,
    pub seed: u64,
    pub template: PromptTemplate,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            kind: GeneratorKind::Stub,
            endpoint: None,
            max_tokens: 32,
            timeout_ms: 60_000,
            max_in_flight: 4,
            max_retries: 2,
            seed: 0,
            template: PromptTemplate::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GenerateError> {
        self.template.validate()?;
        if self.kind == GeneratorKind::Http && self.endpoint.is_none() {
            return Err(GenerateError::InvalidConfig("the http generator needs an endpoint".into()));
        }
        if self.max_tokens == 0 {
            return Err(GenerateError::InvalidConfig("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Builds the generator for one arm. `selfextend` only changes the toy
    /// generator; the others keep the pretraining window from `attention`.
    pub fn build(&self, attention: &AttentionConfig, selfextend: bool) -> Result<Box<dyn Generator>, GenerateError> {
        self.validate()?;
        Ok(match self.kind {
            GeneratorKind::Stub => Box::new(StubGenerator::new(attention.pretrain_window)),
            GeneratorKind::Toy => Box::new(ToyGenerator::new(self.seed, attention, selfextend)?),
            GeneratorKind::Http => Box::new(HttpGenerator::new(
                self.endpoint.as_deref().unwrap_or_default(),
                self.max_tokens,
                attention.pretrain_window,
                &HttpSettings {
                    timeout: Duration::from_millis(self.timeout_ms),
                    max_in_flight: self.max_in_flight,
                    max_retries: self.max_retries,
                },
            )?),
        })
    }
}
