use super::{ContextWindow, GenerateError, GenerationRequest, Generator, MCQItem};
use super::AssembledPrompt;
use crate::chunker::Chunk;
use crate::rerank::Bm25;

/// Picks the option with the highest BM25 score against all contexts joined
/// into one document; ties go to the lowest option number. The prompt is
/// accepted for interface parity and does not affect the choice.
pub fn stub_generate(_prompt: &AssembledPrompt, item: &MCQItem, contexts: &[Chunk]) -> String {
    let joined = contexts.iter().map(|c| c.text.as_str()).collect::<Vec<_>>().join("\n");
    let bm25 = Bm25::default();
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, option) in item.options.iter().enumerate() {
        let s = bm25.score_batch(option, &[joined.as_str()])[0];
        if s > best.1 {
            best = (i, s);
        }
    }
    format!("option {}", best.0 + 1)
}

/// Deterministic offline generator. Prompts longer than the pretraining
/// window are flagged but still answered.
#[derive(Debug, Clone, Copy)]
pub struct StubGenerator {
    pretrain_window: usize,
}

impl StubGenerator {
    pub fn new(pretrain_window: usize) -> Self {
        Self { pretrain_window }
    }
}

impl Generator for StubGenerator {
    fn window(&self) -> ContextWindow {
        ContextWindow::Advisory(self.pretrain_window)
    }

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, GenerateError> {
        let item = request
            .item
            .ok_or_else(|| GenerateError::InvalidItem("the stub generator needs answer options".into()))?;
        if item.options.len() < MCQItem::MIN_OPTIONS {
            return Err(GenerateError::InvalidItem("the stub generator needs at least two options".into()));
        }
        Ok(stub_generate(request.prompt, item, request.contexts))
    }
}
