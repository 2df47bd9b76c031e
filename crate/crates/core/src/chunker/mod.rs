//! Document chunking.
//!
//! Semantic chunking groups each sentence with the next `buffer_size - 1`
//! sentences, embeds every such window, and places a breakpoint after sentence
//! `i` when the cosine dissimilarity between window `i` and window `i + 1`
//! strictly exceeds the chosen percentile of all dissimilarities in the
//! document. Fixed-size chunking over whitespace tokens is kept as the baseline.

mod corpus;
mod fixed;
mod sentences;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{EmbedError, Embedder, EmbeddingVector};

pub use corpus::{load_corpus, CorpusError};
pub use fixed::fixed_chunk;
pub use sentences::split_sentences;

#[derive(Debug, Error)]
pub enum ChunkError {
    #[error("document is empty after trimming whitespace")]
    EmptyDocument,
    #[error("invalid chunking config: {0}")]
    InvalidConfig(String),
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("at least {required} values required, got {got}")]
    EmptyInput { required: usize, got: usize },
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub source_path: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            source_path: String::new(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub index: usize,
    pub text: String,
    /// Half-open byte range into the document text.
    pub char_span: (usize, usize),
}

/// Consecutive sentences `start..=end` joined with single spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceWindow {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// The retrieval unit: a contiguous run of sentences from one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub chunk_id: String,
    pub text: String,
    /// Inclusive sentence ordinals.
    pub sentence_range: (usize, usize),
    /// Half-open byte range into the document text.
    pub char_span: (usize, usize),
}

impl Chunk {
    pub fn token_estimate(&self) -> usize {
        crate::text::whitespace_token_count(&self.text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkingMode {
    #[default]
    Semantic,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkingConfig {
    pub mode: ChunkingMode,
    pub breakpoint_percentile: f64,
    pub buffer_size: usize,
    /// Breakpoints that would leave fewer sentences than this in a chunk are
    /// dropped; a short trailing run is merged into its predecessor.
    pub min_sentences_per_chunk: usize,
    pub fixed_size_tokens: usize,
    pub fixed_overlap_tokens: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            mode: ChunkingMode::Semantic,
            breakpoint_percentile: 90.0,
            buffer_size: 3,
            min_sentences_per_chunk: 1,
            fixed_size_tokens: 128,
            fixed_overlap_tokens: 16,
        }
    }
}

impl ChunkingConfig {
    pub fn validate(&self) -> Result<(), ChunkError> {
        let p = self.breakpoint_percentile;
        if !(p > 0.0 && p < 100.0) {
            return Err(ChunkError::InvalidConfig(format!(
                "breakpoint_percentile must lie in (0, 100), got {p}"
            )));
        }
        if self.buffer_size == 0 {
            return Err(ChunkError::InvalidConfig("buffer_size must be positive".into()));
        }
        if self.min_sentences_per_chunk == 0 {
            return Err(ChunkError::InvalidConfig(
                "min_sentences_per_chunk must be positive".into(),
            ));
        }
        if self.fixed_size_tokens == 0 {
            return Err(ChunkError::InvalidConfig("fixed_size_tokens must be positive".into()));
        }
        if self.fixed_overlap_tokens >= self.fixed_size_tokens {
            return Err(ChunkError::InvalidConfig(format!(
                "fixed_overlap_tokens ({}) must be smaller than fixed_size_tokens ({})",
                self.fixed_overlap_tokens, self.fixed_size_tokens
            )));
        }
        Ok(())
    }
}

/// One forward-looking window per sentence.
pub fn build_windows(
    sentences: &[Sentence],
    buffer_size: usize,
) -> Result<Vec<SentenceWindow>, ChunkError> {
    if buffer_size == 0 {
        return Err(ChunkError::InvalidConfig("buffer_size must be positive".into()));
    }
    if sentences.is_empty() {
        return Err(ChunkError::EmptyInput { required: 1, got: 0 });
    }
    let last = sentences.len() - 1;
    Ok((0..sentences.len())
        .map(|start| {
            let end = (start + buffer_size - 1).min(last);
            let text = sentences[start..=end]
                .iter()
                .map(|s| s.text.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            SentenceWindow { start, end, text }
        })
        .collect())
}

/// `1 - cos(e_i, e_{i+1})` for each adjacent pair.
pub fn consecutive_dissimilarities(embeddings: &[EmbeddingVector]) -> Result<Vec<f64>, ChunkError> {
    if embeddings.len() < 2 {
        return Err(ChunkError::EmptyInput {
            required: 2,
            got: embeddings.len(),
        });
    }
    let dims = embeddings[0].dims();
    embeddings
        .windows(2)
        .map(|pair| {
            if pair[1].dims() != dims {
                return Err(ChunkError::DimensionMismatch {
                    expected: dims,
                    found: pair[1].dims(),
                });
            }
            let sim = pair[0].cosine(&pair[1]).map_err(|_| ChunkError::DimensionMismatch {
                expected: dims,
                found: pair[1].dims(),
            })?;
            Ok(1.0 - sim)
        })
        .collect()
}

/// Linear-interpolation percentile: with sorted values `v` and
/// `h = (n - 1) * p / 100`, returns `v[floor(h)] + frac(h) * (v[floor(h) + 1] - v[floor(h)])`.
pub fn percentile(values: &[f64], p: f64) -> Result<f64, ChunkError> {
    if values.is_empty() {
        return Err(ChunkError::EmptyInput { required: 1, got: 0 });
    }
    if !(p > 0.0 && p < 100.0) {
        return Err(ChunkError::InvalidConfig(format!(
            "percentile must lie in (0, 100), got {p}"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= sorted.len() || frac == 0.0 {
        return Ok(sorted[lo]);
    }
    Ok(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
}

/// Sentence ordinals after which a semantic breakpoint falls, before the
/// minimum-chunk-size rule is applied.
pub fn semantic_breakpoints(
    sentences: &[Sentence],
    embedder: &dyn Embedder,
    config: &ChunkingConfig,
) -> Result<Vec<usize>, ChunkError> {
    config.validate()?;
    if sentences.len() < 2 {
        return Ok(Vec::new());
    }
    let windows = build_windows(sentences, config.buffer_size)?;
    let texts: Vec<&str> = windows.iter().map(|w| w.text.as_str()).collect();
    let embeddings = embedder.embed_texts(&texts)?;
    let distances = consecutive_dissimilarities(&embeddings)?;
    let threshold = percentile(&distances, config.breakpoint_percentile)?;
    Ok(distances
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > threshold)
        .map(|(i, _)| i)
        .collect())
}

pub fn semantic_chunk(
    doc: &Document,
    embedder: &dyn Embedder,
    config: &ChunkingConfig,
) -> Result<Vec<Chunk>, ChunkError> {
    config.validate()?;
    let sentences = split_sentences(&doc.text)?;
    let breakpoints = semantic_breakpoints(&sentences, embedder, config)?;
    let runs = runs_from_breakpoints(sentences.len(), &breakpoints, config.min_sentences_per_chunk);
    Ok(chunks_from_runs(doc, &sentences, &runs))
}

/// Splits `0..n` into inclusive runs, cutting after each breakpoint unless that
/// would leave a run shorter than `min_len`.
fn runs_from_breakpoints(n: usize, breakpoints: &[usize], min_len: usize) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = 0;
    for &b in breakpoints {
        if b + 1 - start >= min_len {
            runs.push((start, b));
            start = b + 1;
        }
    }
    if start < n {
        match runs.last_mut() {
            Some(last) if n - start < min_len => last.1 = n - 1,
            _ => runs.push((start, n - 1)),
        }
    }
    runs
}

fn chunks_from_runs(doc: &Document, sentences: &[Sentence], runs: &[(usize, usize)]) -> Vec<Chunk> {
    runs.iter()
        .enumerate()
        .map(|(ordinal, &(a, b))| {
            let span = (sentences[a].char_span.0, sentences[b].char_span.1);
            Chunk {
                doc_id: doc.id.clone(),
                chunk_id: format!("{}#{}", doc.id, ordinal),
                text: doc.text[span.0..span.1].to_string(),
                sentence_range: (a, b),
                char_span: span,
            }
        })
        .collect()
}

/// Chunks a document with whichever strategy `config.mode` selects.
pub fn chunk_document(
    doc: &Document,
    embedder: &dyn Embedder,
    config: &ChunkingConfig,
) -> Result<Vec<Chunk>, ChunkError> {
    match config.mode {
        ChunkingMode::Semantic => semantic_chunk(doc, embedder, config),
        ChunkingMode::Fixed => {
            config.validate()?;
            fixed_chunk(doc, config.fixed_size_tokens, config.fixed_overlap_tokens)
        }
    }
}
