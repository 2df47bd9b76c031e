//! Retrieval-augmented multiple-choice QA engine.
//!
//! The crate is organised along the stages of the pipeline:
//!
//! - [`chunker`]: sentence segmentation, semantic and fixed-size chunking.
//! - [`embed`]: embedding providers (deterministic hashing embedder, HTTP client).
//! - [`index`]: exact cosine top-k index with an on-disk format.
//! - [`rerank`]: cross-encoder scorer contract with a BM25 fallback.
//! - [`generate`]: prompt assembly, generator clients and answer parsing.
//! - [`neural`]: LoRA adapter math, gradient accumulation and SelfExtend attention
//!   on a small decoder.
//! - [`eval`]: MCQ datasets, synthetic planted corpora, ablation runs.
//! - [`pipeline`] wires the stages together and [`cli`] exposes them as commands.

pub mod chunker;
pub mod cli;
pub mod config;
pub mod embed;
pub mod eval;
pub mod generate;
mod http;
pub mod index;
pub mod neural;
pub mod pipeline;
pub mod rerank;
pub mod text;

pub use chunker::{Chunk, ChunkingConfig, Document, Sentence};
pub use config::PipelineConfig;
pub use embed::{EmbeddingVector, Embedder};
pub use http::{HttpError, HttpSettings};
pub use index::VectorIndex;
pub use pipeline::Pipeline;
