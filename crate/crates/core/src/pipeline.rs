//! The offline ingest arm (chunk, embed, index) and the online query arm
//! (retrieve, re-rank, assemble, generate, parse).

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::chunker::{chunk_document, Chunk, ChunkError, ChunkingConfig, CorpusError, Document};
use crate::config::{ConfigError, PipelineConfig};
use crate::embed::{EmbedError, Embedder};
use crate::generate::{
    assemble_prompt, generate, parse_answer, AssembledPrompt, GenerateError, Generation, GenerationRequest,
    Generator, MCQItem,
};
use crate::index::{IndexEntry, IndexError, VectorIndex};
use crate::rerank::{rerank, PairScorer, RerankError, ScoredChunk};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("document {doc_id}: {source}")]
    Chunk {
        doc_id: String,
        #[source]
        source: ChunkError,
    },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Rerank(#[from] RerankError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub docs: usize,
    pub sentences: usize,
    pub chunks: usize,
    #[serde(skip)]
    pub duration_ms: u128,
}

/// Retrieved candidates and the list contexts are drawn from.
#[derive(Debug, Clone)]
pub struct Retrieval {
    /// Raw top-`candidates_k` in similarity order.
    pub candidates: Vec<ScoredChunk>,
    /// Top-`top_m`, re-ranked or in raw order.
    pub ranked: Vec<ScoredChunk>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryOptions {
    pub use_context: bool,
    pub use_rerank: bool,
    pub n_contexts: usize,
}

#[derive(Debug)]
pub struct Answered {
    pub retrieval: Option<Retrieval>,
    pub contexts: Vec<Chunk>,
    pub prompt: AssembledPrompt,
    pub generation: Generation,
    /// `Err` when no valid option label was found.
    pub predicted: Result<usize, GenerateError>,
}

pub struct Pipeline {
    config: PipelineConfig,
    embedder: Box<dyn Embedder>,
    scorer: Box<dyn PairScorer>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let embedder = config.embedder.build()?;
        let scorer = config.rerank.build()?;
        Ok(Self { config, embedder, scorer })
    }

    pub fn with_components(
        config: PipelineConfig,
        embedder: Box<dyn Embedder>,
        scorer: Box<dyn PairScorer>,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Self { config, embedder, scorer })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    pub fn scorer(&self) -> &dyn PairScorer {
        self.scorer.as_ref()
    }

    /// Chunks every document, in document order.
    pub fn chunk_corpus(&self, docs: &[Document], chunking: &ChunkingConfig) -> Result<Vec<Vec<Chunk>>, PipelineError> {
        docs.par_iter()
            .map(|d| {
                chunk_document(d, self.embedder(), chunking).map_err(|source| PipelineError::Chunk {
                    doc_id: d.id.clone(),
                    source,
                })
            })
            .collect()
    }

    pub fn build_index(
        &self,
        docs: &[Document],
        chunking: &ChunkingConfig,
    ) -> Result<(VectorIndex, IngestSummary), PipelineError> {
        let started = Instant::now();
        let per_doc = self.chunk_corpus(docs, chunking)?;
        let sentences = per_doc
            .iter()
            .filter_map(|chunks| chunks.last().map(|c| c.sentence_range.1 + 1))
            .sum();
        let chunks: Vec<Chunk> = per_doc.into_iter().flatten().collect();
        let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
        let vectors = self.embedder.embed_texts(&texts)?;
        let mut index = VectorIndex::new(self.embedder.dims());
        let summary = IngestSummary {
            docs: docs.len(),
            sentences,
            chunks: chunks.len(),
            duration_ms: 0,
        };
        index.insert(
            chunks
                .into_iter()
                .zip(vectors)
                .map(|(chunk, vector)| IndexEntry { chunk, vector })
                .collect(),
        )?;
        Ok((
            index,
            IngestSummary {
                duration_ms: started.elapsed().as_millis(),
                ..summary
            },
        ))
    }

    pub fn retrieve(&self, index: &VectorIndex, query: &str, use_rerank: bool) -> Result<Retrieval, PipelineError> {
        let q = self
            .embedder
            .embed_texts(&[query])?
            .pop()
            .expect("one vector per input text");
        let candidates: Vec<ScoredChunk> = index
            .top_k(&q, self.config.rerank.candidates_k)?
            .into_iter()
            .enumerate()
            .map(|(rank, hit)| ScoredChunk {
                chunk: hit.entry.chunk.clone(),
                retrieval_rank: rank,
                retrieval_similarity: hit.similarity,
                rerank_score: None,
            })
            .collect();
        let top_m = self.config.rerank.top_m;
        let ranked = if use_rerank {
            rerank(query, candidates.clone(), self.scorer(), top_m)?
        } else {
            candidates.iter().take(top_m).cloned().collect()
        };
        Ok(Retrieval { candidates, ranked })
    }

    /// Retrieval for one question and the contexts it yields, or nothing
    /// when context is disabled.
    pub fn contexts_for(
        &self,
        index: &VectorIndex,
        question: &str,
        options: QueryOptions,
    ) -> Result<(Option<Retrieval>, Vec<Chunk>), PipelineError> {
        if !options.use_context {
            return Ok((None, Vec::new()));
        }
        let retrieval = self.retrieve(index, question, options.use_rerank)?;
        let contexts = retrieval
            .ranked
            .iter()
            .take(options.n_contexts)
            .map(|s| s.chunk.clone())
            .collect();
        Ok((Some(retrieval), contexts))
    }

    /// Assembles the prompt, generates and parses. Generator failures are
    /// errors; an unparsable reply is reported in the second element.
    pub fn generate_answer(
        &self,
        item: &MCQItem,
        contexts: &[Chunk],
        n_contexts: usize,
        generator: &dyn Generator,
    ) -> Result<(AssembledPrompt, Generation, Result<usize, GenerateError>), PipelineError> {
        let prompt = assemble_prompt(&self.config.generator.template, contexts, item, n_contexts);
        let generation = generate(
            generator,
            &GenerationRequest {
                prompt: &prompt,
                item: Some(item),
                contexts,
            },
        )?;
        let predicted = parse_answer(&generation.text, item.options.len());
        Ok((prompt, generation, predicted))
    }

    pub fn answer(
        &self,
        index: &VectorIndex,
        item: &MCQItem,
        options: QueryOptions,
        generator: &dyn Generator,
    ) -> Result<Answered, PipelineError> {
        let (retrieval, contexts) = self.contexts_for(index, &item.question, options)?;
        let (prompt, generation, predicted) = self.generate_answer(item, &contexts, options.n_contexts, generator)?;
        Ok(Answered {
            retrieval,
            contexts,
            prompt,
            generation,
            predicted,
        })
    }
}
