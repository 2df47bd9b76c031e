//! Re-ranking of retrieved candidates with a pairwise relevance scorer.
//!
//! Only the order of scores matters downstream; no scale is assumed.

mod bm25;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunker::Chunk;
use crate::http::{HttpError, HttpSettings, JsonClient};

pub use bm25::Bm25;

#[derive(Debug, Error)]
pub enum RerankError {
    #[error("query and text must be non-empty")]
    EmptyInput,
    #[error("invalid rerank config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Http(#[from] HttpError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredChunk {
    pub chunk: Chunk,
    /// 0-based rank in the retriever's output.
    pub retrieval_rank: usize,
    pub retrieval_similarity: f64,
    pub rerank_score: Option<f64>,
}

pub trait PairScorer: Send + Sync {
    /// One finite relevance score per text; higher is more relevant.
    fn score_batch(&self, query: &str, texts: &[&str]) -> Result<Vec<f64>, RerankError>;

    fn score_pair(&self, query: &str, text: &str) -> Result<f64, RerankError> {
        if query.trim().is_empty() || text.trim().is_empty() {
            return Err(RerankError::EmptyInput);
        }
        Ok(self.score_batch(query, &[text])?[0])
    }
}

/// Offline stand-in for a cross-encoder.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalScorer {
    pub bm25: Bm25,
}

impl PairScorer for LexicalScorer {
    fn score_batch(&self, query: &str, texts: &[&str]) -> Result<Vec<f64>, RerankError> {
        Ok(self.bm25.score_batch(query, texts))
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    query: &'a str,
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

/// Client for `POST {endpoint}/score`; one batched call per invocation.
pub struct HttpScorer {
    client: JsonClient,
}

impl HttpScorer {
    pub fn new(endpoint: &str, settings: &HttpSettings) -> Result<Self, RerankError> {
        Ok(Self {
            client: JsonClient::new(endpoint, settings)?,
        })
    }
}

impl PairScorer for HttpScorer {
    fn score_batch(&self, query: &str, texts: &[&str]) -> Result<Vec<f64>, RerankError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let (request_id, resp): (String, ScoreResponse) =
            self.client.post("/score", &ScoreRequest { query, texts })?;
        if resp.scores.len() != texts.len() {
            return Err(HttpError::malformed(
                &request_id,
                format!("expected {} scores, got {}", texts.len(), resp.scores.len()),
            )
            .into());
        }
        if resp.scores.iter().any(|s| !s.is_finite()) {
            return Err(HttpError::malformed(&request_id, "non-finite score").into());
        }
        Ok(resp.scores)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    #[default]
    Lexical,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RerankConfig {
    pub scorer: ScorerKind,
    pub top_m: usize,
    pub candidates_k: usize,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
    pub max_retries: usize,
}

impl Default for RerankConfig {
    fn default() -> Self {
        Self {
            scorer: ScorerKind::Lexical,
            top_m: 15,
            candidates_k: 150,
            endpoint: None,
            timeout_ms: 30_000,
            max_in_flight: 4,
            max_retries: 2,
        }
    }
}

impl RerankConfig {
    pub fn validate(&self) -> Result<(), RerankError> {
        if self.top_m == 0 || self.candidates_k == 0 {
            return Err(RerankError::InvalidConfig("top_m and candidates_k must be positive".into()));
        }
        if self.top_m > self.candidates_k {
            return Err(RerankError::InvalidConfig(format!(
                "top_m ({}) exceeds candidates_k ({})",
                self.top_m, self.candidates_k
            )));
        }
        if self.scorer == ScorerKind::Http && self.endpoint.is_none() {
            return Err(RerankError::InvalidConfig("the http scorer needs an endpoint".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn PairScorer>, RerankError> {
        self.validate()?;
        Ok(match self.scorer {
            ScorerKind::Lexical => Box::new(LexicalScorer::default()),
            ScorerKind::Http => Box::new(HttpScorer::new(
                self.endpoint.as_deref().unwrap_or_default(),
                &HttpSettings {
                    timeout: Duration::from_millis(self.timeout_ms),
                    max_in_flight: self.max_in_flight,
                    max_retries: self.max_retries,
                },
            )?),
        })
    }
}

/// Scores every candidate against `query` and keeps the best `top_m`,
/// ordered by score descending with ties broken by retrieval rank.
pub fn rerank(
    query: &str,
    candidates: Vec<ScoredChunk>,
    scorer: &dyn PairScorer,
    top_m: usize,
) -> Result<Vec<ScoredChunk>, RerankError> {
    if candidates.is_empty() {
        return Ok(candidates);
    }
    let texts: Vec<&str> = candidates.iter().map(|c| c.chunk.text.as_str()).collect();
    let scores = scorer.score_batch(query, &texts)?;
    let mut scored: Vec<ScoredChunk> = candidates
        .into_iter()
        .zip(scores)
        .map(|(mut c, s)| {
            c.rerank_score = Some(s);
            c
        })
        .collect();
    scored.sort_by(|a, b| {
        let (sa, sb) = (a.rerank_score.unwrap_or(f64::MIN), b.rerank_score.unwrap_or(f64::MIN));
        sb.total_cmp(&sa).then(a.retrieval_rank.cmp(&b.retrieval_rank))
    });
    scored.truncate(top_m);
    Ok(scored)
}
