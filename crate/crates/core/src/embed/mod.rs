//! Embedding providers and the vector arithmetic used by chunking and retrieval.

mod deterministic;
mod http;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{HttpError, HttpSettings};

pub use deterministic::{DeterministicEmbedder, HASH_SEED};
pub use http::HttpEmbedder;

/// Accepted deviation of a stored vector's Euclidean norm from 1.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("text at position {index} is empty")]
    EmptyText { index: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot normalise a zero or non-finite vector")]
    DegenerateVector,
    #[error("invalid embedder config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Http(#[from] HttpError),
}

/// Unit-norm dense vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    /// Scales `values` to unit length.
    pub fn normalized(values: Vec<f64>) -> Result<Self, EmbedError> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if values.is_empty() || !norm.is_finite() || norm == 0.0 {
            return Err(EmbedError::DegenerateVector);
        }
        Ok(Self {
            values: values.iter().map(|v| (v / norm) as f32).collect(),
        })
    }

    /// Wraps stored values that must already be unit norm (e.g. read back from
    /// an index file).
    pub fn from_unit(values: Vec<f32>) -> Result<Self, EmbedError> {
        let v = Self { values };
        if v.values.is_empty() || (v.norm() - 1.0).abs() > NORM_TOLERANCE {
            return Err(EmbedError::DegenerateVector);
        }
        Ok(v)
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt()
    }

    /// Dot product accumulated in f64 in index order, clamped to [-1, 1].
    pub fn cosine(&self, other: &EmbeddingVector) -> Result<f64, EmbedError> {
        if self.dims() != other.dims() {
            return Err(EmbedError::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(dot(&self.values, &other.values).clamp(-1.0, 1.0))
    }
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    a.cosine(b)
}

pub trait Embedder: Send + Sync {
    fn dims(&self) -> usize;

    /// One unit-norm vector per input text, in input order.
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError>;
}

fn check_non_empty(texts: &[&str]) -> Result<(), EmbedError> {
    match texts.iter().position(|t| t.trim().is_empty()) {
        Some(index) => Err(EmbedError::EmptyText { index }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedProvider {
    #[default]
    Deterministic,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub provider: EmbedProvider,
    pub dims: usize,
    pub endpoint: Option<String>,
    pub batch_size: usize,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
    pub max_retries: usize,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            provider: EmbedProvider::Deterministic,
            dims: 384,
            endpoint: None,
            batch_size: 32,
            timeout_ms: 30_000,
            max_in_flight: 4,
            max_retries: 2,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dims < deterministic::MIN_DIMS {
            return Err(EmbedError::InvalidConfig(format!(
                "dims must be at least {}, got {}",
                deterministic::MIN_DIMS,
                self.dims
            )));
        }
        if self.batch_size == 0 || self.timeout_ms == 0 || self.max_in_flight == 0 {
            return Err(EmbedError::InvalidConfig(
                "batch_size, timeout_ms and max_in_flight must be positive".into(),
            ));
        }
        // An endpoint without the http provider is ignored, so setting the
        // environment override never breaks an offline run.
        if self.provider == EmbedProvider::Http && self.endpoint.is_none() {
            return Err(EmbedError::InvalidConfig("the http provider needs an endpoint".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn Embedder>, EmbedError> {
        self.validate()?;
        Ok(match self.provider {
            EmbedProvider::Deterministic => Box::new(DeterministicEmbedder::new(self.dims)),
            EmbedProvider::Http => Box::new(HttpEmbedder::new(
                self.endpoint.as_deref().unwrap_or_default(),
                self.dims,
                self.batch_size,
                &HttpSettings {
                    timeout: Duration::from_millis(self.timeout_ms),
                    max_in_flight: self.max_in_flight,
                    max_retries: self.max_retries,
                },
            )?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        let v = EmbeddingVector::normalized(vec![0.2, -0.4, 0.9]).unwrap();
        assert!((v.cosine(&v).unwrap() - 1.0).abs() < 1e-6);
        let e0 = EmbeddingVector::normalized(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let e1 = EmbeddingVector::normalized(vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(cosine_similarity(&e0, &e1).unwrap(), 0.0);
        let a = EmbeddingVector::normalized(vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((a.cosine(&e0).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-7);
        let short = EmbeddingVector::normalized(vec![1.0]).unwrap();
        assert!(matches!(a.cosine(&short), Err(EmbedError::DimensionMismatch { .. })));
    }

    #[test]
    fn rejects_degenerate_vectors() {
        assert!(EmbeddingVector::normalized(vec![0.0; 4]).is_err());
        assert!(EmbeddingVector::normalized(vec![]).is_err());
        assert!(EmbeddingVector::from_unit(vec![0.5, 0.5]).is_err());
        assert!(EmbeddingVector::from_unit(vec![0.6, 0.8]).is_ok());
    }

    #[test]
    fn config_rules() {
        assert!(EmbedderConfig::default().validate().is_ok());
        let http = EmbedderConfig {
            provider: EmbedProvider::Http,
            ..Default::default()
        };
        assert!(http.validate().is_err());
        let small = EmbedderConfig {
            dims: 4,
            ..Default::default()
        };
        assert!(small.validate().is_err());
    }

    proptest! {
        #[test]
        fn normalized_is_unit_and_cosine_symmetric(
            a in prop::collection::vec(-10.0f64..10.0, 16),
            b in prop::collection::vec(-10.0f64..10.0, 16),
        ) {
            prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
            let a = EmbeddingVector::normalized(a).unwrap();
            let b = EmbeddingVector::normalized(b).unwrap();
            prop_assert!((a.norm() - 1.0).abs() <= NORM_TOLERANCE);
            prop_assert_eq!(a.cosine(&b).unwrap(), b.cosine(&a).unwrap());
        }
    }
}
