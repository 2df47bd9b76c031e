//! Exact cosine top-k retrieval over chunk embeddings.
//!
//! Every query scans all entries; ties are broken by insertion order so that
//! results are a total order and reproducible across runs.

mod persist;

use std::cmp::Ordering;
use std::collections::HashSet;

use thiserror::Error;

use crate::chunker::Chunk;
use crate::embed::{dot, EmbeddingVector};

pub use persist::{FORMAT_VERSION, MAGIC};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("chunk id {0:?} is already indexed")]
    DuplicateChunkId(String),
    #[error("dimension mismatch: index has {expected} dims, vector has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be positive")]
    ZeroK,
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("not an index file (bad magic bytes)")]
    BadMagic,
    #[error("index format version {found} is not supported (expected {expected})")]
    FormatVersionMismatch { expected: u32, found: u32 },
    #[error("index file is truncated or corrupt (checksum mismatch)")]
    ChecksumMismatch,
    #[error("index metadata is malformed: {0}")]
    Metadata(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub chunk: Chunk,
    pub vector: EmbeddingVector,
}

impl IndexEntry {
    pub fn chunk_id(&self) -> &str {
        &self.chunk.chunk_id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit<'a> {
    pub entry: &'a IndexEntry,
    pub similarity: f64,
    /// Insertion position of the entry.
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dims: usize,
    entries: Vec<IndexEntry>,
    ids: HashSet<String>,
}

impl VectorIndex {
    pub fn new(dims: usize) -> Self {
        Self {
            dims,
            entries: Vec::new(),
            ids: HashSet::new(),
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn version(&self) -> u32 {
        FORMAT_VERSION
    }

    /// Appends all entries or none of them.
    pub fn insert(&mut self, entries: Vec<IndexEntry>) -> Result<(), IndexError> {
        let mut batch_ids = HashSet::new();
        for e in &entries {
            if e.vector.dims() != self.dims {
                return Err(IndexError::DimensionMismatch {
                    expected: self.dims,
                    found: e.vector.dims(),
                });
            }
            if self.ids.contains(e.chunk_id()) || !batch_ids.insert(e.chunk_id()) {
                return Err(IndexError::DuplicateChunkId(e.chunk_id().to_string()));
            }
        }
        self.ids.extend(entries.iter().map(|e| e.chunk_id().to_string()));
        self.entries.extend(entries);
        Ok(())
    }

    pub fn get(&self, chunk_id: &str) -> Option<&IndexEntry> {
        self.entries.iter().find(|e| e.chunk_id() == chunk_id)
    }

    /// The `min(k, len)` most similar entries, similarity descending, ties by
    /// insertion order.
    pub fn top_k(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<Hit<'_>>, IndexError> {
        if self.entries.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        if query.dims() != self.dims {
            return Err(IndexError::DimensionMismatch {
                expected: self.dims,
                found: query.dims(),
            });
        }
        let mut scored: Vec<(f64, usize)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (dot(query.values(), e.vector.values()).clamp(-1.0, 1.0), i))
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
            b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);
        Ok(scored
            .into_iter()
            .map(|(similarity, position)| Hit {
                entry: &self.entries[position],
                similarity,
                position,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn entry(id: &str, values: Vec<f64>) -> IndexEntry {
        IndexEntry {
            chunk: Chunk {
                doc_id: "doc".into(),
                chunk_id: id.into(),
                text: format!("text of {id}"),
                sentence_range: (0, 0),
                char_span: (0, 1),
            },
            vector: EmbeddingVector::normalized(values).unwrap(),
        }
    }

    fn random_entries(rng: &mut ChaCha8Rng, n: usize, dims: usize, prefix: &str) -> Vec<IndexEntry> {
        (0..n)
            .map(|i| {
                let v: Vec<f64> = (0..dims).map(|_| rng.random_range(-1.0..1.0)).collect();
                entry(&format!("{prefix}{i}"), v)
            })
            .collect()
    }

    fn ids(hits: &[Hit<'_>]) -> Vec<String> {
        hits.iter().map(|h| h.entry.chunk_id().to_string()).collect()
    }

    #[test]
    fn insert_and_atomic_duplicates() {
        let mut idx = VectorIndex::new(3);
        idx.insert(vec![
            entry("a", vec![1.0, 0.0, 0.0]),
            entry("b", vec![0.0, 1.0, 0.0]),
            entry("c", vec![0.0, 0.0, 1.0]),
        ])
        .unwrap();
        assert_eq!(idx.len(), 3);
        let err = idx
            .insert(vec![entry("d", vec![1.0, 1.0, 0.0]), entry("a", vec![1.0, 0.0, 1.0])])
            .unwrap_err();
        assert!(matches!(err, IndexError::DuplicateChunkId(id) if id == "a"));
        assert_eq!(idx.len(), 3);
        assert!(idx.get("d").is_none());
        let err = idx.insert(vec![entry("e", vec![1.0, 0.0])]).unwrap_err();
        assert!(matches!(err, IndexError::DimensionMismatch { .. }));
    }

    #[test]
    fn exhaustive_and_self_retrieval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut idx = VectorIndex::new(8);
        idx.insert(random_entries(&mut rng, 20, 8, "e")).unwrap();
        let q = idx.entries()[7].vector.clone();
        let hits = idx.top_k(&q, 50).unwrap();
        assert_eq!(hits.len(), 20);
        assert_eq!(hits[0].entry.chunk_id(), "e7");
        assert!((hits[0].similarity - 1.0).abs() < 1e-6);
        assert!(hits.windows(2).all(|w| w[0].similarity >= w[1].similarity));
    }

    #[test]
    fn ties_follow_insertion_order() {
        let mut idx = VectorIndex::new(2);
        idx.insert(vec![
            entry("x", vec![0.0, 1.0]),
            entry("late", vec![1.0, 0.0]),
            entry("early", vec![1.0, 0.0]),
        ])
        .unwrap();
        let q = EmbeddingVector::normalized(vec![1.0, 0.0]).unwrap();
        assert_eq!(ids(&idx.top_k(&q, 2).unwrap()), vec!["late", "early"]);
    }

    #[test]
    fn error_cases() {
        let idx = VectorIndex::new(2);
        let q = EmbeddingVector::normalized(vec![1.0, 0.0]).unwrap();
        assert!(matches!(idx.top_k(&q, 1), Err(IndexError::EmptyIndex)));
        let mut idx = VectorIndex::new(3);
        idx.insert(vec![entry("a", vec![1.0, 0.0, 0.0])]).unwrap();
        assert!(matches!(idx.top_k(&q, 1), Err(IndexError::DimensionMismatch { .. })));
    }

    #[test]
    fn matches_full_scan_and_build_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let entries = random_entries(&mut rng, 10_000, 16, "v");
        let mut one_shot = VectorIndex::new(16);
        one_shot.insert(entries.clone()).unwrap();
        let mut incremental = VectorIndex::new(16);
        for batch in entries.chunks(997) {
            incremental.insert(batch.to_vec()).unwrap();
        }
        for _ in 0..5 {
            let q: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
            let q = EmbeddingVector::normalized(q).unwrap();
            let a = one_shot.top_k(&q, 150).unwrap();
            let b = incremental.top_k(&q, 150).unwrap();
            assert_eq!(ids(&a), ids(&b));

            // oracle: stable sort of every similarity
            let mut all: Vec<(usize, f64)> = entries
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let s: f64 = q
                        .values()
                        .iter()
                        .zip(e.vector.values())
                        .map(|(&x, &y)| f64::from(x) * f64::from(y))
                        .sum();
                    (i, s)
                })
                .collect();
            all.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap());
            let expected: Vec<String> = all[..150].iter().map(|(i, _)| format!("v{i}")).collect();
            assert_eq!(ids(&a), expected);
        }
    }
}
