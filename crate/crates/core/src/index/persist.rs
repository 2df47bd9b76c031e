//! On-disk layout (all integers little-endian):
//!
//! ```text
//! "SRIX" | version u32 | dims u32 | count u64 | metadata_len u64 | crc32 u32
//! metadata: one JSON object per line (chunk fields), `count` lines
//! vectors:  count * dims f32
//! ```
//!
//! The CRC covers the metadata and vector sections.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{IndexEntry, IndexError, VectorIndex};
use crate::chunker::Chunk;
use crate::embed::EmbeddingVector;

pub const MAGIC: &[u8; 4] = b"SRIX";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8 + 4;

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> IndexError + '_ {
    move |source| IndexError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl VectorIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut meta = Vec::new();
        for e in &self.entries {
            serde_json::to_writer(&mut meta, &e.chunk).expect("chunk serialises");
            meta.push(b'\n');
        }
        let mut vectors = Vec::with_capacity(self.entries.len() * self.dims * 4);
        for e in &self.entries {
            for v in e.vector.values() {
                vectors.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut crc = crc32fast::Hasher::new();
        crc.update(&meta);
        crc.update(&vectors);

        let mut out = Vec::with_capacity(HEADER_LEN + meta.len() + vectors.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&crc.finalize().to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&vectors);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(IndexError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(IndexError::ChecksumMismatch);
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != FORMAT_VERSION {
            return Err(IndexError::FormatVersionMismatch {
                expected: FORMAT_VERSION,
                found: version,
            });
        }
        let dims = u32_at(8) as usize;
        let count = u64_at(12) as usize;
        let meta_len = u64_at(20) as usize;
        let stored_crc = u32_at(28);

        let expected_len = count
            .checked_mul(dims)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(meta_len))
            .and_then(|n| n.checked_add(HEADER_LEN));
        if expected_len != Some(bytes.len()) {
            return Err(IndexError::ChecksumMismatch);
        }
        let body = &bytes[HEADER_LEN..];
        if crc32fast::hash(body) != stored_crc {
            return Err(IndexError::ChecksumMismatch);
        }
        let (meta, vectors) = body.split_at(meta_len);

        let meta = std::str::from_utf8(meta).map_err(|e| IndexError::Metadata(e.to_string()))?;
        let chunks: Vec<Chunk> = meta
            .lines()
            .map(|l| serde_json::from_str(l).map_err(|e| IndexError::Metadata(e.to_string())))
            .collect::<Result<_, _>>()?;
        if chunks.len() != count {
            return Err(IndexError::Metadata(format!(
                "header declares {count} entries, metadata has {}",
                chunks.len()
            )));
        }

        let mut entries = Vec::with_capacity(count);
        for (chunk, raw) in chunks.into_iter().zip(vectors.chunks_exact(dims.max(1) * 4)) {
            let values: Vec<f32> = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            let vector = EmbeddingVector::from_unit(values).map_err(|_| {
                IndexError::Metadata(format!("vector for {} is not unit norm", chunk.chunk_id))
            })?;
            entries.push(IndexEntry { chunk, vector });
        }
        let mut index = VectorIndex::new(dims);
        index.insert(entries)?;
        Ok(index)
    }

    /// Writes to a temporary file in the target directory, then renames it
    /// over `path`.
    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_error(path))?;
        tmp.write_all(&self.to_bytes()).map_err(io_error(path))?;
        tmp.as_file().sync_all().map_err(io_error(path))?;
        tmp.persist(path).map_err(|e| io_error(path)(e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let bytes = fs::read(path).map_err(io_error(path))?;
        Self::from_bytes(&bytes)
    }
}
