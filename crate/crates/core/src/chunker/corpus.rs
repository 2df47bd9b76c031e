use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use super::Document;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
}

#[derive(Deserialize)]
struct JsonlDoc {
    id: String,
    text: String,
}

/// Loads a directory of `.txt` files (ids are file stems, sorted by file name)
/// or a JSON-lines file of `{"id", "text"}` records.
pub fn load_corpus(path: &Path) -> Result<Vec<Document>, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let meta = fs::metadata(path).map_err(io_err)?;
    let docs = if meta.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(io_err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
            .collect();
        files.sort();
        files
            .into_iter()
            .map(|file| {
                let text = fs::read_to_string(&file).map_err(|source| CorpusError::Io {
                    path: file.clone(),
                    source,
                })?;
                let id = file
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                Ok(Document {
                    id,
                    source_path: file.display().to_string(),
                    text,
                })
            })
            .collect::<Result<Vec<_>, CorpusError>>()?
    } else {
        let raw = fs::read_to_string(path).map_err(io_err)?;
        let mut docs = Vec::new();
        for (i, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: JsonlDoc = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            if rec.id.is_empty() {
                return Err(CorpusError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "empty document id".into(),
                });
            }
            docs.push(Document {
                id: rec.id,
                source_path: path.display().to_string(),
                text: rec.text,
            });
        }
        docs
    };

    let mut seen = std::collections::HashSet::new();
    for d in &docs {
        if !seen.insert(d.id.as_str()) {
            return Err(CorpusError::DuplicateId(d.id.clone()));
        }
    }
    Ok(docs)
}
