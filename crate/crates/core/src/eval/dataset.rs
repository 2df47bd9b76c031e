use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::generate::MCQItem;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("item {item}: {message}")]
    Schema { item: usize, message: String },
    #[error("dataset {0} contains no items")]
    Empty(PathBuf),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawItem {
    question: String,
    options: Vec<String>,
    answer: Value,
    #[serde(default)]
    category: Option<String>,
    #[serde(default)]
    #[allow(dead_code)]
    id: Option<Value>,
}

#[derive(Serialize)]
struct OutItem<'a> {
    question: &'a str,
    options: &'a [String],
    answer: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    category: Option<&'a str>,
}

/// Reads a JSON array or JSON-lines file of
/// `{"question", "options", "answer", "category"}` objects. `answer` is a
/// 1-based number or a string such as `"option 3"` or `"option 3: text"`.
/// Items are numbered from 0 in error messages.
pub fn load_mcq_dataset(path: &Path) -> Result<Vec<MCQItem>, DatasetError> {
    let raw = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let items = parse_mcq_dataset(&raw)?;
    if items.is_empty() {
        return Err(DatasetError::Empty(path.to_path_buf()));
    }
    Ok(items)
}

pub fn parse_mcq_dataset(raw: &str) -> Result<Vec<MCQItem>, DatasetError> {
    let values: Vec<Value> = if raw.trim_start().starts_with('[') {
        serde_json::from_str(raw).map_err(|e| DatasetError::Schema {
            item: 0,
            message: format!("not a JSON array of items: {e}"),
        })?
    } else {
        raw.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| DatasetError::Schema {
                    item: i,
                    message: e.to_string(),
                })
            })
            .collect::<Result<_, _>>()?
    };
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| to_item(v).map_err(|message| DatasetError::Schema { item: i, message }))
        .collect()
}

fn to_item(value: Value) -> Result<MCQItem, String> {
    let raw: RawItem = serde_json::from_value(value).map_err(|e| e.to_string())?;
    let n = raw.options.len();
    let one_based = match &raw.answer {
        Value::Number(num) => num.as_u64().ok_or_else(|| format!("answer {num} is not a positive integer"))?,
        Value::String(s) => answer_label(s).ok_or_else(|| format!("cannot read answer {s:?}"))?,
        other => return Err(format!("answer must be a number or string, got {other}")),
    };
    if one_based == 0 || one_based > n as u64 {
        return Err(format!("answer {one_based} out of range for {n} options"));
    }
    let item = MCQItem {
        question: raw.question,
        options: raw.options,
        answer_index: one_based as usize - 1,
        category: raw.category,
    };
    item.validate().map_err(|e| e.to_string())?;
    Ok(item)
}

fn answer_label(s: &str) -> Option<u64> {
    static LABEL: OnceLock<Regex> = OnceLock::new();
    let re = LABEL.get_or_init(|| Regex::new(r"(?i)^\s*(?:option\s*)?(\d+)\b").unwrap());
    re.captures(s)?[1].parse().ok()
}

/// Writes items as JSON-lines with 1-based numeric answers.
pub fn write_mcq_dataset(path: &Path, items: &[MCQItem]) -> std::io::Result<()> {
    let mut out = String::new();
    for item in items {
        let line = serde_json::to_string(&OutItem {
            question: &item.question,
            options: &item.options,
            answer: item.answer_index + 1,
            category: item.category.as_deref(),
        })
        .expect("items serialize");
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out)
}
