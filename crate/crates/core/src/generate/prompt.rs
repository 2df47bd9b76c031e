use serde::{Deserialize, Serialize};

use super::GenerateError;
use crate::chunker::Chunk;
use crate::text::whitespace_token_count;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplate {
    pub instruction_text: String,
    /// Followed by the 1-based context number and a colon.
    pub context_header: String,
    pub question_header: String,
    pub options_header: String,
    pub answer_cue: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            instruction_text: "Answer using only the provided context. Reply with the option number.".into(),
            context_header: "Context".into(),
            question_header: "Question:".into(),
            options_header: "Options:".into(),
            answer_cue: "Answer:".into(),
        }
    }
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), GenerateError> {
        let segments = [
            &self.instruction_text,
            &self.context_header,
            &self.question_header,
            &self.options_header,
            &self.answer_cue,
        ];
        if segments.iter().any(|s| s.trim().is_empty()) {
            return Err(GenerateError::InvalidConfig("prompt template segments must be non-empty".into()));
        }
        if self.answer_cue.contains('\n') {
            return Err(GenerateError::InvalidConfig("answer cue must be a single line".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MCQItem {
    pub question: String,
    pub options: Vec<String>,
    pub answer_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl MCQItem {
    pub const MIN_OPTIONS: usize = 2;
    pub const MAX_OPTIONS: usize = 5;

    pub fn validate(&self) -> Result<(), GenerateError> {
        let invalid = |m: String| Err(GenerateError::InvalidItem(m));
        if self.question.trim().is_empty() {
            return invalid("question is empty".into());
        }
        let n = self.options.len();
        if !(Self::MIN_OPTIONS..=Self::MAX_OPTIONS).contains(&n) {
            return invalid(format!("expected 2 to 5 options, got {n}"));
        }
        if let Some(i) = self.options.iter().position(|o| o.trim().is_empty()) {
            return invalid(format!("option {} is empty", i + 1));
        }
        for (i, o) in self.options.iter().enumerate() {
            if self.options[..i].contains(o) {
                return invalid(format!("option {} duplicates an earlier option", i + 1));
            }
        }
        if self.answer_index >= n {
            return invalid(format!("answer index {} out of range for {n} options", self.answer_index));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssembledPrompt {
    pub text: String,
    pub n_contexts_used: usize,
    /// Whitespace-token count of `text`.
    pub token_estimate: usize,
}

/// Renders instruction, the first `n` contexts in the given order, the
/// question and labelled options, and the answer cue as the last line.
pub fn assemble_prompt(template: &PromptTemplate, contexts: &[Chunk], item: &MCQItem, n: usize) -> AssembledPrompt {
    let used = n.min(contexts.len());
    let mut text = String::new();
    text.push_str(template.instruction_text.trim());
    text.push_str("\n\n");
    for (i, c) in contexts[..used].iter().enumerate() {
        text.push_str(&format!("{} {}:\n{}\n\n", template.context_header, i + 1, c.text.trim()));
    }
    text.push_str(&format!("{}\n{}\n\n{}\n", template.question_header, item.question.trim(), template.options_header));
    for (i, o) in item.options.iter().enumerate() {
        text.push_str(&format!("option {}: {}\n", i + 1, o.trim()));
    }
    text.push('\n');
    text.push_str(&template.answer_cue);
    AssembledPrompt {
        token_estimate: whitespace_token_count(&text),
        n_contexts_used: used,
        text,
    }
}

/// Like [`assemble_prompt`] for a free-form question with no options.
pub fn assemble_open_prompt(template: &PromptTemplate, contexts: &[Chunk], question: &str, n: usize) -> AssembledPrompt {
    let used = n.min(contexts.len());
    let mut text = String::new();
    text.push_str(template.instruction_text.trim());
    text.push_str("\n\n");
    for (i, c) in contexts[..used].iter().enumerate() {
        text.push_str(&format!("{} {}:\n{}\n\n", template.context_header, i + 1, c.text.trim()));
    }
    text.push_str(&format!("{}\n{}\n\n{}", template.question_header, question.trim(), template.answer_cue));
    AssembledPrompt {
        token_estimate: whitespace_token_count(&text),
        n_contexts_used: used,
        text,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chunk(i: usize, text: &str) -> Chunk {
        Chunk {
            doc_id: "d".into(),
            chunk_id: format!("d#{i}"),
            text: text.into(),
            sentence_range: (i, i + 1),
            char_span: (0, text.len()),
        }
    }

    fn item(options: &[&str]) -> MCQItem {
        MCQItem {
            question: "Which timer governs periodic updates?".into(),
            options: options.iter().map(|s| s.to_string()).collect(),
            answer_index: 0,
            category: None,
        }
    }

    #[test]
    fn takes_first_n_contexts_in_order() {
        let contexts: Vec<Chunk> = (0..15).map(|i| chunk(i, &format!("passage number {i} body"))).collect();
        let p = assemble_prompt(&PromptTemplate::default(), &contexts, &item(&["T3412", "T3324"]), 3);
        assert_eq!(p.n_contexts_used, 3);
        let pos: Vec<usize> = (0..3)
            .map(|i| p.text.find(&format!("passage number {i} body")).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(p.text.contains("Context 3:") && !p.text.contains("Context 4:"));
        assert!(!p.text.contains("passage number 3 body"));
        assert_eq!(p.token_estimate, p.text.split_whitespace().count());
    }

    #[test]
    fn no_contexts_and_two_options() {
        let p = assemble_prompt(&PromptTemplate::default(), &[], &item(&["T3412", "T3324"]), 3);
        assert_eq!(p.n_contexts_used, 0);
        assert!(!p.text.contains("Context"));
        assert!(p.text.contains("Question:") && p.text.contains("Options:"));
        assert!(p.text.contains("option 1: T3412") && p.text.contains("option 2: T3324"));
        assert!(!p.text.contains("option 3"));
        assert_eq!(p.text.lines().last(), Some("Answer:"));
        let open = assemble_open_prompt(&PromptTemplate::default(), &[chunk(0, "alpha")], "Why?", 3);
        assert_eq!(open.n_contexts_used, 1);
        assert!(open.text.contains("Context 1:\nalpha") && !open.text.contains("Options:"));
        assert_eq!(open.text.lines().last(), Some("Answer:"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let contexts = vec![chunk(0, "alpha"), chunk(1, "beta")];
        let a = assemble_prompt(&PromptTemplate::default(), &contexts, &item(&["x", "y", "z"]), 2);
        let b = assemble_prompt(&PromptTemplate::default(), &contexts, &item(&["x", "y", "z"]), 2);
        assert_eq!(a, b);
    }

    #[test]
    fn item_validation() {
        assert!(item(&["a", "b"]).validate().is_ok());
        assert!(item(&["a"]).validate().is_err());
        assert!(item(&["a", "b", "c", "d", "e", "f"]).validate().is_err());
        assert!(item(&["a", "a"]).validate().is_err());
        assert!(item(&["a", " "]).validate().is_err());
        let mut bad = item(&["a", "b"]);
        bad.answer_index = 2;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn template_validation() {
        let mut t = PromptTemplate::default();
        assert!(t.validate().is_ok());
        t.answer_cue = " ".into();
        assert!(t.validate().is_err());
    }
}
