//! Rule-based sentence segmentation tuned for standards prose.
//!
//! A sentence ends at `.`, `?`, `!` or `;` when the terminator is followed by
//! whitespace and the next visible character is an uppercase letter or a digit.
//! Dotted numerals (`38.331`, `v16.1.0`) never split because the dot is not
//! followed by whitespace. A short list of abbreviations suppresses splits on
//! `.`. Blank lines always end a sentence, and short unterminated lines that
//! are followed by a capitalised line are treated as headings.

use super::{ChunkError, Sentence};

const ABBREVIATIONS: &[&str] = &[
    "al", "approx", "cf", "ch", "cl", "dr", "e.g", "eq", "eqs", "etc", "fig", "figs", "i.e",
    "mr", "mrs", "ms", "no", "nos", "prof", "ref", "refs", "rel", "sec", "st", "ver", "vol",
    "vs",
];

/// Headings longer than this many tokens are assumed to be wrapped prose.
const MAX_HEADING_TOKENS: usize = 12;

pub fn split_sentences(text: &str) -> Result<Vec<Sentence>, ChunkError> {
    if text.trim().is_empty() {
        return Err(ChunkError::EmptyDocument);
    }

    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut start = 0usize;
    let mut iter = text.char_indices().peekable();

    while let Some((i, c)) = iter.next() {
        let end = i + c.len_utf8();
        let split_here = match c {
            '.' | '?' | '!' | ';' => {
                let rest = &text[end..];
                starts_with_whitespace(rest)
                    && next_visible(rest).is_some_and(|n| n.is_uppercase() || n.is_ascii_digit())
                    && !(c == '.' && is_abbreviation(&text[start..i]))
            }
            '\n' => {
                let rest = &text[end..];
                if starts_blank_line(rest) {
                    push_trimmed(text, start, i, &mut spans);
                    start = end;
                    continue;
                }
                is_heading(&text[start..i], rest)
            }
            _ => false,
        };
        if split_here {
            let cut = if c == '\n' { i } else { end };
            push_trimmed(text, start, cut, &mut spans);
            start = end;
        }
    }
    push_trimmed(text, start, text.len(), &mut spans);

    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(index, (s, e))| Sentence {
            index,
            text: text[s..e].to_string(),
            char_span: (s, e),
        })
        .collect())
}

fn push_trimmed(text: &str, start: usize, end: usize, spans: &mut Vec<(usize, usize)>) {
    let slice = &text[start..end];
    let lead = slice.len() - slice.trim_start().len();
    let trail = slice.len() - slice.trim_end().len();
    if lead + trail < slice.len() {
        spans.push((start + lead, end - trail));
    }
}

fn starts_with_whitespace(s: &str) -> bool {
    s.chars().next().is_some_and(char::is_whitespace)
}

fn next_visible(s: &str) -> Option<char> {
    s.chars().find(|c| !c.is_whitespace())
}

/// True when `rest` (text after a newline) begins with an empty line.
fn starts_blank_line(rest: &str) -> bool {
    for c in rest.chars() {
        match c {
            '\n' => return true,
            c if c.is_whitespace() => continue,
            _ => return false,
        }
    }
    false
}

fn is_abbreviation(before: &str) -> bool {
    let word = before
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

/// `current` is the text of the sentence in progress up to the newline.
fn is_heading(current: &str, rest: &str) -> bool {
    let line = current.trim();
    if line.is_empty() || line.contains('\n') {
        return false;
    }
    if line.ends_with(['.', '?', '!', ';', ',', ':']) {
        return false;
    }
    if line.split_whitespace().count() > MAX_HEADING_TOKENS {
        return false;
    }
    next_visible(rest).is_some_and(|n| n.is_uppercase() || n.is_ascii_digit())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(input: &str) -> Vec<String> {
        split_sentences(input).unwrap().into_iter().map(|s| s.text).collect()
    }

    #[test]
    fn two_terminated_sentences() {
        let input = "A cell reselects. The UE measures RSRP.";
        let sentences = split_sentences(input).unwrap();
        assert_eq!(sentences.len(), 2);
        assert_eq!(sentences[0].char_span, (0, 17));
        assert_eq!(sentences[1].char_span, (18, 39));
        assert_eq!(sentences[1].text, "The UE measures RSRP.");
    }

    #[test]
    fn no_terminator_is_one_sentence() {
        let input = "One sentence without terminator";
        let sentences = split_sentences(input).unwrap();
        assert_eq!(sentences.len(), 1);
        assert_eq!(sentences[0].char_span, (0, input.len()));
    }

    #[test]
    fn dotted_version_numbers_do_not_split() {
        // Dots inside "38.331" and "v16.1.0" have no following whitespace; the
        // dot after "v16.1.0" is followed by " N" and therefore ends the sentence.
        let input = "See 3GPP TS 38.331 v16.1.0. Next sentence.";
        let sentences = split_sentences(input).unwrap();
        assert_eq!(texts(input), vec!["See 3GPP TS 38.331 v16.1.0.", "Next sentence."]);
        assert_eq!(sentences[0].char_span, (0, 27));
        assert_eq!(sentences[1].char_span, (28, 42));
    }

    #[test]
    fn abbreviations_and_lowercase_continuations() {
        assert_eq!(
            texts("Timers differ, cf. Table 4. Values are e.g. small. The end"),
            vec!["Timers differ, cf. Table 4.", "Values are e.g. small.", "The end"]
        );
        assert_eq!(texts("It is 5 p.m. now."), vec!["It is 5 p.m. now."]);
    }

    #[test]
    fn semicolon_and_question_marks() {
        assert_eq!(
            texts("Is it idle? Yes; 2 timers run! Done"),
            vec!["Is it idle?", "Yes;", "2 timers run!", "Done"]
        );
    }

    #[test]
    fn headings_and_paragraphs() {
        let input = "5.2.1 Cell reselection\nThe UE shall measure cells.\n\nparagraph two starts here";
        assert_eq!(
            texts(input),
            vec!["5.2.1 Cell reselection", "The UE shall measure cells.", "paragraph two starts here"]
        );
        // wrapped prose continues on a lowercase line
        assert_eq!(texts("The UE shall\nmeasure cells."), vec!["The UE shall\nmeasure cells."]);
    }

    #[test]
    fn empty_text_is_rejected() {
        assert!(matches!(split_sentences("  \n\t "), Err(ChunkError::EmptyDocument)));
    }

    #[test]
    fn spans_slice_back_to_text() {
        let input = "  Intro line\nFirst point. Second; Third?  \n\n Last ";
        for s in split_sentences(input).unwrap() {
            assert_eq!(&input[s.char_span.0..s.char_span.1], s.text);
        }
    }
}
