//! Tokenisation shared by the hashing embedder, the BM25 scorer and the
//! token estimates used for prompt sizing.

/// Words dropped by the hashing embedder. Kept short on purpose: technical
/// prose is dense and most function words carry no retrieval signal.
pub const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "how", "in", "is", "it",
    "of", "on", "or", "that", "the", "this", "to", "was", "what", "when", "which", "with",
];

/// Lowercased whitespace tokens with leading/trailing punctuation stripped.
///
/// Inner punctuation is kept, so `38.331` and `e.g` survive as single tokens.
pub fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let t = raw.trim_matches(|c: char| !c.is_alphanumeric());
            (!t.is_empty()).then(|| t.to_lowercase())
        })
        .collect()
}

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Whitespace-token count, used as the token estimate throughout.
pub fn whitespace_token_count(text: &str) -> usize {
    text.split_whitespace().count()
}
