use super::{split_sentences, Chunk, ChunkError, Document};

/// Whitespace-token windows of `size_tokens`, advancing by
/// `size_tokens - overlap_tokens`. The last window may be shorter; windowing
/// stops once a window reaches the final token.
pub fn fixed_chunk(
    doc: &Document,
    size_tokens: usize,
    overlap_tokens: usize,
) -> Result<Vec<Chunk>, ChunkError> {
    if size_tokens == 0 {
        return Err(ChunkError::InvalidConfig("size_tokens must be positive".into()));
    }
    if overlap_tokens >= size_tokens {
        return Err(ChunkError::InvalidConfig(format!(
            "overlap ({overlap_tokens}) must be smaller than size ({size_tokens})"
        )));
    }
    let sentences = split_sentences(&doc.text)?;
    let base = doc.text.as_ptr() as usize;
    let tokens: Vec<(usize, usize)> = doc
        .text
        .split_whitespace()
        .map(|t| {
            let start = t.as_ptr() as usize - base;
            (start, start + t.len())
        })
        .collect();

    let stride = size_tokens - overlap_tokens;
    let mut chunks = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + size_tokens).min(tokens.len());
        let span = (tokens[start].0, tokens[end - 1].1);
        // sentences whose byte span intersects the chunk
        let first = sentences
            .iter()
            .position(|s| s.char_span.1 > span.0)
            .unwrap_or(0);
        let last = sentences
            .iter()
            .rposition(|s| s.char_span.0 < span.1)
            .unwrap_or(first);
        chunks.push(Chunk {
            doc_id: doc.id.clone(),
            chunk_id: format!("{}#{}", doc.id, chunks.len()),
            text: doc.text[span.0..span.1].to_string(),
            sentence_range: (first, last.max(first)),
            char_span: span,
        });
        if end == tokens.len() {
            break;
        }
        start += stride;
    }
    Ok(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(n: usize) -> Document {
        let words: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        Document::new("d", words.join(" "))
    }

    fn token_lists(chunks: &[Chunk]) -> Vec<Vec<String>> {
        chunks
            .iter()
            .map(|c| c.text.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn exact_division() {
        let chunks = fixed_chunk(&doc(10), 5, 0).unwrap();
        assert_eq!(chunks.len(), 2);
        assert!(token_lists(&chunks).iter().all(|t| t.len() == 5));
        assert_eq!(chunks[1].chunk_id, "d#1");
    }

    #[test]
    fn overlapping_windows() {
        // starts 0, 2, 4, 6; the window at 6 covers t6..t9 and reaches the end
        let chunks = fixed_chunk(&doc(10), 4, 2).unwrap();
        let firsts: Vec<String> = token_lists(&chunks).iter().map(|t| t[0].clone()).collect();
        assert_eq!(firsts, vec!["t0", "t2", "t4", "t6"]);
        assert_eq!(token_lists(&chunks)[3], vec!["t6", "t7", "t8", "t9"]);
    }

    #[test]
    fn short_document_and_tail() {
        let chunks = fixed_chunk(&doc(3), 5, 0).unwrap();
        assert_eq!(token_lists(&chunks), vec![vec!["t0", "t1", "t2"]]);
        let chunks = fixed_chunk(&doc(11), 4, 1).unwrap();
        assert_eq!(token_lists(&chunks).last().unwrap(), &vec!["t9", "t10"]);
    }

    #[test]
    fn rejects_bad_overlap() {
        assert!(matches!(fixed_chunk(&doc(4), 4, 4), Err(ChunkError::InvalidConfig(_))));
        assert!(matches!(
            fixed_chunk(&Document::new("e", " "), 4, 0),
            Err(ChunkError::EmptyDocument)
        ));
    }

    #[test]
    fn sentence_ranges_follow_spans() {
        let d = Document::new("d", "Alpha beta gamma. Delta epsilon. Zeta eta theta iota.");
        let chunks = fixed_chunk(&d, 4, 0).unwrap();
        let ranges: Vec<_> = chunks.iter().map(|c| c.sentence_range).collect();
        assert_eq!(ranges, vec![(0, 1), (1, 2), (2, 2)]);
    }

    proptest! {
        #[test]
        fn token_coverage(n in 1usize..200, size in 1usize..40, overlap_frac in 0.0f64..1.0) {
            let overlap = ((size as f64) * overlap_frac) as usize % size;
            let d = doc(n);
            let chunks = fixed_chunk(&d, size, overlap).unwrap();
            let all: Vec<String> = token_lists(&chunks).concat();
            for t in d.text.split_whitespace() {
                prop_assert!(all.iter().any(|x| x == t));
            }
            if overlap == 0 {
                prop_assert_eq!(all.len(), n);
            }
        }
    }
}
