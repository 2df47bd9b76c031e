//! Planted synthetic corpora. Every document is written from pseudo-words
//! drawn from disjoint per-topic pools, and every question is answered by
//! exactly one fact sentence whose location is recorded as evidence.
//!
//! A fact reads `The <s1> <s2> <s3> is <a1> <a2>.` and its question
//! `What is the <s1> <s2> <s3>?`; subject and answer words occur nowhere
//! else. Distractor options come from decoy pools of other topics that are
//! never written into any document, so with no context every option scores
//! zero under the lexical stub.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::write_mcq_dataset;
use super::DatasetError;
use crate::chunker::{ChunkingConfig, Document};
use crate::generate::MCQItem;
use crate::index::VectorIndex;

pub const N_OPTIONS: usize = 4;
const CATEGORIES: [&str; 4] = ["procedures", "timers", "measurements", "identifiers"];
const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Byte span of a question's supporting text within one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthCorpus {
    pub documents: Vec<Document>,
    pub items: Vec<MCQItem>,
    /// One entry per item.
    pub evidence: Vec<Evidence>,
}

impl SynthCorpus {
    /// Writes `corpus/<doc_id>.txt`, `questions.jsonl` and `gold.jsonl`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        let corpus = dir.join("corpus");
        std::fs::create_dir_all(&corpus)?;
        for d in &self.documents {
            std::fs::write(corpus.join(format!("{}.txt", d.id)), &d.text)?;
        }
        write_mcq_dataset(&dir.join("questions.jsonl"), &self.items)?;
        let gold: String = self
            .evidence
            .iter()
            .map(|e| serde_json::to_string(e).expect("evidence serializes") + "\n")
            .collect();
        std::fs::write(dir.join("gold.jsonl"), gold)
    }
}

pub fn load_evidence(path: &Path) -> Result<Vec<Evidence>, DatasetError> {
    let raw = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    raw.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| DatasetError::Schema {
                item: i,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Ids of the chunks whose span overlaps each item's evidence.
pub fn gold_chunk_ids(index: &VectorIndex, evidence: &[Evidence]) -> Vec<Vec<String>> {
    let mut by_doc: HashMap<&str, Vec<&crate::chunker::Chunk>> = HashMap::new();
    for e in index.entries() {
        by_doc.entry(e.chunk.doc_id.as_str()).or_default().push(&e.chunk);
    }
    evidence
        .iter()
        .map(|ev| {
            by_doc
                .get(ev.doc_id.as_str())
                .into_iter()
                .flatten()
                .filter(|c| c.char_span.0 < ev.end && ev.start < c.char_span.1)
                .map(|c| c.chunk_id.clone())
                .collect()
        })
        .collect()
}

/// Unique pronounceable pseudo-words.
struct Lexicon {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl Lexicon {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            used: HashSet::new(),
        }
    }

    fn word(&mut self) -> String {
        loop {
            let w: String = (0..3)
                .flat_map(|_| {
                    [
                        *CONSONANTS.choose(&mut self.rng).unwrap() as char,
                        *VOWELS.choose(&mut self.rng).unwrap() as char,
                    ]
                })
                .collect();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn words(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.word()).collect()
    }
}

/// Accumulates document text while tracking whitespace-token positions.
#[derive(Default)]
struct DocBuilder {
    text: String,
    tokens: usize,
}

impl DocBuilder {
    /// Appends a sentence, capitalising its first word; returns its byte span.
    fn sentence(&mut self, words: &[String], end: char) -> (usize, usize) {
        if !self.text.is_empty() && !self.text.ends_with('\n') {
            self.text.push(' ');
        }
        let start = self.text.len();
        for (i, w) in words.iter().enumerate() {
            if i > 0 {
                self.text.push(' ');
            }
            if i == 0 {
                let mut cs = w.chars();
                if let Some(f) = cs.next() {
                    self.text.extend(f.to_uppercase());
                    self.text.push_str(cs.as_str());
                }
            } else {
                self.text.push_str(w);
            }
        }
        self.text.push(end);
        self.tokens += words.len();
        (start, self.text.len())
    }

    fn paragraph(&mut self) {
        self.text.push_str("\n\n");
    }
}

fn filler(rng: &mut ChaCha8Rng, pool: &[String], len: usize) -> Vec<String> {
    (0..len).map(|_| pool.choose(rng).unwrap().clone()).collect()
}

/// Sentence lengths in `4..=9` summing to `total` (which must be at least 4).
fn partition(rng: &mut ChaCha8Rng, mut total: usize) -> Vec<usize> {
    let mut parts = Vec::new();
    while total > 9 {
        let l = rng.random_range(4..=9.min(total - 4));
        parts.push(l);
        total -= l;
    }
    parts.push(total);
    parts
}

struct Fact {
    subjects: Vec<String>,
    answer: Vec<String>,
}

impl Fact {
    fn new(lex: &mut Lexicon) -> Self {
        Self {
            subjects: lex.words(3),
            answer: lex.words(2),
        }
    }

    fn sentence(&self) -> Vec<String> {
        let mut w = vec!["the".to_string()];
        w.extend(self.subjects.iter().cloned());
        w.push("is".into());
        w.extend(self.answer.iter().cloned());
        w
    }

    fn question(&self) -> String {
        format!("What is the {}?", self.subjects.join(" "))
    }

    /// Gold at `q % N_OPTIONS`, distractors from decoy pools of other topics.
    fn item(&self, q: usize, rng: &mut ChaCha8Rng, decoys: &[Vec<String>], own_topic: usize, category: &str) -> MCQItem {
        let answer_index = q % N_OPTIONS;
        let others: Vec<usize> = (0..decoys.len()).filter(|&t| t != own_topic).collect();
        let mut options = Vec::with_capacity(N_OPTIONS);
        while options.len() < N_OPTIONS - 1 {
            let pool = &decoys[*others.choose(rng).unwrap()];
            let phrase = format!("{} {}", pool.choose(rng).unwrap(), pool.choose(rng).unwrap());
            if !options.contains(&phrase) {
                options.push(phrase);
            }
        }
        options.insert(answer_index, self.answer.join(" "));
        MCQItem {
            question: self.question(),
            options,
            answer_index,
            category: Some(category.to_string()),
        }
    }
}

const SEGMENTS_PER_DOC: usize = 3;
const POOL_WORDS: usize = 12;
const DECOY_WORDS: usize = 8;

/// Topic-segmented documents with one planted fact per question.
///
/// Panics if `n_docs` or `n_questions` is zero.
pub fn planted_corpus(seed: u64, n_docs: usize, n_questions: usize) -> SynthCorpus {
    assert!(n_docs >= 1 && n_questions >= 1, "need at least one document and one question");
    let mut lex = Lexicon::new(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let n_topics = n_docs * SEGMENTS_PER_DOC;
    let pools: Vec<Vec<String>> = (0..n_topics).map(|_| lex.words(POOL_WORDS)).collect();
    let decoys: Vec<Vec<String>> = (0..n_topics).map(|_| lex.words(DECOY_WORDS)).collect();

    // topic -> (question, fact) placed in that segment
    let mut placed: Vec<Vec<(usize, Fact)>> = (0..n_topics).map(|_| Vec::new()).collect();
    for q in 0..n_questions {
        let topic = (q % n_docs) * SEGMENTS_PER_DOC + (q / n_docs) % SEGMENTS_PER_DOC;
        placed[topic].push((q, Fact::new(&mut lex)));
    }

    let mut documents = Vec::with_capacity(n_docs);
    let mut evidence: Vec<Option<Evidence>> = vec![None; n_questions];
    let mut items: Vec<Option<MCQItem>> = vec![None; n_questions];
    for d in 0..n_docs {
        let id = format!("doc-{d:04}");
        let mut b = DocBuilder::default();
        for s in 0..SEGMENTS_PER_DOC {
            let topic = d * SEGMENTS_PER_DOC + s;
            if s > 0 {
                b.paragraph();
            }
            let n_filler = 6;
            let mut slots: Vec<Option<usize>> = vec![None; n_filler];
            for (k, _) in placed[topic].iter().enumerate() {
                let at = rng.random_range(0..=slots.len());
                slots.insert(at, Some(k));
            }
            for slot in slots {
                match slot {
                    None => {
                        let len = rng.random_range(5..=8);
                        b.sentence(&filler(&mut rng, &pools[topic], len), '.');
                    }
                    Some(k) => {
                        let (q, fact) = &placed[topic][k];
                        let (start, end) = b.sentence(&fact.sentence(), '.');
                        evidence[*q] = Some(Evidence { doc_id: id.clone(), start, end });
                        items[*q] = Some(fact.item(*q, &mut rng, &decoys, topic, CATEGORIES[topic % CATEGORIES.len()]));
                    }
                }
            }
        }
        documents.push(Document::new(id, b.text));
    }
    SynthCorpus {
        documents,
        items: items.into_iter().map(Option::unwrap).collect(),
        evidence: evidence.into_iter().map(Option::unwrap).collect(),
    }
}

/// Smallest and largest number of decoys competing with each gold chunk.
pub const TRAP_DECOYS: (usize, usize) = (15, 54);

/// Single-sentence documents where each question's gold sentence is out-ranked
/// in embedding similarity by 15 to 54 decoys that repeat two of its three
/// subject words. Only the gold sentence holds the third subject word, which
/// a lexical re-ranker weights heavily because it is rare among candidates.
pub fn rerank_trap_corpus(seed: u64, n_questions: usize) -> SynthCorpus {
    assert!(n_questions >= 1, "need at least one question");
    let mut lex = Lexicon::new(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7f4a_7c15);
    let span = TRAP_DECOYS.1 - TRAP_DECOYS.0 + 1;
    let decoys: Vec<Vec<String>> = (0..n_questions).map(|_| lex.words(DECOY_WORDS)).collect();
    let mut documents = Vec::new();
    let mut items = Vec::new();
    let mut evidence = Vec::new();
    for q in 0..n_questions {
        let pool = lex.words(POOL_WORDS);
        let fact = Fact::new(&mut lex);
        let mut gold_words = fact.sentence();
        gold_words.extend(filler(&mut rng, &pool, 6));
        let mut b = DocBuilder::default();
        let (start, end) = b.sentence(&gold_words, '.');
        let gold_id = format!("q{q:04}-00");
        evidence.push(Evidence { doc_id: gold_id.clone(), start, end });
        documents.push(Document::new(gold_id, b.text));

        let n_decoys = TRAP_DECOYS.0 + (q * 11) % span;
        for j in 0..n_decoys {
            let (s1, s2) = (&fact.subjects[0], &fact.subjects[1]);
            let mut w = vec![s1.clone(), s2.clone(), s1.clone(), s2.clone(), s1.clone(), s2.clone()];
            w.extend(filler(&mut rng, &pool, 4));
            let mut b = DocBuilder::default();
            b.sentence(&w, '.');
            documents.push(Document::new(format!("q{q:04}-{:02}", j + 1), b.text));
        }
        items.push(fact.item(q, &mut rng, &decoys, q, CATEGORIES[q % CATEGORIES.len()]));
    }
    SynthCorpus { documents, items, evidence }
}

/// Two-topic documents whose fact sentence is long enough that a fixed-size
/// window boundary separates its subject words from its answer words, while
/// sentence-aligned chunking keeps it whole. With `oversize` an extra
/// single-sentence table document longer than `table_tokens` carries one
/// more fact, giving a semantic chunk that no short-window model can read.
pub fn straddle_corpus(
    seed: u64,
    n_questions: usize,
    chunking: &ChunkingConfig,
    oversize: Option<usize>,
) -> SynthCorpus {
    assert!(n_questions >= 1, "need at least one question");
    let size = chunking.fixed_size_tokens;
    let overlap = chunking.fixed_overlap_tokens;
    let stride = size - overlap;
    assert!(stride >= 10, "fixed window stride too small to plant a straddling fact");
    let mut lex = Lexicon::new(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x2545_f491);
    let n_topics = n_questions + 1;
    let decoys: Vec<Vec<String>> = (0..n_topics).map(|_| lex.words(DECOY_WORDS)).collect();
    let mut documents = Vec::new();
    let mut items = Vec::new();
    let mut evidence = Vec::new();

    for q in 0..n_questions {
        let (px, py) = (lex.words(POOL_WORDS), lex.words(POOL_WORDS));
        let fact = Fact::new(&mut lex);
        let id = format!("s{q:04}");
        let mut b = DocBuilder::default();
        // The fact starts 6 tokens before the second window so its subjects
        // sit in the first window only; `overlap + 2` filler words push the
        // answer past the end of the first window.
        let start_at = stride - 6;
        for len in partition(&mut rng, start_at) {
            b.sentence(&filler(&mut rng, &px, len), '.');
        }
        debug_assert_eq!(b.tokens, start_at);
        let mut words = vec!["the".to_string()];
        words.extend(fact.subjects.iter().cloned());
        words.push("of".into());
        words.extend(filler(&mut rng, &px, overlap + 2));
        words.push("is".into());
        words.extend(fact.answer.iter().cloned());
        let (start, end) = b.sentence(&words, '.');
        for _ in 0..6 {
            let len = rng.random_range(5..=8);
            b.sentence(&filler(&mut rng, &px, len), '.');
        }
        b.paragraph();
        for _ in 0..10 {
            let len = rng.random_range(5..=8);
            b.sentence(&filler(&mut rng, &py, len), '.');
        }
        evidence.push(Evidence { doc_id: id.clone(), start, end });
        documents.push(Document::new(id, b.text));
        items.push(fact.item(q, &mut rng, &decoys, q, CATEGORIES[q % CATEGORIES.len()]));
    }

    if let Some(min_tokens) = oversize {
        let fact = Fact::new(&mut lex);
        let half = min_tokens / 2 + 1;
        let mut words = vec!["parameter".to_string(), "table".to_string()];
        words.extend(lex.words(half));
        words.extend(fact.sentence());
        words.extend(lex.words(half));
        let mut b = DocBuilder::default();
        let (start, end) = b.sentence(&words, '.');
        let id = "table-0000".to_string();
        evidence.push(Evidence { doc_id: id.clone(), start, end });
        documents.push(Document::new(id, b.text));
        items.push(fact.item(n_questions, &mut rng, &decoys, n_questions, "tables"));
    }
    SynthCorpus { documents, items, evidence }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunker::{fixed_chunk, split_sentences};

    #[test]
    fn planted_is_deterministic_and_well_formed() {
        let a = planted_corpus(3, 5, 17);
        assert_eq!(a, planted_corpus(3, 5, 17));
        assert_ne!(a, planted_corpus(4, 5, 17));
        assert_eq!(a.items.len(), 17);
        for (item, ev) in a.items.iter().zip(&a.evidence) {
            item.validate().unwrap();
            let doc = a.documents.iter().find(|d| d.id == ev.doc_id).unwrap();
            let fact = &doc.text[ev.start..ev.end];
            assert!(fact.contains(&item.options[item.answer_index]));
            for (i, o) in item.options.iter().enumerate() {
                if i != item.answer_index {
                    assert!(a.documents.iter().all(|d| !d.text.contains(o.as_str())));
                }
            }
            // the fact is its own sentence
            let sentences = split_sentences(&doc.text).unwrap();
            assert!(sentences.iter().any(|s| s.char_span == (ev.start, ev.end)));
        }
        let balanced = a.items.iter().filter(|i| i.answer_index == 0).count();
        assert_eq!(balanced, 5);
    }

    #[test]
    fn single_question() {
        let c = planted_corpus(1, 1, 1);
        assert_eq!((c.documents.len(), c.items.len(), c.evidence.len()), (1, 1, 1));
    }

    #[test]
    fn straddling_fact_is_split_by_fixed_windows() {
        let chunking = ChunkingConfig::default();
        let c = straddle_corpus(5, 4, &chunking, None);
        for (item, ev) in c.items.iter().zip(&c.evidence) {
            let doc = c.documents.iter().find(|d| d.id == ev.doc_id).unwrap();
            let answer = &item.options[item.answer_index];
            let subjects = item.question.trim_start_matches("What is the ").trim_end_matches('?');
            let chunks = fixed_chunk(doc, chunking.fixed_size_tokens, chunking.fixed_overlap_tokens).unwrap();
            let first = subjects.split(' ').next().unwrap();
            assert!(!chunks.iter().any(|ch| ch.text.contains(first) && ch.text.contains(answer.as_str())));
            assert!(doc.text[ev.start..ev.end].contains(answer.as_str()));
        }
    }

    #[test]
    fn oversize_table_is_one_long_sentence() {
        let c = straddle_corpus(5, 2, &ChunkingConfig::default(), Some(2048));
        let table = c.documents.last().unwrap();
        let sentences = split_sentences(&table.text).unwrap();
        assert_eq!(sentences.len(), 1);
        assert!(table.text.split_whitespace().count() > 2048);
        assert_eq!(c.items.len(), 3);
    }

    #[test]
    fn trap_layout() {
        let c = rerank_trap_corpus(9, 6);
        assert_eq!(c.items.len(), 6);
        let golds = c.documents.iter().filter(|d| d.id.ends_with("-00")).count();
        assert_eq!(golds, 6);
        let decoys = c.documents.len() - golds;
        let expected: usize = (0..6).map(|q| TRAP_DECOYS.0 + (q * 11) % 40).sum();
        assert_eq!(decoys, expected);
    }

    #[test]
    fn write_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let c = planted_corpus(2, 3, 5);
        c.write_to(dir.path()).unwrap();
        let docs = crate::chunker::load_corpus(&dir.path().join("corpus")).unwrap();
        assert_eq!(docs.iter().map(|d| (&d.id, &d.text)).collect::<Vec<_>>(),
                   c.documents.iter().map(|d| (&d.id, &d.text)).collect::<Vec<_>>());
        assert_eq!(super::super::load_mcq_dataset(&dir.path().join("questions.jsonl")).unwrap(), c.items);
        assert_eq!(load_evidence(&dir.path().join("gold.jsonl")).unwrap(), c.evidence);
    }
}
