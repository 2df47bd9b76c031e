use std::collections::HashMap;

use crate::text::{is_stopword, tokens};

/// BM25 with document frequencies taken over the scored batch itself, so the
/// score is a pure function of `(query, texts)`. Stopwords are dropped from
/// the query; document lengths count every token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25 {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25 {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25 {
    pub fn score_batch(&self, query: &str, texts: &[&str]) -> Vec<f64> {
        if texts.is_empty() {
            return Vec::new();
        }
        let mut terms: Vec<String> = Vec::new();
        for t in tokens(query) {
            if !is_stopword(&t) && !terms.contains(&t) {
                terms.push(t);
            }
        }
        let docs: Vec<Vec<String>> = texts.iter().map(|t| tokens(t)).collect();
        let n = docs.len() as f64;
        let total: usize = docs.iter().map(Vec::len).sum();
        let avgdl = if total == 0 { 1.0 } else { total as f64 / n };

        let tfs: Vec<HashMap<&str, usize>> = docs
            .iter()
            .map(|d| {
                let mut m = HashMap::new();
                for t in d {
                    *m.entry(t.as_str()).or_insert(0) += 1;
                }
                m
            })
            .collect();
        let idf: Vec<f64> = terms
            .iter()
            .map(|t| {
                let df = tfs.iter().filter(|m| m.contains_key(t.as_str())).count() as f64;
                (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
            })
            .collect();

        docs.iter()
            .zip(&tfs)
            .map(|(doc, tf)| {
                let norm = self.k1 * (1.0 - self.b + self.b * doc.len() as f64 / avgdl);
                terms
                    .iter()
                    .zip(&idf)
                    .map(|(t, idf)| {
                        let f = *tf.get(t.as_str()).unwrap_or(&0) as f64;
                        idf * f * (self.k1 + 1.0) / (f + norm)
                    })
                    .sum()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_scores() {
        // N = 2, avgdl = 4; idf(nr) = idf(measurement) = ln 2, idf(handover) = ln 1.2
        let s = Bm25::default().score_batch(
            "NR handover measurement",
            &["NR handover measurement report configuration", "handover command message"],
        );
        assert!((s[0] - 1.423_074_234_808_437).abs() < 1e-12);
        assert!((s[1] - 0.203_092_367_061_620_3).abs() < 1e-12);

        let s = Bm25::default().score_batch(
            "t3412 periodic",
            &["the t3412 timer is periodic t3412", "timer value is periodic"],
        );
        assert!((s[0] - 1.070_854_305_000_198).abs() < 1e-12);
        assert!((s[1] - 0.198_568_032_151_831_75).abs() < 1e-12);
    }

    #[test]
    fn disjoint_and_empty() {
        let s = Bm25::default().score_batch("paging cycle", &["beam failure recovery"]);
        assert_eq!(s, vec![0.0]);
        assert!(Bm25::default().score_batch("x", &[]).is_empty());
        assert_eq!(Bm25::default().score_batch("the of", &["the of"]), vec![0.0]);
    }
}
