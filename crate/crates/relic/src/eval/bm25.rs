//! Okapi BM25 over whitespace-tokenized lowercase text, the classical
//! sparse baseline the trained retrievers are compared against.

use std::collections::HashMap;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

/// BM25 score of every document against the query. Each query-token
/// occurrence contributes its term score, and the idf is floored by the
/// `+1` inside the logarithm so common terms never score negative.
pub fn bm25_scores(query: &str, corpus: &[String], k1: f64, b: f64) -> Vec<f64> {
    let docs: Vec<Vec<String>> = corpus.iter().map(|d| tokens(d)).collect();
    let n = docs.len();
    if n == 0 {
        return Vec::new();
    }
    let avgdl = docs.iter().map(|d| d.len()).sum::<usize>() as f64 / n as f64;
    let mut df: HashMap<&str, usize> = HashMap::new();
    for doc in &docs {
        let mut seen: Vec<&str> = doc.iter().map(|t| t.as_str()).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_default() += 1;
        }
    }
    let query_tokens = tokens(query);
    docs.iter()
        .map(|doc| {
            let mut tf: HashMap<&str, f64> = HashMap::new();
            for t in doc {
                *tf.entry(t.as_str()).or_default() += 1.0;
            }
            let norm = k1 * (1.0 - b + b * doc.len() as f64 / avgdl);
            query_tokens
                .iter()
                .map(|t| {
                    let f = tf.get(t.as_str()).copied().unwrap_or(0.0);
                    if f == 0.0 {
                        return 0.0;
                    }
                    let d = df.get(t.as_str()).copied().unwrap_or(0) as f64;
                    let idf = ((n as f64 - d + 0.5) / (d + 0.5) + 1.0).ln();
                    idf * f * (k1 + 1.0) / (f + norm)
                })
                .sum()
        })
        .collect()
}

/// Document indices ordered by descending BM25 score, ties by index.
pub fn bm25_rank(query: &str, corpus: &[String], k1: f64, b: f64) -> Vec<usize> {
    let scores = bm25_scores(query, corpus, k1, b);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(docs: &[&str]) -> Vec<String> {
        docs.iter().map(|d| d.to_string()).collect()
    }

    #[test]
    fn unique_term_puts_its_document_first() {
        let docs = corpus(&["plain words here", "special token inside", "plain words again"]);
        let ranked = bm25_rank("special", &docs, BM25_K1, BM25_B);
        assert_eq!(ranked[0], 1);
    }

    #[test]
    fn empty_query_is_all_zero_and_index_ordered() {
        let docs = corpus(&["one doc", "two doc", "three doc"]);
        assert_eq!(bm25_scores("", &docs, BM25_K1, BM25_B), [0.0, 0.0, 0.0]);
        assert_eq!(bm25_rank("", &docs, BM25_K1, BM25_B), [0, 1, 2]);
    }

    #[test]
    fn matches_the_formula_on_a_three_document_corpus() {
        let docs = corpus(&[
            "the cat sat",
            "the dog sat on the mat",
            "a cat and a cat",
        ]);
        let got = bm25_scores("cat sat", &docs, BM25_K1, BM25_B);
        // Written out from the Okapi definition, independent of the
        // implementation above.
        let n = 3.0f64;
        let avgdl = (3.0 + 6.0 + 5.0) / 3.0;
        let idf = |d: f64| ((n - d + 0.5) / (d + 0.5) + 1.0f64).ln();
        let term = |f: f64, len: f64, d: f64| {
            idf(d) * f * (1.2 + 1.0) / (f + 1.2 * (1.0 - 0.75 + 0.75 * len / avgdl))
        };
        // df(cat) = 2 (docs 0 and 2); df(sat) = 2 (docs 0 and 1).
        let want = [
            term(1.0, 3.0, 2.0) + term(1.0, 3.0, 2.0),
            term(1.0, 6.0, 2.0),
            term(2.0, 5.0, 2.0),
        ];
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "got {g}, want {w}");
        }
    }

    #[test]
    fn tokenization_lowercases() {
        let docs = corpus(&["The CAT", "a dog"]);
        let ranked = bm25_rank("cat", &docs, BM25_K1, BM25_B);
        assert_eq!(ranked[0], 0);
        assert!(bm25_scores("cat", &docs, BM25_K1, BM25_B)[0] > 0.0);
    }

    #[test]
    fn repeated_query_terms_accumulate() {
        let docs = corpus(&["cat cat cat", "dog"]);
        let once = bm25_scores("cat", &docs, BM25_K1, BM25_B)[0];
        let twice = bm25_scores("cat cat", &docs, BM25_K1, BM25_B)[0];
        assert!((twice - 2.0 * once).abs() < 1e-12);
    }

    #[test]
    fn longer_documents_are_penalized() {
        // Same term frequency, different lengths: the shorter doc wins.
        let docs = corpus(&["cat filler filler filler filler", "cat pad"]);
        let scores = bm25_scores("cat", &docs, BM25_K1, BM25_B);
        assert!(scores[1] > scores[0]);
    }
}
