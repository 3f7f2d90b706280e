use std::collections::HashMap;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Okapi BM25 over a fixed corpus.
///
/// IDF is `ln(1 + (N - n + 0.5) / (n + 0.5))`, which stays positive for
/// terms present in most documents.
#[derive(Debug, Clone)]
pub struct Bm25 {
    term_freqs: Vec<HashMap<String, usize>>,
    doc_len: Vec<usize>,
    avg_len: f64,
    doc_freq: HashMap<String, usize>,
}

impl Bm25 {
    pub fn new<S: AsRef<str>>(docs: &[S]) -> Self {
        let mut term_freqs = Vec::with_capacity(docs.len());
        let mut doc_len = Vec::with_capacity(docs.len());
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        for d in docs {
            let toks = tokenize(d.as_ref());
            doc_len.push(toks.len());
            let mut tf: HashMap<String, usize> = HashMap::new();
            for t in toks {
                *tf.entry(t).or_default() += 1;
            }
            for t in tf.keys() {
                *doc_freq.entry(t.clone()).or_default() += 1;
            }
            term_freqs.push(tf);
        }
        let avg_len = if docs.is_empty() {
            0.0
        } else {
            doc_len.iter().sum::<usize>() as f64 / docs.len() as f64
        };
        Self { term_freqs, doc_len, avg_len, doc_freq }
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.term_freqs.len() as f64;
        let df = *self.doc_freq.get(term).unwrap_or(&0) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Score of document `doc` for the distinct `terms`.
    pub fn score(&self, terms: &[String], doc: usize) -> f64 {
        let len_norm = if self.avg_len > 0.0 { self.doc_len[doc] as f64 / self.avg_len } else { 0.0 };
        terms
            .iter()
            .map(|t| {
                let tf = *self.term_freqs[doc].get(t).unwrap_or(&0) as f64;
                if tf == 0.0 {
                    return 0.0;
                }
                self.idf(t) * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * (1.0 - BM25_B + BM25_B * len_norm))
            })
            .sum()
    }

    pub fn len(&self) -> usize {
        self.term_freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.term_freqs.is_empty()
    }
}
