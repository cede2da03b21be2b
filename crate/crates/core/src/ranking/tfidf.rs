use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Sparse feature vector: `(term index, weight)` sorted by index.
pub type SparseVector = Vec<(usize, f64)>;

fn token_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\w\w+").expect("valid token regex"))
}

/// Lowercased Unicode word tokens of two or more characters.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    token_pattern()
        .find_iter(&lower)
        .map(|m| m.as_str().to_string())
        .collect()
}

/// Unigram TF-IDF with smoothed IDF, `ln((1 + n) / (1 + df)) + 1`, and
/// L2-normalised rows. Vocabulary and IDF come from the fitted documents
/// only; unseen terms are ignored at transform time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVectorizer {
    vocabulary: HashMap<String, usize>,
    idf: Vec<f64>,
}

impl TfidfVectorizer {
    /// `None` when the documents contain no tokens at all.
    pub fn fit<S: AsRef<str>>(docs: &[&[S]]) -> Option<Self> {
        let mut vocabulary: HashMap<String, usize> = HashMap::new();
        let mut df: Vec<usize> = Vec::new();
        for doc in docs {
            let mut seen = vec![];
            for token in doc.iter() {
                let next = vocabulary.len();
                let idx = *vocabulary.entry(token.as_ref().to_string()).or_insert(next);
                if idx == df.len() {
                    df.push(0);
                }
                if !seen.contains(&idx) {
                    seen.push(idx);
                    df[idx] += 1;
                }
            }
        }
        if vocabulary.is_empty() {
            return None;
        }
        let n = docs.len() as f64;
        let idf = df.iter().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
        Some(Self { vocabulary, idf })
    }

    pub fn vocabulary_len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.vocabulary.get(term).copied()
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn transform<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVector {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for t in tokens {
            if let Some(&i) = self.vocabulary.get(t.as_ref()) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut v: SparseVector = counts.into_iter().map(|(i, tf)| (i, tf * self.idf[i])).collect();
        v.sort_unstable_by_key(|&(i, _)| i);
        let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|(_, x)| *x /= norm);
        }
        v
    }
}
