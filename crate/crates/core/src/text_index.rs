//! Sparse lexical scoring over the `Style` and `Feature` fields.
//!
//! Scores are TF-IDF cosines with raw term counts and
//! `idf = ln((N + 1) / (df + 1)) + 1`. Query tokens absent from the corpus
//! vocabulary are ignored.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::knowledge_base::PresetRecord;

#[derive(Debug, Error, PartialEq)]
pub enum TextIndexError {
    #[error("cannot index an empty corpus")]
    EmptyCorpus,
    #[error("record {0:?} is not in the text index")]
    UnknownId(String),
}

/// Lowercases, splits on runs of non-alphanumeric characters and drops
/// empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn term_counts(tokens: &[String]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.clone()).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone)]
struct Document {
    id: String,
    counts: BTreeMap<String, usize>,
    weights: HashMap<String, f64>,
    norm: f64,
}

#[derive(Debug, Clone)]
pub struct LexicalIndex {
    docs: Vec<Document>,
    positions: HashMap<String, usize>,
    document_frequency: HashMap<String, usize>,
}

impl LexicalIndex {
    pub fn build(records: &[PresetRecord]) -> Result<Self, TextIndexError> {
        Self::from_texts(records.iter().map(|r| (r.record_id.clone(), r.query_text())))
    }

    /// Index over arbitrary `(id, text)` pairs.
    pub fn from_texts(items: impl IntoIterator<Item = (String, String)>) -> Result<Self, TextIndexError> {
        let mut docs: Vec<Document> = items
            .into_iter()
            .map(|(id, text)| Document {
                id,
                counts: term_counts(&tokenize(&text)),
                weights: HashMap::new(),
                norm: 0.0,
            })
            .collect();
        if docs.is_empty() {
            return Err(TextIndexError::EmptyCorpus);
        }
        let mut document_frequency: HashMap<String, usize> = HashMap::new();
        for doc in &docs {
            for term in doc.counts.keys() {
                *document_frequency.entry(term.clone()).or_insert(0) += 1;
            }
        }
        let n = docs.len();
        for doc in &mut docs {
            let mut sq = 0.0;
            for (term, &tf) in &doc.counts {
                let w = tf as f64 * idf(n, document_frequency[term]);
                sq += w * w;
                doc.weights.insert(term.clone(), w);
            }
            doc.norm = sq.sqrt();
        }
        let positions = docs.iter().enumerate().map(|(i, d)| (d.id.clone(), i)).collect();
        Ok(Self {
            docs,
            positions,
            document_frequency,
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.id.as_str())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.positions.contains_key(id)
    }

    pub fn document_frequency(&self, token: &str) -> usize {
        self.document_frequency.get(token).copied().unwrap_or(0)
    }

    /// Distinct tokens of one record.
    pub fn tokens(&self, id: &str) -> Option<Vec<&str>> {
        self.positions
            .get(id)
            .map(|&i| self.docs[i].counts.keys().map(String::as_str).collect())
    }

    /// Parsed query ready for scoring against every record.
    pub fn query(&self, text: &str) -> TextQuery {
        let n = self.docs.len();
        let mut weights = HashMap::new();
        let mut sq = 0.0;
        for (term, tf) in term_counts(&tokenize(text)) {
            if let Some(&df) = self.document_frequency.get(&term) {
                let w = tf as f64 * idf(n, df);
                sq += w * w;
                weights.insert(term, w);
            }
        }
        TextQuery {
            weights,
            norm: sq.sqrt(),
        }
    }

    fn score_doc(&self, q: &TextQuery, doc: &Document) -> f64 {
        if q.norm == 0.0 || doc.norm == 0.0 {
            return 0.0;
        }
        let (small, large) = if q.weights.len() <= doc.weights.len() {
            (&q.weights, &doc.weights)
        } else {
            (&doc.weights, &q.weights)
        };
        let dot: f64 = small
            .iter()
            .filter_map(|(t, w)| large.get(t).map(|v| w * v))
            .sum();
        (dot / (q.norm * doc.norm)).clamp(0.0, 1.0)
    }

    pub fn text_score(&self, query: &str, record_id: &str) -> Result<f64, TextIndexError> {
        let &i = self
            .positions
            .get(record_id)
            .ok_or_else(|| TextIndexError::UnknownId(record_id.to_owned()))?;
        Ok(self.score_doc(&self.query(query), &self.docs[i]))
    }

    /// `(record_id, score)` for every record, in index order.
    pub fn score_all(&self, query: &TextQuery) -> Vec<(&str, f64)> {
        self.docs
            .iter()
            .map(|d| (d.id.as_str(), self.score_doc(query, d)))
            .collect()
    }

    /// Best score over all records; the vagueness signal for fusion.
    pub fn text_confidence(&self, query: &str) -> f64 {
        let q = self.query(query);
        self.score_all(&q).into_iter().map(|(_, s)| s).fold(0.0, f64::max)
    }
}

fn idf(n: usize, df: usize) -> f64 {
    ((n as f64 + 1.0) / (df as f64 + 1.0)).ln() + 1.0
}

/// Weighted query vector.
#[derive(Debug, Clone)]
pub struct TextQuery {
    weights: HashMap<String, f64>,
    norm: f64,
}
