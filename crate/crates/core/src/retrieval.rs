//! Exhaustive cosine retrieval and quality-aware text/audio score fusion.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{dot, l2_norm, Scalar};
use crate::text_index::LexicalIndex;

pub const DEFAULT_VAGUE_THRESHOLD: f64 = 0.05;
pub const DEFAULT_AUDIO_NORM_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum RetrievalError {
    #[error("dimension mismatch: index holds {expected}-d vectors, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("index is empty")]
    EmptyIndex,
    #[error("query vector has zero norm")]
    ZeroQuery,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("vector for {0:?} is zero or non-finite")]
    InvalidVector(String),
    #[error("duplicate id {0:?} in index")]
    DuplicateId(String),
    #[error("invalid fusion weights ({w_text}, {w_audio}): need non-negative weights summing to 1")]
    InvalidWeights { w_text: f64, w_audio: f64 },
    #[error("both modalities are absent or degraded")]
    BothModalitiesDegraded,
}

/// Unit-norm vectors from one embedding source, keyed by record id.
#[derive(Debug, Clone)]
pub struct EmbeddingIndex<T> {
    source_name: String,
    dimension: usize,
    ids: Vec<String>,
    positions: HashMap<String, usize>,
    data: Vec<T>,
}

impl<T: Scalar> EmbeddingIndex<T> {
    pub fn new(source_name: impl Into<String>, dimension: usize) -> Self {
        Self {
            source_name: source_name.into(),
            dimension,
            ids: Vec::new(),
            positions: HashMap::new(),
            data: Vec::new(),
        }
    }

    /// Adds a vector, normalizing it to unit length.
    pub fn insert(&mut self, id: impl Into<String>, vector: &[T]) -> Result<(), RetrievalError> {
        let id = id.into();
        if vector.len() != self.dimension {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dimension,
                found: vector.len(),
            });
        }
        let norm = l2_norm(vector);
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(RetrievalError::InvalidVector(id));
        }
        if self.positions.contains_key(&id) {
            return Err(RetrievalError::DuplicateId(id));
        }
        self.positions.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend(vector.iter().map(|&v| v / norm));
        Ok(())
    }

    pub fn from_entries<'a, I>(source_name: &str, dimension: usize, entries: I) -> Result<Self, RetrievalError>
    where
        I: IntoIterator<Item = (&'a str, &'a [T])>,
    {
        let mut idx = Self::new(source_name, dimension);
        for (id, v) in entries {
            idx.insert(id, v)?;
        }
        Ok(idx)
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.positions.contains_key(id)
    }

    pub fn vector(&self, id: &str) -> Option<&[T]> {
        self.positions
            .get(id)
            .map(|&i| &self.data[i * self.dimension..(i + 1) * self.dimension])
    }

    fn unit_query(&self, query: &[T]) -> Result<Vec<T>, RetrievalError> {
        if self.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        if query.len() != self.dimension {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dimension,
                found: query.len(),
            });
        }
        let norm = l2_norm(query);
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(RetrievalError::ZeroQuery);
        }
        Ok(query.iter().map(|&v| v / norm).collect())
    }

    /// Cosine of the query against every entry, in index order.
    pub fn cosine_all(&self, query: &[T]) -> Result<Vec<T>, RetrievalError> {
        let q = self.unit_query(query)?;
        Ok(self.data.chunks_exact(self.dimension).map(|row| dot(row, &q)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit<T> {
    pub record_id: String,
    pub score: T,
}

/// Ranked hits plus the `(w_text, w_audio)` weights that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult<T> {
    pub hits: Vec<Hit<T>>,
    pub effective_weights: (T, T),
}

impl<T: Scalar> RankedResult<T> {
    pub fn top(&self) -> Option<&Hit<T>> {
        self.hits.first()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.hits.iter().map(|h| h.record_id.as_str()).collect()
    }
}

/// Sorts by descending score, ties by ascending id, and keeps `k`.
pub fn rank<T: Scalar>(mut scored: Vec<(String, T)>, k: usize) -> Vec<Hit<T>> {
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    scored.truncate(k);
    scored
        .into_iter()
        .map(|(record_id, score)| Hit { record_id, score })
        .collect()
}

pub fn cosine_top_k<T: Scalar>(index: &EmbeddingIndex<T>, query: &[T], k: usize) -> Result<RankedResult<T>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let scores = index.cosine_all(query)?;
    let scored = index.ids.iter().cloned().zip(scores).collect();
    Ok(RankedResult {
        hits: rank(scored, k),
        effective_weights: (T::zero(), T::one()),
    })
}

/// Text-only ranking by lexical score.
pub fn text_top_k<T: Scalar>(index: &LexicalIndex, query: &str, k: usize) -> Result<RankedResult<T>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    if index.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    let q = index.query(query);
    let scored = index
        .score_all(&q)
        .into_iter()
        .map(|(id, s)| (id.to_owned(), T::of(s)))
        .collect();
    Ok(RankedResult {
        hits: rank(scored, k),
        effective_weights: (T::one(), T::zero()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub w_text: f64,
    pub w_audio: f64,
    /// Text confidence below this marks the query as vague.
    pub vague_threshold: f64,
    /// Audio query norm below this marks the audio side as degraded.
    pub audio_norm_threshold: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            w_text: 0.5,
            w_audio: 0.5,
            vague_threshold: DEFAULT_VAGUE_THRESHOLD,
            audio_norm_threshold: DEFAULT_AUDIO_NORM_THRESHOLD,
        }
    }
}

impl FusionConfig {
    pub fn with_text_weight(w_text: f64) -> Result<Self, RetrievalError> {
        let cfg = Self {
            w_text,
            w_audio: 1.0 - w_text,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        let ok = self.w_text >= 0.0
            && self.w_audio >= 0.0
            && ((self.w_text + self.w_audio) - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(RetrievalError::InvalidWeights {
                w_text: self.w_text,
                w_audio: self.w_audio,
            })
        }
    }
}

/// Gate outcome for one query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionGates {
    pub text_confidence: Option<f64>,
    pub audio_norm: Option<f64>,
    pub text_usable: bool,
    pub audio_usable: bool,
}

/// Weights after applying the vagueness and audio-norm gates.
pub fn effective_weights(cfg: &FusionConfig, gates: &FusionGates) -> Result<(f64, f64), RetrievalError> {
    match (gates.text_usable, gates.audio_usable) {
        (false, false) => Err(RetrievalError::BothModalitiesDegraded),
        (false, true) => Ok((0.0, 1.0)),
        (true, false) => Ok((1.0, 0.0)),
        (true, true) => {
            let total = cfg.w_text + cfg.w_audio;
            Ok((cfg.w_text / total, cfg.w_audio / total))
        }
    }
}

/// Per-record scores of both sides for one query, before fusion.
#[derive(Debug, Clone)]
pub struct ModalityScores<'a, T> {
    /// `(id, s_text)` over the whole text index; `None` when no text was given.
    pub text: Option<Vec<(&'a str, f64)>>,
    /// Query-vector norm; `None` when no vector was given.
    pub audio_norm: Option<f64>,
    /// `(id, cosine)` over the whole audio index. Left empty when the norm is
    /// below the gate threshold.
    pub audio: Vec<(&'a str, T)>,
}

/// Scores the query against both indices.
pub fn score_modalities<'a, T: Scalar>(
    text_index: &'a LexicalIndex,
    audio_index: &'a EmbeddingIndex<T>,
    query_text: Option<&str>,
    query_vec: Option<&[T]>,
    cfg: &FusionConfig,
) -> Result<ModalityScores<'a, T>, RetrievalError> {
    let text = query_text.map(|q| text_index.score_all(&text_index.query(q)));
    let audio_norm = query_vec.map(|v| l2_norm(v).as_f64());
    let mut audio = Vec::new();
    if let (Some(v), Some(n)) = (query_vec, audio_norm) {
        if n.is_finite() && n >= cfg.audio_norm_threshold {
            let cos = audio_index.cosine_all(v)?;
            audio = audio_index.ids.iter().map(String::as_str).zip(cos).collect();
        }
    }
    Ok(ModalityScores {
        text,
        audio_norm,
        audio,
    })
}

/// Applies the gates to precomputed scores and ranks by
/// `w_text * s_text + w_audio * (cos + 1) / 2`.
///
/// Text is unusable when absent or its confidence (best lexical score) is
/// below `vague_threshold`; audio is unusable when absent or its norm is
/// below `audio_norm_threshold`. An unusable side gets weight zero and the
/// candidate set is the index of the remaining side; with both sides usable
/// it is the union of both indices, missing scores read as zero.
pub fn fuse<T: Scalar>(scores: &ModalityScores<'_, T>, cfg: &FusionConfig, k: usize) -> Result<RankedResult<T>, RetrievalError> {
    cfg.validate()?;
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let gates = gates(scores, cfg);
    let (w_text, w_audio) = effective_weights(cfg, &gates)?;

    let mut fused: BTreeMap<&str, T> = BTreeMap::new();
    let (wt, wa) = (T::of(w_text), T::of(w_audio));
    if w_text > 0.0 {
        for &(id, s) in scores.text.as_deref().unwrap_or_default() {
            *fused.entry(id).or_insert_with(T::zero) += wt * T::of(s);
        }
    }
    if w_audio > 0.0 {
        let half = T::of(0.5);
        for &(id, c) in &scores.audio {
            *fused.entry(id).or_insert_with(T::zero) += wa * (c + T::one()) * half;
        }
    }
    if fused.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    let scored = fused.into_iter().map(|(id, s)| (id.to_owned(), s)).collect();
    Ok(RankedResult {
        hits: rank(scored, k),
        effective_weights: (wt, wa),
    })
}

/// Gate outcome of precomputed scores.
pub fn gates<T: Scalar>(scores: &ModalityScores<'_, T>, cfg: &FusionConfig) -> FusionGates {
    let text_confidence = scores
        .text
        .as_ref()
        .map(|s| s.iter().map(|(_, v)| *v).fold(0.0, f64::max));
    FusionGates {
        text_confidence,
        audio_norm: scores.audio_norm,
        text_usable: text_confidence.is_some_and(|c| c >= cfg.vague_threshold),
        audio_usable: scores
            .audio_norm
            .is_some_and(|n| n >= cfg.audio_norm_threshold && n.is_finite()),
    }
}

/// Scores both sides and fuses them; see [`fuse`].
pub fn fused_top_k<T: Scalar>(
    text_index: &LexicalIndex,
    audio_index: &EmbeddingIndex<T>,
    query_text: Option<&str>,
    query_vec: Option<&[T]>,
    cfg: &FusionConfig,
    k: usize,
) -> Result<RankedResult<T>, RetrievalError> {
    cfg.validate()?;
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let scores = score_modalities(text_index, audio_index, query_text, query_vec, cfg)?;
    fuse(&scores, cfg, k)
}

/// True when both rankings list the same ids in the same order.
pub fn same_order(a: &RankedResult<impl Scalar>, b: &RankedResult<impl Scalar>) -> bool {
    a.ids() == b.ids()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn audio(entries: &[(&str, [f64; 2])]) -> EmbeddingIndex<f64> {
        EmbeddingIndex::from_entries("TRR", 2, entries.iter().map(|(i, v)| (*i, &v[..]))).unwrap()
    }

    fn text(entries: &[(&str, &str)]) -> LexicalIndex {
        LexicalIndex::from_texts(entries.iter().map(|(i, t)| (i.to_string(), t.to_string()))).unwrap()
    }

    #[test]
    fn exact_match_ranks_first() {
        let idx = audio(&[("a", [1.0, 0.0]), ("b", [0.6, 0.8]), ("c", [0.0, 1.0])]);
        let r = cosine_top_k(&idx, &[0.6, 0.8], 1).unwrap();
        assert_eq!(r.hits[0].record_id, "b");
        assert!((r.hits[0].score - 1.0).abs() < 1e-12);
        let all = cosine_top_k(&idx, &[1.0, 0.0], 10).unwrap();
        assert_eq!(all.ids(), vec!["a", "b", "c"]);
    }

    #[test]
    fn ties_break_by_id() {
        let idx = audio(&[("z", [1.0, 0.0]), ("m", [1.0, 0.0]), ("a", [0.0, 1.0])]);
        let r = cosine_top_k(&idx, &[2.0, 0.0], 3).unwrap();
        assert_eq!(r.ids(), vec!["m", "z", "a"]);
    }

    #[test]
    fn index_errors() {
        let idx = audio(&[("a", [1.0, 0.0])]);
        assert_eq!(
            cosine_top_k(&idx, &[1.0, 0.0, 0.0], 1).unwrap_err(),
            RetrievalError::DimensionMismatch { expected: 2, found: 3 }
        );
        assert_eq!(cosine_top_k(&idx, &[0.0, 0.0], 1).unwrap_err(), RetrievalError::ZeroQuery);
        assert_eq!(cosine_top_k(&idx, &[1.0, 0.0], 0).unwrap_err(), RetrievalError::InvalidK);
        let empty = EmbeddingIndex::<f64>::new("x", 2);
        assert_eq!(cosine_top_k(&empty, &[1.0, 0.0], 1).unwrap_err(), RetrievalError::EmptyIndex);
        let mut dup = audio(&[("a", [1.0, 0.0])]);
        assert_eq!(dup.insert("a", &[0.0, 1.0]), Err(RetrievalError::DuplicateId("a".into())));
    }

    #[test]
    fn absent_text_falls_back_to_audio() {
        let t = text(&[("a", "blues"), ("b", "metal"), ("c", "jazz")]);
        let a = audio(&[("a", [1.0, 0.0]), ("b", [0.6, 0.8]), ("c", [0.0, 1.0])]);
        let q = [0.1, 0.9];
        let fused = fused_top_k(&t, &a, None, Some(&q), &FusionConfig::default(), 3).unwrap();
        assert_eq!(fused.effective_weights, (0.0, 1.0));
        assert!(same_order(&fused, &cosine_top_k(&a, &q, 3).unwrap()));
    }

    #[test]
    fn vague_text_falls_back_to_audio() {
        let t = text(&[("a", "blues solo"), ("b", "metal crunch"), ("c", "jazz clean")]);
        let a = audio(&[("a", [1.0, 0.0]), ("b", [0.6, 0.8]), ("c", [0.0, 1.0])]);
        let fused = fused_top_k(&t, &a, Some("warm guitar tone"), Some(&[0.6, 0.8]), &FusionConfig::default(), 3).unwrap();
        assert_eq!(fused.effective_weights, (0.0, 1.0));
        assert_eq!(fused.hits[0].record_id, "b");
    }

    #[test]
    fn weak_audio_falls_back_to_text_and_both_degraded_errors() {
        let t = text(&[("a", "blues solo"), ("b", "metal crunch")]);
        let a = audio(&[("a", [1.0, 0.0]), ("b", [0.0, 1.0])]);
        let cfg = FusionConfig::default();
        let fused = fused_top_k(&t, &a, Some("metal"), Some(&[1e-6, 0.0]), &cfg, 2).unwrap();
        assert_eq!(fused.effective_weights, (1.0, 0.0));
        assert!(same_order(&fused, &text_top_k::<f64>(&t, "metal", 2).unwrap()));
        assert_eq!(
            fused_top_k(&t, &a, Some("nothing"), None, &cfg, 1).unwrap_err(),
            RetrievalError::BothModalitiesDegraded
        );
        assert_eq!(
            fused_top_k::<f64>(&t, &a, None, None, &cfg, 1).unwrap_err(),
            RetrievalError::BothModalitiesDegraded
        );
    }

    #[test]
    fn equal_weights_match_weighted_sum_oracle() {
        let t = text(&[("a", "warm blues"), ("b", "warm metal"), ("c", "clean jazz")]);
        let a = audio(&[("a", [1.0, 0.0]), ("b", [0.8, 0.6]), ("c", [0.0, 1.0])]);
        let q = [0.0, 1.0];
        let fused = fused_top_k(&t, &a, Some("warm metal"), Some(&q), &FusionConfig::default(), 3).unwrap();
        let mut oracle: Vec<(String, f64)> = ["a", "b", "c"]
            .iter()
            .map(|id| {
                let st = t.text_score("warm metal", id).unwrap();
                let v = a.vector(id).unwrap();
                let sa = (v[0] * q[0] + v[1] * q[1] + 1.0) / 2.0;
                (id.to_string(), 0.5 * st + 0.5 * sa)
            })
            .collect();
        oracle.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
        assert_eq!(fused.ids(), oracle.iter().map(|(i, _)| i.as_str()).collect::<Vec<_>>());
        for (h, (_, s)) in fused.hits.iter().zip(&oracle) {
            assert!((h.score - s).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_validation() {
        assert!(FusionConfig::with_text_weight(0.3).is_ok());
        assert!(FusionConfig::with_text_weight(1.2).is_err());
        let bad = FusionConfig {
            w_text: 0.5,
            w_audio: 0.6,
            ..FusionConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
