//! Experiment drivers: the retrieval benchmark on a grouped split, the
//! degradation scenarios for fusion, ablations, the near-duplicate sweep and
//! the latency profiler.
//!
//! Every report carries the tool version and the configuration that produced
//! it. Apart from latency timings, reports are a pure function of their inputs
//! and seeds.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{
    fit_pca_projection, make_random_projection, mean_pool_encode, trr_encode, EncodeError, LayerSet, ProjectionKind,
    ProjectionSpec, DEFAULT_PROJECTION_DIM,
};
use crate::feature_io::FeatureMapSet;
use crate::knowledge_base::{
    audit_split, index_by_id, near_duplicate_filter, AuditReport, KbError, ParamRanges, PresetRecord, SplitSpec,
};
use crate::metrics::{evaluate, MetricError, MetricOptions, MetricReport};
use crate::retrieval::{
    cosine_top_k, fuse, fused_top_k, same_order, text_top_k, EmbeddingIndex, FusionConfig, ModalityScores,
    RetrievalError,
};
use crate::rng;
use crate::scalar::{l2_norm, Scalar};
use crate::stats::{apply_holm, compare, ComparisonReport, PairedSample, StatsConfig, StatsError};
use crate::text_index::{LexicalIndex, TextIndexError};
use crate::VERSION;

pub const VAGUE_QUERY: &str = "warm guitar tone";
pub const DEFAULT_TAUS: [f64; 4] = [0.005, 0.01, 0.02, 0.05];
pub const DEFAULT_PROJECTION_DIMS: [usize; 4] = [32, 64, 128, 256];
pub const DEFAULT_WARMUPS: usize = 5;
pub const DEFAULT_REPEATS: usize = 3;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("split leaks across sides: {shared_paths} shared resolved paths, {overlapping_ids} ids on both sides")]
    DirtySplit { shared_paths: usize, overlapping_ids: usize },
    #[error("split id {0:?} has no record with ground-truth parameters")]
    MissingGroundTruth(String),
    #[error("no retrieval methods configured")]
    NoMethods,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("grid is empty")]
    EmptyGrid,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("no usable queries: {0}")]
    NoQueries(String),
    #[error("feature maps share no layer for mean pooling")]
    NoCommonLayer,
    #[error("clock unavailable: {0}")]
    ClockUnavailable(String),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    TextIndex(#[from] TextIndexError),
}

type Result<T, E = ProtocolError> = std::result::Result<T, E>;

/// A retrieval method under comparison.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Trr,
    MeanPool,
    Text,
    /// Externally computed vectors stored under this name in each record.
    Cached(String),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Trr => f.write_str("TRR"),
            Method::MeanPool => f.write_str("MeanPool"),
            Method::Text => f.write_str("Text-RAG"),
            Method::Cached(name) => f.write_str(name),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "trr" => Ok(Method::Trr),
            "meanpool" | "mean-pool" | "mean_pool" => Ok(Method::MeanPool),
            "text" | "text-rag" => Ok(Method::Text),
            _ => match s.split_once(':') {
                Some((prefix, name)) if prefix.eq_ignore_ascii_case("cached") && !name.is_empty() => {
                    Ok(Method::Cached(name.to_owned()))
                }
                _ => Err(format!("unknown method {s:?}; expected trr, meanpool, text or cached:<name>")),
            },
        }
    }
}

/// How audio embeddings are computed from feature maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub projection_dim: usize,
    pub layers: LayerSet,
    pub projection: ProjectionKind,
    pub projection_seed: u64,
    /// Layer pooled by the mean-pool baseline; `None` picks the highest layer
    /// present in every feature map involved.
    pub mean_pool_layer: Option<u16>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            projection_dim: DEFAULT_PROJECTION_DIM,
            layers: LayerSet::default(),
            projection: ProjectionKind::FrozenRandom,
            projection_seed: 0,
            mean_pool_layer: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolAConfig {
    pub split: SplitSpec,
    pub methods: Vec<Method>,
    /// Ranking depth; metrics always use the rank-1 hit.
    pub k: usize,
    pub encoder: EncoderConfig,
    pub metrics: MetricOptions,
    pub stats: StatsConfig,
}

impl ProtocolAConfig {
    pub fn new(split: SplitSpec) -> Self {
        Self {
            split,
            methods: vec![Method::Trr, Method::MeanPool, Method::Text],
            k: 1,
            encoder: EncoderConfig::default(),
            metrics: MetricOptions::default(),
            stats: StatsConfig::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(ProtocolError::NoMethods);
        }
        if self.k == 0 {
            return Err(ProtocolError::InvalidK);
        }
        Ok(())
    }
}

/// Inputs shared by every protocol.
#[derive(Debug, Clone, Copy)]
pub struct EvalData<'a, T> {
    pub records: &'a [PresetRecord],
    /// Feature maps keyed by record id; records without one are invalid
    /// queries for the audio methods and are left out of their indices.
    pub features: &'a BTreeMap<String, FeatureMapSet<T>>,
    pub ranges: &'a ParamRanges,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricName {
    L2,
    NormL2,
    AccAt01,
    Recall,
    Cosine,
    Module,
}

impl MetricName {
    pub const ALL: [MetricName; 6] = [
        MetricName::L2,
        MetricName::NormL2,
        MetricName::AccAt01,
        MetricName::Recall,
        MetricName::Cosine,
        MetricName::Module,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MetricName::L2 => "L2",
            MetricName::NormL2 => "Norm.L2",
            MetricName::AccAt01 => "Acc@0.1",
            MetricName::Recall => "Recall",
            MetricName::Cosine => "Cos",
            MetricName::Module => "Module",
        }
    }

    pub fn lower_is_better(self) -> bool {
        matches!(self, MetricName::L2 | MetricName::NormL2)
    }

    pub fn value(self, r: &MetricReport<f64>) -> Option<f64> {
        match self {
            MetricName::L2 => Some(r.l2),
            MetricName::NormL2 => r.norm_l2,
            MetricName::AccAt01 => Some(r.acc_at_0_1),
            MetricName::Recall => r.recall,
            MetricName::Cosine => r.cosine,
            MetricName::Module => r.module_jaccard,
        }
    }
}

/// Mean over the queries where the metric is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub defined: usize,
}

impl MetricSummary {
    fn of(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let (sum, defined) = values
            .into_iter()
            .flatten()
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        Self {
            mean: (defined > 0).then(|| sum / defined as f64),
            defined,
        }
    }
}

/// One table row: aggregates of one method over its valid queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub label: String,
    /// Queries with a retrieval result for this method.
    pub n: usize,
    pub kb_size: usize,
    pub l2: MetricSummary,
    pub norm_l2: MetricSummary,
    pub acc_at_0_1: MetricSummary,
    pub recall: MetricSummary,
    pub cosine: MetricSummary,
    pub module_jaccard: MetricSummary,
}

impl MethodRow {
    fn from_reports(label: String, kb_size: usize, reports: &[Option<MetricReport<f64>>]) -> Self {
        let col = |m: MetricName| MetricSummary::of(reports.iter().map(|r| r.as_ref().and_then(|r| m.value(r))));
        Self {
            label,
            n: reports.iter().filter(|r| r.is_some()).count(),
            kb_size,
            l2: col(MetricName::L2),
            norm_l2: col(MetricName::NormL2),
            acc_at_0_1: col(MetricName::AccAt01),
            recall: col(MetricName::Recall),
            cosine: col(MetricName::Cosine),
            module_jaccard: col(MetricName::Module),
        }
    }

    pub fn get(&self, m: MetricName) -> &MetricSummary {
        match m {
            MetricName::L2 => &self.l2,
            MetricName::NormL2 => &self.norm_l2,
            MetricName::AccAt01 => &self.acc_at_0_1,
            MetricName::Recall => &self.recall,
            MetricName::Cosine => &self.cosine,
            MetricName::Module => &self.module_jaccard,
        }
    }
}

/// Paired comparisons of two methods over the queries valid for both.
/// Differences are oriented so that positive values favour `method_a`;
/// `p_holm` is adjusted across the metrics of this pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairReport {
    pub method_a: String,
    pub method_b: String,
    pub n_common: usize,
    pub comparisons: Vec<ComparisonReport<f64>>,
}

impl PairReport {
    pub fn comparison(&self, m: MetricName) -> Option<&ComparisonReport<f64>> {
        self.comparisons.iter().find(|c| c.metric == m.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryOutcome {
    pub query_id: String,
    pub method: String,
    pub retrieved_id: Option<String>,
    pub metrics: Option<MetricReport<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub tool_version: String,
    pub config: ProtocolAConfig,
    pub resolved_mean_pool_layer: Option<u16>,
    pub audit: AuditReport,
    pub query_count: usize,
    pub rows: Vec<MethodRow>,
    pub pairs: Vec<PairReport>,
    pub per_query: Vec<QueryOutcome>,
}

impl EvalReport {
    pub fn row(&self, label: &str) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn pair(&self, a: &str, b: &str) -> Option<&PairReport> {
        self.pairs.iter().find(|p| p.method_a == a && p.method_b == b)
    }
}

struct ResolvedSplit<'a> {
    test: Vec<&'a PresetRecord>,
    kb: Vec<&'a PresetRecord>,
    audit: AuditReport,
}

fn resolve_split<'a, T>(split: &SplitSpec, data: &EvalData<'a, T>) -> Result<ResolvedSplit<'a>> {
    let by_id = index_by_id(data.records);
    let lookup = |ids: &[String]| -> Result<Vec<&'a PresetRecord>> {
        ids.iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| ProtocolError::MissingGroundTruth(id.clone()))
            })
            .collect()
    };
    let test = lookup(&split.test_ids)?;
    let kb = lookup(&split.kb_ids)?;
    let audit = audit_split(split, data.records, None)?;
    if !audit.is_clean() {
        return Err(ProtocolError::DirtySplit {
            shared_paths: audit.shared_path_count,
            overlapping_ids: audit.overlapping_ids.len(),
        });
    }
    Ok(ResolvedSplit { test, kb, audit })
}

/// Projection for `enc`: random from the channel count of the first available
/// map, or PCA fitted on the knowledge-base maps only.
pub fn build_projection<'a, T: Scalar>(
    enc: &EncoderConfig,
    kb_maps: impl IntoIterator<Item = &'a FeatureMapSet<T>>,
) -> Result<Option<ProjectionSpec<T>>> {
    let maps: Vec<&FeatureMapSet<T>> = kb_maps.into_iter().collect();
    let Some(first) = maps.first() else {
        return Ok(None);
    };
    let channels = enc
        .layers
        .as_slice()
        .iter()
        .find_map(|&l| first.layer(l).map(|layer| layer.channels))
        .ok_or_else(|| EncodeError::MissingLayer {
            item_id: first.item_id.clone(),
            layer: enc.layers.as_slice()[0],
        })?;
    let proj = match enc.projection {
        ProjectionKind::FrozenRandom => make_random_projection(channels, enc.projection_dim, enc.projection_seed)?,
        ProjectionKind::Pca => fit_pca_projection(maps, &enc.layers, enc.projection_dim)?,
    };
    Ok(Some(proj))
}

/// TRR embeddings of the given records; records without feature maps or
/// with a zero Gram matrix are omitted.
pub fn trr_embeddings<T: Scalar>(
    ids: &[&str],
    features: &BTreeMap<String, FeatureMapSet<T>>,
    proj: &ProjectionSpec<T>,
    layers: &LayerSet,
) -> Result<BTreeMap<String, Vec<T>>> {
    embed_all(ids, |id| match features.get(id) {
        None => Ok(None),
        Some(fm) => match trr_encode(fm, proj, layers) {
            Ok(e) => Ok(Some(e.values)),
            Err(EncodeError::ZeroGram { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        },
    })
}

/// Mean-pooled embeddings of `layer`; all-zero means are omitted.
pub fn mean_pool_embeddings<T: Scalar>(
    ids: &[&str],
    features: &BTreeMap<String, FeatureMapSet<T>>,
    layer: u16,
) -> Result<BTreeMap<String, Vec<T>>> {
    embed_all(ids, |id| match features.get(id) {
        None => Ok(None),
        Some(fm) => match mean_pool_encode(fm, layer) {
            Ok(e) => Ok(Some(e.values)),
            Err(EncodeError::ZeroMean { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        },
    })
}

fn embed_all<T, F>(ids: &[&str], f: F) -> Result<BTreeMap<String, Vec<T>>>
where
    T: Send,
    F: Fn(&str) -> Result<Option<Vec<T>>> + Sync,
{
    let encoded = ids
        .par_iter()
        .map(|&id| f(id).map(|v| v.map(|v| (id.to_owned(), v))))
        .collect::<Result<Vec<_>>>()?;
    Ok(encoded.into_iter().flatten().collect())
}

/// Highest layer present in every listed feature map.
fn common_top_layer<T>(ids: &[&str], features: &BTreeMap<String, FeatureMapSet<T>>) -> Option<u16> {
    let mut common: Option<BTreeSet<u16>> = None;
    for fm in ids.iter().filter_map(|id| features.get(*id)) {
        let layers: BTreeSet<u16> = fm.layers.iter().map(|l| l.layer_index).collect();
        common = Some(match common {
            None => layers,
            Some(c) => c.intersection(&layers).copied().collect(),
        });
    }
    common.and_then(|c| c.last().copied())
}

struct MethodRun {
    label: String,
    kb_size: usize,
    retrieved: Vec<Option<String>>,
    /// Length and worst `| ||e|| - 1 |` of the query-side embeddings.
    embedding_len: Option<usize>,
    max_norm_error: Option<f64>,
}

fn dense_run<T: Scalar>(
    label: String,
    kb_ids: &[&str],
    kb_emb: &BTreeMap<String, Vec<T>>,
    test_ids: &[&str],
    q_emb: &BTreeMap<String, Vec<T>>,
    k: usize,
) -> Result<MethodRun> {
    let dim = kb_emb.values().chain(q_emb.values()).map(Vec::len).next().unwrap_or(0);
    let index = EmbeddingIndex::from_entries(
        &label,
        dim,
        kb_ids
            .iter()
            .filter_map(|id| kb_emb.get(*id).map(|v| (*id, v.as_slice()))),
    )?;
    let retrieved = test_ids
        .par_iter()
        .map(|id| match q_emb.get(*id) {
            Some(v) if !index.is_empty() => {
                Ok(cosine_top_k(&index, v, k)?.top().map(|h| h.record_id.clone()))
            }
            _ => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    let max_norm_error = q_emb
        .values()
        .map(|v| (l2_norm(v).as_f64() - 1.0).abs())
        .reduce(f64::max);
    Ok(MethodRun {
        label,
        kb_size: index.len(),
        retrieved,
        embedding_len: (dim > 0).then_some(dim),
        max_norm_error,
    })
}

fn run_method<T: Scalar>(
    method: &Method,
    enc: &EncoderConfig,
    k: usize,
    data: &EvalData<'_, T>,
    test: &[&PresetRecord],
    kb: &[&PresetRecord],
    mean_pool_layer: Option<u16>,
) -> Result<MethodRun> {
    let test_ids: Vec<&str> = test.iter().map(|r| r.record_id.as_str()).collect();
    let kb_ids: Vec<&str> = kb.iter().map(|r| r.record_id.as_str()).collect();
    let label = method.to_string();
    match method {
        Method::Trr => {
            let proj = build_projection(enc, kb_ids.iter().filter_map(|id| data.features.get(*id)))?;
            let Some(proj) = proj else {
                return Ok(MethodRun {
                    label,
                    kb_size: 0,
                    retrieved: vec![None; test.len()],
                    embedding_len: None,
                    max_norm_error: None,
                });
            };
            let kb_emb = trr_embeddings(&kb_ids, data.features, &proj, &enc.layers)?;
            let q_emb = trr_embeddings(&test_ids, data.features, &proj, &enc.layers)?;
            dense_run(label, &kb_ids, &kb_emb, &test_ids, &q_emb, k)
        }
        Method::MeanPool => {
            let layer = mean_pool_layer.ok_or(ProtocolError::NoCommonLayer)?;
            let kb_emb = mean_pool_embeddings(&kb_ids, data.features, layer)?;
            let q_emb = mean_pool_embeddings(&test_ids, data.features, layer)?;
            dense_run(label, &kb_ids, &kb_emb, &test_ids, &q_emb, k)
        }
        Method::Cached(name) => {
            let collect = |recs: &[&PresetRecord]| -> BTreeMap<String, Vec<T>> {
                recs.iter()
                    .filter_map(|r| {
                        let v = r.cached_vectors.get(name)?;
                        let usable = v.iter().all(|x| x.is_finite()) && v.iter().any(|&x| x != 0.0);
                        usable.then(|| (r.record_id.clone(), v.iter().map(|&x| T::of(x)).collect()))
                    })
                    .collect()
            };
            dense_run(label, &kb_ids, &collect(kb), &test_ids, &collect(test), k)
        }
        Method::Text => {
            if kb.is_empty() {
                return Ok(MethodRun {
                    label,
                    kb_size: 0,
                    retrieved: vec![None; test.len()],
                    embedding_len: None,
                    max_norm_error: None,
                });
            }
            let owned: Vec<PresetRecord> = kb.iter().map(|r| (*r).clone()).collect();
            let index = LexicalIndex::build(&owned)?;
            let retrieved = test
                .par_iter()
                .map(|q| Ok(text_top_k::<f64>(&index, &q.query_text(), k)?.top().map(|h| h.record_id.clone())))
                .collect::<Result<Vec<_>>>()?;
            Ok(MethodRun {
                label,
                kb_size: index.len(),
                retrieved,
                embedding_len: None,
                max_norm_error: None,
            })
        }
    }
}

fn score_run(
    run: &MethodRun,
    test: &[&PresetRecord],
    by_id: &HashMap<&str, &PresetRecord>,
    data_ranges: &ParamRanges,
    opts: &MetricOptions,
) -> Result<Vec<Option<MetricReport<f64>>>> {
    run.retrieved
        .par_iter()
        .zip(test.par_iter())
        .map(|(hit, q)| {
            hit.as_ref()
                .map(|id| evaluate::<f64>(&q.parameters, &by_id[id.as_str()].parameters, Some(data_ranges), opts))
                .transpose()
                .map_err(ProtocolError::from)
        })
        .collect()
}

struct SplitRun {
    runs: Vec<MethodRun>,
    reports: Vec<Vec<Option<MetricReport<f64>>>>,
    rows: Vec<MethodRow>,
    mean_pool_layer: Option<u16>,
}

fn run_methods<T: Scalar>(
    cfg: &ProtocolAConfig,
    data: &EvalData<'_, T>,
    test: &[&PresetRecord],
    kb: &[&PresetRecord],
) -> Result<SplitRun> {
    let mean_pool_layer = if cfg.methods.contains(&Method::MeanPool) {
        match cfg.encoder.mean_pool_layer {
            Some(l) => Some(l),
            None => {
                let ids: Vec<&str> = test.iter().chain(kb).map(|r| r.record_id.as_str()).collect();
                Some(common_top_layer(&ids, data.features).ok_or(ProtocolError::NoCommonLayer)?)
            }
        }
    } else {
        None
    };
    let by_id = index_by_id(data.records);
    let mut runs = Vec::with_capacity(cfg.methods.len());
    let mut reports = Vec::with_capacity(cfg.methods.len());
    let mut rows = Vec::with_capacity(cfg.methods.len());
    for method in &cfg.methods {
        let run = run_method(method, &cfg.encoder, cfg.k, data, test, kb, mean_pool_layer)?;
        let scored = score_run(&run, test, &by_id, data.ranges, &cfg.metrics)?;
        rows.push(MethodRow::from_reports(run.label.clone(), run.kb_size, &scored));
        runs.push(run);
        reports.push(scored);
    }
    Ok(SplitRun {
        runs,
        reports,
        rows,
        mean_pool_layer,
    })
}

/// Paired per-metric comparisons for every method pair, Holm-adjusted within
/// each pair.
fn pairwise(labels: &[String], reports: &[Vec<Option<MetricReport<f64>>>], stats: &StatsConfig) -> Result<Vec<PairReport>> {
    let mut jobs = Vec::new();
    for a in 0..labels.len() {
        for b in a + 1..labels.len() {
            for m in MetricName::ALL {
                jobs.push((a, b, m));
            }
        }
    }
    let results = jobs
        .par_iter()
        .map(|&(a, b, m)| {
            let diffs: Vec<f64> = reports[a]
                .iter()
                .zip(&reports[b])
                .filter_map(|(ra, rb)| {
                    let (va, vb) = (m.value(ra.as_ref()?)?, m.value(rb.as_ref()?)?);
                    Some(if m.lower_is_better() { vb - va } else { va - vb })
                })
                .collect();
            if diffs.is_empty() {
                return Ok(None);
            }
            let sample = PairedSample::new(m.label(), diffs)?;
            let seed = rng::derive_seed(stats.seed, &format!("{}|{}|{}", labels[a], labels[b], m.label()));
            Ok(Some(compare(&sample, &StatsConfig { seed, ..*stats })?))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut pairs: Vec<PairReport> = Vec::new();
    for (&(a, b, _), cmp) in jobs.iter().zip(results) {
        if pairs.last().is_none_or(|p| p.method_a != labels[a] || p.method_b != labels[b]) {
            let n_common = reports[a]
                .iter()
                .zip(&reports[b])
                .filter(|(x, y)| x.is_some() && y.is_some())
                .count();
            pairs.push(PairReport {
                method_a: labels[a].clone(),
                method_b: labels[b].clone(),
                n_common,
                comparisons: Vec::new(),
            });
        }
        if let Some(c) = cmp {
            pairs.last_mut().expect("pushed above").comparisons.push(c);
        }
    }
    for p in &mut pairs {
        apply_holm(&mut p.comparisons);
    }
    Ok(pairs)
}

/// Top-1 retrieval benchmark on an audited split.
pub fn run_protocol_a<T: Scalar>(cfg: &ProtocolAConfig, data: &EvalData<'_, T>) -> Result<EvalReport> {
    cfg.validate()?;
    let split = resolve_split(&cfg.split, data)?;
    let run = run_methods(cfg, data, &split.test, &split.kb)?;
    let labels: Vec<String> = run.runs.iter().map(|r| r.label.clone()).collect();
    let pairs = pairwise(&labels, &run.reports, &cfg.stats)?;
    let mut per_query = Vec::with_capacity(split.test.len() * labels.len());
    for (m, mrun) in run.runs.iter().enumerate() {
        for (q, rec) in split.test.iter().enumerate() {
            per_query.push(QueryOutcome {
                query_id: rec.record_id.clone(),
                method: mrun.label.clone(),
                retrieved_id: mrun.retrieved[q].clone(),
                metrics: run.reports[m][q],
            });
        }
    }
    Ok(EvalReport {
        tool_version: VERSION.to_owned(),
        config: cfg.clone(),
        resolved_mean_pool_layer: run.mean_pool_layer,
        audit: split.audit,
        query_count: split.test.len(),
        rows: run.rows,
        pairs,
        per_query,
    })
}

// ---------------------------------------------------------------------------
// Degradation scenarios

/// How queries are degraded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DegradationScenario {
    /// Every query text replaced by `text`.
    VagueText { text: String },
    /// Seeded Gaussian noise of standard deviation `sigma` added to each query
    /// embedding, then renormalized. The fused query vector is the noisy one
    /// scaled by `fused_query_scale`; a scale below the audio-norm threshold
    /// fires the audio gate.
    NoisyAudio { sigma: f64, seed: u64, fused_query_scale: f64 },
    /// Each query keeps its own audio and ground truth but takes its text from
    /// another query chosen with `seed`.
    Conflict { seed: u64 },
}

impl DegradationScenario {
    pub fn vague_text() -> Self {
        DegradationScenario::VagueText {
            text: VAGUE_QUERY.to_owned(),
        }
    }

    pub fn noisy_audio(sigma: f64, seed: u64) -> Self {
        DegradationScenario::NoisyAudio {
            sigma,
            seed,
            fused_query_scale: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolCConfig {
    pub split: SplitSpec,
    pub encoder: EncoderConfig,
    pub fusion: FusionConfig,
    pub metrics: MetricOptions,
    /// Depth of the rankings compared for identity.
    pub k: usize,
}

impl ProtocolCConfig {
    pub fn new(split: SplitSpec) -> Self {
        Self {
            split,
            encoder: EncoderConfig::default(),
            fusion: FusionConfig::default(),
            metrics: MetricOptions::default(),
            k: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegradedQuery {
    pub query_id: String,
    /// Record whose text was used; differs from `query_id` only for conflicts.
    pub text_source_id: String,
    pub text: String,
    pub text_top: Option<String>,
    pub trr_top: Option<String>,
    pub fusion_top: Option<String>,
    /// `None` when both gates fired.
    pub effective_weights: Option<(f64, f64)>,
    pub fusion_matches_audio: bool,
    pub fusion_matches_text: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegradationReport {
    pub tool_version: String,
    pub scenario: DegradationScenario,
    pub config: ProtocolCConfig,
    pub query_count: usize,
    /// Text-only, TRR-only and Fusion, in that order.
    pub rows: Vec<MethodRow>,
    pub mean_effective_weights: Option<(f64, f64)>,
    pub fusion_errors: usize,
    /// Queries whose fused top-k equals the TRR-only top-k.
    pub fusion_matches_audio: usize,
    /// Queries whose fused top-k equals the Text-only top-k.
    pub fusion_matches_text: usize,
    /// Fusion mean L2 above the better single-modality mean L2.
    pub failure_mode: Option<bool>,
    pub per_query: Vec<DegradedQuery>,
}

/// Runs one degradation scenario over the test side of the split. Queries
/// without a usable TRR embedding are skipped.
pub fn run_protocol_c<T: Scalar>(
    scenario: &DegradationScenario,
    cfg: &ProtocolCConfig,
    data: &EvalData<'_, T>,
) -> Result<DegradationReport> {
    if cfg.k == 0 {
        return Err(ProtocolError::InvalidK);
    }
    cfg.fusion.validate()?;
    let split = resolve_split(&cfg.split, data)?;
    let kb_ids: Vec<&str> = split.kb.iter().map(|r| r.record_id.as_str()).collect();
    let test_ids: Vec<&str> = split.test.iter().map(|r| r.record_id.as_str()).collect();
    let proj = build_projection(&cfg.encoder, kb_ids.iter().filter_map(|id| data.features.get(*id)))?
        .ok_or_else(|| ProtocolError::NoQueries("knowledge base has no feature maps".into()))?;
    let kb_emb = trr_embeddings(&kb_ids, data.features, &proj, &cfg.encoder.layers)?;
    let q_emb = trr_embeddings(&test_ids, data.features, &proj, &cfg.encoder.layers)?;
    let dim = proj.output_dim * proj.output_dim;
    let audio_index = EmbeddingIndex::from_entries(
        "TRR",
        dim,
        kb_ids.iter().filter_map(|id| kb_emb.get(*id).map(|v| (*id, v.as_slice()))),
    )?;
    let kb_owned: Vec<PresetRecord> = split.kb.iter().map(|r| (*r).clone()).collect();
    let text_index = LexicalIndex::build(&kb_owned)?;

    let queries: Vec<&PresetRecord> = split
        .test
        .iter()
        .copied()
        .filter(|r| q_emb.contains_key(&r.record_id))
        .collect();
    if queries.is_empty() {
        return Err(ProtocolError::NoQueries("no test record has a usable TRR embedding".into()));
    }
    if matches!(scenario, DegradationScenario::Conflict { .. }) && queries.len() < 2 {
        return Err(ProtocolError::NoQueries("conflicts need at least two queries".into()));
    }

    let by_id = index_by_id(data.records);
    let mut per_query = Vec::with_capacity(queries.len());
    let mut reports: [Vec<Option<MetricReport<f64>>>; 3] = Default::default();
    let evaluate_hit = |gt: &PresetRecord, hit: &Option<String>| -> Result<Option<MetricReport<f64>>> {
        hit.as_ref()
            .map(|id| evaluate::<f64>(&gt.parameters, &by_id[id.as_str()].parameters, Some(data.ranges), &cfg.metrics))
            .transpose()
            .map_err(ProtocolError::from)
    };

    for (qi, q) in queries.iter().enumerate() {
        let clean = &q_emb[&q.record_id];
        let (text_source, audio, fused_vec): (&PresetRecord, Vec<T>, Vec<T>) = match scenario {
            DegradationScenario::VagueText { .. } => (q, clean.clone(), clean.clone()),
            DegradationScenario::NoisyAudio {
                sigma,
                seed,
                fused_query_scale,
            } => {
                let mut gen = rng::seeded(rng::derive_seed(*seed, &q.record_id));
                let noisy: Vec<T> = clean
                    .iter()
                    .map(|&v| v + T::of(sigma * rng::standard_normal(&mut gen)))
                    .collect();
                let norm = l2_norm(&noisy);
                let noisy: Vec<T> = if norm > T::zero() && norm.is_finite() {
                    noisy.iter().map(|&v| v / norm).collect()
                } else {
                    clean.clone()
                };
                let scaled = noisy.iter().map(|&v| v * T::of(*fused_query_scale)).collect();
                (q, noisy, scaled)
            }
            DegradationScenario::Conflict { seed } => {
                let mut gen = rng::seeded(rng::derive_seed(*seed, &q.record_id));
                let pick = (rng::unit_f64(&mut gen) * (queries.len() - 1) as f64) as usize;
                let j = if pick >= qi { pick + 1 } else { pick };
                (queries[j], clean.clone(), clean.clone())
            }
        };
        let text = match scenario {
            DegradationScenario::VagueText { text } => text.clone(),
            _ => text_source.query_text(),
        };

        let text_rank = text_top_k::<T>(&text_index, &text, cfg.k)?;
        let trr_rank = cosine_top_k(&audio_index, &audio, cfg.k)?;
        let fused = match fused_top_k(&text_index, &audio_index, Some(&text), Some(&fused_vec), &cfg.fusion, cfg.k) {
            Ok(r) => Some(r),
            Err(RetrievalError::BothModalitiesDegraded) => None,
            Err(e) => return Err(e.into()),
        };

        let top = |r: &crate::retrieval::RankedResult<T>| r.top().map(|h| h.record_id.clone());
        let text_top = top(&text_rank);
        let trr_top = top(&trr_rank);
        let fusion_top = fused.as_ref().and_then(top);
        reports[0].push(evaluate_hit(q, &text_top)?);
        reports[1].push(evaluate_hit(q, &trr_top)?);
        reports[2].push(evaluate_hit(q, &fusion_top)?);
        per_query.push(DegradedQuery {
            query_id: q.record_id.clone(),
            text_source_id: text_source.record_id.clone(),
            text,
            text_top,
            trr_top,
            fusion_top,
            effective_weights: fused
                .as_ref()
                .map(|r| (r.effective_weights.0.as_f64(), r.effective_weights.1.as_f64())),
            fusion_matches_audio: fused.as_ref().is_some_and(|r| same_order(r, &trr_rank)),
            fusion_matches_text: fused.as_ref().is_some_and(|r| same_order(r, &text_rank)),
        });
    }

    let union: BTreeSet<&str> = text_index.ids().chain(audio_index.ids().iter().map(String::as_str)).collect();
    let rows = vec![
        MethodRow::from_reports("Text-only".into(), text_index.len(), &reports[0]),
        MethodRow::from_reports("TRR-only".into(), audio_index.len(), &reports[1]),
        MethodRow::from_reports("Fusion".into(), union.len(), &reports[2]),
    ];
    let weights: Vec<(f64, f64)> = per_query.iter().filter_map(|q| q.effective_weights).collect();
    let mean_effective_weights = (!weights.is_empty()).then(|| {
        let n = weights.len() as f64;
        (
            weights.iter().map(|w| w.0).sum::<f64>() / n,
            weights.iter().map(|w| w.1).sum::<f64>() / n,
        )
    });
    let failure_mode = match (rows[0].l2.mean, rows[1].l2.mean, rows[2].l2.mean) {
        (Some(t), Some(a), Some(f)) => Some(f > t.min(a)),
        _ => None,
    };
    Ok(DegradationReport {
        tool_version: VERSION.to_owned(),
        scenario: scenario.clone(),
        config: cfg.clone(),
        query_count: queries.len(),
        fusion_errors: per_query.iter().filter(|q| q.effective_weights.is_none()).count(),
        fusion_matches_audio: per_query.iter().filter(|q| q.fusion_matches_audio).count(),
        fusion_matches_text: per_query.iter().filter(|q| q.fusion_matches_text).count(),
        rows,
        mean_effective_weights,
        failure_mode,
        per_query,
    })
}

// ---------------------------------------------------------------------------
// Ablations and the near-duplicate sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AblationGrid {
    ProjectionDim(Vec<usize>),
    LayerSet(Vec<LayerSet>),
    ProjectionType(Vec<ProjectionKind>),
}

impl AblationGrid {
    pub fn default_projection_dims() -> Self {
        AblationGrid::ProjectionDim(DEFAULT_PROJECTION_DIMS.to_vec())
    }

    pub fn default_layer_sets() -> Self {
        AblationGrid::LayerSet(LayerSet::ablation_grid())
    }

    pub fn default_projection_types() -> Self {
        AblationGrid::ProjectionType(vec![ProjectionKind::FrozenRandom, ProjectionKind::Pca])
    }

    fn points(&self, base: &EncoderConfig) -> Vec<(String, EncoderConfig)> {
        match self {
            AblationGrid::ProjectionDim(dims) => dims
                .iter()
                .map(|&d| {
                    (
                        format!("d={d}"),
                        EncoderConfig {
                            projection_dim: d,
                            ..base.clone()
                        },
                    )
                })
                .collect(),
            AblationGrid::LayerSet(sets) => sets
                .iter()
                .map(|s| {
                    (
                        format!("layers={s}"),
                        EncoderConfig {
                            layers: s.clone(),
                            ..base.clone()
                        },
                    )
                })
                .collect(),
            AblationGrid::ProjectionType(kinds) => kinds
                .iter()
                .map(|&kind| {
                    (
                        format!("{kind:?}"),
                        EncoderConfig {
                            projection: kind,
                            ..base.clone()
                        },
                    )
                })
                .collect(),
        }
    }

    fn len(&self) -> usize {
        match self {
            AblationGrid::ProjectionDim(v) => v.len(),
            AblationGrid::LayerSet(v) => v.len(),
            AblationGrid::ProjectionType(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationPoint {
    pub label: String,
    pub encoder: EncoderConfig,
    /// Length of the TRR embedding, `d * d`.
    pub embedding_len: Option<usize>,
    /// Largest deviation of a query embedding norm from 1.
    pub max_norm_error: Option<f64>,
    pub row: MethodRow,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub tool_version: String,
    pub base_config: ProtocolAConfig,
    pub grid: AblationGrid,
    pub points: Vec<AblationPoint>,
}

/// Re-encodes knowledge base and queries with TRR at every grid point.
pub fn run_ablation<T: Scalar>(grid: &AblationGrid, cfg: &ProtocolAConfig, data: &EvalData<'_, T>) -> Result<AblationReport> {
    if grid.len() == 0 {
        return Err(ProtocolError::EmptyGrid);
    }
    if cfg.k == 0 {
        return Err(ProtocolError::InvalidK);
    }
    let split = resolve_split(&cfg.split, data)?;
    let by_id = index_by_id(data.records);
    let mut points = Vec::with_capacity(grid.len());
    for (label, enc) in grid.points(&cfg.encoder) {
        let run = run_method(&Method::Trr, &enc, cfg.k, data, &split.test, &split.kb, None)?;
        let scored = score_run(&run, &split.test, &by_id, data.ranges, &cfg.metrics)?;
        points.push(AblationPoint {
            label,
            encoder: enc,
            embedding_len: run.embedding_len,
            max_norm_error: run.max_norm_error,
            row: MethodRow::from_reports(run.label.clone(), run.kb_size, &scored),
        });
    }
    Ok(AblationReport {
        tool_version: VERSION.to_owned(),
        base_config: cfg.clone(),
        grid: grid.clone(),
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    /// `None` for the unfiltered baseline.
    pub tau: Option<f64>,
    pub kb_size: usize,
    pub rows: Vec<MethodRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub tool_version: String,
    pub config: ProtocolAConfig,
    pub taus: Vec<f64>,
    pub points: Vec<SweepPoint>,
}

/// Progressive near-duplicate removal: the knowledge base at each threshold
/// is the previous one filtered again at the new threshold, so sizes never
/// grow along the sweep.
pub fn run_dedup_sweep<T: Scalar>(taus: &[f64], cfg: &ProtocolAConfig, data: &EvalData<'_, T>) -> Result<SweepReport> {
    cfg.validate()?;
    if taus.is_empty() {
        return Err(ProtocolError::EmptyGrid);
    }
    if !taus.iter().all(|&t| t > 0.0 && t.is_finite()) || taus.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ProtocolError::InvalidGrid(format!("taus must be positive and ascending, got {taus:?}")));
    }
    let split = resolve_split(&cfg.split, data)?;
    let mut points = Vec::with_capacity(taus.len() + 1);
    let baseline = run_methods(cfg, data, &split.test, &split.kb)?;
    points.push(SweepPoint {
        tau: None,
        kb_size: split.kb.len(),
        rows: baseline.rows,
    });

    let mut kb: Vec<PresetRecord> = split.kb.iter().map(|r| (*r).clone()).collect();
    for &tau in taus {
        kb = near_duplicate_filter(&kb, data.ranges, tau)?;
        let kb_refs: Vec<&PresetRecord> = kb.iter().collect();
        let run = run_methods(cfg, data, &split.test, &kb_refs)?;
        points.push(SweepPoint {
            tau: Some(tau),
            kb_size: kb.len(),
            rows: run.rows,
        });
    }
    Ok(SweepReport {
        tool_version: VERSION.to_owned(),
        config: cfg.clone(),
        taus: taus.to_vec(),
        points,
    })
}

// ---------------------------------------------------------------------------
// Latency profiling

/// Monotonic nanosecond time source.
pub trait Clock {
    fn now_ns(&mut self) -> Result<u64>;
    fn describe(&self) -> String;
}

/// Wall-clock monotonic time since construction.
#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now_ns(&mut self) -> Result<u64> {
        u64::try_from(self.origin.elapsed().as_nanos())
            .map_err(|_| ProtocolError::ClockUnavailable("elapsed time overflows u64 nanoseconds".into()))
    }

    fn describe(&self) -> String {
        "monotonic".into()
    }
}

/// Deterministic clock advancing by a fixed step on every reading.
#[derive(Debug, Clone, Copy)]
pub struct FakeClock {
    step_ns: u64,
    t: u64,
}

impl FakeClock {
    pub fn new(step_ns: u64) -> Self {
        Self { step_ns, t: 0 }
    }
}

impl Clock for FakeClock {
    fn now_ns(&mut self) -> Result<u64> {
        self.t += self.step_ns;
        Ok(self.t)
    }

    fn describe(&self) -> String {
        format!("fake:{}ns", self.step_ns)
    }
}

pub struct LatencyQuery<'a, T> {
    pub id: String,
    pub text: String,
    pub features: &'a FeatureMapSet<T>,
}

/// Prebuilt indices for the timed pipeline.
pub struct LatencyContext<'a, T> {
    pub text_index: &'a LexicalIndex,
    pub audio_index: &'a EmbeddingIndex<T>,
    pub projection: &'a ProjectionSpec<T>,
    pub layers: &'a LayerSet,
    pub fusion: FusionConfig,
    pub k: usize,
}

pub const LATENCY_COMPONENTS: [&str; 5] = ["text_scoring", "audio_scoring", "fusion", "projection", "end_to_end"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentLatency {
    pub name: String,
    pub runs: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyConfig {
    pub query_count: usize,
    pub query_ids: Vec<String>,
    pub warmups: usize,
    pub repeats: usize,
    pub k: usize,
    pub fusion: FusionConfig,
    pub clock: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyProfile {
    pub tool_version: String,
    pub config: LatencyConfig,
    /// Timed runs pooled per component: queries times repeats.
    pub run_count: usize,
    pub components: Vec<ComponentLatency>,
}

impl LatencyProfile {
    pub fn component(&self, name: &str) -> Option<&ComponentLatency> {
        self.components.iter().find(|c| c.name == name)
    }
}

/// Median of sorted data, averaging the middle pair for even lengths.
pub fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Nearest-rank quantile: the value at rank `ceil(p * n)` (1-based).
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// One pipeline run; returns per-component nanoseconds in
/// [`LATENCY_COMPONENTS`] order.
fn timed_run<T: Scalar>(q: &LatencyQuery<'_, T>, ctx: &LatencyContext<'_, T>, clock: &mut dyn Clock) -> Result<[u64; 5]> {
    let t0 = clock.now_ns()?;
    let emb = trr_encode(q.features, ctx.projection, ctx.layers)?;
    let t1 = clock.now_ns()?;
    let text = ctx.text_index.score_all(&ctx.text_index.query(&q.text));
    let t2 = clock.now_ns()?;
    let cos = ctx.audio_index.cosine_all(&emb.values)?;
    let scores = ModalityScores {
        text: Some(text),
        audio_norm: Some(l2_norm(&emb.values).as_f64()),
        audio: ctx.audio_index.ids().iter().map(String::as_str).zip(cos).collect(),
    };
    let t3 = clock.now_ns()?;
    let ranked = fuse(&scores, &ctx.fusion, ctx.k);
    let t4 = clock.now_ns()?;
    match ranked {
        Ok(_) | Err(RetrievalError::BothModalitiesDegraded) => {}
        Err(e) => return Err(e.into()),
    }
    Ok([t2 - t1, t3 - t2, t4 - t3, t1 - t0, t4 - t0])
}

/// Times the local pipeline on the calling thread: per query, `warmups`
/// discarded runs then `repeats` timed runs.
pub fn run_latency_profile<T: Scalar>(
    queries: &[LatencyQuery<'_, T>],
    ctx: &LatencyContext<'_, T>,
    warmups: usize,
    repeats: usize,
    clock: &mut dyn Clock,
) -> Result<LatencyProfile> {
    if queries.is_empty() {
        return Err(ProtocolError::NoQueries("latency profile needs at least one query".into()));
    }
    if repeats == 0 {
        return Err(ProtocolError::InvalidGrid("repeats must be at least 1".into()));
    }
    let mut samples: [Vec<f64>; 5] = Default::default();
    for q in queries {
        for _ in 0..warmups {
            timed_run(q, ctx, clock)?;
        }
        for _ in 0..repeats {
            let t = timed_run(q, ctx, clock)?;
            for (s, ns) in samples.iter_mut().zip(t) {
                s.push(ns as f64 / 1e6);
            }
        }
    }
    let components = LATENCY_COMPONENTS
        .iter()
        .zip(samples.iter_mut())
        .map(|(name, s)| {
            s.sort_by(f64::total_cmp);
            ComponentLatency {
                name: (*name).to_owned(),
                runs: s.len(),
                median_ms: median(s),
                p95_ms: nearest_rank(s, 0.95),
            }
        })
        .collect();
    Ok(LatencyProfile {
        tool_version: VERSION.to_owned(),
        config: LatencyConfig {
            query_count: queries.len(),
            query_ids: queries.iter().map(|q| q.id.clone()).collect(),
            warmups,
            repeats,
            k: ctx.k,
            fusion: ctx.fusion,
            clock: clock.describe(),
        },
        run_count: queries.len() * repeats,
        components,
    })
}

// ---------------------------------------------------------------------------
// Rendering

fn cell(s: &MetricSummary) -> String {
    s.mean.map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"))
}

/// Plain-text table with columns Method, n, L2, Norm.L2, Acc@0.1, Recall,
/// Cos, Module.
pub fn render_table(rows: &[MethodRow]) -> String {
    let header = ["Method", "n", "L2", "Norm.L2", "Acc@0.1", "Recall", "Cos", "Module"];
    let body: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            [
                r.label.clone(),
                r.n.to_string(),
                cell(&r.l2),
                cell(&r.norm_l2),
                cell(&r.acc_at_0_1),
                cell(&r.recall),
                cell(&r.cosine),
                cell(&r.module_jaccard),
            ]
        })
        .collect();
    let mut widths: [usize; 8] = header.map(str::len);
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join("  ")
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    for row in &body {
        out.push('\n');
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out.push('\n');
    out
}

/// Latency table in milliseconds.
pub fn render_latency(profile: &LatencyProfile) -> String {
    let mut out = format!("{:<14}  {:>6}  {:>10}  {:>10}\n", "Component", "runs", "median_ms", "p95_ms");
    for c in &profile.components {
        out.push_str(&format!("{:<14}  {:>6}  {:>10.4}  {:>10.4}\n", c.name, c.runs, c.median_ms, c.p95_ms));
    }
    out
}
