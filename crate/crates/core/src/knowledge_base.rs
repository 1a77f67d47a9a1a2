//! Preset records, dataset JSON, leakage-free splits and near-duplicate
//! filtering.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::metrics::{self, FlatParamVector, MetricError};
use crate::rng;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("record {index} is missing field {field:?}")]
    MissingField { field: &'static str, index: usize },
    #[error("field {field:?} of record {index} has the wrong type")]
    WrongType { field: String, index: usize },
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("record {id:?} has an empty {field}")]
    EmptyField { id: String, field: &'static str },
    #[error("invalid parameter key {key:?} under {path:?}")]
    InvalidKey { path: String, key: String },
    #[error("unsupported parameter value at {0:?}")]
    UnsupportedValue(String),
    #[error("invalid range for {key:?}: min {min} must be below max {max}")]
    InvalidRange { key: String, min: f64, max: f64 },
    #[error("test fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("need at least 2 groups to split, found {0}")]
    TooFewGroups(usize),
    #[error("unknown record id {0:?}")]
    UnknownId(String),
    #[error("near-duplicate threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A leaf or subtree of a nested parameter dictionary.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Number(f64),
    Bool(bool),
    Text(String),
    Tree(ParamTree),
}

/// Nested parameter dictionary; keys are non-empty and never contain `'.'`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamTree {
    entries: IndexMap<String, ParamValue>,
}

impl ParamTree {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a child, rejecting keys that would break dot-path flattening.
    pub fn insert(&mut self, key: impl Into<String>, value: ParamValue) -> Result<(), KbError> {
        let key = key.into();
        if key.is_empty() || key.contains('.') {
            return Err(KbError::InvalidKey {
                path: String::new(),
                key,
            });
        }
        self.entries.insert(key, value);
        Ok(())
    }

    /// Builder form of [`ParamTree::insert`] for tests and generators.
    pub fn with(mut self, key: &str, value: ParamValue) -> Self {
        self.insert(key, value).expect("valid parameter key");
        self
    }

    pub fn get(&self, key: &str) -> Option<&ParamValue> {
        self.entries.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamValue)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_json(value: &Value) -> Result<Self, KbError> {
        Self::from_json_at(value, "")
    }

    fn from_json_at(value: &Value, path: &str) -> Result<Self, KbError> {
        let obj = value
            .as_object()
            .ok_or_else(|| KbError::UnsupportedValue(path.to_owned()))?;
        let mut tree = ParamTree::new();
        for (key, v) in obj {
            if key.is_empty() || key.contains('.') {
                return Err(KbError::InvalidKey {
                    path: path.to_owned(),
                    key: key.clone(),
                });
            }
            let child = if path.is_empty() {
                key.clone()
            } else {
                format!("{path}.{key}")
            };
            let pv = match v {
                Value::Number(n) => ParamValue::Number(n.as_f64().ok_or_else(|| KbError::UnsupportedValue(child.clone()))?),
                Value::Bool(b) => ParamValue::Bool(*b),
                Value::String(s) => ParamValue::Text(s.clone()),
                Value::Object(_) => ParamValue::Tree(Self::from_json_at(v, &child)?),
                Value::Null | Value::Array(_) => return Err(KbError::UnsupportedValue(child)),
            };
            tree.entries.insert(key.clone(), pv);
        }
        Ok(tree)
    }

    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        for (k, v) in &self.entries {
            let jv = match v {
                ParamValue::Number(x) => serde_json::Number::from_f64(*x).map(Value::Number).unwrap_or(Value::Null),
                ParamValue::Bool(b) => Value::Bool(*b),
                ParamValue::Text(s) => Value::String(s.clone()),
                ParamValue::Tree(t) => t.to_json(),
            };
            map.insert(k.clone(), jv);
        }
        Value::Object(map)
    }
}

/// One executable preset with its metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetRecord {
    pub record_id: String,
    pub song_name: String,
    pub style: String,
    pub feature_text: String,
    pub parameters: ParamTree,
    pub resolved_audio_path: String,
    /// Externally computed embeddings keyed by source name (e.g. `CLAP`).
    pub cached_vectors: BTreeMap<String, Vec<f64>>,
}

impl PresetRecord {
    /// Text side of the record used as a query: `Style` then `Feature`.
    pub fn query_text(&self) -> String {
        format!("{} {}", self.style, self.feature_text)
    }

    fn from_json(value: &Value, index: usize) -> Result<Self, KbError> {
        let obj = value.as_object().ok_or(KbError::WrongType {
            field: "<record>".into(),
            index,
        })?;
        let text = |field: &'static str| -> Result<String, KbError> {
            match obj.get(field) {
                None => Err(KbError::MissingField { field, index }),
                Some(Value::String(s)) => Ok(s.clone()),
                Some(Value::Number(n)) => Ok(n.to_string()),
                Some(_) => Err(KbError::WrongType {
                    field: field.into(),
                    index,
                }),
            }
        };
        let record_id = text("RecordId")?;
        let song_name = text("SongName")?;
        let style = text("Style")?;
        let feature_text = text("Feature")?;
        let resolved_audio_path = text("ResolvedAudioPath")?;
        let parameters = match obj.get("Parameters") {
            None => return Err(KbError::MissingField { field: "Parameters", index }),
            Some(v @ Value::Object(_)) => ParamTree::from_json(v)?,
            Some(_) => {
                return Err(KbError::WrongType {
                    field: "Parameters".into(),
                    index,
                })
            }
        };
        let mut cached_vectors = BTreeMap::new();
        match obj.get("Vectors") {
            None | Some(Value::Null) => {}
            Some(Value::Object(vs)) => {
                for (name, arr) in vs {
                    let field = format!("Vectors.{name}");
                    let nums = arr.as_array().ok_or_else(|| KbError::WrongType {
                        field: field.clone(),
                        index,
                    })?;
                    let vec = nums
                        .iter()
                        .map(|x| x.as_f64())
                        .collect::<Option<Vec<f64>>>()
                        .ok_or(KbError::WrongType { field, index })?;
                    cached_vectors.insert(name.clone(), vec);
                }
            }
            Some(_) => {
                return Err(KbError::WrongType {
                    field: "Vectors".into(),
                    index,
                })
            }
        }
        if record_id.is_empty() {
            return Err(KbError::EmptyField {
                id: record_id,
                field: "RecordId",
            });
        }
        if parameters.is_empty() {
            return Err(KbError::EmptyField {
                id: record_id,
                field: "Parameters",
            });
        }
        if resolved_audio_path.is_empty() {
            return Err(KbError::EmptyField {
                id: record_id,
                field: "ResolvedAudioPath",
            });
        }
        Ok(Self {
            record_id,
            song_name,
            style,
            feature_text,
            parameters,
            resolved_audio_path,
            cached_vectors,
        })
    }

    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        map.insert("RecordId".into(), Value::String(self.record_id.clone()));
        map.insert("SongName".into(), Value::String(self.song_name.clone()));
        map.insert("Style".into(), Value::String(self.style.clone()));
        map.insert("Feature".into(), Value::String(self.feature_text.clone()));
        map.insert("Parameters".into(), self.parameters.to_json());
        map.insert("ResolvedAudioPath".into(), Value::String(self.resolved_audio_path.clone()));
        if !self.cached_vectors.is_empty() {
            let vectors: Map<String, Value> = self
                .cached_vectors
                .iter()
                .map(|(k, v)| (k.clone(), serde_json::json!(v)))
                .collect();
            map.insert("Vectors".into(), Value::Object(vectors));
        }
        Value::Object(map)
    }
}

pub fn parse_dataset(json: &str) -> Result<Vec<PresetRecord>, KbError> {
    let value: Value = serde_json::from_str(json).map_err(|e| KbError::MalformedJson(e.to_string()))?;
    let items = value
        .as_array()
        .ok_or_else(|| KbError::MalformedJson("top level must be an array of records".into()))?;
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(items.len());
    for (index, item) in items.iter().enumerate() {
        let rec = PresetRecord::from_json(item, index)?;
        if !seen.insert(rec.record_id.clone()) {
            return Err(KbError::DuplicateId(rec.record_id));
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<PresetRecord>, KbError> {
    parse_dataset(&fs::read_to_string(path)?)
}

pub fn dataset_to_json(records: &[PresetRecord]) -> String {
    let arr = Value::Array(records.iter().map(PresetRecord::to_json).collect());
    serde_json::to_string_pretty(&arr).expect("dataset JSON serializes")
}

pub fn save_dataset(records: &[PresetRecord], path: impl AsRef<Path>) -> Result<(), KbError> {
    fs::write(path, dataset_to_json(records))?;
    Ok(())
}

/// Id -> record lookup.
pub fn index_by_id(records: &[PresetRecord]) -> HashMap<&str, &PresetRecord> {
    records.iter().map(|r| (r.record_id.as_str(), r)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub min: f64,
    pub max: f64,
}

impl ParamRange {
    /// Min-max normalization clamped to `[0, 1]`.
    pub fn normalize(&self, x: f64) -> f64 {
        ((x - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }
}

/// Physical operating ranges per flattened parameter key.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamRanges {
    pub ranges: BTreeMap<String, ParamRange>,
    /// Applied to keys without an explicit entry.
    pub default: Option<ParamRange>,
}

impl ParamRanges {
    pub fn new(ranges: BTreeMap<String, ParamRange>, default: Option<ParamRange>) -> Result<Self, KbError> {
        let entries = ranges
            .iter()
            .map(|(k, r)| (k.as_str(), r))
            .chain(default.iter().map(|r| ("default", r)));
        for (key, r) in entries {
            if !(r.min < r.max) || !r.min.is_finite() || !r.max.is_finite() {
                return Err(KbError::InvalidRange {
                    key: key.to_owned(),
                    min: r.min,
                    max: r.max,
                });
            }
        }
        Ok(Self { ranges, default })
    }

    pub fn get(&self, key: &str) -> Option<ParamRange> {
        self.ranges.get(key).copied().or(self.default)
    }

    pub fn from_json_str(json: &str) -> Result<Self, KbError> {
        let raw: BTreeMap<String, ParamRange> =
            serde_json::from_str(json).map_err(|e| KbError::MalformedJson(e.to_string()))?;
        let mut ranges = raw;
        let default = ranges.remove("default");
        Self::new(ranges, default)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KbError> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Value {
        let mut map: Map<String, Value> = self
            .ranges
            .iter()
            .map(|(k, r)| (k.clone(), serde_json::json!(r)))
            .collect();
        if let Some(d) = self.default {
            map.insert("default".into(), serde_json::json!(d));
        }
        Value::Object(map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    ResolvedAudioPath,
    SongName,
}

impl Grouping {
    pub fn key<'a>(&self, record: &'a PresetRecord) -> &'a str {
        match self {
            Grouping::ResolvedAudioPath => &record.resolved_audio_path,
            Grouping::SongName => &record.song_name,
        }
    }
}

/// Held-out query ids and knowledge-base ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_ids: Vec<String>,
    pub kb_ids: Vec<String>,
    pub grouping: Grouping,
    pub seed: u64,
}

impl SplitSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, KbError> {
        serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| KbError::MalformedJson(e.to_string()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("split serializes")
    }
}

pub const DEFAULT_TEST_FRACTION: f64 = 0.16;

/// Samples whole groups into the test side until it first holds at least
/// `test_fraction` of the records.
///
/// Group keys are sorted, shuffled with the seeded generator, then consumed
/// in order. The last group always stays on the knowledge-base side so
/// neither side can be empty. Ids keep their input order within each side.
pub fn build_split(
    records: &[PresetRecord],
    grouping: Grouping,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitSpec, KbError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(KbError::InvalidFraction(test_fraction));
    }
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *sizes.entry(grouping.key(r)).or_default() += 1;
    }
    if sizes.len() < 2 {
        return Err(KbError::TooFewGroups(sizes.len()));
    }
    let mut keys: Vec<&str> = sizes.keys().copied().collect();
    keys.shuffle(&mut rng::seeded(seed));

    let target = test_fraction * records.len() as f64;
    let mut test_groups: HashSet<&str> = HashSet::new();
    let mut taken = 0usize;
    for key in &keys[..keys.len() - 1] {
        if taken as f64 >= target {
            break;
        }
        test_groups.insert(key);
        taken += sizes[key];
    }

    let (test, kb): (Vec<&PresetRecord>, Vec<&PresetRecord>) =
        records.iter().partition(|r| test_groups.contains(grouping.key(r)));
    Ok(SplitSpec {
        test_ids: test.into_iter().map(|r| r.record_id.clone()).collect(),
        kb_ids: kb.into_iter().map(|r| r.record_id.clone()).collect(),
        grouping,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub test_count: usize,
    pub kb_count: usize,
    /// Ids listed on both sides.
    pub overlapping_ids: Vec<String>,
    pub shared_path_count: usize,
    pub shared_paths: Vec<String>,
    pub shared_song_count: usize,
    pub near_duplicate_tau: Option<f64>,
    pub near_duplicate_pairs: Option<usize>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.shared_path_count == 0 && self.overlapping_ids.is_empty()
    }
}

/// Counts cross-split leakage: shared resolved audio paths, shared song names
/// and, when `near_duplicates` is given, test/KB pairs whose normalized
/// parameter distance is within `tau`.
pub fn audit_split(
    split: &SplitSpec,
    records: &[PresetRecord],
    near_duplicates: Option<(&ParamRanges, f64)>,
) -> Result<AuditReport, KbError> {
    let by_id = index_by_id(records);
    let resolve = |ids: &[String]| -> Result<Vec<&PresetRecord>, KbError> {
        ids.iter()
            .map(|id| by_id.get(id.as_str()).copied().ok_or_else(|| KbError::UnknownId(id.clone())))
            .collect()
    };
    let test = resolve(&split.test_ids)?;
    let kb = resolve(&split.kb_ids)?;

    let kb_ids: HashSet<&str> = split.kb_ids.iter().map(String::as_str).collect();
    let overlapping_ids: Vec<String> = split
        .test_ids
        .iter()
        .filter(|id| kb_ids.contains(id.as_str()))
        .cloned()
        .collect();

    let kb_paths: HashSet<&str> = kb.iter().map(|r| r.resolved_audio_path.as_str()).collect();
    let shared_paths: BTreeSet<String> = test
        .iter()
        .filter(|r| kb_paths.contains(r.resolved_audio_path.as_str()))
        .map(|r| r.resolved_audio_path.clone())
        .collect();
    let kb_songs: HashSet<&str> = kb.iter().map(|r| r.song_name.as_str()).collect();
    let shared_songs: BTreeSet<&str> = test
        .iter()
        .filter(|r| kb_songs.contains(r.song_name.as_str()))
        .map(|r| r.song_name.as_str())
        .collect();

    let (near_duplicate_tau, near_duplicate_pairs) = match near_duplicates {
        None => (None, None),
        Some((ranges, tau)) => {
            if !(tau > 0.0) {
                return Err(KbError::InvalidThreshold(tau));
            }
            let flat_test = test
                .iter()
                .map(|r| metrics::flatten::<f64>(&r.parameters))
                .collect::<Result<Vec<_>, _>>()?;
            let flat_kb = kb
                .iter()
                .map(|r| metrics::flatten::<f64>(&r.parameters))
                .collect::<Result<Vec<_>, _>>()?;
            let mut pairs = 0usize;
            for a in &flat_test {
                for b in &flat_kb {
                    if parameter_distance(a, b, ranges)? <= tau {
                        pairs += 1;
                    }
                }
            }
            (Some(tau), Some(pairs))
        }
    };

    Ok(AuditReport {
        test_count: test.len(),
        kb_count: kb.len(),
        overlapping_ids,
        shared_path_count: shared_paths.len(),
        shared_paths: shared_paths.into_iter().collect(),
        shared_song_count: shared_songs.len(),
        near_duplicate_tau,
        near_duplicate_pairs,
    })
}

/// Distance used for near-duplicate detection: RMSE over the union of keys
/// after min-max normalization, missing keys read as zero before normalizing.
pub fn parameter_distance(
    a: &FlatParamVector<f64>,
    b: &FlatParamVector<f64>,
    ranges: &ParamRanges,
) -> Result<f64, KbError> {
    if a.is_empty() && b.is_empty() {
        return Ok(0.0);
    }
    Ok(metrics::normalized_l2(a, b, ranges)?)
}

/// Greedy near-duplicate removal.
///
/// Records are visited in ascending `record_id` order; a record is dropped when
/// its [`parameter_distance`] to any already-kept record is `<= tau`. Kept
/// records are returned in their input order.
pub fn near_duplicate_filter(
    kb: &[PresetRecord],
    ranges: &ParamRanges,
    tau: f64,
) -> Result<Vec<PresetRecord>, KbError> {
    if !(tau > 0.0) {
        return Err(KbError::InvalidThreshold(tau));
    }
    let flat = kb
        .iter()
        .map(|r| metrics::flatten::<f64>(&r.parameters))
        .collect::<Result<Vec<_>, _>>()?;
    let mut order: Vec<usize> = (0..kb.len()).collect();
    order.sort_by(|&a, &b| kb[a].record_id.cmp(&kb[b].record_id));

    let mut kept: Vec<usize> = Vec::new();
    'outer: for i in order {
        for &k in &kept {
            if parameter_distance(&flat[i], &flat[k], ranges)? <= tau {
                continue 'outer;
            }
        }
        kept.push(i);
    }
    kept.sort_unstable();
    Ok(kept.into_iter().map(|i| kb[i].clone()).collect())
}
