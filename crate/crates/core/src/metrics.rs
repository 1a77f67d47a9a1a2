//! Parameter-space metrics over flattened preset trees.
//!
//! Every metric works on the union of the two key sets with missing numeric
//! keys read as zero. Metrics that are undefined for a pair (no active ground
//! truth dims, zero-norm vectors, no modules) return `None` instead of zero.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge_base::{ParamRanges, ParamTree, ParamValue};
use crate::scalar::Scalar;

pub const DEFAULT_TOLERANCE: f64 = 0.1;
pub const DEFAULT_ACTIVE_THRESHOLD: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("non-finite parameter at {0:?}")]
    NonFiniteLeaf(String),
    #[error("both parameter vectors are empty")]
    EmptyUnion,
    #[error("no range for parameter {0:?}")]
    MissingRange(String),
}

/// Dot-keyed numeric leaves of a parameter tree.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FlatParamVector<T>(pub BTreeMap<String, T>);

impl<T: Scalar> FlatParamVector<T> {
    pub fn get(&self, key: &str) -> Option<T> {
        self.0.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &T)> {
        self.0.iter()
    }

    /// `(key, a, b)` over the union of keys, missing values as zero.
    pub fn union<'a>(&'a self, other: &'a Self) -> Vec<(&'a str, T, T)> {
        let keys: BTreeSet<&str> = self.0.keys().chain(other.0.keys()).map(String::as_str).collect();
        keys.into_iter()
            .map(|k| {
                (
                    k,
                    self.get(k).unwrap_or_else(T::zero),
                    other.get(k).unwrap_or_else(T::zero),
                )
            })
            .collect()
    }
}

impl<T: Scalar> FromIterator<(String, T)> for FlatParamVector<T> {
    fn from_iter<I: IntoIterator<Item = (String, T)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Depth-first flattening: numbers keep their value, booleans become 0/1,
/// strings are skipped.
pub fn flatten<T: Scalar>(tree: &ParamTree) -> Result<FlatParamVector<T>, MetricError> {
    let mut out = BTreeMap::new();
    flatten_into(tree, "", &mut out)?;
    Ok(FlatParamVector(out))
}

fn flatten_into<T: Scalar>(tree: &ParamTree, prefix: &str, out: &mut BTreeMap<String, T>) -> Result<(), MetricError> {
    for (key, value) in tree.iter() {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match value {
            ParamValue::Number(x) => {
                if !x.is_finite() {
                    return Err(MetricError::NonFiniteLeaf(path));
                }
                out.insert(path, T::of(*x));
            }
            ParamValue::Bool(b) => {
                out.insert(path, if *b { T::one() } else { T::zero() });
            }
            ParamValue::Text(_) => {}
            ParamValue::Tree(sub) => flatten_into(sub, &path, out)?,
        }
    }
    Ok(())
}

fn rmse<T: Scalar>(pairs: impl Iterator<Item = (T, T)>) -> Result<T, MetricError> {
    let mut sum = T::zero();
    let mut n = 0usize;
    for (a, b) in pairs {
        let d = a - b;
        sum += d * d;
        n += 1;
    }
    if n == 0 {
        return Err(MetricError::EmptyUnion);
    }
    Ok((sum / T::of_usize(n)).sqrt())
}

/// Root mean squared error over the union key set.
pub fn l2_error<T: Scalar>(gt: &FlatParamVector<T>, pred: &FlatParamVector<T>) -> Result<T, MetricError> {
    rmse(gt.union(pred).into_iter().map(|(_, a, b)| (a, b)))
}

/// Fraction of union keys with `|gt - pred| <= tol`.
pub fn acc_at<T: Scalar>(gt: &FlatParamVector<T>, pred: &FlatParamVector<T>, tol: T) -> Result<T, MetricError> {
    let union = gt.union(pred);
    if union.is_empty() {
        return Err(MetricError::EmptyUnion);
    }
    let hits = union.iter().filter(|(_, a, b)| (*a - *b).abs() <= tol).count();
    Ok(T::of_usize(hits) / T::of_usize(union.len()))
}

/// Among ground-truth keys with `|gt| > active_thresh`, the fraction
/// predicted within `tol`. `None` when no key is active.
pub fn active_recall<T: Scalar>(
    gt: &FlatParamVector<T>,
    pred: &FlatParamVector<T>,
    active_thresh: T,
    tol: T,
) -> Option<T> {
    let mut active = 0usize;
    let mut hits = 0usize;
    for (key, &g) in gt.iter() {
        if g.abs() > active_thresh {
            active += 1;
            let p = pred.get(key).unwrap_or_else(T::zero);
            if (g - p).abs() <= tol {
                hits += 1;
            }
        }
    }
    (active > 0).then(|| T::of_usize(hits) / T::of_usize(active))
}

/// Cosine similarity over the union key set; `None` if either norm is zero.
pub fn cosine_metric<T: Scalar>(gt: &FlatParamVector<T>, pred: &FlatParamVector<T>) -> Option<T> {
    let (mut ab, mut aa, mut bb) = (T::zero(), T::zero(), T::zero());
    for (_, a, b) in gt.union(pred) {
        ab += a * b;
        aa += a * a;
        bb += b * b;
    }
    if aa == T::zero() || bb == T::zero() {
        return None;
    }
    Some((ab / (aa.sqrt() * bb.sqrt())).max(-T::one()).min(T::one()))
}

/// How a top-level `...On` key counts as an active module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleActivity {
    /// The module contributes at least one numeric leaf after flattening.
    #[default]
    NumericLeaf,
    /// The module's flag is on: a numeric/boolean value `> 0.5`, or for a
    /// subtree, a numeric/boolean child named `On` or `Enabled` above `0.5`.
    FlagValue,
}

fn numeric(value: &ParamValue) -> Option<f64> {
    match value {
        ParamValue::Number(x) => Some(*x),
        ParamValue::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
        _ => None,
    }
}

fn has_numeric_leaf(value: &ParamValue) -> bool {
    match value {
        ParamValue::Number(_) | ParamValue::Bool(_) => true,
        ParamValue::Text(_) => false,
        ParamValue::Tree(t) => t.iter().any(|(_, v)| has_numeric_leaf(v)),
    }
}

/// Active module names of a tree.
pub fn active_modules(tree: &ParamTree, activity: ModuleActivity) -> BTreeSet<String> {
    tree.iter()
        .filter(|(k, _)| k.ends_with("On"))
        .filter(|(_, v)| match activity {
            ModuleActivity::NumericLeaf => has_numeric_leaf(v),
            ModuleActivity::FlagValue => match v {
                ParamValue::Tree(t) => ["On", "Enabled"]
                    .iter()
                    .filter_map(|flag| t.get(flag).and_then(numeric))
                    .any(|x| x > 0.5),
                other => numeric(other).is_some_and(|x| x > 0.5),
            },
        })
        .map(|(k, _)| k.clone())
        .collect()
}

/// Jaccard similarity of active module sets; `None` when both are empty.
pub fn module_jaccard<T: Scalar>(gt: &ParamTree, pred: &ParamTree, activity: ModuleActivity) -> Option<T> {
    let a = active_modules(gt, activity);
    let b = active_modules(pred, activity);
    let union = a.union(&b).count();
    if union == 0 {
        return None;
    }
    let inter = a.intersection(&b).count();
    Some(T::of_usize(inter) / T::of_usize(union))
}

/// RMSE after clamped min-max normalization of every union key.
pub fn normalized_l2<T: Scalar>(
    gt: &FlatParamVector<T>,
    pred: &FlatParamVector<T>,
    ranges: &ParamRanges,
) -> Result<T, MetricError> {
    let union = gt.union(pred);
    let mut pairs = Vec::with_capacity(union.len());
    for (key, a, b) in union {
        let r = ranges.get(key).ok_or_else(|| MetricError::MissingRange(key.to_owned()))?;
        pairs.push((T::of(r.normalize(a.as_f64())), T::of(r.normalize(b.as_f64()))));
    }
    rmse(pairs.into_iter())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub tolerance: f64,
    pub active_threshold: f64,
    pub module_activity: ModuleActivity,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            active_threshold: DEFAULT_ACTIVE_THRESHOLD,
            module_activity: ModuleActivity::default(),
        }
    }
}

/// All six metrics for one (ground truth, prediction) pair. Absent values
/// serialize as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport<T> {
    pub l2: T,
    pub norm_l2: Option<T>,
    pub acc_at_0_1: T,
    pub recall: Option<T>,
    pub cosine: Option<T>,
    pub module_jaccard: Option<T>,
    pub union_dim: usize,
}

/// Computes the full report. `norm_l2` is absent when no ranges are given.
pub fn evaluate<T: Scalar>(
    gt: &ParamTree,
    pred: &ParamTree,
    ranges: Option<&ParamRanges>,
    opts: &MetricOptions,
) -> Result<MetricReport<T>, MetricError> {
    let g = flatten::<T>(gt)?;
    let p = flatten::<T>(pred)?;
    let tol = T::of(opts.tolerance);
    Ok(MetricReport {
        l2: l2_error(&g, &p)?,
        norm_l2: ranges.map(|r| normalized_l2(&g, &p, r)).transpose()?,
        acc_at_0_1: acc_at(&g, &p, tol)?,
        recall: active_recall(&g, &p, T::of(opts.active_threshold), tol),
        cosine: cosine_metric(&g, &p),
        module_jaccard: module_jaccard(gt, pred, opts.module_activity),
        union_dim: g.union(&p).len(),
    })
}

/// A named feasibility predicate beyond the per-key bounds.
pub trait ConstraintRule<T>: Send + Sync {
    fn name(&self) -> &str;
    fn holds(&self, params: &FlatParamVector<T>) -> bool;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundViolation {
    pub key: String,
    pub value: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub violations: Vec<BoundViolation>,
    pub failed_rules: Vec<String>,
    /// Keys with neither an explicit nor a default range.
    pub unchecked_keys: Vec<String>,
}

/// Checks `min <= value <= max` for every key with a range, then every
/// extra rule.
pub fn validate_feasible<T: Scalar>(
    pred: &FlatParamVector<T>,
    ranges: &ParamRanges,
    rules: &[&dyn ConstraintRule<T>],
) -> ValidationReport {
    let mut violations = Vec::new();
    let mut unchecked_keys = Vec::new();
    for (key, value) in pred.iter() {
        let v = value.as_f64();
        match ranges.get(key) {
            Some(r) if !r.contains(v) => violations.push(BoundViolation {
                key: key.clone(),
                value: v,
                min: r.min,
                max: r.max,
            }),
            Some(_) => {}
            None => unchecked_keys.push(key.clone()),
        }
    }
    let failed_rules: Vec<String> = rules
        .iter()
        .filter(|r| !r.holds(pred))
        .map(|r| r.name().to_owned())
        .collect();
    ValidationReport {
        passed: violations.is_empty() && failed_rules.is_empty(),
        violations,
        failed_rules,
        unchecked_keys,
    }
}
