#![allow(dead_code)]

use serde_json::Value;
use trr_core::feature_io::{FeatureMapSet, LayerFeatures};
use trr_core::knowledge_base::{ParamTree, ParamValue};
use trr_core::rng::{self, Rng};

/// Random valid map: `layers` ascending from a random start, same frame count
/// in every layer, values uniform in `[-scale, scale]`.
pub fn random_feature_map(gen: &mut Rng, layers: &[u16], frames: usize, channels: usize, scale: f64) -> FeatureMapSet<f64> {
    let id = format!("item{}", gen_range(gen, 0, 1_000_000));
    let layers = layers
        .iter()
        .map(|&l| {
            let values = (0..frames * channels)
                .map(|_| scale * (2.0 * rng::unit_f64(gen) - 1.0))
                .collect();
            LayerFeatures::new(l, frames, channels, values)
        })
        .collect();
    FeatureMapSet::new(id, layers).unwrap()
}

pub fn gen_range(gen: &mut Rng, lo: usize, hi: usize) -> usize {
    lo + (rng::unit_f64(gen) * (hi - lo) as f64) as usize
}

/// Same map with frames of every layer shuffled by a Fisher-Yates pass.
pub fn permute_frames(fm: &FeatureMapSet<f64>, gen: &mut Rng) -> FeatureMapSet<f64> {
    let layers = fm
        .layers
        .iter()
        .map(|l| {
            let mut order: Vec<usize> = (0..l.frames).collect();
            for i in (1..order.len()).rev() {
                order.swap(i, gen_range(gen, 0, i + 1));
            }
            let values = order.iter().flat_map(|&t| l.frame(t).to_vec()).collect();
            LayerFeatures::new(l.layer_index, l.frames, l.channels, values)
        })
        .collect();
    FeatureMapSet::new(fm.item_id.clone(), layers).unwrap()
}

pub fn scale_map(fm: &FeatureMapSet<f64>, c: f64) -> FeatureMapSet<f64> {
    let mut out = fm.clone();
    for l in &mut out.layers {
        l.values.iter_mut().for_each(|v| *v *= c);
    }
    out
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[i * n + i]).collect(), v)
}

/// Sample covariance (n - 1) of row vectors.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let c = rows[0].len();
    let mean: Vec<f64> = (0..c).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![0.0; c * c];
    for r in rows {
        for i in 0..c {
            for j in 0..c {
                cov[i * c + j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    cov.iter_mut().for_each(|x| *x /= (n - 1) as f64);
    cov
}

// Brute-force metric reference working directly on JSON trees.

pub fn oracle_flatten(v: &Value) -> Vec<(String, f64)> {
    fn walk(v: &Value, path: &str, out: &mut Vec<(String, f64)>) {
        if let Value::Object(map) = v {
            for (k, child) in map {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match child {
                    Value::Number(n) => out.push((p, n.as_f64().unwrap())),
                    Value::Bool(b) => out.push((p, if *b { 1.0 } else { 0.0 })),
                    Value::Object(_) => walk(child, &p, out),
                    _ => {}
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(v, "", &mut out);
    out
}

fn lookup(v: &[(String, f64)], k: &str) -> f64 {
    v.iter().find(|(key, _)| key == k).map_or(0.0, |(_, x)| *x)
}

pub fn oracle_union(a: &[(String, f64)], b: &[(String, f64)]) -> Vec<String> {
    let mut keys: Vec<String> = Vec::new();
    for (k, _) in a.iter().chain(b) {
        if !keys.contains(k) {
            keys.push(k.clone());
        }
    }
    keys
}

pub fn oracle_l2(a: &[(String, f64)], b: &[(String, f64)]) -> f64 {
    let u = oracle_union(a, b);
    let s: f64 = u.iter().map(|k| (lookup(a, k) - lookup(b, k)).powi(2)).sum();
    (s / u.len() as f64).sqrt()
}

pub fn oracle_acc(a: &[(String, f64)], b: &[(String, f64)], tol: f64) -> f64 {
    let u = oracle_union(a, b);
    u.iter().filter(|k| (lookup(a, k) - lookup(b, k)).abs() <= tol).count() as f64 / u.len() as f64
}

pub fn oracle_recall(gt: &[(String, f64)], pred: &[(String, f64)], thr: f64, tol: f64) -> Option<f64> {
    let active: Vec<&(String, f64)> = gt.iter().filter(|(_, v)| v.abs() > thr).collect();
    if active.is_empty() {
        return None;
    }
    let hits = active.iter().filter(|(k, v)| (v - lookup(pred, k)).abs() <= tol).count();
    Some(hits as f64 / active.len() as f64)
}

pub fn oracle_cosine(a: &[(String, f64)], b: &[(String, f64)]) -> Option<f64> {
    let u = oracle_union(a, b);
    let dot: f64 = u.iter().map(|k| lookup(a, k) * lookup(b, k)).sum();
    let na: f64 = u.iter().map(|k| lookup(a, k).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = u.iter().map(|k| lookup(b, k).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some(dot / (na * nb))
    }
}

pub fn oracle_modules(v: &Value) -> Vec<String> {
    let mut out = Vec::new();
    if let Value::Object(map) = v {
        for (k, child) in map {
            let mut probe = serde_json::Map::new();
            probe.insert(k.clone(), child.clone());
            if k.ends_with("On") && !oracle_flatten(&Value::Object(probe)).is_empty() {
                out.push(k.clone());
            }
        }
    }
    out
}

pub fn oracle_jaccard(a: &Value, b: &Value) -> Option<f64> {
    let (ma, mb) = (oracle_modules(a), oracle_modules(b));
    let inter = ma.iter().filter(|m| mb.contains(m)).count();
    let union = ma.len() + mb.len() - inter;
    (union > 0).then(|| inter as f64 / union as f64)
}

/// Normalized L2 with one shared range for every key.
pub fn oracle_norm_l2(a: &[(String, f64)], b: &[(String, f64)], min: f64, max: f64) -> f64 {
    let norm = |x: f64| ((x - min) / (max - min)).clamp(0.0, 1.0);
    let u = oracle_union(a, b);
    let s: f64 = u.iter().map(|k| (norm(lookup(a, k)) - norm(lookup(b, k))).powi(2)).sum();
    (s / u.len() as f64).sqrt()
}

/// Random tree with at most `max_leaves` leaves drawn from a small key pool so
/// that pairs share keys often. Mixes numbers, booleans, strings, and `On`
/// modules with and without numeric content.
pub fn random_param_tree(gen: &mut Rng, max_leaves: usize) -> ParamTree {
    const TOP: [&str; 6] = ["DelayOn", "ReverbOn", "ChorusOn", "Gain", "Mode", "DriveOn"];
    const SUB: [&str; 4] = ["Mix", "Time", "Level", "Type"];
    let mut tree = ParamTree::new();
    let mut leaves = 0;
    for key in TOP {
        if leaves >= max_leaves || rng::unit_f64(gen) < 0.4 {
            continue;
        }
        let value = match gen_range(gen, 0, 5) {
            0 => ParamValue::Number(random_value(gen)),
            1 => ParamValue::Bool(rng::unit_f64(gen) < 0.5),
            2 => ParamValue::Text("hall".into()),
            _ => {
                let mut sub = ParamTree::new();
                for s in SUB {
                    if leaves >= max_leaves || rng::unit_f64(gen) < 0.5 {
                        continue;
                    }
                    let v = if s == "Type" {
                        ParamValue::Text("plate".into())
                    } else {
                        leaves += 1;
                        ParamValue::Number(random_value(gen))
                    };
                    sub = sub.with(s, v);
                }
                ParamValue::Tree(sub)
            }
        };
        leaves += 1;
        tree = tree.with(key, value);
    }
    tree
}

fn random_value(gen: &mut Rng) -> f64 {
    match gen_range(gen, 0, 4) {
        0 => 0.0,
        1 => (rng::unit_f64(gen) * 0.1 * 1000.0).round() / 1000.0,
        _ => (rng::unit_f64(gen) * 20.0 - 10.0 * rng::unit_f64(gen)).round() / 4.0,
    }
}
