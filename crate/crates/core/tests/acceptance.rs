//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p trr-core --release --test acceptance`.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use rand::RngCore;

use trr_core::encoder::{make_random_projection, mean_pool_encode, trr_encode, LayerSet, ProjectionKind, ProjectionSpec};
use trr_core::feature_io::{
    encode_feature_map, read_feature_file, write_feature_file, FeatureError, FeatureMapSet, LayerFeatures,
};
use trr_core::knowledge_base::{audit_split, build_split, Grouping, ParamRange, ParamRanges, ParamTree, ParamValue, SplitSpec, DEFAULT_TEST_FRACTION};
use trr_core::metrics::{evaluate, MetricOptions};
use trr_core::protocols::{
    run_dedup_sweep, run_latency_profile, run_protocol_c, DegradationScenario, EvalData, FakeClock, LatencyContext,
    LatencyQuery, Method, ProtocolAConfig, ProtocolCConfig, DEFAULT_REPEATS, DEFAULT_TAUS, DEFAULT_WARMUPS,
    LATENCY_COMPONENTS,
};
use trr_core::retrieval::{cosine_top_k, EmbeddingIndex, FusionConfig};
use trr_core::rng::{self, Rng};
use trr_core::scalar::dot;
use trr_core::stats::{bootstrap_ci, holm_correct, permutation_test, PairedSample, StatsConfig};
use trr_core::synthetic::{grouped_corpus, texture_corpus, TextureConfig};
use trr_core::text_index::LexicalIndex;

use common::*;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn permutation_invariance() -> Outcome {
    let start = Instant::now();
    let proj = make_random_projection::<f64>(64, 32, 42).unwrap();
    let layers = LayerSet::default();
    let mut gen = rng::seeded(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let frames = gen_range(&mut gen, 2, 120);
        let fm = random_feature_map(&mut gen, &[4, 5, 6], frames, 64, 3.0);
        let shuffled = permute_frames(&fm, &mut gen);
        let a = trr_encode(&fm, &proj, &layers).map_err(|e| e.to_string())?;
        let b = trr_encode(&shuffled, &proj, &layers).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(&a.values, &b.values));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-6, || format!("max deviation {worst:e}"))?;
    ensure(secs < 10.0, || format!("took {secs:.2}s"))?;
    Ok(format!("200 maps, max deviation {worst:.1e}, {secs:.2}s"))
}

fn scale_and_norm() -> Outcome {
    let proj = make_random_projection::<f64>(48, 32, 7).unwrap();
    let layers = LayerSet::default();
    let mut gen = rng::seeded(2);
    let (mut worst_scale, mut worst_norm) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let frames = gen_range(&mut gen, 1, 60);
        let fm = random_feature_map(&mut gen, &[4, 5, 6], frames, 48, 1.0);
        let base = trr_encode(&fm, &proj, &layers).map_err(|e| e.to_string())?;
        for c in [0.1, 1.0, 10.0] {
            let e = trr_encode(&scale_map(&fm, c), &proj, &layers).map_err(|e| e.to_string())?;
            worst_scale = worst_scale.max(max_abs_diff(&base.values, &e.values));
            worst_norm = worst_norm.max((dot(&e.values, &e.values).sqrt() - 1.0).abs());
        }
    }
    ensure(worst_scale <= 1e-6, || format!("scale deviation {worst_scale:e}"))?;
    ensure(worst_norm <= 1e-6, || format!("norm deviation {worst_norm:e}"))?;
    Ok(format!("c in {{0.1, 1, 10}} on 100 maps: scale dev {worst_scale:.1e}, norm dev {worst_norm:.1e}"))
}

fn gram_correctness() -> Outcome {
    let identity = ProjectionSpec {
        kind: ProjectionKind::FrozenRandom,
        input_dim: 2,
        output_dim: 2,
        seed: 0,
        matrix: vec![1.0, 0.0, 0.0, 1.0],
    };
    let fm = FeatureMapSet::new("id", vec![LayerFeatures::new(4, 2, 2, vec![1.0, 0.0, 0.0, 1.0])]).unwrap();
    let e = trr_encode(&fm, &identity, &LayerSet::new([4]).unwrap()).map_err(|e| e.to_string())?;
    // Hand oracle: G = ([1,0]^T[1,0] + [0,1]^T[0,1]) / 2, normalized.
    let g = [0.5f64, 0.0, 0.0, 0.5];
    let n = dot(&g, &g).sqrt();
    let oracle: Vec<f64> = g.iter().map(|x| x / n).collect();
    let dev = max_abs_diff(&e.values, &oracle);
    ensure(dev <= 1e-5, || format!("identity example {:?}", e.values))?;

    let mut gen = rng::seeded(3);
    let mut min_eig = f64::INFINITY;
    let mut asym = 0.0f64;
    for _ in 0..100 {
        let d = gen_range(&mut gen, 2, 12);
        let c = gen_range(&mut gen, 2, 20);
        let frames = gen_range(&mut gen, 1, 30);
        let proj = make_random_projection::<f64>(c, d, gen.next_u64()).unwrap();
        let fm = random_feature_map(&mut gen, &[4, 5, 6], frames, c, 2.0);
        let e = trr_encode(&fm, &proj, &LayerSet::default()).map_err(|e| e.to_string())?;
        for i in 0..d {
            for j in 0..d {
                asym = asym.max((e.gram(i, j) - e.gram(j, i)).abs());
            }
        }
        let (eig, _) = jacobi_eigen(&e.values, d);
        min_eig = eig.into_iter().fold(min_eig, f64::min);
    }
    ensure(asym <= 1e-12, || format!("asymmetry {asym:e}"))?;
    ensure(min_eig >= -1e-6, || format!("min eigenvalue {min_eig:e}"))?;
    Ok(format!("identity example dev {dev:.1e}; 100 inputs symmetric, min eigenvalue {min_eig:.1e}"))
}

fn texture_separation() -> Outcome {
    let cfg = TextureConfig::default();
    let corpus = texture_corpus(300, &cfg, 2024);
    let ids = corpus.ids();
    let (queries, kb) = ids.split_at(100);

    let pooled: Vec<Vec<f64>> = ids
        .iter()
        .map(|id| mean_pool_encode(&corpus.features[id], 6).map(|p| p.values))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mut min_cos = f64::INFINITY;
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            min_cos = min_cos.min(dot(&pooled[i], &pooled[j]));
        }
    }

    let proj = make_random_projection::<f64>(cfg.channels, 32, 0).unwrap();
    let layers = LayerSet::default();
    let embed = |id: &String| trr_encode(&corpus.features[id], &proj, &layers).map(|e| e.values);
    let kb_vecs: Vec<Vec<f64>> = kb.iter().map(embed).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let index = EmbeddingIndex::from_entries("TRR", 32 * 32, kb.iter().map(String::as_str).zip(kb_vecs.iter().map(Vec::as_slice)))
        .map_err(|e| e.to_string())?;
    let mut consistent = 0;
    for q in queries {
        let v = embed(q).map_err(|e| e.to_string())?;
        let top = cosine_top_k(&index, &v, 1).map_err(|e| e.to_string())?;
        let hit = &top.hits[0].record_id;
        if corpus.classes[hit] == corpus.classes[q] {
            consistent += 1;
        }
    }
    let rate = consistent as f64 / queries.len() as f64;
    ensure(min_cos > 0.999, || format!("min mean-pool cosine {min_cos}"))?;
    ensure(rate >= 0.95, || format!("class-consistent top-1 {rate}"))?;
    Ok(format!("mean-pool min cosine {min_cos:.6}; TRR class-consistent top-1 {consistent}/100"))
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= 1e-9,
        _ => false,
    }
}

fn metric_oracle() -> Outcome {
    let ranges = ParamRanges::new(BTreeMap::new(), Some(ParamRange { min: -5.0, max: 10.0 })).unwrap();
    let opts = MetricOptions::default();
    let mut gen = rng::seeded(4);
    let mut checked = 0;
    while checked < 1000 {
        let (gt, pred) = (random_param_tree(&mut gen, 8), random_param_tree(&mut gen, 8));
        let (gj, pj) = (gt.to_json(), pred.to_json());
        let (gf, pf) = (oracle_flatten(&gj), oracle_flatten(&pj));
        if oracle_union(&gf, &pf).is_empty() {
            continue;
        }
        let r = evaluate::<f64>(&gt, &pred, Some(&ranges), &opts).map_err(|e| e.to_string())?;
        let ok = (r.l2 - oracle_l2(&gf, &pf)).abs() <= 1e-9
            && (r.acc_at_0_1 - oracle_acc(&gf, &pf, 0.1)).abs() <= 1e-9
            && close(r.recall, oracle_recall(&gf, &pf, 0.05, 0.1))
            && close(r.cosine, oracle_cosine(&gf, &pf))
            && close(r.module_jaccard, oracle_jaccard(&gj, &pj))
            && close(r.norm_l2, Some(oracle_norm_l2(&gf, &pf, -5.0, 10.0)));
        ensure(ok, || format!("mismatch on pair {checked}: {gj} vs {pj}"))?;
        checked += 1;
    }

    let num = ParamValue::Number;
    let r = evaluate::<f64>(
        &ParamTree::new().with("a", num(1.0)).with("b", num(0.0)),
        &ParamTree::new().with("a", num(1.05)),
        None,
        &opts,
    )
    .map_err(|e| e.to_string())?;
    ensure((r.l2 - 0.035355).abs() < 5e-7, || format!("worked L2 {}", r.l2))?;

    let modules = |names: &[&str]| {
        names
            .iter()
            .fold(ParamTree::new(), |t, n| t.with(n, ParamValue::Tree(ParamTree::new().with("Mix", num(0.5)))))
    };
    let r = evaluate::<f64>(&modules(&["DelayOn", "ReverbOn"]), &modules(&["DelayOn", "ChorusOn"]), None, &opts)
        .map_err(|e| e.to_string())?;
    ensure(r.module_jaccard == Some(1.0 / 3.0), || format!("worked Jaccard {:?}", r.module_jaccard))?;

    let ranges = ParamRanges::new([("Delay.Time".to_owned(), ParamRange { min: 0.0, max: 2000.0 })].into(), None).unwrap();
    let delay = |t| ParamTree::new().with("Delay", ParamValue::Tree(ParamTree::new().with("Time", num(t))));
    let r = evaluate::<f64>(&delay(500.0), &delay(700.0), Some(&ranges), &opts).map_err(|e| e.to_string())?;
    ensure(close(r.norm_l2, Some(0.1)), || format!("worked Norm.L2 {:?}", r.norm_l2))?;
    Ok("1000 random pairs match the reference; worked examples reproduce".into())
}

fn exact_p(d: &[f64]) -> f64 {
    let obs = d.iter().sum::<f64>().abs();
    let tol = 1e-9 * d.iter().map(|x| x.abs()).sum::<f64>();
    let hits = (0u32..1 << d.len())
        .filter(|mask| {
            let s: f64 = d.iter().enumerate().map(|(i, x)| if mask >> i & 1 == 1 { -x } else { *x }).sum();
            s.abs() >= obs - tol
        })
        .count();
    hits as f64 / (1u64 << d.len()) as f64
}

fn stats_exactness() -> Outcome {
    let sample = |d: Vec<f64>| PairedSample::new("m", d).map_err(|e| e.to_string());
    let mut gen = rng::seeded(5);
    let mut worst = 0.0f64;
    for n in 1..=12 {
        for trial in 0..3 {
            let d: Vec<f64> = (0..n).map(|_| rng::standard_normal(&mut gen) + 0.3).collect();
            let exact = exact_p(&d);
            let s = sample(d)?;
            let enumerated = permutation_test(&s, 20, 0, 0);
            ensure(enumerated == exact, || format!("exact mode {enumerated} vs enumeration {exact} at n={n}"))?;
            let mc = permutation_test(&s, 0, 100_000, (100 * n + trial) as u64);
            worst = worst.max((mc - exact).abs());
        }
    }
    ensure(worst <= 0.01, || format!("Monte-Carlo deviation {worst}"))?;
    let p = permutation_test(&sample(vec![1.0, 1.0, 1.0])?, 20, 0, 0);
    ensure(p == 0.25, || format!("{{1,1,1}} gave {p}"))?;
    let holm = holm_correct(&[0.01f64, 0.04, 0.03]).map_err(|e| e.to_string())?;
    ensure(holm == [0.03, 0.06, 0.06], || format!("Holm {holm:?}"))?;
    let (lo, hi) = bootstrap_ci(&sample(vec![0.25; 40])?, 0.95, 10_000, 1).map_err(|e| e.to_string())?;
    ensure(lo == hi, || format!("constant bootstrap [{lo}, {hi}]"))?;
    Ok(format!("n <= 12: exact mode matches enumeration, MC max dev {worst:.4}; {{1,1,1}} -> 0.25; Holm and constant bootstrap exact"))
}

fn split_hygiene() -> Outcome {
    let mut gen = rng::seeded(6);
    for i in 0..100u64 {
        let n = gen_range(&mut gen, 30, 600);
        let records = grouped_corpus(n, i);
        let split = build_split(&records, Grouping::ResolvedAudioPath, DEFAULT_TEST_FRACTION, i).map_err(|e| e.to_string())?;
        let audit = audit_split(&split, &records, None).map_err(|e| e.to_string())?;
        ensure(audit.shared_path_count == 0 && audit.overlapping_ids.is_empty(), || {
            format!("corpus {i}: {} shared paths", audit.shared_path_count)
        })?;
    }

    let corpus = texture_corpus(120, &TextureConfig { frames: 16, ..TextureConfig::default() }, 6);
    let data = EvalData { records: &corpus.records, features: &corpus.features, ranges: &corpus.ranges };
    let split = build_split(&corpus.records, Grouping::ResolvedAudioPath, DEFAULT_TEST_FRACTION, 6).map_err(|e| e.to_string())?;
    let mut cfg = ProtocolAConfig::new(split);
    cfg.methods = vec![Method::Trr, Method::Text];
    cfg.stats = StatsConfig { bootstrap_resamples: 1000, permutation_resamples: 1000, ..StatsConfig::default() };
    let sweep = run_dedup_sweep(&DEFAULT_TAUS, &cfg, &data).map_err(|e| e.to_string())?;
    let sizes: Vec<usize> = sweep.points.iter().map(|p| p.kb_size).collect();
    ensure(sizes.windows(2).all(|w| w[1] <= w[0]), || format!("sweep sizes {sizes:?}"))?;
    Ok(format!("100 corpora with zero shared paths; sweep KB sizes {sizes:?}"))
}

fn fusion_fallback() -> Outcome {
    let corpus = texture_corpus(120, &TextureConfig { frames: 16, ..TextureConfig::default() }, 7);
    let data = EvalData { records: &corpus.records, features: &corpus.features, ranges: &corpus.ranges };
    let split = SplitSpec {
        test_ids: corpus.ids()[..24].to_vec(),
        kb_ids: corpus.ids()[24..].to_vec(),
        grouping: Grouping::ResolvedAudioPath,
        seed: 0,
    };
    let cfg = ProtocolCConfig::new(split);
    let run = |s: DegradationScenario| run_protocol_c(&s, &cfg, &data).map_err(|e| e.to_string());

    let vague = run(DegradationScenario::vague_text())?;
    ensure(vague.fusion_matches_audio == vague.query_count, || {
        format!("vague text: {}/{} fused rankings equal audio-only", vague.fusion_matches_audio, vague.query_count)
    })?;
    ensure(vague.mean_effective_weights == Some((0.0, 1.0)), || format!("vague weights {:?}", vague.mean_effective_weights))?;

    let noisy = run(DegradationScenario::noisy_audio(0.5, 7))?;
    ensure(noisy.fusion_matches_text == noisy.query_count, || {
        format!("noisy audio: {}/{} fused rankings equal text-only", noisy.fusion_matches_text, noisy.query_count)
    })?;
    ensure(noisy.mean_effective_weights == Some((1.0, 0.0)), || format!("noisy weights {:?}", noisy.mean_effective_weights))?;

    let conflict = run(DegradationScenario::Conflict { seed: 7 })?;
    let l2 = |i: usize| conflict.rows[i].l2.mean.unwrap_or(f64::NAN);
    ensure(conflict.failure_mode == Some(true), || {
        format!("conflict not flagged: text {:.3}, audio {:.3}, fusion {:.3}", l2(0), l2(1), l2(2))
    })?;
    Ok(format!(
        "fallback to audio {0}/{0}, fallback to text {1}/{1}, conflict flagged (L2 text {2:.3}, audio {3:.3}, fusion {4:.3})",
        vague.query_count,
        noisy.query_count,
        l2(0),
        l2(1),
        l2(2)
    ))
}

fn latency_shape() -> Outcome {
    let cfg = TextureConfig { frames: 16, ..TextureConfig::default() };
    let corpus = texture_corpus(311, &cfg, 8);
    let (queries, kb) = corpus.records.split_at(211);
    let proj = make_random_projection::<f64>(cfg.channels, 32, 0).unwrap();
    let layers = LayerSet::default();
    let embs: Vec<Vec<f64>> = kb
        .iter()
        .map(|r| trr_encode(&corpus.features[&r.record_id], &proj, &layers).map(|e| e.values))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let audio = EmbeddingIndex::from_entries("TRR", 1024, kb.iter().map(|r| r.record_id.as_str()).zip(embs.iter().map(Vec::as_slice)))
        .map_err(|e| e.to_string())?;
    let text = LexicalIndex::build(kb).map_err(|e| e.to_string())?;
    let ctx = LatencyContext { text_index: &text, audio_index: &audio, projection: &proj, layers: &layers, fusion: FusionConfig::default(), k: 10 };
    let qs: Vec<LatencyQuery<'_, f64>> = queries
        .iter()
        .map(|r| LatencyQuery { id: r.record_id.clone(), text: r.query_text(), features: &corpus.features[&r.record_id] })
        .collect();
    let profile = run_latency_profile(&qs, &ctx, DEFAULT_WARMUPS, DEFAULT_REPEATS, &mut FakeClock::new(1_000_000))
        .map_err(|e| e.to_string())?;
    ensure(profile.run_count == 633, || format!("pooled {} runs", profile.run_count))?;
    let names: Vec<&str> = profile.components.iter().map(|c| c.name.as_str()).collect();
    ensure(names == LATENCY_COMPONENTS, || format!("components {names:?}"))?;
    for c in &profile.components {
        ensure(c.runs == 633 && c.median_ms == c.p95_ms, || format!("{}: runs {}, median {}, p95 {}", c.name, c.runs, c.median_ms, c.p95_ms))?;
    }
    Ok("211 queries x 3 repeats = 633 runs over 5 components; fake clock median == p95".into())
}

/// Writes a `.trrf` byte stream with arbitrary header fields.
fn raw_file(magic: &[u8; 4], version: u16, id: &[u8], layers: &[(u16, u32, u32, Vec<f32>)]) -> Vec<u8> {
    let mut out = magic.to_vec();
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(id.len() as u16).to_le_bytes());
    out.extend_from_slice(id);
    out.extend_from_slice(&(layers.len() as u16).to_le_bytes());
    for (index, frames, channels, values) in layers {
        out.extend_from_slice(&index.to_le_bytes());
        out.extend_from_slice(&frames.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn random_layers(gen: &mut Rng) -> Vec<(u16, u32, u32, Vec<f32>)> {
    let frames = gen_range(gen, 1, 6) as u32;
    let n = gen_range(gen, 2, 4);
    (0..n)
        .map(|i| {
            let c = gen_range(gen, 1, 6) as u32;
            let values = (0..frames * c).map(|_| rng::standard_normal(gen) as f32).collect();
            (4 + i as u16, frames, c, values)
        })
        .collect()
}

/// One corrupt file per category, with the error it must produce.
fn corrupt_file(kind: usize, gen: &mut Rng) -> (&'static str, Vec<u8>, fn(&FeatureError) -> bool) {
    let mut layers = random_layers(gen);
    let valid = raw_file(b"TRRF", 1, b"item", &layers);
    match kind {
        0 => {
            let cut = gen_range(gen, 0, valid.len());
            ("truncation", valid[..cut].to_vec(), |e| matches!(e, FeatureError::TruncatedPayload { .. }))
        }
        1 => ("bad magic", raw_file(b"TRRX", 1, b"item", &layers), |e| matches!(e, FeatureError::BadMagic { .. })),
        2 => {
            let v = 2 + gen_range(gen, 0, 1000) as u16;
            ("bad version", raw_file(b"TRRF", v, b"item", &layers), |e| matches!(e, FeatureError::VersionUnsupported { .. }))
        }
        3 => {
            let mut b = valid;
            b.extend((0..gen_range(gen, 1, 9)).map(|_| gen.next_u64() as u8));
            ("trailing bytes", b, |e| matches!(e, FeatureError::TrailingBytes { .. }))
        }
        4 => {
            let l = gen_range(gen, 0, layers.len());
            let k = gen_range(gen, 0, layers[l].3.len());
            layers[l].3[k] = [f32::NAN, f32::INFINITY, f32::NEG_INFINITY][gen_range(gen, 0, 3)];
            ("non-finite value", raw_file(b"TRRF", 1, b"item", &layers), |e| matches!(e, FeatureError::NonFiniteValue { .. }))
        }
        5 => {
            let l = gen_range(gen, 0, layers.len());
            if gen_range(gen, 0, 2) == 0 {
                layers[l].1 = 0;
            } else {
                layers[l].2 = 0;
            }
            ("zero dimension", raw_file(b"TRRF", 1, b"item", &layers), |e| {
                matches!(e, FeatureError::EmptyDimension { .. } | FeatureError::InconsistentFrameCount { .. })
            })
        }
        6 => {
            let last = layers.last_mut().unwrap();
            last.1 += 1;
            last.3.extend(std::iter::repeat_n(0.5, last.2 as usize));
            ("inconsistent frames", raw_file(b"TRRF", 1, b"item", &layers), |e| {
                matches!(e, FeatureError::InconsistentFrameCount { .. })
            })
        }
        7 => {
            let l = gen_range(gen, 1, layers.len());
            layers[l].0 = layers[l - 1].0 - gen_range(gen, 0, 2) as u16;
            ("layer order", raw_file(b"TRRF", 1, b"item", &layers), |e| matches!(e, FeatureError::LayerOrder { .. }))
        }
        8 => {
            layers[0].1 = u32::MAX - gen_range(gen, 0, 100) as u32;
            layers[0].2 = u32::MAX;
            layers.truncate(1);
            ("huge sizes", raw_file(b"TRRF", 1, b"item", &layers), |e| {
                matches!(e, FeatureError::TooLarge { .. } | FeatureError::TruncatedPayload { .. })
            })
        }
        9 => ("no layers", raw_file(b"TRRF", 1, b"item", &[]), |e| matches!(e, FeatureError::NoLayers)),
        _ => ("invalid id", raw_file(b"TRRF", 1, &[0xff, 0xfe, b'x'], &layers), |e| {
            matches!(e, FeatureError::InvalidItemId { .. })
        }),
    }
}

fn format_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut gen = rng::seeded(9);
    for i in 0..500 {
        let n_layers = gen_range(&mut gen, 1, 5);
        let mut indices: Vec<u16> = Vec::new();
        let mut next = gen_range(&mut gen, 0, 4) as u16;
        for _ in 0..n_layers {
            indices.push(next);
            next += 1 + gen_range(&mut gen, 0, 3) as u16;
        }
        let frames = gen_range(&mut gen, 1, 20);
        let channels = gen_range(&mut gen, 1, 40);
        let fm = random_feature_map(&mut gen, &indices, frames, channels, 100.0).cast::<f32>();
        let (a, b) = (dir.path().join(format!("{i}a.trrf")), dir.path().join(format!("{i}b.trrf")));
        write_feature_file(&fm, &a).map_err(|e| e.to_string())?;
        let back: FeatureMapSet<f32> = read_feature_file(&a).map_err(|e| e.to_string())?;
        write_feature_file(&back, &b).map_err(|e| e.to_string())?;
        let (x, y) = (std::fs::read(&a).map_err(|e| e.to_string())?, std::fs::read(&b).map_err(|e| e.to_string())?);
        ensure(x == y && back == fm, || format!("round trip {i} differs"))?;
        ensure(encode_feature_map(&fm).ok().as_ref() == Some(&x), || format!("file {i} differs from encoder output"))?;
    }

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for i in 0..500 {
        let (kind, bytes, expected) = corrupt_file(i % 11, &mut gen);
        let path = dir.path().join(format!("bad{i}.trrf"));
        std::fs::write(&path, &bytes).map_err(|e| e.to_string())?;
        let result = catch_unwind(|| read_feature_file::<f32>(&path))
            .map_err(|_| format!("{kind}: decoder panicked"))?;
        match result {
            Ok(_) => return Err(format!("{kind}: corrupt file {i} decoded")),
            Err(e) if !expected(&e) => return Err(format!("{kind}: unexpected error {e}")),
            Err(_) => *counts.entry(kind).or_default() += 1,
        }
    }
    Ok(format!("500 round trips byte-identical; 500 corrupt files rejected across {} categories", counts.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("permutation invariance", permutation_invariance),
        ("scale invariance and unit norm", scale_and_norm),
        ("gram correctness", gram_correctness),
        ("texture separation", texture_separation),
        ("metric oracle equivalence", metric_oracle),
        ("statistics exactness", stats_exactness),
        ("split hygiene", split_hygiene),
        ("fusion fallback pattern", fusion_fallback),
        ("latency harness shape", latency_shape),
        ("format round trip", format_round_trip),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| (*s).to_owned()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.2}s): {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.2}s): {reason}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
