use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use trr_core::encoder::{
    mean_pool_encode, read_projection_file, trr_encode, write_projection_file, EncodeError, LayerSet, ProjectionKind,
    ProjectionSpec,
};
use trr_core::feature_io::{write_feature_file, FeatureMapSet};
use trr_core::knowledge_base::{
    audit_split, build_split, dataset_to_json, Grouping, PresetRecord, SplitSpec,
};
use trr_core::metrics::{flatten, validate_feasible, ValidationReport};
use trr_core::protocols::{
    build_projection, render_latency, render_table, run_ablation, run_dedup_sweep, run_latency_profile,
    run_protocol_a, run_protocol_c, trr_embeddings, AblationGrid, Clock, DegradationScenario, EncoderConfig, EvalData,
    FakeClock, LatencyContext, LatencyQuery, Method, MethodRow, MonotonicClock, PairReport, ProtocolAConfig,
    ProtocolCConfig, ProtocolError,
};
use trr_core::retrieval::{cosine_top_k, fused_top_k, text_top_k, EmbeddingIndex, FusionConfig, RankedResult, RetrievalError};
use trr_core::rng::derive_seed;
use trr_core::stats::StatsConfig;
use trr_core::synthetic::{texture_corpus, TextureConfig};
use trr_core::text_index::LexicalIndex;

use crate::args::*;
use crate::io::{self, CliError, CliResult};

/// Parsed global flags plus the resolved invocation echoed into outputs.
pub struct Ctx<'a> {
    pub seed: u64,
    pub out: &'a Path,
    pub run_config: Value,
}

impl Ctx<'_> {
    fn seed_for(&self, stream: &str) -> u64 {
        derive_seed(self.seed, stream)
    }
}

fn encoder_config(ctx: &Ctx<'_>, a: &EncoderArgs) -> CliResult<EncoderConfig> {
    Ok(EncoderConfig {
        projection_dim: a.dim,
        layers: a.layers.parse().map_err(CliError::input)?,
        projection: match a.projection_kind {
            ProjectionChoice::Random => ProjectionKind::FrozenRandom,
            ProjectionChoice::Pca => ProjectionKind::Pca,
        },
        projection_seed: ctx.seed_for("projection"),
        mean_pool_layer: a.mean_pool_layer,
    })
}

fn fusion_config(a: &FusionArgs) -> CliResult<FusionConfig> {
    let cfg = FusionConfig {
        w_text: a.w_text,
        w_audio: 1.0 - a.w_text,
        vague_threshold: a.vague_threshold,
        audio_norm_threshold: a.audio_norm_threshold,
    };
    cfg.validate().map_err(CliError::input)?;
    Ok(cfg)
}

fn parse_list<T: std::str::FromStr>(s: &str, sep: char, what: &str) -> CliResult<Vec<T>> {
    s.split(sep)
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| CliError::Input(format!("invalid {what} {p:?}"))))
        .collect()
}

fn protocol_a_config(ctx: &Ctx<'_>, split: SplitSpec, enc: &EncoderArgs, b: &BenchArgs) -> CliResult<ProtocolAConfig> {
    let mut cfg = ProtocolAConfig::new(split);
    cfg.methods = b
        .methods
        .split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(|m| m.parse::<Method>().map_err(CliError::Input))
        .collect::<CliResult<_>>()?;
    cfg.k = b.k;
    cfg.encoder = encoder_config(ctx, enc)?;
    cfg.stats = StatsConfig {
        level: b.level,
        bootstrap_resamples: b.bootstrap_resamples,
        permutation_resamples: b.permutation_resamples,
        max_exact_n: b.max_exact_n,
        tie_eps: b.tie_eps,
        seed: ctx.seed_for("stats"),
    };
    Ok(cfg)
}

struct Loaded {
    records: Vec<PresetRecord>,
    split: SplitSpec,
    features: BTreeMap<String, FeatureMapSet<f64>>,
    ranges: trr_core::knowledge_base::ParamRanges,
}

impl Loaded {
    fn read(d: &DataArgs) -> CliResult<Self> {
        Ok(Self {
            records: io::dataset(&d.dataset)?,
            split: io::split(&d.split)?,
            features: io::features(&d.features)?,
            ranges: io::ranges(&d.ranges)?,
        })
    }

    fn data(&self) -> EvalData<'_, f64> {
        EvalData {
            records: &self.records,
            features: &self.features,
            ranges: &self.ranges,
        }
    }
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct EmbeddingSource {
    dimension: usize,
    /// Mean-pooled layer; absent for TRR.
    #[serde(skip_serializing_if = "Option::is_none")]
    layer: Option<u16>,
    vectors: BTreeMap<String, Vec<f32>>,
}

#[derive(Serialize)]
struct EmbeddingStore {
    tool_version: &'static str,
    run_config: Value,
    sources: BTreeMap<String, EmbeddingSource>,
}

fn highest_common_layer<'a>(maps: impl IntoIterator<Item = &'a FeatureMapSet<f64>>) -> Option<u16> {
    let mut iter = maps.into_iter();
    let mut common: Vec<u16> = iter.next()?.layer_indices();
    for fm in iter {
        let have = fm.layer_indices();
        common.retain(|l| have.contains(l));
    }
    common.into_iter().max()
}

fn obtain_projection(
    path: Option<&Path>,
    enc: &EncoderConfig,
    kb_maps: Vec<&FeatureMapSet<f64>>,
) -> CliResult<ProjectionSpec<f64>> {
    if let Some(p) = path {
        let proj = read_projection_file::<f64>(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
        if proj.output_dim != enc.projection_dim {
            eprintln!(
                "note: projection file maps to {} dims; --dim {} ignored",
                proj.output_dim, enc.projection_dim
            );
        }
        return Ok(proj);
    }
    build_projection(enc, kb_maps)?.ok_or_else(|| CliError::input("no feature maps to build a projection from"))
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

pub fn encode(ctx: &Ctx<'_>, a: &EncodeArgs) -> CliResult {
    let features = io::features(&a.input)?;
    let enc = encoder_config(ctx, &a.encoder)?;
    let mut sources = BTreeMap::new();

    if matches!(a.method, EncodeMethod::Trr | EncodeMethod::Both) {
        let proj = obtain_projection(a.projection.as_deref(), &enc, features.values().collect())?;
        let vectors = features
            .par_iter()
            .map(|(id, fm)| {
                trr_encode(fm, &proj, &enc.layers)
                    .map(|e| (id.clone(), to_f32(&e.values)))
                    .map_err(CliError::input)
            })
            .collect::<CliResult<BTreeMap<_, _>>>()?;
        io::ensure_dir(ctx.out)?;
        let proj_path = ctx.out.join("projection.trrp");
        write_projection_file(&proj, &proj_path).map_err(CliError::internal)?;
        eprintln!("wrote {}", proj_path.display());
        let dimension = proj.output_dim * proj.output_dim;
        sources.insert("TRR".to_owned(), EmbeddingSource { dimension, layer: None, vectors });
    }

    if matches!(a.method, EncodeMethod::Meanpool | EncodeMethod::Both) {
        let layer = match enc.mean_pool_layer {
            Some(l) => l,
            None => highest_common_layer(features.values()).ok_or(ProtocolError::NoCommonLayer)?,
        };
        let vectors = features
            .par_iter()
            .map(|(id, fm)| {
                mean_pool_encode(fm, layer)
                    .map(|e| (id.clone(), to_f32(&e.values)))
                    .map_err(CliError::input)
            })
            .collect::<CliResult<BTreeMap<_, _>>>()?;
        let dimension = vectors.values().next().map_or(0, Vec::len);
        sources.insert("MeanPool".to_owned(), EmbeddingSource { dimension, layer: Some(layer), vectors });
    }

    let store = EmbeddingStore {
        tool_version: trr_core::VERSION,
        run_config: ctx.run_config.clone(),
        sources,
    };
    let path = ctx.out.join("embeddings.json");
    io::write_text(&path, &io::to_json(&store)?)?;
    for (name, s) in &store.sources {
        println!("{name}: {} embeddings of dimension {}", s.vectors.len(), s.dimension);
    }
    eprintln!("wrote {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------------

pub fn build_kb(ctx: &Ctx<'_>, a: &BuildKbArgs) -> CliResult {
    let records = io::dataset(&a.dataset)?;
    let mut summary = json!({ "records": records.len() });

    if let Some(dir) = &a.features {
        let features = io::features(dir)?;
        let missing: Vec<&str> = records
            .iter()
            .map(|r| r.record_id.as_str())
            .filter(|id| !features.contains_key(*id))
            .collect();
        let orphans: Vec<&str> = features
            .keys()
            .map(String::as_str)
            .filter(|id| !records.iter().any(|r| r.record_id == *id))
            .collect();
        println!("feature maps: {} ({} records without one, {} unmatched files)", features.len(), missing.len(), orphans.len());
        summary["records_without_features"] = json!(missing);
        summary["unmatched_feature_ids"] = json!(orphans);
    }

    if let Some(path) = &a.ranges {
        let ranges = io::ranges(path)?;
        let mut infeasible = BTreeMap::new();
        for r in &records {
            let flat = flatten::<f64>(&r.parameters).map_err(|e| CliError::Input(format!("{}: {e}", r.record_id)))?;
            let report = validate_feasible(&flat, &ranges, &[]);
            if !report.passed {
                infeasible.insert(r.record_id.clone(), report);
            }
        }
        println!("presets outside their ranges: {}", infeasible.len());
        summary["infeasible"] = serde_json::to_value(&infeasible).map_err(CliError::internal)?;
    }

    io::write_text(&ctx.out.join("kb.json"), &dataset_to_json(&records))?;
    io::write_report(&ctx.out.join("kb_summary.json"), &ctx.run_config, &summary)?;
    println!("records: {}", records.len());
    Ok(())
}

pub fn split(ctx: &Ctx<'_>, a: &SplitArgs) -> CliResult {
    let records = io::dataset(&a.dataset)?;
    let grouping = match a.grouping {
        GroupingChoice::ResolvedAudioPath => Grouping::ResolvedAudioPath,
        GroupingChoice::SongName => Grouping::SongName,
    };
    let split_spec = build_split(&records, grouping, a.test_fraction, ctx.seed_for("split")).map_err(CliError::input)?;
    let path = ctx.out.join("split.json");
    io::write_text(&path, &(split_spec.to_json_string() + "\n"))?;
    println!("test: {}  kb: {}", split_spec.test_ids.len(), split_spec.kb_ids.len());
    eprintln!("wrote {}", path.display());
    Ok(())
}

pub fn audit(ctx: &Ctx<'_>, a: &AuditArgs) -> CliResult {
    let records = io::dataset(&a.dataset)?;
    let split_spec = io::split(&a.split)?;
    let ranges = a.ranges.as_deref().map(io::ranges).transpose()?;
    let near = ranges.as_ref().zip(a.tau);
    let report = audit_split(&split_spec, &records, near).map_err(CliError::input)?;
    println!(
        "test: {}  kb: {}  overlapping ids: {}  shared paths: {}  shared songs: {}",
        report.test_count,
        report.kb_count,
        report.overlapping_ids.len(),
        report.shared_path_count,
        report.shared_song_count
    );
    if let (Some(tau), Some(n)) = (report.near_duplicate_tau, report.near_duplicate_pairs) {
        println!("cross-split pairs within tau={tau}: {n}");
    }
    println!("{}", if report.is_clean() { "clean" } else { "LEAKY" });
    io::write_report(&ctx.out.join("audit.json"), &ctx.run_config, &report)
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct QueryOutput<'a> {
    mode: &'static str,
    ranking: &'a RankedResult<f64>,
    top_parameters: Option<Value>,
    feasibility: Option<ValidationReport>,
}

pub fn query(ctx: &Ctx<'_>, a: &QueryArgs) -> CliResult {
    if a.text.is_none() && a.feature_file.is_none() {
        return Err(CliError::input("give at least one of --text and --feature-file"));
    }
    let records = io::dataset(&a.dataset)?;
    let ranges = a.ranges.as_deref().map(io::ranges).transpose()?;
    let text_index = LexicalIndex::build(&records).map_err(CliError::input)?;

    let audio = match &a.feature_file {
        None => None,
        Some(path) => {
            let features = io::features(&a.features)?;
            let enc = encoder_config(ctx, &a.encoder)?;
            let kb_maps: Vec<_> = records.iter().filter_map(|r| features.get(&r.record_id)).collect();
            let proj = obtain_projection(a.projection.as_deref(), &enc, kb_maps)?;
            let ids: Vec<&str> = records.iter().map(|r| r.record_id.as_str()).collect();
            let vectors = trr_embeddings(&ids, &features, &proj, &enc.layers)?;
            let index = EmbeddingIndex::from_entries("TRR", proj.output_dim * proj.output_dim, vectors.iter().map(|(id, v)| (id.as_str(), v.as_slice())))
                .map_err(CliError::input)?;
            let q = trr_encode(&io::feature_file(path)?, &proj, &enc.layers).map_err(CliError::input)?;
            Some((index, q.values))
        }
    };

    let (mode, ranked) = match (&a.text, &audio) {
        (Some(t), None) => ("text", text_top_k(&text_index, t, a.k)),
        (None, Some((index, q))) => ("audio", cosine_top_k(index, q, a.k)),
        (Some(t), Some((index, q))) => {
            let cfg = fusion_config(&a.fusion)?;
            ("fusion", fused_top_k(&text_index, index, Some(t), Some(q), &cfg, a.k))
        }
        (None, None) => unreachable!("checked above"),
    };
    let ranked = ranked.map_err(|e| match e {
        RetrievalError::BothModalitiesDegraded => CliError::Input(
            "both modalities are degraded: text confidence is below --vague-threshold and the audio embedding norm is below --audio-norm-threshold".into(),
        ),
        e => CliError::input(e),
    })?;

    println!("mode: {mode}");
    println!(
        "effective weights: text {:.3}  audio {:.3}",
        ranked.effective_weights.0, ranked.effective_weights.1
    );
    for (i, h) in ranked.hits.iter().enumerate() {
        println!("{:>3}. {:<24} {:.6}", i + 1, h.record_id, h.score);
    }

    let top = ranked.top().and_then(|h| records.iter().find(|r| r.record_id == h.record_id));
    let top_parameters = top.map(|r| r.parameters.to_json());
    let feasibility = match (top, &ranges) {
        (Some(r), Some(ranges)) => {
            let flat = flatten::<f64>(&r.parameters).map_err(CliError::input)?;
            Some(validate_feasible(&flat, ranges, &[]))
        }
        _ => None,
    };
    if let Some(p) = &top_parameters {
        println!("parameters of {}:", top.map_or("", |r| r.record_id.as_str()));
        println!("{}", serde_json::to_string_pretty(p).map_err(CliError::internal)?);
    }
    if let Some(v) = &feasibility {
        if v.passed {
            println!("feasibility: ok ({} keys without a range)", v.unchecked_keys.len());
        } else {
            println!("feasibility: {} out-of-range values", v.violations.len());
            for b in &v.violations {
                println!("  {} = {} not in [{}, {}]", b.key, b.value, b.min, b.max);
            }
        }
    }
    let output = QueryOutput {
        mode,
        ranking: &ranked,
        top_parameters,
        feasibility,
    };
    io::write_report(&ctx.out.join("query.json"), &ctx.run_config, &output)
}

// ---------------------------------------------------------------------------

fn print_pairs(pairs: &[PairReport]) {
    for p in pairs {
        println!("\n{} vs {} (n={})", p.method_a, p.method_b, p.n_common);
        for c in &p.comparisons {
            println!(
                "  {:<8} diff {:+.4}  CI [{:+.4}, {:+.4}]  p {:.4}  p_holm {:.4}  W/L/T {}/{}/{}",
                c.metric, c.mean_diff, c.ci_low, c.ci_high, c.p_perm, c.p_holm, c.wins, c.losses, c.ties
            );
        }
    }
}

pub fn eval(ctx: &Ctx<'_>, a: &EvalArgs) -> CliResult {
    let input = Loaded::read(&a.data)?;
    let cfg = protocol_a_config(ctx, input.split.clone(), &a.encoder, &a.bench)?;
    let report = run_protocol_a(&cfg, &input.data())?;
    print!("{}", render_table(&report.rows));
    print_pairs(&report.pairs);
    io::write_report(&ctx.out.join("eval.json"), &ctx.run_config, &report)
}

fn ablation_grid(a: &AblateArgs) -> CliResult<AblationGrid> {
    let Some(values) = a.values.as_deref() else {
        return Ok(match a.grid {
            GridKind::Dim => AblationGrid::default_projection_dims(),
            GridKind::Layers => AblationGrid::default_layer_sets(),
            GridKind::Type => AblationGrid::default_projection_types(),
        });
    };
    Ok(match a.grid {
        GridKind::Dim => AblationGrid::ProjectionDim(parse_list(values, ';', "dimension")?),
        GridKind::Layers => AblationGrid::LayerSet(
            values
                .split(';')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.parse::<LayerSet>())
                .collect::<Result<_, EncodeError>>()
                .map_err(CliError::input)?,
        ),
        GridKind::Type => AblationGrid::ProjectionType(
            values
                .split(';')
                .filter(|s| !s.trim().is_empty())
                .map(|s| match s.trim().to_ascii_lowercase().as_str() {
                    "random" => Ok(ProjectionKind::FrozenRandom),
                    "pca" => Ok(ProjectionKind::Pca),
                    other => Err(CliError::Input(format!("unknown projection type {other:?}; expected random or pca"))),
                })
                .collect::<CliResult<_>>()?,
        ),
    })
}

pub fn ablate(ctx: &Ctx<'_>, a: &AblateArgs) -> CliResult {
    let input = Loaded::read(&a.data)?;
    let cfg = protocol_a_config(ctx, input.split.clone(), &a.encoder, &a.bench)?;
    let grid = ablation_grid(a)?;
    let report = run_ablation(&grid, &cfg, &input.data())?;
    let rows: Vec<MethodRow> = report
        .points
        .iter()
        .map(|p| MethodRow {
            label: p.label.clone(),
            ..p.row.clone()
        })
        .collect();
    print!("{}", render_table(&rows));
    io::write_report(&ctx.out.join("ablation.json"), &ctx.run_config, &report)
}

pub fn dedup_sweep(ctx: &Ctx<'_>, a: &DedupArgs) -> CliResult {
    let input = Loaded::read(&a.data)?;
    let cfg = protocol_a_config(ctx, input.split.clone(), &a.encoder, &a.bench)?;
    let taus: Vec<f64> = parse_list(&a.taus, ',', "threshold")?;
    let report = run_dedup_sweep(&taus, &cfg, &input.data())?;
    for p in &report.points {
        match p.tau {
            None => println!("baseline  kb={}", p.kb_size),
            Some(t) => println!("tau={t}  kb={}", p.kb_size),
        }
        print!("{}", render_table(&p.rows));
        println!();
    }
    io::write_report(&ctx.out.join("dedup_sweep.json"), &ctx.run_config, &report)
}

pub fn degrade(ctx: &Ctx<'_>, a: &DegradeArgs) -> CliResult {
    let input = Loaded::read(&a.data)?;
    let mut cfg = ProtocolCConfig::new(input.split.clone());
    cfg.encoder = encoder_config(ctx, &a.encoder)?;
    cfg.fusion = fusion_config(&a.fusion)?;
    cfg.k = a.k;
    let scenario = match a.scenario {
        ScenarioKind::Vague => DegradationScenario::VagueText { text: a.vague_text.clone() },
        ScenarioKind::Noisy => DegradationScenario::NoisyAudio {
            sigma: a.sigma,
            seed: ctx.seed_for("noise"),
            fused_query_scale: a.fused_query_scale,
        },
        ScenarioKind::Conflict => DegradationScenario::Conflict { seed: ctx.seed_for("conflict") },
    };
    let report = run_protocol_c(&scenario, &cfg, &input.data())?;
    print!("{}", render_table(&report.rows));
    match report.mean_effective_weights {
        Some((t, au)) => println!("mean effective weights: text {t:.3}  audio {au:.3}"),
        None => println!("mean effective weights: none (both modalities degraded)"),
    }
    println!(
        "queries: {}  fusion = audio ranking: {}  fusion = text ranking: {}  fusion errors: {}",
        report.query_count, report.fusion_matches_audio, report.fusion_matches_text, report.fusion_errors
    );
    if let Some(f) = report.failure_mode {
        println!("fusion worse than the better single modality: {f}");
    }
    io::write_report(&ctx.out.join("degradation.json"), &ctx.run_config, &report)
}

pub fn profile(ctx: &Ctx<'_>, a: &ProfileArgs) -> CliResult {
    let input = Loaded::read(&a.data)?;
    let enc = encoder_config(ctx, &a.encoder)?;
    let fusion = fusion_config(&a.fusion)?;
    let by_id: BTreeMap<&str, &PresetRecord> = input.records.iter().map(|r| (r.record_id.as_str(), r)).collect();
    let pick = |ids: &[String]| -> CliResult<Vec<&PresetRecord>> {
        ids.iter()
            .map(|id| by_id.get(id.as_str()).copied().ok_or_else(|| CliError::Input(format!("split id {id:?} is not in the dataset"))))
            .collect()
    };
    let kb = pick(&input.split.kb_ids)?;
    let test = pick(&input.split.test_ids)?;

    let kb_maps: Vec<_> = kb.iter().filter_map(|r| input.features.get(&r.record_id)).collect();
    let proj = obtain_projection(None, &enc, kb_maps)?;
    let kb_ids: Vec<&str> = kb.iter().map(|r| r.record_id.as_str()).collect();
    let vectors = trr_embeddings(&kb_ids, &input.features, &proj, &enc.layers)?;
    let audio_index = EmbeddingIndex::from_entries(
        "TRR",
        proj.output_dim * proj.output_dim,
        vectors.iter().map(|(id, v)| (id.as_str(), v.as_slice())),
    )
    .map_err(CliError::input)?;
    let kb_records: Vec<PresetRecord> = kb.iter().map(|r| (*r).clone()).collect();
    let text_index = LexicalIndex::build(&kb_records).map_err(CliError::input)?;

    let queries: Vec<LatencyQuery<'_, f64>> = test
        .iter()
        .filter_map(|r| {
            input.features.get(&r.record_id).map(|fm| LatencyQuery {
                id: r.record_id.clone(),
                text: r.query_text(),
                features: fm,
            })
        })
        .collect();
    let lctx = LatencyContext {
        text_index: &text_index,
        audio_index: &audio_index,
        projection: &proj,
        layers: &enc.layers,
        fusion,
        k: a.k,
    };
    let mut clock: Box<dyn Clock> = match a.fake_clock_ms {
        Some(ms) if ms.is_finite() && ms > 0.0 => Box::new(FakeClock::new((ms * 1e6).round() as u64)),
        Some(ms) => return Err(CliError::Input(format!("--fake-clock-ms must be positive, got {ms}"))),
        None => Box::new(MonotonicClock::new()),
    };
    let report = run_latency_profile(&queries, &lctx, a.warmups, a.repeats, clock.as_mut())?;
    print!("{}", render_latency(&report));
    io::write_report(&ctx.out.join("profile.json"), &ctx.run_config, &report)
}

// ---------------------------------------------------------------------------

pub fn synth(ctx: &Ctx<'_>, a: &SynthArgs) -> CliResult {
    if a.items < 4 {
        return Err(CliError::input("--items must be at least 4"));
    }
    if a.frames < 2 || a.frames % 2 != 0 {
        return Err(CliError::input("--frames must be even and at least 2"));
    }
    let cfg = TextureConfig {
        frames: a.frames,
        ..TextureConfig::default()
    };
    let corpus = texture_corpus(a.items, &cfg, ctx.seed_for("synth"));
    let feat_dir = ctx.out.join("features");
    io::ensure_dir(&feat_dir)?;
    corpus
        .features
        .par_iter()
        .map(|(id, fm)| write_feature_file(&fm.cast::<f32>(), feat_dir.join(format!("{id}.trrf"))).map_err(CliError::internal))
        .collect::<CliResult<Vec<()>>>()?;
    io::write_text(&ctx.out.join("dataset.json"), &dataset_to_json(&corpus.records))?;
    io::write_text(&ctx.out.join("ranges.json"), &io::to_json(&corpus.ranges.to_json())?)?;
    println!(
        "wrote {} records, {} feature files and ranges to {}",
        corpus.records.len(),
        corpus.features.len(),
        ctx.out.display()
    );
    Ok(())
}
