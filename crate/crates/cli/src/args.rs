use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Parser, Serialize)]
#[command(name = "trr", version, about = "Texture-aware preset retrieval harness")]
pub struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for encoding and evaluation (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// JSON object of flag values; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for reports and artifacts.
    #[arg(long, global = true, default_value = "trr-out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Encode a directory of .trrf feature files into an embedding store.
    Encode(EncodeArgs),
    /// Validate a dataset and write its normalized form.
    BuildKb(BuildKbArgs),
    /// Build a grouped held-out split.
    Split(SplitArgs),
    /// Count cross-split leakage in a split.
    AuditSplit(AuditArgs),
    /// Retrieve presets for a text and/or audio query.
    Query(QueryArgs),
    /// Run the retrieval benchmark with paired statistics.
    Eval(EvalArgs),
    /// Sweep one encoder setting.
    Ablate(AblateArgs),
    /// Re-run the benchmark after near-duplicate removal at each threshold.
    DedupSweep(DedupArgs),
    /// Run a fusion degradation scenario.
    Degrade(DegradeArgs),
    /// Time the local query pipeline.
    Profile(ProfileArgs),
    /// Write a synthetic texture corpus (dataset, ranges, feature files).
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionChoice {
    Random,
    Pca,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodeMethod {
    Trr,
    Meanpool,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupingChoice {
    ResolvedAudioPath,
    SongName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Dim,
    Layers,
    Type,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Vague,
    Noisy,
    Conflict,
}

#[derive(Debug, Args, Serialize)]
pub struct EncoderArgs {
    /// Projection output dimension D; embeddings have D*D entries.
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// Comma-separated layer indices averaged by TRR.
    #[arg(long, default_value = "4,5,6")]
    pub layers: String,
    #[arg(long, value_enum, default_value_t = ProjectionChoice::Random)]
    pub projection_kind: ProjectionChoice,
    /// Layer used by mean pooling (default: highest layer shared by all maps).
    #[arg(long)]
    pub mean_pool_layer: Option<u16>,
}

#[derive(Debug, Args, Serialize)]
pub struct EncodeArgs {
    /// Directory of .trrf files, or a single file.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Existing .trrp projection; otherwise one is created and saved.
    #[arg(long)]
    pub projection: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = EncodeMethod::Trr)]
    pub method: EncodeMethod,
    #[command(flatten)]
    pub encoder: EncoderArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildKbArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Feature directory; records without a feature file are reported.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Ranges file; presets outside their ranges are reported.
    #[arg(long)]
    pub ranges: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = GroupingChoice::ResolvedAudioPath)]
    pub grouping: GroupingChoice,
    #[arg(long, default_value_t = trr_core::knowledge_base::DEFAULT_TEST_FRACTION)]
    pub test_fraction: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct AuditArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// Ranges file, required with --tau.
    #[arg(long, requires = "tau")]
    pub ranges: Option<PathBuf>,
    /// Count cross-split pairs within this normalized parameter distance.
    #[arg(long, requires = "ranges")]
    pub tau: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct FusionArgs {
    /// Text weight; the audio weight is 1 - w_text.
    #[arg(long, default_value_t = 0.5)]
    pub w_text: f64,
    #[arg(long, default_value_t = trr_core::retrieval::DEFAULT_VAGUE_THRESHOLD)]
    pub vague_threshold: f64,
    #[arg(long, default_value_t = trr_core::retrieval::DEFAULT_AUDIO_NORM_THRESHOLD)]
    pub audio_norm_threshold: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct QueryArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Feature directory for the knowledge base.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub text: Option<String>,
    /// Query audio as a .trrf file.
    #[arg(long)]
    pub feature_file: Option<PathBuf>,
    #[arg(long)]
    pub ranges: Option<PathBuf>,
    #[arg(long)]
    pub projection: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    pub fusion: FusionArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub ranges: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    /// Comma-separated methods: trr, meanpool, text, cached:<name>.
    #[arg(long, default_value = "trr,meanpool,text")]
    pub methods: String,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 10_000)]
    pub bootstrap_resamples: usize,
    #[arg(long, default_value_t = 100_000)]
    pub permutation_resamples: usize,
    #[arg(long, default_value_t = 20)]
    pub max_exact_n: usize,
    #[arg(long, default_value_t = 0.0)]
    pub tie_eps: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    pub bench: BenchArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    pub bench: BenchArgs,
    #[arg(long, value_enum)]
    pub grid: GridKind,
    /// Grid points separated by ';' (e.g. "32;64", "4;5,6", "random;pca").
    /// Defaults to the standard grid for the kind.
    #[arg(long)]
    pub values: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct DedupArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    pub bench: BenchArgs,
    /// Ascending comma-separated thresholds.
    #[arg(long, default_value = "0.005,0.01,0.02,0.05")]
    pub taus: String,
}

#[derive(Debug, Args, Serialize)]
pub struct DegradeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[arg(long, value_enum)]
    pub scenario: ScenarioKind,
    /// Replacement text for the vague scenario.
    #[arg(long, default_value = trr_core::protocols::VAGUE_QUERY)]
    pub vague_text: String,
    /// Noise standard deviation for the noisy scenario.
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    /// Scale of the noisy query vector handed to fusion; values below the
    /// audio-norm threshold fire the audio gate.
    #[arg(long, default_value_t = 0.0)]
    pub fused_query_scale: f64,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[arg(long, default_value_t = trr_core::protocols::DEFAULT_WARMUPS)]
    pub warmups: usize,
    #[arg(long, default_value_t = trr_core::protocols::DEFAULT_REPEATS)]
    pub repeats: usize,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Replace the monotonic clock with one that advances this many
    /// milliseconds per reading.
    #[arg(long)]
    pub fake_clock_ms: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 120)]
    pub items: usize,
    #[arg(long, default_value_t = 32)]
    pub frames: usize,
}

const VALUE_GLOBALS: [&str; 4] = ["--seed", "--jobs", "--config", "--out"];

fn explicit(args: &[OsString], flag: &str) -> bool {
    args.iter().any(|a| {
        a.to_str()
            .is_some_and(|s| s == flag || s.strip_prefix(flag).is_some_and(|rest| rest.starts_with('=')))
    })
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_str()?;
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn subcommand_position(args: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_str()?;
        if VALUE_GLOBALS.contains(&s) {
            i += 2;
        } else if s.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

fn flag_values(key: &str, value: &Value) -> Result<Vec<String>, String> {
    let flag = format!("--{}", key.replace('_', "-"));
    let scalar = |v: &Value| match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(format!("config key {key:?}: unsupported value {v}")),
    };
    match value {
        Value::Bool(true) => Ok(vec![flag]),
        Value::Bool(false) | Value::Null => Ok(vec![]),
        Value::Array(items) => {
            let parts = items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?;
            Ok(vec![flag, parts.join(",")])
        }
        v => Ok(vec![flag, scalar(v)?]),
    }
}

/// Splices `--config` values into the argument list right after the
/// subcommand name, skipping keys also given explicitly.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let json: Value = serde_json::from_str(&text).map_err(|e| format!("config {} is not valid JSON: {e}", path.display()))?;
    let Value::Object(map) = json else {
        return Err(format!("config {} must be a JSON object", path.display()));
    };
    let mut injected: Vec<OsString> = Vec::new();
    let mut keys: Vec<&String> = map.keys().collect();
    keys.sort();
    for key in keys {
        let value = &map[key];
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" || explicit(&args, &flag) {
            continue;
        }
        injected.extend(flag_values(key, value)?.into_iter().map(OsString::from));
    }
    let at = subcommand_position(&args).map_or(args.len(), |i| i + 1);
    let mut out = args[..at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[at..]);
    Ok(out)
}
