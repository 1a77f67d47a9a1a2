//! Seeded synthetic corpora.
//!
//! Texture corpora hold two classes of feature maps with the same per-channel
//! mean but different cross-channel correlation: every frame is
//! `mu + z * v_class + noise`, and frames come in antithetic pairs (the second
//! frame of a pair negates the deviation of the first) so the per-channel mean
//! is exactly `mu` for every item. `v_class` is `+a` on the first half of the
//! channels and `+a` (co-varying) or `-a` (anti-varying) on the second half.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::feature_io::{FeatureMapSet, LayerFeatures};
use crate::knowledge_base::{ParamRange, ParamRanges, ParamTree, ParamValue, PresetRecord};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TextureClass {
    CoVarying,
    AntiVarying,
}

impl TextureClass {
    pub fn of_index(i: usize) -> Self {
        if i % 2 == 0 {
            TextureClass::CoVarying
        } else {
            TextureClass::AntiVarying
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureConfig {
    /// Even; frames come in antithetic pairs.
    pub frames: usize,
    pub channels: usize,
    pub layers: Vec<u16>,
    /// Amplitude `a` of the shared latent on each channel.
    pub amplitude: f64,
    /// Standard deviation of the per-channel independent noise.
    pub noise: f64,
}

impl Default for TextureConfig {
    fn default() -> Self {
        Self {
            frames: 32,
            channels: 48,
            layers: vec![4, 5, 6, 11],
            amplitude: 1.0,
            noise: 0.3,
        }
    }
}

/// Shared per-channel mean of every texture map for a given channel count.
pub fn texture_channel_mean(channels: usize) -> Vec<f64> {
    let mut gen = rng::seeded(rng::derive_seed(channels as u64, "texture-mean"));
    (0..channels).map(|_| 0.5 + rng::unit_f64(&mut gen)).collect()
}

/// One feature map of the given class.
pub fn texture_feature_map(
    item_id: &str,
    class: TextureClass,
    cfg: &TextureConfig,
    gen: &mut Rng,
) -> FeatureMapSet<f64> {
    assert!(cfg.frames >= 2 && cfg.frames % 2 == 0, "frames must be even and positive");
    assert!(cfg.channels >= 2, "need at least two channels");
    let c = cfg.channels;
    let mu = texture_channel_mean(c);
    let half = c / 2;
    let direction: Vec<f64> = (0..c)
        .map(|ch| match (class, ch < half) {
            (_, true) | (TextureClass::CoVarying, false) => cfg.amplitude,
            (TextureClass::AntiVarying, false) => -cfg.amplitude,
        })
        .collect();
    let layers = cfg
        .layers
        .iter()
        .map(|&l| {
            let mut values = Vec::with_capacity(cfg.frames * c);
            for _ in 0..cfg.frames / 2 {
                let z = rng::standard_normal(gen);
                let dev: Vec<f64> = direction
                    .iter()
                    .map(|&v| z * v + cfg.noise * rng::standard_normal(gen))
                    .collect();
                values.extend(mu.iter().zip(&dev).map(|(m, d)| m + d));
                values.extend(mu.iter().zip(&dev).map(|(m, d)| m - d));
            }
            LayerFeatures::new(l, cfg.frames, c, values)
        })
        .collect();
    FeatureMapSet::new(item_id, layers).expect("generated maps are well formed")
}

/// Records, feature maps and ranges of a labelled texture corpus.
#[derive(Debug, Clone)]
pub struct TextureCorpus {
    pub records: Vec<PresetRecord>,
    pub features: BTreeMap<String, FeatureMapSet<f64>>,
    pub classes: BTreeMap<String, TextureClass>,
    pub ranges: ParamRanges,
}

impl TextureCorpus {
    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.record_id.clone()).collect()
    }
}

fn jitter(gen: &mut Rng, width: f64) -> f64 {
    width * (2.0 * rng::unit_f64(gen) - 1.0)
}

/// Preset parameters typical of one class: a compressor and reverb chain for
/// co-varying textures, drive and delay for anti-varying ones.
pub fn class_parameters(class: TextureClass, gen: &mut Rng) -> ParamTree {
    let module = |params: Vec<(&str, f64)>| {
        ParamValue::Tree(
            params
                .into_iter()
                .fold(ParamTree::new(), |t, (k, v)| t.with(k, ParamValue::Number(v))),
        )
    };
    match class {
        TextureClass::CoVarying => ParamTree::new()
            .with(
                "CompressorOn",
                module(vec![("Threshold", -20.0 + jitter(gen, 1.0)), ("Ratio", 4.0 + jitter(gen, 0.5))]),
            )
            .with("ReverbOn", module(vec![("Mix", 0.3 + jitter(gen, 0.05))])),
        TextureClass::AntiVarying => ParamTree::new()
            .with(
                "DistortionOn",
                module(vec![("Drive", 7.0 + jitter(gen, 0.5)), ("Level", 0.6 + jitter(gen, 0.05))]),
            )
            .with(
                "DelayOn",
                module(vec![("Feedback", 0.4 + jitter(gen, 0.05)), ("Mix", 0.25 + jitter(gen, 0.05))]),
            ),
    }
}

/// Ranges covering [`class_parameters`].
pub fn class_ranges() -> ParamRanges {
    let r = |min, max| ParamRange { min, max };
    let ranges = [
        ("CompressorOn.Threshold", r(-60.0, 0.0)),
        ("CompressorOn.Ratio", r(1.0, 20.0)),
        ("ReverbOn.Mix", r(0.0, 1.0)),
        ("DistortionOn.Drive", r(0.0, 10.0)),
        ("DistortionOn.Level", r(0.0, 1.0)),
        ("DelayOn.Feedback", r(0.0, 1.0)),
        ("DelayOn.Mix", r(0.0, 1.0)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v))
    .collect();
    ParamRanges::new(ranges, None).expect("static ranges are valid")
}

/// `items` records alternating between the two classes, ids `tex0000`, ...
///
/// Each record has its own resolved path and a text description made of a
/// class word plus a token unique to the record.
pub fn texture_corpus(items: usize, cfg: &TextureConfig, seed: u64) -> TextureCorpus {
    let mut feat_rng = rng::seeded(rng::derive_seed(seed, "texture-features"));
    let mut param_rng = rng::seeded(rng::derive_seed(seed, "texture-params"));
    let mut records = Vec::with_capacity(items);
    let mut features = BTreeMap::new();
    let mut classes = BTreeMap::new();
    for i in 0..items {
        let class = TextureClass::of_index(i);
        let id = format!("tex{i:04}");
        let (style, word) = match class {
            TextureClass::CoVarying => ("Ambient", "glassy"),
            TextureClass::AntiVarying => ("Metal", "gritty"),
        };
        records.push(PresetRecord {
            record_id: id.clone(),
            song_name: format!("song{i:04}"),
            style: style.to_owned(),
            feature_text: format!("{word} take{i:04}"),
            parameters: class_parameters(class, &mut param_rng),
            resolved_audio_path: format!("audio/{id}.wav"),
            cached_vectors: BTreeMap::new(),
        });
        features.insert(id.clone(), texture_feature_map(&id, class, cfg, &mut feat_rng));
        classes.insert(id, class);
    }
    TextureCorpus {
        records,
        features,
        classes,
        ranges: class_ranges(),
    }
}

const MODULES: [(&str, [&str; 2]); 5] = [
    ("Amp", ["Gain", "Bass"]),
    ("Drive", ["Drive", "Tone"]),
    ("Chorus", ["Rate", "Depth"]),
    ("Delay", ["Time", "Feedback"]),
    ("Reverb", ["Decay", "Mix"]),
];

/// Ranges covering [`grouped_corpus`] parameters: every leaf in `[0, 10]`.
pub fn grouped_ranges() -> ParamRanges {
    ParamRanges::new(BTreeMap::new(), Some(ParamRange { min: 0.0, max: 10.0 })).expect("valid default range")
}

fn random_parameters(gen: &mut Rng) -> ParamTree {
    let first_on = (rng::unit_f64(gen) * MODULES.len() as f64) as usize;
    let mut tree = ParamTree::new();
    for (m, (module, params)) in MODULES.iter().enumerate() {
        if m != first_on && rng::unit_f64(gen) < 0.5 {
            continue;
        }
        let mut sub = ParamTree::new();
        for p in params {
            sub = sub.with(p, ParamValue::Number((rng::unit_f64(gen) * 100.0).round() / 10.0));
        }
        tree = tree.with(&format!("{module}On"), ParamValue::Tree(sub));
    }
    tree
}

/// `n` records where 1 to 4 records share a resolved audio path and 1 to 3
/// paths share a song name.
pub fn grouped_corpus(n: usize, seed: u64) -> Vec<PresetRecord> {
    let mut gen = rng::seeded(seed);
    let mut records = Vec::with_capacity(n);
    let (mut song, mut path) = (0usize, 0usize);
    let mut paths_left_in_song = 0usize;
    while records.len() < n {
        if paths_left_in_song == 0 {
            song += 1;
            paths_left_in_song = 1 + (rng::unit_f64(&mut gen) * 3.0) as usize;
        }
        paths_left_in_song -= 1;
        path += 1;
        let group = 1 + (rng::unit_f64(&mut gen) * 4.0) as usize;
        for _ in 0..group.min(n - records.len()) {
            let i = records.len();
            records.push(PresetRecord {
                record_id: format!("r{i:05}"),
                song_name: format!("Song {song}"),
                style: ["Blues", "Rock", "Jazz", "Metal"][song % 4].to_owned(),
                feature_text: format!("preset {i}"),
                parameters: random_parameters(&mut gen),
                resolved_audio_path: format!("audio/s{song}/p{path}.wav"),
                cached_vectors: BTreeMap::new(),
            });
        }
    }
    records
}
