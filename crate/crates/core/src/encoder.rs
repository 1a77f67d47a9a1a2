//! Texture (averaged Gram) embeddings and the mean-pooled baseline.
//!
//! A projection `P` is stored as a `output_dim x input_dim` row-major matrix,
//! one row per output dimension, and is applied to a frame-major layer as
//! `H * P^T`. For every selected layer the projected frames give a Gram matrix
//! `G = H^T H / T`; the layer Grams are averaged, vectorized row-major and
//! scaled to unit Euclidean norm.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature_io::{FeatureMapSet, LayerFeatures};
use crate::rng;
use crate::scalar::{dot, l2_norm, Scalar};

pub const DEFAULT_PROJECTION_DIM: usize = 32;
pub const DEFAULT_LAYERS: [u16; 3] = [4, 5, 6];

pub const PROJECTION_MAGIC: &[u8; 4] = b"TRRP";
pub const PROJECTION_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("item {item_id:?} has no layer {layer}")]
    MissingLayer { item_id: String, layer: u16 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("item {item_id:?} has an all-zero Gram matrix")]
    ZeroGram { item_id: String },
    #[error("item {item_id:?} has an all-zero mean activation in layer {layer}")]
    ZeroMean { item_id: String, layer: u16 },
    #[error("invalid projection dimensions {input_dim} -> {output_dim}")]
    InvalidDimension { input_dim: usize, output_dim: usize },
    #[error("PCA needs at least {required} frames, got {available}")]
    InsufficientFrames { available: usize, required: usize },
    #[error("layer set is empty")]
    EmptyLayerSet,
    #[error("invalid layer list {0:?}")]
    InvalidLayerList(String),
    #[error("malformed projection file: {0}")]
    MalformedProjection(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sorted, duplicate-free set of backbone layer indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u16>", into = "Vec<u16>")]
pub struct LayerSet(Vec<u16>);

impl LayerSet {
    pub fn new(layers: impl IntoIterator<Item = u16>) -> Result<Self, EncodeError> {
        let set: BTreeSet<u16> = layers.into_iter().collect();
        if set.is_empty() {
            return Err(EncodeError::EmptyLayerSet);
        }
        Ok(Self(set.into_iter().collect()))
    }

    pub fn as_slice(&self) -> &[u16] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The six combinations of the default mid-level layers used by the
    /// layer-set ablation.
    pub fn ablation_grid() -> Vec<LayerSet> {
        [&[4][..], &[5], &[6], &[4, 5], &[5, 6], &[4, 5, 6]]
            .iter()
            .map(|l| LayerSet(l.to_vec()))
            .collect()
    }
}

impl Default for LayerSet {
    fn default() -> Self {
        Self(DEFAULT_LAYERS.to_vec())
    }
}

impl TryFrom<Vec<u16>> for LayerSet {
    type Error = EncodeError;
    fn try_from(v: Vec<u16>) -> Result<Self, Self::Error> {
        LayerSet::new(v)
    }
}

impl From<LayerSet> for Vec<u16> {
    fn from(s: LayerSet) -> Self {
        s.0
    }
}

impl FromStr for LayerSet {
    type Err = EncodeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let layers = s
            .split(|c: char| c == ',' || c == '+' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .map(|p| p.parse::<u16>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| EncodeError::InvalidLayerList(s.to_owned()))?;
        LayerSet::new(layers)
    }
}

impl fmt::Display for LayerSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u16::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjectionKind {
    FrozenRandom,
    Pca,
}

impl ProjectionKind {
    fn code(self) -> u8 {
        match self {
            ProjectionKind::FrozenRandom => 0,
            ProjectionKind::Pca => 1,
        }
    }
}

/// Linear map `R^input_dim -> R^output_dim`, stored one row per output dim.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSpec<T> {
    pub kind: ProjectionKind,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Generator seed for `FrozenRandom`; zero for PCA.
    pub seed: u64,
    pub matrix: Vec<T>,
}

impl<T: Scalar> ProjectionSpec<T> {
    #[inline]
    pub fn row(&self, d: usize) -> &[T] {
        &self.matrix[d * self.input_dim..(d + 1) * self.input_dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.matrix.chunks_exact(self.input_dim)
    }
}

/// Xavier/Glorot-uniform projection, a pure function of its arguments.
///
/// Entries are filled row by row; each is `a * (2u - 1)` with
/// `a = sqrt(6 / (input_dim + output_dim))` and `u` drawn by [`rng::unit_f64`]
/// from xoshiro256++ seeded with `seed`.
pub fn make_random_projection<T: Scalar>(
    input_dim: usize,
    output_dim: usize,
    seed: u64,
) -> Result<ProjectionSpec<T>, EncodeError> {
    if input_dim == 0 || output_dim == 0 {
        return Err(EncodeError::InvalidDimension {
            input_dim,
            output_dim,
        });
    }
    let bound = (6.0 / (input_dim + output_dim) as f64).sqrt();
    let mut gen = rng::seeded(seed);
    let matrix = (0..input_dim * output_dim)
        .map(|_| T::of(bound * (2.0 * rng::unit_f64(&mut gen) - 1.0)))
        .collect();
    Ok(ProjectionSpec {
        kind: ProjectionKind::FrozenRandom,
        input_dim,
        output_dim,
        seed,
        matrix,
    })
}

/// Top-`output_dim` principal directions of the mean-centred frames pooled
/// from `layers` of every map, ordered by descending eigenvalue. Each row's
/// largest-magnitude component is made positive.
pub fn fit_pca_projection<'a, T: Scalar>(
    feature_maps: impl IntoIterator<Item = &'a FeatureMapSet<T>>,
    layers: &LayerSet,
    output_dim: usize,
) -> Result<ProjectionSpec<T>, EncodeError> {
    let mut frames: Vec<&[T]> = Vec::new();
    let mut channels: Option<usize> = None;
    for fm in feature_maps {
        for &l in layers.as_slice() {
            let layer = fm.layer(l).ok_or_else(|| EncodeError::MissingLayer {
                item_id: fm.item_id.clone(),
                layer: l,
            })?;
            match channels {
                None => channels = Some(layer.channels),
                Some(c) if c != layer.channels => {
                    return Err(EncodeError::DimensionMismatch {
                        expected: c,
                        found: layer.channels,
                    })
                }
                _ => {}
            }
            frames.extend(layer.frames_iter());
        }
    }
    let c = channels.unwrap_or(0);
    if output_dim == 0 || c == 0 || output_dim > c {
        return Err(EncodeError::InvalidDimension {
            input_dim: c,
            output_dim,
        });
    }
    if frames.len() < output_dim {
        return Err(EncodeError::InsufficientFrames {
            available: frames.len(),
            required: output_dim,
        });
    }

    let n = frames.len();
    let mut mean = vec![0.0f64; c];
    for f in &frames {
        for (m, v) in mean.iter_mut().zip(f.iter()) {
            *m += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(c, c);
    let mut centred = vec![0.0f64; c];
    for f in &frames {
        for (x, (v, m)) in centred.iter_mut().zip(f.iter().zip(&mean)) {
            *x = v.as_f64() - m;
        }
        for i in 0..c {
            let xi = centred[i];
            if xi == 0.0 {
                continue;
            }
            for j in i..c {
                cov[(i, j)] += xi * centred[j];
            }
        }
    }
    let denom = (n.max(2) - 1) as f64;
    for i in 0..c {
        for j in i..c {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut matrix = Vec::with_capacity(output_dim * c);
    for &col in order.iter().take(output_dim) {
        let v = eig.eigenvectors.column(col);
        let pivot = (0..c)
            .max_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap().then(b.cmp(&a)))
            .unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        let norm = v.norm();
        matrix.extend((0..c).map(|i| T::of(sign * v[i] / norm)));
    }
    Ok(ProjectionSpec {
        kind: ProjectionKind::Pca,
        input_dim: c,
        output_dim,
        seed: 0,
        matrix,
    })
}

/// Serializes a projection to the `.trrp` sidecar format:
/// `"TRRP"`, version u16, kind u8, input_dim u32, output_dim u32, seed u64,
/// then the row-major matrix as little-endian f32.
pub fn encode_projection<T: Scalar>(proj: &ProjectionSpec<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(23 + 4 * proj.matrix.len());
    out.extend_from_slice(PROJECTION_MAGIC);
    out.extend_from_slice(&PROJECTION_VERSION.to_le_bytes());
    out.push(proj.kind.code());
    out.extend_from_slice(&(proj.input_dim as u32).to_le_bytes());
    out.extend_from_slice(&(proj.output_dim as u32).to_le_bytes());
    out.extend_from_slice(&proj.seed.to_le_bytes());
    for v in &proj.matrix {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    out
}

pub fn decode_projection<T: Scalar>(bytes: &[u8]) -> Result<ProjectionSpec<T>, EncodeError> {
    let bad = |m: &str| EncodeError::MalformedProjection(m.to_owned());
    if bytes.len() < 23 {
        return Err(bad("header truncated"));
    }
    if &bytes[0..4] != PROJECTION_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != PROJECTION_VERSION {
        return Err(EncodeError::MalformedProjection(format!("unsupported version {version}")));
    }
    let kind = match bytes[6] {
        0 => ProjectionKind::FrozenRandom,
        1 => ProjectionKind::Pca,
        k => return Err(EncodeError::MalformedProjection(format!("unknown kind {k}"))),
    };
    let input_dim = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    let output_dim = u32::from_le_bytes(bytes[11..15].try_into().unwrap()) as usize;
    let seed = u64::from_le_bytes(bytes[15..23].try_into().unwrap());
    if input_dim == 0 || output_dim == 0 {
        return Err(EncodeError::InvalidDimension {
            input_dim,
            output_dim,
        });
    }
    let expected = input_dim
        .checked_mul(output_dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| bad("matrix size overflows"))?;
    let payload = &bytes[23..];
    if payload.len() != expected {
        return Err(EncodeError::MalformedProjection(format!(
            "matrix payload is {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let mut matrix = Vec::with_capacity(input_dim * output_dim);
    for chunk in payload.chunks_exact(4) {
        let x = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !x.is_finite() {
            return Err(bad("non-finite matrix entry"));
        }
        matrix.push(T::of(x as f64));
    }
    Ok(ProjectionSpec {
        kind,
        input_dim,
        output_dim,
        seed,
        matrix,
    })
}

pub fn read_projection_file<T: Scalar>(path: impl AsRef<Path>) -> Result<ProjectionSpec<T>, EncodeError> {
    decode_projection(&fs::read(path)?)
}

pub fn write_projection_file<T: Scalar>(proj: &ProjectionSpec<T>, path: impl AsRef<Path>) -> Result<(), EncodeError> {
    fs::write(path, encode_projection(proj))?;
    Ok(())
}

/// Unit-norm `vec(mean Gram)` of length `dim * dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureEmbedding<T> {
    pub values: Vec<T>,
    pub dim: usize,
    pub source_layers: LayerSet,
}

impl<T: Scalar> TextureEmbedding<T> {
    /// Entry `(i, j)` of the normalized Gram matrix.
    pub fn gram(&self, i: usize, j: usize) -> T {
        self.values[i * self.dim + j]
    }
}

/// L2-normalized per-channel mean of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledEmbedding<T> {
    pub values: Vec<T>,
    pub layer_index: u16,
}

/// Projects every frame of `layer`: returns the `frames x output_dim`
/// frame-major matrix `H * P^T`.
pub fn project_layer<T: Scalar>(layer: &LayerFeatures<T>, proj: &ProjectionSpec<T>) -> Result<Vec<T>, EncodeError> {
    if layer.channels != proj.input_dim {
        return Err(EncodeError::DimensionMismatch {
            expected: proj.input_dim,
            found: layer.channels,
        });
    }
    let mut out = Vec::with_capacity(layer.frames * proj.output_dim);
    for frame in layer.frames_iter() {
        out.extend(proj.rows().map(|row| dot(row, frame)));
    }
    Ok(out)
}

/// Adds `weight * X^T X` for the frame-major `frames x dim` matrix `X` into
/// the row-major `dim x dim` accumulator.
pub fn accumulate_gram<T: Scalar>(projected: &[T], dim: usize, weight: T, gram: &mut [T]) {
    debug_assert_eq!(gram.len(), dim * dim);
    for frame in projected.chunks_exact(dim) {
        for i in 0..dim {
            let wi = weight * frame[i];
            if wi == T::zero() {
                continue;
            }
            let row = &mut gram[i * dim..(i + 1) * dim];
            for j in i..dim {
                row[j] += wi * frame[j];
            }
        }
    }
}

fn mirror_upper<T: Scalar>(gram: &mut [T], dim: usize) {
    for i in 0..dim {
        for j in 0..i {
            gram[i * dim + j] = gram[j * dim + i];
        }
    }
}

/// Averaged, unnormalized Gram matrix over `layers`.
pub fn mean_gram<T: Scalar>(
    fm: &FeatureMapSet<T>,
    proj: &ProjectionSpec<T>,
    layers: &LayerSet,
) -> Result<Vec<T>, EncodeError> {
    let dim = proj.output_dim;
    let mut gram = vec![T::zero(); dim * dim];
    let layer_weight = T::one() / T::of_usize(layers.len());
    for &l in layers.as_slice() {
        let layer = fm.layer(l).ok_or_else(|| EncodeError::MissingLayer {
            item_id: fm.item_id.clone(),
            layer: l,
        })?;
        let projected = project_layer(layer, proj)?;
        let weight = layer_weight / T::of_usize(layer.frames);
        accumulate_gram(&projected, dim, weight, &mut gram);
    }
    mirror_upper(&mut gram, dim);
    Ok(gram)
}

/// Texture embedding of one feature map.
pub fn trr_encode<T: Scalar>(
    fm: &FeatureMapSet<T>,
    proj: &ProjectionSpec<T>,
    layers: &LayerSet,
) -> Result<TextureEmbedding<T>, EncodeError> {
    let mut gram = mean_gram(fm, proj, layers)?;
    let norm = l2_norm(&gram);
    if !(norm > T::zero()) || !norm.is_finite() {
        return Err(EncodeError::ZeroGram {
            item_id: fm.item_id.clone(),
        });
    }
    gram.iter_mut().for_each(|g| *g /= norm);
    Ok(TextureEmbedding {
        values: gram,
        dim: proj.output_dim,
        source_layers: layers.clone(),
    })
}

/// Per-channel mean over frames of `layer`, then L2-normalized.
pub fn mean_pool_encode<T: Scalar>(fm: &FeatureMapSet<T>, layer: u16) -> Result<PooledEmbedding<T>, EncodeError> {
    let feats = fm.layer(layer).ok_or_else(|| EncodeError::MissingLayer {
        item_id: fm.item_id.clone(),
        layer,
    })?;
    let mut mean = vec![T::zero(); feats.channels];
    for frame in feats.frames_iter() {
        for (m, &v) in mean.iter_mut().zip(frame) {
            *m += v;
        }
    }
    let t = T::of_usize(feats.frames);
    mean.iter_mut().for_each(|m| *m /= t);
    let norm = l2_norm(&mean);
    if !(norm > T::zero()) {
        return Err(EncodeError::ZeroMean {
            item_id: fm.item_id.clone(),
            layer,
        });
    }
    mean.iter_mut().for_each(|m| *m /= norm);
    Ok(PooledEmbedding {
        values: mean,
        layer_index: layer,
    })
}
