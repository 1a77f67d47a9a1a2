//! Binary container for per-layer frame activations (`.trrf`).
//!
//! Layout, all integers and floats little-endian, no padding:
//!
//! ```text
//! "TRRF"            4 bytes magic
//! version           u16 (= 1)
//! item_id_len       u16, followed by that many UTF-8 bytes
//! layer_count       u16
//! per layer:
//!   layer_index     u16
//!   frames          u32
//!   channels        u32
//!   values          frames * channels f32, frame-major
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::scalar::Scalar;

pub const FEATURE_MAGIC: &[u8; 4] = b"TRRF";
pub const FEATURE_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("bad magic {found:?} at offset 0, expected \"TRRF\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported format version {version} at offset 4")]
    VersionUnsupported { version: u16 },
    #[error("truncated payload at offset {offset}: need {needed} bytes, {available} available")]
    TruncatedPayload {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("non-finite value in layer {layer} at element {element}{}", byte_offset.map(|o| format!(" (byte offset {o})")).unwrap_or_default())]
    NonFiniteValue {
        layer: u16,
        element: usize,
        byte_offset: Option<usize>,
    },
    #[error("layer {layer} has {found} frames, expected {expected}")]
    InconsistentFrameCount {
        layer: u16,
        expected: usize,
        found: usize,
    },
    #[error("layer index {layer} does not follow {previous}; indices must be strictly increasing")]
    LayerOrder { layer: u16, previous: u16 },
    #[error("layer {layer} has an empty dimension ({frames} frames x {channels} channels)")]
    EmptyDimension {
        layer: u16,
        frames: usize,
        channels: usize,
    },
    #[error("layer {layer} holds {found} values, expected {expected}")]
    ShapeMismatch {
        layer: u16,
        expected: usize,
        found: usize,
    },
    #[error("feature map has no layers")]
    NoLayers,
    #[error("item id is not valid UTF-8 (offset {offset})")]
    InvalidItemId { offset: usize },
    #[error("{what} exceeds the format limit")]
    TooLarge { what: &'static str },
    #[error("{extra} trailing bytes after the last layer at offset {offset}")]
    TrailingBytes { offset: usize, extra: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Activations of one backbone layer: `frames x channels`, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerFeatures<T> {
    pub layer_index: u16,
    pub frames: usize,
    pub channels: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> LayerFeatures<T> {
    pub fn new(layer_index: u16, frames: usize, channels: usize, values: Vec<T>) -> Self {
        Self {
            layer_index,
            frames,
            channels,
            values,
        }
    }

    /// Frame `t` as a contiguous slice of `channels` values.
    #[inline]
    pub fn frame(&self, t: usize) -> &[T] {
        &self.values[t * self.channels..(t + 1) * self.channels]
    }

    pub fn frames_iter(&self) -> impl Iterator<Item = &[T]> {
        self.values.chunks_exact(self.channels)
    }
}

/// All cached layers for one audio item.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapSet<T> {
    pub item_id: String,
    pub layers: Vec<LayerFeatures<T>>,
}

impl<T: Scalar> FeatureMapSet<T> {
    /// Builds a map and checks every invariant.
    pub fn new(item_id: impl Into<String>, layers: Vec<LayerFeatures<T>>) -> Result<Self, FeatureError> {
        let fm = Self {
            item_id: item_id.into(),
            layers,
        };
        fm.validate()?;
        Ok(fm)
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.item_id.len() > u16::MAX as usize {
            return Err(FeatureError::TooLarge { what: "item id" });
        }
        if self.layers.is_empty() {
            return Err(FeatureError::NoLayers);
        }
        if self.layers.len() > u16::MAX as usize {
            return Err(FeatureError::TooLarge { what: "layer count" });
        }
        let expected_frames = self.layers[0].frames;
        let mut previous: Option<u16> = None;
        for layer in &self.layers {
            if let Some(prev) = previous {
                if layer.layer_index <= prev {
                    return Err(FeatureError::LayerOrder {
                        layer: layer.layer_index,
                        previous: prev,
                    });
                }
            }
            previous = Some(layer.layer_index);
            if layer.frames == 0 || layer.channels == 0 {
                return Err(FeatureError::EmptyDimension {
                    layer: layer.layer_index,
                    frames: layer.frames,
                    channels: layer.channels,
                });
            }
            if layer.frames > u32::MAX as usize || layer.channels > u32::MAX as usize {
                return Err(FeatureError::TooLarge { what: "layer dimension" });
            }
            if layer.frames != expected_frames {
                return Err(FeatureError::InconsistentFrameCount {
                    layer: layer.layer_index,
                    expected: expected_frames,
                    found: layer.frames,
                });
            }
            let expected = layer.frames * layer.channels;
            if layer.values.len() != expected {
                return Err(FeatureError::ShapeMismatch {
                    layer: layer.layer_index,
                    expected,
                    found: layer.values.len(),
                });
            }
            // Values must also survive narrowing to the on-disk f32.
            if let Some(element) = layer
                .values
                .iter()
                .position(|v| !v.is_finite() || !v.to_f32().is_some_and(f32::is_finite))
            {
                return Err(FeatureError::NonFiniteValue {
                    layer: layer.layer_index,
                    element,
                    byte_offset: None,
                });
            }
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        self.layers[0].frames
    }

    pub fn layer(&self, index: u16) -> Option<&LayerFeatures<T>> {
        self.layers
            .binary_search_by_key(&index, |l| l.layer_index)
            .ok()
            .map(|pos| &self.layers[pos])
    }

    pub fn layer_indices(&self) -> Vec<u16> {
        self.layers.iter().map(|l| l.layer_index).collect()
    }

    /// Converts the element type, e.g. after reading as `f32`.
    pub fn cast<U: Scalar>(&self) -> FeatureMapSet<U> {
        FeatureMapSet {
            item_id: self.item_id.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerFeatures {
                    layer_index: l.layer_index,
                    frames: l.frames,
                    channels: l.channels,
                    values: l.values.iter().map(|v| U::of(v.as_f64())).collect(),
                })
                .collect(),
        }
    }
}

/// Serializes a validated feature map to bytes.
pub fn encode_feature_map<T: Scalar>(fm: &FeatureMapSet<T>) -> Result<Vec<u8>, FeatureError> {
    fm.validate()?;
    let payload: usize = fm.layers.iter().map(|l| 10 + 4 * l.values.len()).sum();
    let mut out = Vec::with_capacity(4 + 2 + 2 + fm.item_id.len() + 2 + payload);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(fm.item_id.len() as u16).to_le_bytes());
    out.extend_from_slice(fm.item_id.as_bytes());
    out.extend_from_slice(&(fm.layers.len() as u16).to_le_bytes());
    for layer in &fm.layers {
        out.extend_from_slice(&layer.layer_index.to_le_bytes());
        out.extend_from_slice(&(layer.frames as u32).to_le_bytes());
        out.extend_from_slice(&(layer.channels as u32).to_le_bytes());
        for v in &layer.values {
            // validate() guarantees the narrowing succeeds
            let x = v.to_f32().unwrap_or(f32::NAN);
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FeatureError> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(FeatureError::TruncatedPayload {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16, FeatureError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, FeatureError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses and validates a feature map from bytes.
pub fn decode_feature_map<T: Scalar>(bytes: &[u8]) -> Result<FeatureMapSet<T>, FeatureError> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let magic = cur.take(4)?;
    if magic != FEATURE_MAGIC {
        return Err(FeatureError::BadMagic {
            found: [magic[0], magic[1], magic[2], magic[3]],
        });
    }
    let version = cur.u16()?;
    if version != FEATURE_VERSION {
        return Err(FeatureError::VersionUnsupported { version });
    }
    let id_len = cur.u16()? as usize;
    let id_offset = cur.pos;
    let item_id = std::str::from_utf8(cur.take(id_len)?)
        .map_err(|_| FeatureError::InvalidItemId { offset: id_offset })?
        .to_owned();
    let layer_count = cur.u16()? as usize;
    if layer_count == 0 {
        return Err(FeatureError::NoLayers);
    }

    let mut layers: Vec<LayerFeatures<T>> = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let layer_index = cur.u16()?;
        let frames = cur.u32()? as usize;
        let channels = cur.u32()? as usize;
        if let Some(prev) = layers.last() {
            if layer_index <= prev.layer_index {
                return Err(FeatureError::LayerOrder {
                    layer: layer_index,
                    previous: prev.layer_index,
                });
            }
        }
        if frames == 0 || channels == 0 {
            return Err(FeatureError::EmptyDimension {
                layer: layer_index,
                frames,
                channels,
            });
        }
        if let Some(first) = layers.first() {
            if frames != first.frames {
                return Err(FeatureError::InconsistentFrameCount {
                    layer: layer_index,
                    expected: first.frames,
                    found: frames,
                });
            }
        }
        let count = frames
            .checked_mul(channels)
            .ok_or(FeatureError::TooLarge { what: "layer dimension" })?;
        let byte_len = count
            .checked_mul(4)
            .ok_or(FeatureError::TooLarge { what: "layer dimension" })?;
        let start = cur.pos;
        let raw = cur.take(byte_len)?;
        let mut values = Vec::with_capacity(count);
        for (element, chunk) in raw.chunks_exact(4).enumerate() {
            let x = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if !x.is_finite() {
                return Err(FeatureError::NonFiniteValue {
                    layer: layer_index,
                    element,
                    byte_offset: Some(start + 4 * element),
                });
            }
            values.push(T::of(x as f64));
        }
        layers.push(LayerFeatures::new(layer_index, frames, channels, values));
    }
    if cur.pos != bytes.len() {
        return Err(FeatureError::TrailingBytes {
            offset: cur.pos,
            extra: bytes.len() - cur.pos,
        });
    }
    Ok(FeatureMapSet { item_id, layers })
}

pub fn read_feature_file<T: Scalar>(path: impl AsRef<Path>) -> Result<FeatureMapSet<T>, FeatureError> {
    let bytes = fs::read(path)?;
    decode_feature_map(&bytes)
}

/// Writes `fm` to `path`. Validation happens before the file is created.
pub fn write_feature_file<T: Scalar>(fm: &FeatureMapSet<T>, path: impl AsRef<Path>) -> Result<(), FeatureError> {
    let bytes = encode_feature_map(fm)?;
    fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(id: &str, layers: u16) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(b"TRRF");
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&(id.len() as u16).to_le_bytes());
        b.extend_from_slice(id.as_bytes());
        b.extend_from_slice(&layers.to_le_bytes());
        b
    }

    fn layer_bytes(index: u16, frames: u32, channels: u32, value: f32) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&index.to_le_bytes());
        b.extend_from_slice(&frames.to_le_bytes());
        b.extend_from_slice(&channels.to_le_bytes());
        for _ in 0..frames * channels {
            b.extend_from_slice(&value.to_le_bytes());
        }
        b
    }

    #[test]
    fn smallest_legal_file() {
        let mut bytes = header("x", 1);
        bytes.extend(layer_bytes(0, 1, 1, 0.5));
        let fm: FeatureMapSet<f32> = decode_feature_map(&bytes).unwrap();
        assert_eq!(fm.item_id, "x");
        assert_eq!(fm.layers.len(), 1);
        assert_eq!(fm.layers[0].values, vec![0.5]);
        assert_eq!(encode_feature_map(&fm).unwrap(), bytes);
    }

    #[test]
    fn inconsistent_frame_count_is_rejected() {
        let mut bytes = header("a", 2);
        bytes.extend(layer_bytes(4, 12, 2, 1.0));
        bytes.extend(layer_bytes(5, 10, 2, 1.0));
        let err = decode_feature_map::<f64>(&bytes).unwrap_err();
        assert!(matches!(
            err,
            FeatureError::InconsistentFrameCount {
                layer: 5,
                expected: 12,
                found: 10
            }
        ));
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = header("a", 1);
        bytes.extend(layer_bytes(0, 1, 1, 1.0));
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(decode_feature_map::<f32>(&wrong), Err(FeatureError::BadMagic { .. })));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(
            decode_feature_map::<f32>(&v2),
            Err(FeatureError::VersionUnsupported { version: 2 })
        ));
    }

    #[test]
    fn nan_payload_names_offset() {
        let mut bytes = header("a", 1);
        bytes.extend(layer_bytes(3, 1, 2, 1.0));
        let len = bytes.len();
        bytes[len - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        match decode_feature_map::<f32>(&bytes) {
            Err(FeatureError::NonFiniteValue {
                layer: 3,
                element: 1,
                byte_offset: Some(off),
            }) => assert_eq!(off, len - 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncation_and_trailing_bytes() {
        let mut bytes = header("a", 1);
        bytes.extend(layer_bytes(0, 2, 2, 1.0));
        assert!(matches!(
            decode_feature_map::<f32>(&bytes[..bytes.len() - 1]),
            Err(FeatureError::TruncatedPayload { .. })
        ));
        bytes.push(0);
        assert!(matches!(
            decode_feature_map::<f32>(&bytes),
            Err(FeatureError::TrailingBytes { extra: 1, .. })
        ));
    }

    #[test]
    fn huge_declared_layer_does_not_allocate() {
        let mut bytes = header("a", 1);
        bytes.extend_from_slice(&0u16.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_feature_map::<f32>(&bytes).is_err());
    }

    #[test]
    fn write_rejects_nan_before_touching_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.trrf");
        let fm = FeatureMapSet {
            item_id: "bad".into(),
            layers: vec![LayerFeatures::new(0, 1, 2, vec![1.0f64, f64::NAN])],
        };
        assert!(matches!(
            write_feature_file(&fm, &path),
            Err(FeatureError::NonFiniteValue { .. })
        ));
        assert!(!path.exists());
    }

    #[test]
    fn f64_values_outside_f32_range_are_rejected() {
        let fm = FeatureMapSet {
            item_id: "big".into(),
            layers: vec![LayerFeatures::new(0, 1, 1, vec![1e300f64])],
        };
        assert!(matches!(fm.validate(), Err(FeatureError::NonFiniteValue { .. })));
    }

    #[test]
    fn layer_lookup() {
        let fm = FeatureMapSet::new(
            "a",
            vec![
                LayerFeatures::new(4, 1, 1, vec![1.0f32]),
                LayerFeatures::new(6, 1, 1, vec![2.0f32]),
            ],
        )
        .unwrap();
        assert_eq!(fm.layer(6).unwrap().values, vec![2.0]);
        assert!(fm.layer(5).is_none());
        assert!(FeatureMapSet::new(
            "b",
            vec![
                LayerFeatures::new(6, 1, 1, vec![1.0f32]),
                LayerFeatures::new(6, 1, 1, vec![2.0f32]),
            ],
        )
        .is_err());
    }
}
