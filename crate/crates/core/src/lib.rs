//! Texture-aware preset retrieval: second-order layer statistics of audio
//! foundation-model features, lexical scoring, gated fusion and the
//! evaluation protocols around them.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common instantiations.

pub mod encoder;
pub mod feature_io;
pub mod knowledge_base;
pub mod metrics;
pub mod protocols;
pub mod retrieval;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod synthetic;
pub mod text_index;

pub use scalar::Scalar;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type FeatureMapSet32 = feature_io::FeatureMapSet<f32>;
pub type FeatureMapSet64 = feature_io::FeatureMapSet<f64>;
pub type ProjectionSpec32 = encoder::ProjectionSpec<f32>;
pub type ProjectionSpec64 = encoder::ProjectionSpec<f64>;
pub type TextureEmbedding32 = encoder::TextureEmbedding<f32>;
pub type TextureEmbedding64 = encoder::TextureEmbedding<f64>;
pub type EmbeddingIndex32 = retrieval::EmbeddingIndex<f32>;
pub type EmbeddingIndex64 = retrieval::EmbeddingIndex<f64>;
pub type MetricReport64 = metrics::MetricReport<f64>;
pub type ComparisonReport64 = stats::ComparisonReport<f64>;
