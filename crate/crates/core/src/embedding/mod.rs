//! Embedding vectors, the projection head, and the gateway that obtains
//! vectors from encoder services or precomputed batch files.

mod gateway;
pub(crate) mod http;
pub mod mock;
mod precomputed;
mod projection;

pub use gateway::{EmbeddingGateway, MultimodalEncoder, RetryPolicy, TextEncoder};
pub use http::{EncoderEndpoint, EncoderKind, HttpEncoder};
pub use precomputed::{load_precomputed, write_precomputed, PrecomputedBatch, PrecomputedRecord};
pub use projection::{project, ProjectionHead};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default per-segment width, matching the common 768-wide base encoders.
pub const DEFAULT_DIM: usize = 768;

const NORMALIZED_TOLERANCE: f64 = 1e-6;

/// A finite, non-empty real vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("embedding vector is empty".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value {} at position {pos}",
                values[pos]
            )));
        }
        Ok(Self(values))
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() <= NORMALIZED_TOLERANCE
    }

    /// Unit-length copy. Fails on the zero vector.
    pub fn normalized(&self) -> Result<Self> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(Error::DegenerateInput("cannot normalize a zero vector".into()));
        }
        Ok(Self(self.0.iter().map(|v| v / norm).collect()))
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|v| v * factor).collect())
    }

    pub(crate) fn expect_dim(&self, expected: usize, what: &str) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::Schema(format!(
                "{what} has dim {}, schema expects {expected}",
                self.dim()
            )));
        }
        Ok(())
    }
}

impl<'de> Deserialize<'de> for EmbeddingVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(d)?;
        EmbeddingVector::new(values).map_err(serde::de::Error::custom)
    }
}

/// The image and text segments stored together for one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossModalEmbedding {
    pub image_segment: EmbeddingVector,
    pub text_segment: EmbeddingVector,
}

/// Segment widths of a database pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub image: usize,
    pub text: usize,
}

impl Dims {
    pub fn new(image: usize, text: usize) -> Result<Self> {
        if image == 0 || text == 0 {
            return Err(Error::Schema("dimensions must be positive".into()));
        }
        Ok(Self { image, text })
    }

    /// Both segments share one width, as required for cross-space queries.
    pub fn shared(dim: usize) -> Result<Self> {
        Self::new(dim, dim)
    }

    pub fn check(&self, cm: &CrossModalEmbedding) -> Result<()> {
        cm.image_segment.expect_dim(self.image, "image segment")?;
        cm.text_segment.expect_dim(self.text, "text segment")
    }
}

impl Default for Dims {
    fn default() -> Self {
        Self {
            image: DEFAULT_DIM,
            text: DEFAULT_DIM,
        }
    }
}
