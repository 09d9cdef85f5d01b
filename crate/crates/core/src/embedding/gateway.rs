use std::io::Cursor;
use std::sync::Arc;
use std::time::Duration;

use super::{project, CrossModalEmbedding, Dims, EmbeddingVector, ProjectionHead};
use crate::error::{Error, Result};

/// Backend producing a text-only embedding.
pub trait TextEncoder: Send + Sync {
    fn encode_text(&self, text: &str) -> Result<Vec<f64>>;
}

/// Backend producing image and text segments from one image-text pair.
///
/// Pooling over hidden states happens inside the backend; callers only
/// see the final vectors.
pub trait MultimodalEncoder: Send + Sync {
    fn encode_pair(&self, image: &[u8], text: &str) -> Result<(Vec<f64>, Vec<f64>)>;

    /// Image-only embedding for a query. The text side of the request is empty.
    fn encode_image(&self, image: &[u8]) -> Result<Vec<f64>>;
}

/// Exponential backoff for retriable transport failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff: Duration::from_millis(200),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            initial_backoff: Duration::ZERO,
        }
    }

    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T>) -> Result<T> {
        let mut backoff = self.initial_backoff;
        let mut attempt = 0;
        loop {
            match op() {
                Err(e) if e.is_retriable() && attempt < self.max_retries => {
                    attempt += 1;
                    std::thread::sleep(backoff);
                    backoff *= 2;
                }
                other => return other,
            }
        }
    }
}

/// Validating front door to the encoder backends.
#[derive(Clone)]
pub struct EmbeddingGateway {
    multimodal: Option<Arc<dyn MultimodalEncoder>>,
    text: Option<Arc<dyn TextEncoder>>,
    dims: Dims,
    retry: RetryPolicy,
}

impl std::fmt::Debug for EmbeddingGateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmbeddingGateway")
            .field("multimodal", &self.multimodal.is_some())
            .field("text", &self.text.is_some())
            .field("dims", &self.dims)
            .field("retry", &self.retry)
            .finish()
    }
}

impl EmbeddingGateway {
    pub fn new(dims: Dims) -> Self {
        Self {
            multimodal: None,
            text: None,
            dims,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_multimodal(mut self, encoder: Arc<dyn MultimodalEncoder>) -> Self {
        self.multimodal = Some(encoder);
        self
    }

    pub fn with_text(mut self, encoder: Arc<dyn TextEncoder>) -> Self {
        self.text = Some(encoder);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    fn multimodal(&self) -> Result<&dyn MultimodalEncoder> {
        self.multimodal
            .as_deref()
            .ok_or_else(|| Error::Precondition("no multimodal encoder configured".into()))
    }

    fn text_encoder(&self) -> Result<&dyn TextEncoder> {
        self.text
            .as_deref()
            .ok_or_else(|| Error::Precondition("no text encoder configured".into()))
    }

    pub fn embed_pair(&self, image: &[u8], text: &str) -> Result<CrossModalEmbedding> {
        check_text(text)?;
        check_image(image)?;
        let encoder = self.multimodal()?;
        let (img, txt) = self.retry.run(|| encoder.encode_pair(image, text))?;
        let cm = CrossModalEmbedding {
            image_segment: checked(img, self.dims.image, "image segment")?,
            text_segment: checked(txt, self.dims.text, "text segment")?,
        };
        Ok(cm)
    }

    pub fn embed_image(&self, image: &[u8]) -> Result<EmbeddingVector> {
        check_image(image)?;
        let encoder = self.multimodal()?;
        let raw = self.retry.run(|| encoder.encode_image(image))?;
        checked(raw, self.dims.image, "image embedding")
    }

    pub fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        check_text(text)?;
        let encoder = self.text_encoder()?;
        let raw = self.retry.run(|| encoder.encode_text(text))?;
        checked(raw, self.dims.text, "text embedding")
    }

    /// Image embedding of a new case, mapped through the alignment head when given.
    pub fn embed_query(&self, image: &[u8], head: Option<&ProjectionHead>) -> Result<EmbeddingVector> {
        let raw = self.embed_image(image)?;
        match head {
            Some(h) => project(&raw, h),
            None => Ok(raw),
        }
    }
}

fn check_text(text: &str) -> Result<()> {
    if text.trim().is_empty() {
        return Err(Error::Precondition("text must be non-empty".into()));
    }
    Ok(())
}

/// Confirms the payload is a decodable raster by reading its header.
pub(crate) fn check_image(image: &[u8]) -> Result<()> {
    let reader = image::ImageReader::new(Cursor::new(image))
        .with_guessed_format()
        .map_err(|e| Error::Precondition(format!("unreadable image: {e}")))?;
    let (w, h) = reader
        .into_dimensions()
        .map_err(|e| Error::Precondition(format!("image not decodable: {e}")))?;
    if w == 0 || h == 0 {
        return Err(Error::DegenerateInput("image has zero area".into()));
    }
    Ok(())
}

fn checked(values: Vec<f64>, expected: usize, what: &str) -> Result<EmbeddingVector> {
    if values.len() != expected {
        return Err(Error::Schema(format!(
            "{what} has dim {}, schema expects {expected}",
            values.len()
        )));
    }
    EmbeddingVector::new(values)
}
