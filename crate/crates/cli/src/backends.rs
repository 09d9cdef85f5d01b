use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::Args;
use cornerrag_core::augmentation::{EchoGenerator, Generator, GeneratorEndpoint, HttpGenerator};
use cornerrag_core::embedding::mock::{HashingTextEncoder, MockMultimodalEncoder};
use cornerrag_core::embedding::{Dims, EmbeddingGateway, EncoderEndpoint, EncoderKind, HttpEncoder, DEFAULT_DIM};
use cornerrag_server::Endpoints;

/// Where embeddings and descriptions come from.
#[derive(Args, Debug, Clone)]
pub struct BackendArgs {
    /// Text encoder base URL (serves `POST /embed`).
    #[arg(long)]
    pub encoder_url: Option<String>,
    /// Multimodal encoder base URL (serves `POST /embed`).
    #[arg(long)]
    pub multimodal_url: Option<String>,
    /// Vision-language generator base URL (serves `POST /generate`).
    #[arg(long)]
    pub generator_url: Option<String>,
    /// Model name sent to the generator.
    #[arg(long, default_value = "default")]
    pub model: String,
    /// Use the built-in deterministic encoders and echo generator at this
    /// dimension instead of remote services.
    #[arg(long, conflicts_with_all = ["encoder_url", "multimodal_url", "generator_url"])]
    pub mock_dim: Option<usize>,
    /// Embedding dimension of the remote encoders.
    #[arg(long, default_value_t = DEFAULT_DIM)]
    pub dim: usize,
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
}

impl BackendArgs {
    pub fn dims(&self) -> Result<Dims> {
        Ok(Dims::shared(self.mock_dim.unwrap_or(self.dim))?)
    }

    pub fn gateway(&self) -> Result<EmbeddingGateway> {
        let dims = self.dims()?;
        if let Some(dim) = self.mock_dim {
            return Ok(EmbeddingGateway::new(dims)
                .with_text(Arc::new(HashingTextEncoder::new(dim)))
                .with_multimodal(Arc::new(MockMultimodalEncoder::new(dim))));
        }
        let mut gw = EmbeddingGateway::new(dims);
        if let Some(url) = &self.encoder_url {
            gw = gw.with_text(Arc::new(HttpEncoder::new(EncoderEndpoint::new(
                url,
                EncoderKind::Text,
                self.timeout_ms,
            )?)));
        }
        if let Some(url) = &self.multimodal_url {
            gw = gw.with_multimodal(Arc::new(HttpEncoder::new(EncoderEndpoint::new(
                url,
                EncoderKind::Multimodal,
                self.timeout_ms,
            )?)));
        }
        Ok(gw)
    }

    pub fn generator(&self) -> Result<Arc<dyn Generator>> {
        if self.mock_dim.is_some() {
            return Ok(Arc::new(EchoGenerator));
        }
        let Some(url) = &self.generator_url else {
            bail!("a generator is required: pass --generator-url or --mock-dim");
        };
        let endpoint = GeneratorEndpoint::new(url, &self.model, self.timeout_ms).context("generator endpoint")?;
        Ok(Arc::new(HttpGenerator::new(endpoint)))
    }

    pub fn endpoints(&self) -> Endpoints {
        if self.mock_dim.is_some() {
            let mock = Some("builtin-mock".to_string());
            return Endpoints {
                text_encoder: mock.clone(),
                multimodal_encoder: mock.clone(),
                generator: mock,
            };
        }
        Endpoints {
            text_encoder: self.encoder_url.clone(),
            multimodal_encoder: self.multimodal_url.clone(),
            generator: self.generator_url.clone(),
        }
    }
}
