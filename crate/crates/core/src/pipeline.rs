//! Query-time path: embed the new image, retrieve the closest case, build
//! the composite and prompt, and ask the generator for a description.

use std::path::Path;

use serde::Serialize;

use crate::augmentation::{
    build_prompt, concatenate, decode_rgb, generate, generate_with_image, CompositeImage, Generator,
};
use crate::embedding::{EmbeddingGateway, EmbeddingVector, ProjectionHead};
use crate::error::Error;
use crate::retrieval::{top1, QueryConfig, RetrievalResult};
use crate::store::{CaseRecord, StorePair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Embedding,
    Retrieval,
    Augmentation,
    Generation,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Embedding => "embedding",
            Stage::Retrieval => "retrieval",
            Stage::Augmentation => "augmentation",
            Stage::Generation => "generation",
        }
    }
}

/// An error tagged with the pipeline stage that produced it.
#[derive(Debug, thiserror::Error)]
#[error("{stage:?} stage failed: {error}")]
pub struct StagedError {
    pub stage: Stage,
    #[source]
    pub error: Error,
}

fn at(stage: Stage) -> impl FnOnce(Error) -> StagedError {
    move |error| StagedError { stage, error }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub query: QueryConfig,
    /// Apply the projection head to the query embedding.
    pub use_projection: bool,
    /// Send the side-by-side composite; otherwise only the new image.
    pub concatenate: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            query: QueryConfig::default(),
            use_projection: true,
            concatenate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineOutput {
    pub retrieved: RetrievalResult,
    pub retrieved_case: CaseRecord,
    pub prompt: String,
    pub description: String,
    /// The image sent to the generator when concatenation is on.
    #[serde(skip)]
    pub composite: Option<CompositeImage>,
}

pub struct Pipeline<'a> {
    pub store: &'a StorePair,
    pub image_root: &'a Path,
    pub gateway: &'a EmbeddingGateway,
    pub head: Option<&'a ProjectionHead>,
    pub generator: &'a dyn Generator,
}

impl Pipeline<'_> {
    pub fn describe(&self, image: &[u8], opts: &PipelineOptions) -> Result<PipelineOutput, StagedError> {
        let q = self.embed(image, opts).map_err(at(Stage::Embedding))?;
        self.describe_with_query(&q, image, opts)
    }

    /// The query vector `describe` would use for `image`.
    pub fn embed(&self, image: &[u8], opts: &PipelineOptions) -> crate::Result<EmbeddingVector> {
        let head = if opts.use_projection { self.head } else { None };
        self.gateway.embed_query(image, head)
    }

    /// Same as `describe` with an already computed query vector.
    pub fn describe_with_query(
        &self,
        q: &EmbeddingVector,
        image: &[u8],
        opts: &PipelineOptions,
    ) -> Result<PipelineOutput, StagedError> {
        let hit = top1(q, &opts.query, self.store, self.image_root).map_err(at(Stage::Retrieval))?;
        let prompt = build_prompt(&hit.record.caption).map_err(at(Stage::Augmentation))?;
        let (description, composite) = if opts.concatenate {
            let left = decode_rgb(image).map_err(at(Stage::Augmentation))?;
            let right = decode_rgb(&hit.image).map_err(at(Stage::Augmentation))?;
            let composite = concatenate(&left, &right).map_err(at(Stage::Augmentation))?;
            let text = generate(&composite, &prompt, self.generator).map_err(at(Stage::Generation))?;
            (text, Some(composite))
        } else {
            let text = generate_with_image(image, &prompt, self.generator).map_err(at(Stage::Generation))?;
            (text, None)
        };
        Ok(PipelineOutput {
            retrieved: hit.result,
            retrieved_case: hit.record,
            prompt,
            description,
            composite,
        })
    }
}
