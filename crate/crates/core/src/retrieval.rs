//! Exact weighted cross-modal search.
//!
//! A query vector (the projected image embedding of a new case) is scored
//! against both segments of every stored entry and the two cosines are
//! blended: `combined = (1 - alpha) * img + alpha * text`.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::store::{CaseRecord, StorePair};

pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryConfig {
    alpha: f64,
    k: usize,
}

impl QueryConfig {
    pub fn new(alpha: f64, k: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Precondition(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if k == 0 {
            return Err(Error::Precondition("k must be at least 1".into()));
        }
        Ok(Self { alpha, k })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            k: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub index: usize,
    pub combined: f64,
    pub img_similarity: f64,
    pub text_similarity: f64,
}

/// Cosine similarity. Undefined, and rejected, when either vector is zero.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::Schema(format!(
            "cosine of vectors with dims {} and {}",
            u.dim(),
            v.dim()
        )));
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::DegenerateInput("cosine of a zero-norm vector".into()));
    }
    let dot: f64 = u.as_slice().iter().zip(v.as_slice()).map(|(a, b)| a * b).sum();
    Ok(dot / (nu * nv))
}

fn dot_f32(q: &[f64], stored: &[f32]) -> f64 {
    q.iter().zip(stored).map(|(a, &b)| a * f64::from(b)).sum()
}

/// Descending by combined score, ties to the lower index.
pub fn rank_order(a: &RetrievalResult, b: &RetrievalResult) -> Ordering {
    b.combined
        .total_cmp(&a.combined)
        .then_with(|| a.index.cmp(&b.index))
}

/// Scores every stored entry and returns the best `min(k, size)`.
pub fn query(q: &EmbeddingVector, cfg: &QueryConfig, store: &StorePair) -> Result<Vec<RetrievalResult>> {
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    let dims = store.dims();
    if dims.image != dims.text {
        return Err(Error::Schema(format!(
            "cross-space query needs equal segment dims, store has {} and {}",
            dims.image, dims.text
        )));
    }
    q.expect_dim(dims.image, "query vector")?;
    let qn = q.norm();
    if qn == 0.0 {
        return Err(Error::DegenerateInput("query vector has zero norm".into()));
    }
    let qs = q.as_slice();
    let alpha = cfg.alpha();

    let mut scored: Vec<RetrievalResult> = (0..store.len())
        .into_par_iter()
        .map(|i| {
            let img_similarity = dot_f32(qs, store.image_segment(i)) / (qn * store.image_norm(i));
            let text_similarity = dot_f32(qs, store.text_segment(i)) / (qn * store.text_norm(i));
            RetrievalResult {
                index: i,
                combined: (1.0 - alpha) * img_similarity + alpha * text_similarity,
                img_similarity,
                text_similarity,
            }
        })
        .collect();

    let k = cfg.k().min(scored.len());
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, rank_order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(rank_order);
    Ok(scored)
}

/// The rank-1 case with its image bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedCase {
    pub result: RetrievalResult,
    pub record: CaseRecord,
    pub image: Vec<u8>,
}

/// Resolves a stored image reference; relative paths are taken from `root`.
pub fn resolve_image_ref(image_ref: &str, root: &Path) -> PathBuf {
    let p = Path::new(image_ref);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

pub fn top1(q: &EmbeddingVector, cfg: &QueryConfig, store: &StorePair, image_root: &Path) -> Result<RetrievedCase> {
    let best = query(q, &QueryConfig::new(cfg.alpha(), 1)?, store)?[0];
    let record = store.record(best.index)?.clone();
    let path = resolve_image_ref(&record.image_ref, image_root);
    let image = std::fs::read(&path).map_err(|e| Error::Asset {
        index: best.index,
        message: format!("{}: {e}", path.display()),
    })?;
    Ok(RetrievedCase {
        result: best,
        record,
        image,
    })
}
