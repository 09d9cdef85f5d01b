use nalgebra::DMatrix;

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};

const RANGE_SLACK: f64 = 1e-9;

/// Square matrix of image-to-text cosines; row `i` is image `i`, column `j` is text `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix(DMatrix<f64>);

impl SimilarityMatrix {
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::Precondition(format!(
                "similarity matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite() || v.abs() > 1.0 + RANGE_SLACK) {
            return Err(Error::Data("similarity entries must be finite and within [-1, 1]".into()));
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Precondition("similarity rows must form a square".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_matrix(DMatrix::from_row_slice(n, n, &flat))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }
}

/// `S[i][j] = cos(img_i, txt_j)`.
pub fn similarity_matrix(imgs: &[EmbeddingVector], txts: &[EmbeddingVector]) -> Result<SimilarityMatrix> {
    if imgs.len() != txts.len() || imgs.is_empty() {
        return Err(Error::Precondition(format!(
            "need equal, non-zero counts of image and text vectors, got {} and {}",
            imgs.len(),
            txts.len()
        )));
    }
    let dim = imgs[0].dim();
    let unit = |v: &EmbeddingVector, side: &str, row: usize| -> Result<Vec<f64>> {
        if v.dim() != dim {
            return Err(Error::Schema(format!("{side} {row} has dim {}, expected {dim}", v.dim())));
        }
        v.normalized()
            .map(EmbeddingVector::into_inner)
            .map_err(|_| Error::DegenerateInput(format!("{side} vector {row} has zero norm")))
    };
    let vs = imgs.iter().enumerate().map(|(i, v)| unit(v, "image", i)).collect::<Result<Vec<_>>>()?;
    let us = txts.iter().enumerate().map(|(j, v)| unit(v, "text", j)).collect::<Result<Vec<_>>>()?;
    let n = imgs.len();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let c: f64 = vs[i].iter().zip(&us[j]).map(|(a, b)| a * b).sum();
        c.clamp(-1.0, 1.0)
    });
    Ok(SimilarityMatrix(m))
}

/// Marks which off-diagonal entries take part in each anchor's softmax.
///
/// Entry `(i, j)` set means text `j` is a mined negative for image `i`; the
/// same entry counts as image `i` being a negative for text `j`. An anchor
/// whose row (or column) has no marked entry uses the whole batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeMask {
    n: usize,
    marked: Vec<bool>,
}

impl NegativeMask {
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Self {
        let mut marked = vec![false; n * n];
        for &(i, j) in pairs {
            if i != j && i < n && j < n {
                marked[i * n + j] = true;
            }
        }
        Self { n, marked }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_marked(&self, i: usize, j: usize) -> bool {
        self.marked[i * self.n + j]
    }

    fn row_active(&self, i: usize) -> Vec<bool> {
        let any = (0..self.n).any(|j| self.is_marked(i, j));
        (0..self.n).map(|j| !any || j == i || self.is_marked(i, j)).collect()
    }

    fn col_active(&self, j: usize) -> Vec<bool> {
        let any = (0..self.n).any(|i| self.is_marked(i, j));
        (0..self.n).map(|i| !any || i == j || self.is_marked(i, j)).collect()
    }
}

/// Softmax of `logits` over the active entries, zero elsewhere, plus the
/// log-sum-exp of the active logits.
fn masked_softmax(logits: &[f64], active: &[bool]) -> (Vec<f64>, f64) {
    let max = logits
        .iter()
        .zip(active)
        .filter(|(_, &a)| a)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits
        .iter()
        .zip(active)
        .map(|(&l, &a)| if a { (l - max).exp() } else { 0.0 })
        .collect();
    let sum: f64 = exps.iter().sum();
    let lse = max + sum.ln();
    (exps.into_iter().map(|e| e / sum).collect(), lse)
}

/// Loss and `dL/dS` for the symmetric temperature-scaled cross-entropy,
/// optionally restricted to mined negatives.
pub fn masked_loss_and_gradient(
    s: &SimilarityMatrix,
    tau: f64,
    mask: Option<&NegativeMask>,
) -> Result<(f64, DMatrix<f64>)> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::Precondition(format!("temperature must be positive, got {tau}")));
    }
    let n = s.n();
    if let Some(m) = mask {
        if m.n() != n {
            return Err(Error::Precondition("mask size differs from batch size".into()));
        }
    }
    let all = vec![true; n];
    let scale = 1.0 / (2.0 * n as f64 * tau);
    let mut grad = DMatrix::zeros(n, n);
    let mut total = 0.0;

    for i in 0..n {
        let logits: Vec<f64> = (0..n).map(|j| s.get(i, j) / tau).collect();
        let active = mask.map_or_else(|| all.clone(), |m| m.row_active(i));
        let (p, lse) = masked_softmax(&logits, &active);
        total += lse - logits[i];
        for j in 0..n {
            if active[j] {
                grad[(i, j)] += scale * (p[j] - if i == j { 1.0 } else { 0.0 });
            }
        }
    }
    for j in 0..n {
        let logits: Vec<f64> = (0..n).map(|i| s.get(i, j) / tau).collect();
        let active = mask.map_or_else(|| all.clone(), |m| m.col_active(j));
        let (p, lse) = masked_softmax(&logits, &active);
        total += lse - logits[j];
        for i in 0..n {
            if active[i] {
                grad[(i, j)] += scale * (p[i] - if i == j { 1.0 } else { 0.0 });
            }
        }
    }
    Ok((total / (2.0 * n as f64), grad))
}

/// Mean of the image-to-text and text-to-image cross-entropies over `S / tau`.
pub fn contrastive_loss(s: &SimilarityMatrix, tau: f64) -> Result<f64> {
    masked_loss_and_gradient(s, tau, None).map(|(loss, _)| loss)
}

/// `dL/dS_ij = (rowsoftmax_ij - δ_ij + colsoftmax_ij - δ_ij) / (2 N tau)`.
pub fn loss_gradient(s: &SimilarityMatrix, tau: f64) -> Result<DMatrix<f64>> {
    masked_loss_and_gradient(s, tau, None).map(|(_, g)| g)
}
