use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    masked_loss_and_gradient, mine_hard_negatives, mine_semi_hard, similarity_matrix, NegativeMask,
    SimilarityMatrix, TrainConfig,
};
use crate::embedding::{project, EmbeddingVector, ProjectionHead};
use crate::error::{Error, Result};

type Pair = (EmbeddingVector, EmbeddingVector);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MinedCounts {
    pub hard: usize,
    pub semi_hard: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub loss_per_epoch: Vec<f64>,
    pub final_head: ProjectionHead,
    pub mined_counts: Vec<MinedCounts>,
}

/// Loss of one batch and its gradient with respect to the head weights.
#[derive(Debug, Clone)]
pub struct BatchObjective {
    pub loss: f64,
    pub grad: DMatrix<f64>,
    pub similarity: SimilarityMatrix,
}

struct Forward {
    inputs: Vec<DVector<f64>>,
    proj_norms: Vec<f64>,
    // unit-normalized projected images and texts
    images: Vec<DVector<f64>>,
    texts: Vec<DVector<f64>>,
    similarity: SimilarityMatrix,
}

fn forward(w: &DMatrix<f64>, batch: &[&Pair]) -> Result<Forward> {
    let n = batch.len();
    let mut inputs = Vec::with_capacity(n);
    let mut proj_norms = Vec::with_capacity(n);
    let mut images = Vec::with_capacity(n);
    let mut texts = Vec::with_capacity(n);
    for (row, (img, txt)) in batch.iter().enumerate() {
        let x = DVector::from_column_slice(img.as_slice());
        let p = w * &x;
        let pn = p.norm();
        if pn == 0.0 || !pn.is_finite() {
            return Err(Error::DegenerateInput(format!("projected image {row} has norm {pn}")));
        }
        let t = DVector::from_column_slice(txt.as_slice());
        let tn = t.norm();
        if tn == 0.0 {
            return Err(Error::DegenerateInput(format!("text vector {row} has zero norm")));
        }
        images.push(&p / pn);
        texts.push(t / tn);
        proj_norms.push(pn);
        inputs.push(x);
    }
    let m = DMatrix::from_fn(n, n, |i, j| images[i].dot(&texts[j]).clamp(-1.0, 1.0));
    Ok(Forward {
        inputs,
        proj_norms,
        images,
        texts,
        similarity: SimilarityMatrix::from_matrix(m)?,
    })
}

/// Chain rule from `dL/dS` through normalization and the head to `dL/dW`.
fn backward(fwd: &Forward, w_shape: (usize, usize), tau: f64, mask: Option<&NegativeMask>) -> Result<(f64, DMatrix<f64>)> {
    let (loss, g_s) = masked_loss_and_gradient(&fwd.similarity, tau, mask)?;
    let n = fwd.images.len();
    let mut grad = DMatrix::zeros(w_shape.0, w_shape.1);
    for i in 0..n {
        let mut g_v = DVector::zeros(w_shape.0);
        for j in 0..n {
            g_v.axpy(g_s[(i, j)], &fwd.texts[j], 1.0);
        }
        let v = &fwd.images[i];
        let g_p = (&g_v - v * v.dot(&g_v)) / fwd.proj_norms[i];
        grad.ger(1.0, &g_p, &fwd.inputs[i], 1.0);
    }
    Ok((loss, grad))
}

fn check_batch(head: &ProjectionHead, batch: &[&Pair]) -> Result<()> {
    if batch.len() < 2 {
        return Err(Error::Precondition("a batch needs at least two pairs".into()));
    }
    for (img, txt) in batch {
        img.expect_dim(head.dim_in(), "image vector")?;
        txt.expect_dim(head.dim_out(), "text vector")?;
    }
    Ok(())
}

/// Loss and `dL/dW` for a batch under a fixed negative mask.
pub fn batch_objective(
    head: &ProjectionHead,
    batch: &[Pair],
    tau: f64,
    mask: Option<&NegativeMask>,
) -> Result<BatchObjective> {
    let refs: Vec<&Pair> = batch.iter().collect();
    check_batch(head, &refs)?;
    let fwd = forward(head.weights(), &refs)?;
    let shape = head.weights().shape();
    let (loss, grad) = backward(&fwd, shape, tau, mask)?;
    Ok(BatchObjective {
        loss,
        grad,
        similarity: fwd.similarity,
    })
}

/// One update `W <- W - eta * dL/dW`. Returns the new head and the loss before the step.
pub fn gradient_step(
    head: &ProjectionHead,
    batch: &[Pair],
    tau: f64,
    eta: f64,
    mask: Option<&NegativeMask>,
) -> Result<(ProjectionHead, f64)> {
    let obj = batch_objective(head, batch, tau, mask)?;
    let w = head.weights() - obj.grad * eta;
    Ok((ProjectionHead::from_weights(w)?, obj.loss))
}

/// Trains an identity-initialized square head.
pub fn train(dataset: &[Pair], cfg: &TrainConfig) -> Result<TrainReport> {
    let dim = dataset
        .first()
        .map(|(img, _)| img.dim())
        .ok_or_else(|| Error::Precondition("empty training set".into()))?;
    train_with_head(ProjectionHead::identity(dim), dataset, cfg)
}

pub fn train_with_head(head: ProjectionHead, dataset: &[Pair], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if dataset.len() < cfg.batch_size {
        return Err(Error::Precondition(format!(
            "dataset of {} pairs is smaller than batch size {}",
            dataset.len(),
            cfg.batch_size
        )));
    }
    for (img, txt) in dataset {
        img.expect_dim(head.dim_in(), "image vector")?;
        txt.expect_dim(head.dim_out(), "text vector")?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = head.weights().clone();
    let shape = w.shape();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut loss_per_epoch = Vec::with_capacity(cfg.epochs);
    let mut mined_counts = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut batch_losses = Vec::new();
        let mut counts = MinedCounts::default();
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let abort = |message: String| Error::TrainingAborted {
                epoch,
                batch: b,
                message,
            };
            let batch: Vec<&Pair> = chunk.iter().map(|&k| &dataset[k]).collect();
            let fwd = forward(&w, &batch).map_err(|e| abort(e.to_string()))?;
            let pairs = if cfg.use_semi_hard {
                let p = mine_semi_hard(&fwd.similarity, epoch, cfg, &mut rng);
                counts.semi_hard += p.len();
                p
            } else {
                let p = mine_hard_negatives(&fwd.similarity, cfg.margin).pairs;
                counts.hard += p.len();
                p
            };
            let mask = NegativeMask::from_pairs(batch.len(), &pairs);
            let (loss, grad) = backward(&fwd, shape, cfg.tau, Some(&mask)).map_err(|e| abort(e.to_string()))?;
            if !loss.is_finite() {
                return Err(abort(format!("loss is {loss}")));
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(abort("gradient has non-finite entries".into()));
            }
            w -= grad * cfg.eta;
            batch_losses.push(loss);
        }
        loss_per_epoch.push(batch_losses.iter().sum::<f64>() / batch_losses.len() as f64);
        mined_counts.push(counts);
    }

    Ok(TrainReport {
        loss_per_epoch,
        final_head: ProjectionHead::from_weights(w)?,
        mined_counts,
    })
}

/// How well projected images line up with their own texts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlignmentMetrics {
    /// Mean of `S[i][i]`.
    pub mean_diagonal: f64,
    /// Fraction of images whose most similar text is their own (ties to the lower index).
    pub recall_at_1: f64,
}

pub fn alignment_metrics(head: &ProjectionHead, pairs: &[Pair]) -> Result<AlignmentMetrics> {
    let imgs = pairs.iter().map(|(img, _)| project(img, head)).collect::<Result<Vec<_>>>()?;
    let txts: Vec<EmbeddingVector> = pairs.iter().map(|(_, t)| t.clone()).collect();
    let s = similarity_matrix(&imgs, &txts)?;
    let n = s.n();
    let mean_diagonal = (0..n).map(|i| s.get(i, i)).sum::<f64>() / n as f64;
    let hits = (0..n)
        .filter(|&i| {
            let best = (0..n).fold(0, |best, j| if s.get(i, j) > s.get(i, best) { j } else { best });
            best == i
        })
        .count();
    Ok(AlignmentMetrics {
        mean_diagonal,
        recall_at_1: hits as f64 / n as f64,
    })
}
