//! Contrastive alignment of image embeddings to frozen text embeddings.
//!
//! The trainable part is a square [`ProjectionHead`](crate::embedding::ProjectionHead)
//! on the image side. Each batch builds the image/text cosine matrix, mines
//! hard or semi-hard negatives, and takes a plain gradient-descent step on
//! the symmetric temperature-scaled cross-entropy.

mod loss;
mod mining;
mod train;

pub use loss::{
    contrastive_loss, loss_gradient, masked_loss_and_gradient, similarity_matrix, NegativeMask,
    SimilarityMatrix,
};
pub use mining::{in_random_phase, mine_hard_negatives, mine_semi_hard, HardNegatives};
pub use train::{
    alignment_metrics, batch_objective, gradient_step, train, train_with_head, AlignmentMetrics,
    BatchObjective, MinedCounts, TrainReport,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub tau: f64,
    pub margin: f64,
    pub eta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub use_semi_hard: bool,
    pub semi_hard_switch_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau: 0.07,
            margin: 0.2,
            eta: 0.05,
            epochs: 20,
            batch_size: 32,
            use_semi_hard: false,
            semi_hard_switch_fraction: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Precondition(m.to_string()));
        if self.tau.is_nan() || self.tau <= 0.0 {
            return bad("tau must be positive");
        }
        if self.margin.is_nan() || self.margin < 0.0 {
            return bad("margin must be non-negative");
        }
        if self.eta.is_nan() || self.eta <= 0.0 {
            return bad("learning rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size < 2 {
            return bad("batch size must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.semi_hard_switch_fraction) {
            return bad("semi-hard switch fraction must lie in [0, 1]");
        }
        Ok(())
    }
}
