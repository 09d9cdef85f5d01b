use rand::Rng;
use serde::Serialize;

use super::{SimilarityMatrix, TrainConfig};

/// Output of hard-negative mining over one similarity matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HardNegatives {
    /// All `(image, text)` pairs with `S[i][j] > S[i][i] - margin`, `i != j`, row-major order.
    pub pairs: Vec<(usize, usize)>,
    /// For each image, the most similar non-matching text.
    pub hardest_text_for_image: Vec<Option<usize>>,
    /// For each text, the most similar non-matching image.
    pub hardest_image_for_text: Vec<Option<usize>>,
}

fn argmax_excluding(n: usize, skip: usize, value: impl Fn(usize) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for k in (0..n).filter(|&k| k != skip) {
        let v = value(k);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best.map(|(k, _)| k)
}

pub fn mine_hard_negatives(s: &SimilarityMatrix, margin: f64) -> HardNegatives {
    let n = s.n();
    let mut pairs = Vec::new();
    for i in 0..n {
        let threshold = s.get(i, i) - margin;
        for j in 0..n {
            if i != j && s.get(i, j) > threshold {
                pairs.push((i, j));
            }
        }
    }
    HardNegatives {
        pairs,
        hardest_text_for_image: (0..n).map(|i| argmax_excluding(n, i, |j| s.get(i, j))).collect(),
        hardest_image_for_text: (0..n).map(|j| argmax_excluding(n, j, |i| s.get(i, j))).collect(),
    }
}

/// Whether `epoch` falls in the random-selection phase of semi-hard mining.
pub fn in_random_phase(epoch: usize, cfg: &TrainConfig) -> bool {
    (epoch as f64) < cfg.semi_hard_switch_fraction * cfg.epochs as f64
}

/// Semi-hard negatives, one per anchor image.
///
/// Early epochs draw a uniformly random non-matching text from `rng`. Later
/// epochs take the most similar text still scoring below the positive;
/// anchors with no such text are skipped.
pub fn mine_semi_hard<R: Rng + ?Sized>(
    s: &SimilarityMatrix,
    epoch: usize,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let n = s.n();
    if n < 2 {
        return Vec::new();
    }
    if in_random_phase(epoch, cfg) {
        return (0..n)
            .map(|i| {
                let j = rng.random_range(0..n - 1);
                (i, if j >= i { j + 1 } else { j })
            })
            .collect();
    }
    let mut out = Vec::new();
    for i in 0..n {
        let positive = s.get(i, i);
        let mut best: Option<(usize, f64)> = None;
        for j in (0..n).filter(|&j| j != i) {
            let v = s.get(i, j);
            if v < positive && best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        if let Some((j, _)) = best {
            out.push((i, j));
        }
    }
    out
}
