//! Evaluation: ROUGE-L, the embedding-cosine text metric, paired t-tests,
//! and the arm-by-arm comparison report.

mod fixture;
mod report;
mod stats;
mod text;

pub use fixture::{Metric, ModelRow, MetricRow, Table2Fixture, METRICS};
pub use report::{
    run_comparison, Arm, ArmSummary, ComparisonConfig, CorpusItem, EvalReport, ItemOutcome, MetricMeans,
    Provenance, TTestBlock, TTestOutcome,
};
pub use stats::{
    ln_gamma, paired_t_test, regularized_incomplete_beta, relative_improvement, two_tailed_p, PairedSample,
    TTestResult,
};
pub use text::{lcs_length, rouge_l, tokenize, RougeLScore};

use crate::embedding::EmbeddingGateway;
use crate::error::{Error, Result};
use crate::retrieval::cosine;

fn pair_error(index: usize, e: Error) -> Error {
    match e {
        Error::Transport { message, retriable } => Error::Transport {
            message: format!("pair {index}: {message}"),
            retriable,
        },
        Error::Schema(m) => Error::Schema(format!("pair {index}: {m}")),
        Error::Data(m) => Error::Data(format!("pair {index}: {m}")),
        Error::Precondition(m) => Error::Precondition(format!("pair {index}: {m}")),
        Error::DegenerateInput(m) => Error::DegenerateInput(format!("pair {index}: {m}")),
        other => other,
    }
}

/// Cosine between the text embeddings of one generated/reference pair.
pub fn text_cosine(generated: &str, reference: &str, gateway: &EmbeddingGateway) -> Result<f64> {
    let g = gateway.embed_text(generated)?;
    let r = gateway.embed_text(reference)?;
    cosine(&g, &r)
}

/// Arithmetic mean of per-pair text cosines. Errors carry the pair index.
pub fn mean_cosine_metric(generated: &[String], references: &[String], gateway: &EmbeddingGateway) -> Result<f64> {
    if generated.len() != references.len() {
        return Err(Error::Precondition(format!(
            "{} generated texts but {} references",
            generated.len(),
            references.len()
        )));
    }
    if generated.is_empty() {
        return Err(Error::Precondition("at least one pair is required".into()));
    }
    let mut sum = 0.0;
    for (i, (g, r)) in generated.iter().zip(references).enumerate() {
        sum += text_cosine(g, r, gateway).map_err(|e| pair_error(i, e))?;
    }
    Ok(sum / generated.len() as f64)
}
