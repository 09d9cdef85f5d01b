use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fixture::{Metric, METRICS};
use super::stats::{paired_t_test, relative_improvement, PairedSample, TTestResult};
use super::text::{rouge_l, RougeLScore};
use super::text_cosine;
use crate::augmentation::baseline_generate;
use crate::error::{Error, Result};
use crate::pipeline::{Pipeline, PipelineOptions};
use crate::retrieval::QueryConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusItem {
    pub id: String,
    pub image: Vec<u8>,
    pub reference: String,
}

/// One experimental condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arm {
    /// Full pipeline: projected query, composite image, retrieval prompt.
    WithRag,
    /// The new image alone with the plain prompt.
    WithoutRag,
    Ablation { projection: bool, concatenation: bool },
}

impl Arm {
    pub fn name(&self) -> String {
        match self {
            Arm::WithRag => "with_rag".into(),
            Arm::WithoutRag => "without_rag".into(),
            Arm::Ablation {
                projection,
                concatenation,
            } => format!(
                "ablation_projection_{}_concat_{}",
                if *projection { "on" } else { "off" },
                if *concatenation { "on" } else { "off" }
            ),
        }
    }

    /// The two single-component ablations: head off, and concatenation off.
    pub fn ablations() -> [Arm; 2] {
        [
            Arm::Ablation {
                projection: false,
                concatenation: true,
            },
            Arm::Ablation {
                projection: true,
                concatenation: false,
            },
        ]
    }

    fn pipeline_options(&self, query: QueryConfig) -> Option<PipelineOptions> {
        let (use_projection, concatenate) = match *self {
            Arm::WithRag => (true, true),
            Arm::WithoutRag => return None,
            Arm::Ablation {
                projection,
                concatenation,
            } => (projection, concatenation),
        };
        Some(PipelineOptions {
            query,
            use_projection,
            concatenate,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub alpha: f64,
    pub arms: Vec<Arm>,
    pub seed: u64,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            alpha: crate::retrieval::DEFAULT_ALPHA,
            arms: vec![Arm::WithRag, Arm::WithoutRag],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemOutcome {
    pub index: usize,
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retrieved_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rouge_l: Option<RougeLScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cosine: Option<f64>,
    /// Why the item has no scores, if it was skipped.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

impl ItemOutcome {
    fn metric(&self, m: Metric) -> Option<f64> {
        let r = self.rouge_l.as_ref()?;
        Some(match m {
            Metric::Cosine => self.cosine?,
            Metric::F1 => r.f1,
            Metric::Precision => r.precision,
            Metric::Recall => r.recall,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub cosine: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

impl MetricMeans {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Cosine => self.cosine,
            Metric::F1 => self.f1,
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: Arm,
    pub name: String,
    pub scored: usize,
    pub skipped: usize,
    /// Absent when every item was skipped.
    pub means: Option<MetricMeans>,
    pub items: Vec<ItemOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TTestOutcome {
    Ok {
        #[serde(flatten)]
        result: TTestResult,
    },
    InsufficientData { n: usize },
    DegenerateVariance { n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestBlock {
    pub arm: String,
    pub baseline: String,
    pub metric: Metric,
    pub n: usize,
    /// Percent change of the paired means; absent for a zero baseline.
    pub relative_improvement: Option<f64>,
    pub outcome: TTestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub store_checksum: String,
    pub seed: u64,
    pub store_size: usize,
    pub corpus_size: usize,
    pub projection_head: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub provenance: Provenance,
    pub arms: Vec<ArmSummary>,
    pub t_tests: Vec<TTestBlock>,
}

impl EvalReport {
    pub fn arm(&self, arm: Arm) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.arm == arm)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Data(format!("report serialization: {e}")))
    }
}

fn evaluate_item(index: usize, item: &CorpusItem, arm: Arm, pipeline: &Pipeline<'_>, query: QueryConfig) -> ItemOutcome {
    let mut out = ItemOutcome {
        index,
        id: item.id.clone(),
        retrieved_index: None,
        generated: None,
        rouge_l: None,
        cosine: None,
        skipped: None,
    };
    let generated = match arm.pipeline_options(query) {
        None => baseline_generate(&item.image, pipeline.generator).map_err(|e| format!("generation: {e}")),
        Some(opts) => pipeline.describe(&item.image, &opts).map(|o| {
            out.retrieved_index = Some(o.retrieved.index);
            o.description
        }).map_err(|e| e.to_string()),
    };
    let generated = match generated {
        Ok(g) => g,
        Err(reason) => {
            out.skipped = Some(reason);
            return out;
        }
    };
    match text_cosine(&generated, &item.reference, pipeline.gateway) {
        Ok(c) => {
            out.rouge_l = Some(rouge_l(&generated, &item.reference));
            out.cosine = Some(c);
        }
        Err(e) => out.skipped = Some(format!("text metric: {e}")),
    }
    out.generated = Some(generated);
    out
}

fn summarize(arm: Arm, items: Vec<ItemOutcome>) -> ArmSummary {
    let scored: Vec<&ItemOutcome> = items.iter().filter(|i| i.skipped.is_none()).collect();
    let mean = |m: Metric| scored.iter().filter_map(|i| i.metric(m)).sum::<f64>() / scored.len() as f64;
    let means = (!scored.is_empty()).then(|| MetricMeans {
        cosine: mean(Metric::Cosine),
        f1: mean(Metric::F1),
        precision: mean(Metric::Precision),
        recall: mean(Metric::Recall),
    });
    ArmSummary {
        arm,
        name: arm.name(),
        scored: scored.len(),
        skipped: items.len() - scored.len(),
        means,
        items,
    }
}

fn compare(arm: &ArmSummary, baseline: &ArmSummary, metric: Metric) -> Result<TTestBlock> {
    let mut samples = Vec::new();
    for (a, b) in arm.items.iter().zip(&baseline.items) {
        if let (Some(x), Some(y)) = (a.metric(metric), b.metric(metric)) {
            samples.push(PairedSample::new(&a.id, x, y)?);
        }
    }
    let n = samples.len();
    let outcome = match paired_t_test(&samples) {
        Ok(result) => TTestOutcome::Ok { result },
        Err(Error::InsufficientData(_)) => TTestOutcome::InsufficientData { n },
        Err(Error::DegenerateVariance) => TTestOutcome::DegenerateVariance { n },
        Err(e) => return Err(e),
    };
    let relative = if n == 0 {
        None
    } else {
        let mx = samples.iter().map(|s| s.with_rag).sum::<f64>() / n as f64;
        let my = samples.iter().map(|s| s.without_rag).sum::<f64>() / n as f64;
        relative_improvement(mx, my).ok()
    };
    Ok(TTestBlock {
        arm: arm.name.clone(),
        baseline: baseline.name.clone(),
        metric,
        n,
        relative_improvement: relative,
        outcome,
    })
}

/// Runs every configured arm over the corpus and pairs each retrieval arm
/// against the no-retrieval arm. Items are evaluated in parallel and
/// reported in corpus order.
pub fn run_comparison(corpus: &[CorpusItem], pipeline: &Pipeline<'_>, cfg: &ComparisonConfig) -> Result<EvalReport> {
    if corpus.is_empty() {
        return Err(Error::Precondition("corpus is empty".into()));
    }
    if cfg.arms.is_empty() {
        return Err(Error::Precondition("no arms selected".into()));
    }
    let query = QueryConfig::new(cfg.alpha, 1)?;
    if cfg.arms.iter().any(|a| *a != Arm::WithoutRag) && pipeline.store.is_empty() {
        return Err(Error::EmptyStore);
    }

    let mut arms = Vec::new();
    for &arm in &cfg.arms {
        if arms.iter().any(|s: &ArmSummary| s.arm == arm) {
            continue;
        }
        let items: Vec<ItemOutcome> = corpus
            .par_iter()
            .enumerate()
            .map(|(i, item)| evaluate_item(i, item, arm, pipeline, query))
            .collect();
        arms.push(summarize(arm, items));
    }

    let mut t_tests = Vec::new();
    if let Some(baseline) = arms.iter().find(|a| a.arm == Arm::WithoutRag) {
        for arm in arms.iter().filter(|a| a.arm != Arm::WithoutRag) {
            for metric in METRICS {
                t_tests.push(compare(arm, baseline, metric)?);
            }
        }
    }

    let config_json = serde_json::to_vec(cfg).map_err(|e| Error::Data(e.to_string()))?;
    Ok(EvalReport {
        provenance: Provenance {
            config_hash: format!("{:08x}", crc32fast::hash(&config_json)),
            store_checksum: format!("{:08x}", pipeline.store.checksum()?),
            seed: cfg.seed,
            store_size: pipeline.store.len(),
            corpus_size: corpus.len(),
            projection_head: pipeline.head.is_some(),
        },
        arms,
        t_tests,
    })
}
