use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stats::PairedSample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Cosine,
    F1,
    Precision,
    Recall,
}

pub const METRICS: [Metric; 4] = [Metric::Cosine, Metric::F1, Metric::Precision, Metric::Recall];

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::F1 => "f1",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub cosine: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

impl MetricRow {
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
pub struct ModelRow {
    pub model: String,
    pub with_rag: MetricRow,
    pub without_rag: MetricRow,
}

/// Per-model scores with and without retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Fixture {
    pub models: Vec<ModelRow>,
}

impl Table2Fixture {
    pub fn from_json(text: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(text).map_err(|e| Error::Data(format!("malformed fixture: {e}")))?;
        if f.models.is_empty() {
            return Err(Error::Data("fixture lists no models".into()));
        }
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn model(&self, name: &str) -> Option<&ModelRow> {
        self.models.iter().find(|m| m.model == name)
    }

    pub fn samples(&self, metric: Metric) -> Result<Vec<PairedSample>> {
        self.models
            .iter()
            .map(|m| PairedSample::new(&m.model, m.with_rag.get(metric), m.without_rag.get(metric)))
            .collect()
    }
}
