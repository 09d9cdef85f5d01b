use serde::{Deserialize, Serialize};
pub use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub label: String,
    pub with_rag: f64,
    pub without_rag: f64,
}

impl PairedSample {
    pub fn new(label: impl Into<String>, with_rag: f64, without_rag: f64) -> Result<Self> {
        if !with_rag.is_finite() || !without_rag.is_finite() {
            return Err(Error::Data("paired sample values must be finite".into()));
        }
        Ok(Self {
            label: label.into(),
            with_rag,
            without_rag,
        })
    }

    pub fn difference(&self) -> f64 {
        self.with_rag - self.without_rag
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    /// Two-tailed.
    pub p: f64,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub n: usize,
}

impl TTestResult {
    pub fn degrees_of_freedom(&self) -> usize {
        self.n - 1
    }
}

pub fn paired_t_test(samples: &[PairedSample]) -> Result<TTestResult> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("paired t-test needs n >= 2, got {n}")));
    }
    let d: Vec<f64> = samples.iter().map(PairedSample::difference).collect();
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::Data("paired sample values must be finite".into()));
    }
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let ss: f64 = d.iter().map(|x| (x - mean).powi(2)).sum();
    let sd = (ss / (nf - 1.0)).sqrt();
    if sd == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let t = mean / (sd / nf.sqrt());
    Ok(TTestResult {
        t,
        p: two_tailed_p(t, nf - 1.0),
        mean_diff: mean,
        sd_diff: sd,
        n,
    })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn two_tailed_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5)
}

/// Percent change of `with_rag` over `without_rag`.
pub fn relative_improvement(with_rag: f64, without_rag: f64) -> Result<f64> {
    if without_rag == 0.0 {
        return Err(Error::DegenerateInput("baseline value is zero".into()));
    }
    Ok(100.0 * (with_rag - without_rag) / without_rag)
}

/// `I_x(a, b)`, evaluated by continued fraction.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    statrs::function::beta::beta_reg(a, b, x.clamp(0.0, 1.0))
}
