//! Confusion counts, the four diagnostic indicators and their confidence
//! intervals over evaluation tasks.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = ConfusionCounts;
    fn add(self, o: Self) -> Self {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

/// Contingency table with `positive` as the detected class; every other
/// class counts as negative.
pub fn confusion(predictions: &[usize], labels: &[usize], positive: usize) -> Result<ConfusionCounts> {
    if predictions.len() != labels.len() {
        return Err(Error::Metrics(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p == positive, y == positive) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Indicator values for one task. `None` marks a zero denominator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Indicators {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn indicators(c: &ConfusionCounts) -> Result<Indicators> {
    let total = c.total();
    if total == 0 {
        return Err(Error::Metrics("no evaluated examples".into()));
    }
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(Indicators {
        accuracy: (c.tp + c.tn) as f64 / total as f64,
        precision,
        recall,
        f1,
    })
}

/// Mean of one indicator over tasks, with the undefined tasks counted apart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub halfwidth: Option<f64>,
    /// Tasks with a defined value.
    pub n: usize,
    /// Tasks where the indicator was undefined.
    pub excluded: usize,
}

impl MetricSummary {
    /// `mean±halfwidth` with three decimals, e.g. `0.885±0.020`.
    pub fn display(&self) -> String {
        match (self.mean, self.halfwidth) {
            (Some(m), Some(h)) => format!("{m:.3}±{h:.3}"),
            (Some(m), None) => format!("{m:.3}"),
            _ => "undefined".to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: MetricSummary,
    pub precision: MetricSummary,
    pub recall: MetricSummary,
    pub f1: MetricSummary,
    pub n_tasks: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CiMethod {
    /// `z * sample_sd / sqrt(n)`.
    Normal { z: f64 },
    /// Half the width of the central percentile interval of bootstrap means.
    Bootstrap { resamples: usize, seed: u64 },
}

impl Default for CiMethod {
    fn default() -> Self {
        CiMethod::Normal { z: 1.96 }
    }
}

fn summarize(values: &[Option<f64>], method: CiMethod) -> MetricSummary {
    let mut defined: Vec<f64> = values.iter().flatten().copied().collect();
    // summing in sorted order makes the result independent of task order
    defined.sort_by(|a, b| a.total_cmp(b));
    let n = defined.len();
    let excluded = values.len() - n;
    if n == 0 {
        return MetricSummary {
            mean: None,
            halfwidth: None,
            n,
            excluded,
        };
    }
    let mean = if defined[0] == defined[n - 1] {
        defined[0]
    } else {
        defined.iter().sum::<f64>() / n as f64
    };
    let halfwidth = (n >= 2).then(|| match method {
        CiMethod::Normal { z } => {
            let var = defined.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            z * var.sqrt() / (n as f64).sqrt()
        }
        CiMethod::Bootstrap { resamples, seed } => bootstrap_halfwidth(&defined, resamples.max(1), seed),
    });
    MetricSummary {
        mean: Some(mean),
        halfwidth,
        n,
        excluded,
    }
}

fn bootstrap_halfwidth(values: &[f64], resamples: usize, seed: u64) -> f64 {
    let mut rng = SimRng::seed_from_u64(seed);
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(|a, b| a.total_cmp(b));
    let at = |q: f64| means[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    (at(0.975) - at(0.025)) / 2.0
}

/// Per-task indicators aggregated to means with 95% normal-approximation
/// half-widths.
pub fn aggregate(per_task: &[Indicators]) -> Result<MetricsReport> {
    aggregate_with(per_task, CiMethod::default())
}

pub fn aggregate_with(per_task: &[Indicators], method: CiMethod) -> Result<MetricsReport> {
    if per_task.len() < 2 {
        return Err(Error::Metrics(format!(
            "confidence intervals need at least 2 tasks, got {}",
            per_task.len()
        )));
    }
    let col = |f: fn(&Indicators) -> Option<f64>| -> Vec<Option<f64>> { per_task.iter().map(f).collect() };
    Ok(MetricsReport {
        accuracy: summarize(&col(|i| Some(i.accuracy)), method),
        precision: summarize(&col(|i| i.precision), method),
        recall: summarize(&col(|i| i.recall), method),
        f1: summarize(&col(|i| i.f1), method),
        n_tasks: per_task.len(),
    })
}
