//! Per-state infidelities and their summary statistics.

use serde::Serialize;

use super::mlp::MlpModel;
use super::train::{self, Samples};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfidelitySummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p05: f64,
    pub p95: f64,
    pub min: f64,
    pub max: f64,
    /// Log-spaced bins; values below the first edge are counted in the first bin.
    pub histogram: Vec<HistogramBin>,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub infidelities: Vec<f64>,
    pub summary: InfidelitySummary,
}

/// Linear-interpolated percentile of sorted data, `q` in `[0, 100]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `bins` log-spaced bins covering `[1e-8, 1]`.
pub fn log_histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    let (lo, hi) = (-8.0f64, 0.0f64);
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|k| HistogramBin {
            lower: 10f64.powf(lo + k as f64 * width),
            upper: 10f64.powf(lo + (k + 1) as f64 * width),
            count: 0,
        })
        .collect();
    for &v in values {
        let k = if v > 0.0 { ((v.log10() - lo) / width).floor() } else { 0.0 };
        let k = (k.max(0.0) as usize).min(bins - 1);
        out[k].count += 1;
    }
    out
}

pub fn summarize(values: &[f64]) -> Result<InfidelitySummary> {
    if values.is_empty() {
        return Err(Error::Domain("no infidelities to summarize".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(InfidelitySummary {
        count: values.len(),
        mean: values.iter().sum::<f64>() / values.len() as f64,
        median: percentile(&sorted, 50.0),
        p05: percentile(&sorted, 5.0),
        p95: percentile(&sorted, 95.0),
        min: sorted[0],
        max: *sorted.last().unwrap(),
        histogram: log_histogram(values, 16),
    })
}

pub fn evaluate(model: &MlpModel, samples: &Samples) -> Result<Evaluation> {
    if samples.d() != model.d {
        return Err(Error::DimensionMismatch(format!("model d = {} but states have d = {}", model.d, samples.d())));
    }
    let infidelities = train::infidelities(model, samples)?;
    let summary = summarize(&infidelities)?;
    Ok(Evaluation { infidelities, summary })
}
