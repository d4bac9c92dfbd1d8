//! Sample summaries and the two-sample Kolmogorov–Smirnov distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SUMMARY_PROBS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    /// Quantiles at [`SUMMARY_PROBS`].
    pub quantiles: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks_distance: Option<f64>,
}

fn sorted(sample: &[f64]) -> Vec<f64> {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(sample: &[f64], p: f64) -> Result<f64> {
    if sample.is_empty() || !(0.0..=1.0).contains(&p) {
        return Err(Error::Config("quantile needs a non-empty sample and p in [0, 1]".into()));
    }
    Ok(quantile_sorted(&sorted(sample), p))
}

pub fn median(sample: &[f64]) -> Result<f64> {
    quantile(sample, 0.5)
}

pub fn summarize(sample: &[f64]) -> Result<SummaryStats> {
    if sample.is_empty() {
        return Err(Error::Config("cannot summarize an empty sample".into()));
    }
    let s = sorted(sample);
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let variance = if s.len() > 1 { s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Ok(SummaryStats {
        quantiles: SUMMARY_PROBS.iter().map(|&p| quantile_sorted(&s, p)).collect(),
        mean,
        variance,
        count: s.len(),
        ks_distance: None,
    })
}

/// `sup_x |F_a(x) − F_b(x)|` over the empirical distribution functions.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Config("KS distance needs non-empty samples".into()));
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}
