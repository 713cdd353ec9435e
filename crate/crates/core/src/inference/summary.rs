//! Pointwise posterior summaries from stored draws.

use serde::Serialize;

use crate::error::{Result, VecchiaError};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainSummary {
    pub mean: Vec<f64>,
    pub q025: Vec<f64>,
    pub q975: Vec<f64>,
    pub sigma2_trace: Vec<f64>,
    pub tau_trace: Vec<f64>,
    pub cg_iters_mean: f64,
    /// Acceptance rate of the scale updates, if any were attempted.
    pub acceptance_rate: Option<f64>,
}

/// Empirical quantile with linear interpolation between order statistics:
/// for sorted `x[0..n]` and `h = (n - 1) p`, returns
/// `x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h])`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean and 2.5% / 97.5% quantiles of every coordinate over `draws`.
pub fn posterior_summary(draws: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let first = draws.first().ok_or(VecchiaError::EmptyTrace)?;
    let n = first.len();
    let k = draws.len() as f64;
    let mut mean = vec![0.0; n];
    let mut q025 = vec![0.0; n];
    let mut q975 = vec![0.0; n];
    let mut column = Vec::with_capacity(draws.len());
    for j in 0..n {
        column.clear();
        column.extend(draws.iter().map(|d| d[j]));
        mean[j] = column.iter().sum::<f64>() / k;
        column.sort_by(f64::total_cmp);
        q025[j] = quantile(&column, 0.025);
        q975[j] = quantile(&column, 0.975);
    }
    Ok((mean, q025, q975))
}
