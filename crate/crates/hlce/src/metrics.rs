//! Evaluation metrics and empirical convergence-rate extraction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("rate slope needs at least 3 points with distinct sizes")]
    TooFewPoints,
    #[error("rate slope requires positive errors, got {0}")]
    NonPositiveError(f64),
}

/// Precision in the estimation of heterogeneous effects: the root mean
/// squared difference between estimated and true effects.
pub fn pehe(tau_hat: &[f64], tau: &[f64]) -> Result<f64, MetricsError> {
    if tau_hat.len() != tau.len() {
        return Err(MetricsError::LengthMismatch(tau_hat.len(), tau.len()));
    }
    if tau.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mse = tau_hat
        .iter()
        .zip(tau)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / tau.len() as f64;
    Ok(mse.sqrt())
}

/// Absolute error of the average effect, normalized by the sample size.
pub fn ate_error(tau_hat: &[f64], tau: &[f64]) -> Result<f64, MetricsError> {
    if tau_hat.len() != tau.len() {
        return Err(MetricsError::LengthMismatch(tau_hat.len(), tau.len()));
    }
    if tau.is_empty() {
        return Err(MetricsError::Empty);
    }
    let diff: f64 = tau.iter().sum::<f64>() - tau_hat.iter().sum::<f64>();
    Ok((diff / tau.len() as f64).abs())
}

/// Unnormalized variant |sum tau - sum tau_hat|, reproducing the literal
/// printed formula.
pub fn ate_error_unnormalized(tau_hat: &[f64], tau: &[f64]) -> Result<f64, MetricsError> {
    ate_error(tau_hat, tau).map(|e| e * tau.len() as f64)
}

/// Ordinary least-squares slope of log(err) on log(n).
pub fn rate_slope(points: &[(usize, f64)]) -> Result<f64, MetricsError> {
    if points.len() < 3 {
        return Err(MetricsError::TooFewPoints);
    }
    let mut sizes: Vec<usize> = points.iter().map(|p| p.0).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(MetricsError::TooFewPoints);
    }
    for &(_, err) in points {
        if err <= 0.0 {
            return Err(MetricsError::NonPositiveError(err));
        }
    }
    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points
        .iter()
        .map(|&(size, err)| ((size as f64).ln(), err.ln()))
        .collect();
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (x, y) in logs {
        cov += (x - mean_x) * (y - mean_y);
        var += (x - mean_x) * (x - mean_x);
    }
    Ok(cov / var)
}

/// One replication-level result row of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub estimator: String,
    pub preset: String,
    pub n_e: usize,
    pub n_o: usize,
    pub seed: u64,
    pub pehe: f64,
    pub ate_error: f64,
    pub wall_ms: u64,
}
