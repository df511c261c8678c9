//! Demonstration likelihoods and their per-trajectory ranking weights.

use super::DemoData;
use crate::error::{invalid_arg, Result};
use crate::nets::{log_prob_batch, PolicyParams};

/// Mean negative action log-likelihood of one trajectory's log densities.
pub fn mean_neg_log_likelihood(log_probs: &[f64]) -> Result<f64> {
    if log_probs.is_empty() {
        return Err(invalid_arg("trajectory has no pairs"));
    }
    Ok(-log_probs.iter().sum::<f64>() / log_probs.len() as f64)
}

/// `l_k` for every demonstration under the current policy.
pub fn traj_neg_log_likelihood(params: &PolicyParams, demos: &DemoData) -> Result<Vec<f64>> {
    let (lps, _) = log_prob_batch(params, &demos.batch, &demos.actions, None, None)?;
    demos
        .ranges
        .iter()
        .map(|r| mean_neg_log_likelihood(&lps[r.clone()]))
        .collect()
}

/// Min-max normalization to [0, 1]; all ones when every value is equal.
pub fn normalized_weights(l_values: &[f64]) -> Result<Vec<f64>> {
    if l_values.is_empty() {
        return Err(invalid_arg("no trajectories to weight"));
    }
    if l_values.iter().any(|v| !v.is_finite()) {
        return Err(invalid_arg("non-finite likelihood value"));
    }
    let lo = l_values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = l_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(vec![1.0; l_values.len()]);
    }
    Ok(l_values.iter().map(|v| (v - lo) / (hi - lo)).collect())
}
