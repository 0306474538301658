use serde::{Deserialize, Serialize};

use super::OfflineDataset;
use crate::error::{OrlError, Result};

pub const DEFAULT_NORM_EPSILON: f64 = 1e-3;

/// Per-feature state statistics: `s ← (s − mu) / (sigma + epsilon)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mu: Vec<f64>,
    /// Population standard deviation.
    pub sigma: Vec<f64>,
    pub epsilon: f64,
}

impl NormalizationStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu.len() != self.sigma.len() {
            return Err(OrlError::shape("normalization stats", self.mu.len(), self.sigma.len()));
        }
        if !(self.epsilon > 0.0) {
            return Err(OrlError::InvalidArgument(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.sigma.iter().any(|s| !(*s >= 0.0)) || self.mu.iter().any(|m| !m.is_finite()) {
            return Err(OrlError::InvalidArgument("sigma must be finite and non-negative, mu finite".into()));
        }
        Ok(())
    }

    /// Normalizes a single state vector.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(OrlError::shape("apply_normalization", self.dim(), x.len()));
        }
        Ok(x.iter()
            .zip(&self.mu)
            .zip(&self.sigma)
            .map(|((v, m), s)| (v - m) / (s + self.epsilon))
            .collect())
    }

    pub(crate) fn apply_flat(&self, data: &mut [f64]) {
        let dim = self.dim();
        for row in data.chunks_exact_mut(dim) {
            for ((v, m), s) in row.iter_mut().zip(&self.mu).zip(&self.sigma) {
                *v = (*v - m) / (s + self.epsilon);
            }
        }
    }
}

/// Per-feature mean and population standard deviation of every `state` in `d`.
/// `next_state`, actions and rewards are not included.
pub fn compute_normalization(d: &OfflineDataset, epsilon: f64) -> NormalizationStats {
    let (mu, sigma) = feature_moments(d.states_flat(), d.obs_dim());
    NormalizationStats { mu, sigma, epsilon }
}

/// Two-pass mean and population standard deviation of row-major `dim`-wide rows.
pub(crate) fn feature_moments(data: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = (data.len() / dim.max(1)) as f64;
    let mut mu = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for (m, v) in mu.iter_mut().zip(row) {
            *m += v;
        }
    }
    mu.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for ((acc, v), m) in var.iter_mut().zip(row).zip(&mu) {
            let d = v - m;
            *acc += d * d;
        }
    }
    let sigma = var.into_iter().map(|v| (v / n).sqrt()).collect();
    (mu, sigma)
}

/// Returns a copy of `d` with `state` and `next_state` normalized by `stats`;
/// `stats` is recorded on the result. Applying this twice normalizes twice.
pub fn apply_normalization(d: &OfflineDataset, stats: &NormalizationStats) -> Result<OfflineDataset> {
    stats.validate()?;
    if stats.dim() != d.obs_dim() {
        return Err(OrlError::shape("apply_normalization", d.obs_dim(), stats.dim()));
    }
    let mut out = d.clone();
    stats.apply_flat(&mut out.states);
    stats.apply_flat(&mut out.next_states);
    out.stats = Some(stats.clone());
    Ok(out)
}
