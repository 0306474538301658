use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{OrlError, Result};

pub const DESK_HIDDEN: [usize; 2] = [64, 64];
pub const PAPER_HIDDEN: [usize; 2] = [256, 256];

/// Learner hyperparameters and ablation switches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Td3bcConfig {
    pub alpha: f64,
    pub discount: f64,
    pub tau: f64,
    pub policy_noise: f64,
    pub noise_clip: f64,
    pub policy_freq: u64,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden_sizes: Vec<usize>,
    pub use_bc_term: bool,
    pub use_q_term: bool,
    pub use_state_norm: bool,
    pub lambda_floor: f64,
}

impl Default for Td3bcConfig {
    fn default() -> Self {
        Self {
            alpha: 2.5,
            discount: 0.99,
            tau: 5e-3,
            policy_noise: 0.2,
            noise_clip: 0.5,
            policy_freq: 2,
            batch_size: 256,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            hidden_sizes: DESK_HIDDEN.to_vec(),
            use_bc_term: true,
            use_q_term: true,
            use_state_norm: true,
            lambda_floor: 1e-8,
        }
    }
}

impl Td3bcConfig {
    /// Default hyperparameters with 256-unit hidden layers.
    pub fn paper_parity() -> Self {
        Self {
            hidden_sizes: PAPER_HIDDEN.to_vec(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(OrlError::InvalidArgument(msg));
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return fail(format!("discount must be in (0, 1), got {}", self.discount));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return fail(format!("tau must be in (0, 1], got {}", self.tau));
        }
        if self.policy_freq < 1 {
            return fail("policy_freq must be at least 1".into());
        }
        if !(self.noise_clip >= 0.0) || !(self.policy_noise >= 0.0) {
            return fail("policy_noise and noise_clip must be non-negative".into());
        }
        if !self.use_bc_term && !self.use_q_term {
            return fail("at least one of the BC term and the Q term must be enabled".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return fail("learning rates must be positive".into());
        }
        if !(self.lambda_floor > 0.0) || !self.alpha.is_finite() {
            return fail("lambda_floor must be positive and alpha finite".into());
        }
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return fail("hidden sizes must be positive".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
