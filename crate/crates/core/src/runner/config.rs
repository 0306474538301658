use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::Td3bcConfig;
use crate::datasets::DatasetTier;
use crate::error::{OrlError, Result};
use crate::metrics::{DEFAULT_EPISODES_PER_EVAL, FINAL_WINDOW};

pub const DESK_TOTAL_STEPS: u64 = 50_000;
pub const DESK_EVAL_EVERY: u64 = 2_500;
pub const PAPER_TOTAL_STEPS: u64 = 1_000_000;
pub const PAPER_EVAL_EVERY: u64 = 5_000;
pub const OUTPUT_DIR_ENV: &str = "ORL_OUTPUT_DIR";

/// Where a run's dataset comes from: a file, or a fresh generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSource {
    pub path: Option<PathBuf>,
    pub tier: DatasetTier,
    pub size: usize,
    pub seed: u64,
}

impl Default for DatasetSource {
    fn default() -> Self {
        Self {
            path: None,
            tier: DatasetTier::Expert,
            size: 100_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub env: String,
    pub total_steps: u64,
    pub eval_every: u64,
    pub episodes_per_eval: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Seeds trained concurrently; results do not depend on it.
    pub jobs: usize,
    pub dataset: DatasetSource,
    pub agent: Td3bcConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: "lqr1d".into(),
            total_steps: DESK_TOTAL_STEPS,
            eval_every: DESK_EVAL_EVERY,
            episodes_per_eval: DEFAULT_EPISODES_PER_EVAL,
            seeds: vec![0, 1, 2],
            output_dir: default_output_dir(),
            jobs: 1,
            dataset: DatasetSource::default(),
            agent: Td3bcConfig::default(),
        }
    }
}

/// `$ORL_OUTPUT_DIR`, or `runs` when unset.
pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

#[derive(Serialize)]
struct Fingerprint<'a> {
    env: &'a str,
    total_steps: u64,
    eval_every: u64,
    episodes_per_eval: usize,
    dataset: &'a DatasetSource,
    agent: &'a Td3bcConfig,
}

impl ExperimentConfig {
    /// Step budget, evaluation cadence and network width of the original
    /// protocol.
    pub fn paper_parity() -> Self {
        Self {
            total_steps: PAPER_TOTAL_STEPS,
            eval_every: PAPER_EVAL_EVERY,
            seeds: vec![0, 1, 2, 3, 4],
            agent: Td3bcConfig::paper_parity(),
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| OrlError::InvalidArgument(format!("config: {e}")))
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| OrlError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        let fail = |msg: String| Err(OrlError::InvalidArgument(msg));
        if self.total_steps == 0 || self.eval_every == 0 || self.total_steps % self.eval_every != 0 {
            return fail(format!(
                "eval_every ({}) must be positive and divide total_steps ({})",
                self.eval_every, self.total_steps
            ));
        }
        if self.total_steps / self.eval_every < FINAL_WINDOW as u64 {
            return fail(format!(
                "{} evaluations scheduled; the final score needs at least {FINAL_WINDOW}",
                self.total_steps / self.eval_every
            ));
        }
        if self.episodes_per_eval == 0 {
            return fail("episodes_per_eval must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return fail("at least one seed is required".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return fail(format!("seeds must be distinct, got {:?}", self.seeds));
        }
        if self.jobs == 0 {
            return fail("jobs must be at least 1".into());
        }
        Ok(())
    }

    /// Hash of every setting except seeds, output location and parallelism.
    pub fn fingerprint(&self) -> String {
        let fp = Fingerprint {
            env: &self.env,
            total_steps: self.total_steps,
            eval_every: self.eval_every,
            episodes_per_eval: self.episodes_per_eval,
            dataset: &self.dataset,
            agent: &self.agent,
        };
        hex::encode(Sha256::digest(serde_json::to_vec(&fp).expect("fingerprint serializes")))
    }
}
