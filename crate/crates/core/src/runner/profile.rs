use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{agent_init, train_step, Td3bcConfig, TrainState};
use crate::datasets::OfflineDataset;
use crate::envs::EnvSpec;
use crate::error::{OrlError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MachineDescriptor {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
    pub cpu_model: Option<String>,
}

pub fn machine_descriptor() -> MachineDescriptor {
    let cpu_model = std::fs::read_to_string("/proc/cpuinfo").ok().and_then(|info| {
        info.lines()
            .find(|l| l.starts_with("model name"))
            .and_then(|l| l.split_once(':'))
            .map(|(_, v)| v.trim().to_string())
    });
    MachineDescriptor {
        os: std::env::consts::OS.into(),
        arch: std::env::consts::ARCH.into(),
        logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
        cpu_model,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub name: String,
    pub steps: u64,
    pub total_seconds: f64,
    pub per_step_seconds: f64,
    /// Per-step time of each timed block, in execution order.
    pub block_per_step_seconds: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub env_name: String,
    pub steps_per_config: u64,
    pub blocks: u64,
    pub warmup_steps: u64,
    pub entries: Vec<ProfileEntry>,
    /// Percent change of each entry's per-step time relative to the first.
    pub relative_to_first_percent: Vec<f64>,
    pub machine: MachineDescriptor,
}

impl ProfileReport {
    pub fn entry(&self, name: &str) -> Option<&ProfileEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Percent overhead of `candidate` over `reference` per-step time.
    pub fn overhead_percent(&self, candidate: &str, reference: &str) -> Option<f64> {
        let c = self.entry(candidate)?.per_step_seconds;
        let r = self.entry(reference)?.per_step_seconds;
        Some(100.0 * (c - r) / r)
    }
}

/// Times `steps` training steps (no evaluation) for each named config.
///
/// Steps are split into `blocks` and the configs take turns block by block,
/// so slow drifts in machine load are shared evenly between them. Each config
/// first runs `warmup_steps` untimed steps.
pub fn profile_configs(
    spec: &EnvSpec,
    data: &OfflineDataset,
    configs: &[(String, Td3bcConfig)],
    steps: u64,
    blocks: u64,
    warmup_steps: u64,
    seed: u64,
) -> Result<ProfileReport> {
    if configs.is_empty() || blocks == 0 || steps < blocks {
        return Err(OrlError::InvalidArgument(format!(
            "profile needs at least one config and steps ({steps}) >= blocks ({blocks}) >= 1"
        )));
    }
    let mut runs: Vec<(TrainState, ChaCha8Rng)> = configs
        .iter()
        .map(|(_, cfg)| Ok((agent_init(spec, cfg, seed)?, ChaCha8Rng::seed_from_u64(seed))))
        .collect::<Result<_>>()?;
    for ((state, rng), (_, cfg)) in runs.iter_mut().zip(configs) {
        for _ in 0..warmup_steps {
            train_step(state, data, cfg, rng)?;
        }
    }
    let mut block_times = vec![Vec::with_capacity(blocks as usize); configs.len()];
    let mut done = 0;
    for b in 0..blocks {
        let n = (steps * (b + 1)) / blocks - done;
        done += n;
        for (k, ((state, rng), (_, cfg))) in runs.iter_mut().zip(configs).enumerate() {
            let t = Instant::now();
            for _ in 0..n {
                train_step(state, data, cfg, rng)?;
            }
            block_times[k].push((t.elapsed().as_secs_f64(), n));
        }
    }
    let entries: Vec<ProfileEntry> = configs
        .iter()
        .zip(block_times)
        .map(|((name, _), times)| {
            let total: f64 = times.iter().map(|(s, _)| s).sum();
            ProfileEntry {
                name: name.clone(),
                steps,
                total_seconds: total,
                per_step_seconds: total / steps as f64,
                block_per_step_seconds: times.iter().map(|(s, n)| s / *n as f64).collect(),
            }
        })
        .collect();
    let base = entries[0].per_step_seconds;
    Ok(ProfileReport {
        env_name: spec.name().to_string(),
        steps_per_config: steps,
        blocks,
        warmup_steps,
        relative_to_first_percent: entries.iter().map(|e| 100.0 * (e.per_step_seconds - base) / base).collect(),
        entries,
        machine: machine_descriptor(),
    })
}

/// Profiles TD3+BC against its TD3-only and BC-only ablations.
pub fn profile_training(spec: &EnvSpec, data: &OfflineDataset, base: &Td3bcConfig, steps: u64, blocks: u64, seed: u64) -> Result<ProfileReport> {
    let configs = vec![
        ("td3_bc".to_string(), base.clone()),
        (
            "td3".to_string(),
            Td3bcConfig {
                use_bc_term: false,
                use_q_term: true,
                ..base.clone()
            },
        ),
        (
            "bc".to_string(),
            Td3bcConfig {
                use_bc_term: true,
                use_q_term: false,
                ..base.clone()
            },
        ),
    ];
    profile_configs(spec, data, &configs, steps, blocks, (steps / 20).min(500), seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate_dataset, DatasetTier};

    #[test]
    fn profile_reports_all_arms() {
        let spec = EnvSpec::lookup("pointmass").unwrap();
        let data = generate_dataset(&spec, DatasetTier::Medium, 1000, 0).unwrap();
        let cfg = Td3bcConfig {
            hidden_sizes: vec![16, 16],
            batch_size: 64,
            ..Default::default()
        };
        let rep = profile_training(&spec, &data, &cfg, 60, 4, 0).unwrap();
        assert_eq!(rep.entries.len(), 3);
        for e in &rep.entries {
            assert_eq!(e.block_per_step_seconds.len(), 4);
            assert_eq!(e.steps, 60);
            assert!(e.per_step_seconds > 0.0);
        }
        assert_eq!(rep.relative_to_first_percent[0], 0.0);
        assert!(rep.machine.logical_cpus >= 1);
        assert!(rep.overhead_percent("td3_bc", "td3").is_some());
        assert!(profile_training(&spec, &data, &cfg, 2, 4, 0).is_err());
    }
}
