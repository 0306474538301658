//! Offline transition datasets: generation from scripted behavior policies,
//! state normalization, mixing, mini-batch sampling and persistence.

mod format;
mod normalization;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::envs::{env_reset, env_step, scripted_policy, BehaviorTier, EnvSpec, EnvState};
use crate::error::{OrlError, Result};
use crate::nn::Matrix;

pub use format::{load_dataset, read_dataset, save_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use normalization::{apply_normalization, compute_normalization, NormalizationStats, DEFAULT_NORM_EPSILON};

pub const MIN_GENERATED_SIZE: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetTier {
    Random,
    Medium,
    MediumReplay,
    MediumExpert,
    Expert,
    Mixed,
}

impl DatasetTier {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetTier::Random => "random",
            DatasetTier::Medium => "medium",
            DatasetTier::MediumReplay => "medium_replay",
            DatasetTier::MediumExpert => "medium_expert",
            DatasetTier::Expert => "expert",
            DatasetTier::Mixed => "mixed",
        }
    }
}

impl fmt::Display for DatasetTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetTier {
    type Err = OrlError;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "random" => Ok(DatasetTier::Random),
            "medium" => Ok(DatasetTier::Medium),
            "medium_replay" => Ok(DatasetTier::MediumReplay),
            "medium_expert" => Ok(DatasetTier::MediumExpert),
            "expert" => Ok(DatasetTier::Expert),
            "mixed" => Ok(DatasetTier::Mixed),
            _ => Err(OrlError::InvalidArgument(format!("unknown dataset tier `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Genuine MDP termination only; time-limit endings are not terminal.
    pub terminal: bool,
}

/// Immutable transition store. Fields are kept column-wise so that
/// mini-batch assembly is a handful of contiguous copies.
#[derive(Clone, Debug, PartialEq)]
pub struct OfflineDataset {
    env_name: String,
    tier: DatasetTier,
    obs_dim: usize,
    act_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    terminals: Vec<bool>,
    stats: Option<NormalizationStats>,
    generator_seed: u64,
}

impl OfflineDataset {
    pub fn from_transitions(
        env_name: &str,
        tier: DatasetTier,
        transitions: &[Transition],
        stats: Option<NormalizationStats>,
        generator_seed: u64,
    ) -> Result<Self> {
        let first = transitions
            .first()
            .ok_or_else(|| OrlError::InvalidArgument("dataset must be non-empty".into()))?;
        let (obs_dim, act_dim) = (first.state.len(), first.action.len());
        let n = transitions.len();
        let mut d = OfflineDataset {
            env_name: env_name.to_string(),
            tier,
            obs_dim,
            act_dim,
            states: Vec::with_capacity(n * obs_dim),
            actions: Vec::with_capacity(n * act_dim),
            rewards: Vec::with_capacity(n),
            next_states: Vec::with_capacity(n * obs_dim),
            terminals: Vec::with_capacity(n),
            stats,
            generator_seed,
        };
        for (i, t) in transitions.iter().enumerate() {
            d.push(t).map_err(|e| match e {
                OrlError::Shape { expected, found, .. } => OrlError::Shape {
                    context: "dataset transition",
                    expected,
                    found: format!("{found} at index {i}"),
                },
                other => other,
            })?;
        }
        d.validate()?;
        Ok(d)
    }

    fn push(&mut self, t: &Transition) -> Result<()> {
        if t.state.len() != self.obs_dim || t.next_state.len() != self.obs_dim {
            return Err(OrlError::shape("dataset transition", self.obs_dim, t.state.len().max(t.next_state.len())));
        }
        if t.action.len() != self.act_dim {
            return Err(OrlError::shape("dataset transition", self.act_dim, t.action.len()));
        }
        self.states.extend_from_slice(&t.state);
        self.actions.extend_from_slice(&t.action);
        self.rewards.push(t.reward);
        self.next_states.extend_from_slice(&t.next_state);
        self.terminals.push(t.terminal);
        Ok(())
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.rewards.is_empty() {
            return Err(OrlError::InvalidArgument("dataset must be non-empty".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !(finite(&self.states) && finite(&self.actions) && finite(&self.rewards) && finite(&self.next_states)) {
            return Err(OrlError::Numeric {
                context: "dataset values".into(),
                layer: None,
                step: None,
            });
        }
        if let Some(stats) = &self.stats {
            stats.validate()?;
            if stats.dim() != self.obs_dim {
                return Err(OrlError::shape("dataset normalization stats", self.obs_dim, stats.dim()));
            }
        }
        Ok(())
    }

    pub fn env_name(&self) -> &str {
        &self.env_name
    }

    pub fn tier(&self) -> DatasetTier {
        self.tier
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn stats(&self) -> Option<&NormalizationStats> {
        self.stats.as_ref()
    }

    pub fn generator_seed(&self) -> u64 {
        self.generator_seed
    }

    pub fn states_flat(&self) -> &[f64] {
        &self.states
    }

    pub fn next_states_flat(&self) -> &[f64] {
        &self.next_states
    }

    pub fn actions_flat(&self) -> &[f64] {
        &self.actions
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn terminals(&self) -> &[bool] {
        &self.terminals
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn next_state(&self, i: usize) -> &[f64] {
        &self.next_states[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.act_dim..(i + 1) * self.act_dim]
    }

    pub fn transition(&self, i: usize) -> Transition {
        Transition {
            state: self.state(i).to_vec(),
            action: self.action(i).to_vec(),
            reward: self.rewards[i],
            next_state: self.next_state(i).to_vec(),
            terminal: self.terminals[i],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Transition> + '_ {
        (0..self.len()).map(|i| self.transition(i))
    }

    /// Same transitions with the stored statistics replaced.
    pub fn with_stats(mut self, stats: Option<NormalizationStats>) -> Result<Self> {
        self.stats = stats;
        self.validate()?;
        Ok(self)
    }

    /// Undiscounted returns of the complete `horizon`-step episodes embedded in
    /// the dataset. Episode boundaries are detected where `next_state` of one
    /// transition differs from `state` of the following one.
    pub fn episode_returns(&self, horizon: usize) -> Vec<f64> {
        let mut returns = Vec::new();
        let (mut len, mut acc) = (0usize, 0.0);
        for i in 0..self.len() {
            len += 1;
            acc += self.rewards[i];
            let boundary = i + 1 == self.len() || self.terminals[i] || self.next_state(i) != self.state(i + 1);
            if boundary {
                if len == horizon || self.terminals[i] {
                    returns.push(acc);
                }
                len = 0;
                acc = 0.0;
            }
        }
        returns
    }
}

/// A mini-batch in matrix form; `not_done[i] = 1 − terminal[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub states: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_states: Matrix,
    pub not_done: Vec<f64>,
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Gathers the given dataset rows.
    pub fn gather(d: &OfflineDataset, indices: Vec<usize>) -> Result<Batch> {
        let n = indices.len();
        let (od, ad) = (d.obs_dim, d.act_dim);
        let mut states = Vec::with_capacity(n * od);
        let mut next_states = Vec::with_capacity(n * od);
        let mut actions = Vec::with_capacity(n * ad);
        let mut rewards = Vec::with_capacity(n);
        let mut not_done = Vec::with_capacity(n);
        for &i in &indices {
            if i >= d.len() {
                return Err(OrlError::InvalidArgument(format!("index {i} out of range for dataset of {}", d.len())));
            }
            states.extend_from_slice(d.state(i));
            next_states.extend_from_slice(d.next_state(i));
            actions.extend_from_slice(d.action(i));
            rewards.push(d.rewards[i]);
            not_done.push(if d.terminals[i] { 0.0 } else { 1.0 });
        }
        Ok(Batch {
            states: Matrix::from_vec(n, od, states)?,
            actions: Matrix::from_vec(n, ad, actions)?,
            rewards,
            next_states: Matrix::from_vec(n, od, next_states)?,
            not_done,
            indices,
        })
    }
}

/// Uniform sampling with replacement.
pub fn sample_minibatch(d: &OfflineDataset, batch_size: usize, rng: &mut impl Rng) -> Result<Batch> {
    if batch_size == 0 || batch_size > d.len() {
        return Err(OrlError::InvalidArgument(format!(
            "batch_size {batch_size} must be in 1..={}",
            d.len()
        )));
    }
    let n = d.len();
    let indices = (0..batch_size).map(|_| rng.random_range(0..n)).collect();
    Batch::gather(d, indices)
}

/// Rolls out episodes, choosing each action with `act(episode_index, state, rng)`,
/// until exactly `count` transitions are collected.
fn collect(
    spec: &EnvSpec,
    count: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
    out: &mut Vec<Transition>,
    mut act: impl FnMut(usize, &EnvState, &mut rand_chacha::ChaCha8Rng) -> Result<Vec<f64>>,
) -> Result<()> {
    let target = out.len() + count;
    let mut episode = 0usize;
    while out.len() < target {
        let mut state = env_reset(spec, rng.next_u64());
        loop {
            let mut action = act(episode, &state, rng)?;
            spec.clip_action(&mut action);
            let step = env_step(spec, &state, &action)?;
            out.push(Transition {
                state: state.observation.clone(),
                action,
                reward: step.reward,
                next_state: step.next_state.observation.clone(),
                terminal: step.terminal(),
            });
            if step.done || out.len() == target {
                break;
            }
            state = step.next_state;
        }
        episode += 1;
    }
    Ok(())
}

/// Generates `size` transitions of the requested tier, deterministic in `seed`.
///
/// `medium_replay` sweeps a per-episode mixing weight linearly from 0 to 1:
/// each action comes from the medium policy with that probability and is
/// uniform-random otherwise. `medium_expert` concatenates `size/2` medium
/// transitions with the remaining expert transitions.
pub fn generate_dataset(spec: &EnvSpec, tier: DatasetTier, size: usize, seed: u64) -> Result<OfflineDataset> {
    use rand::SeedableRng;

    if size < MIN_GENERATED_SIZE {
        return Err(OrlError::InvalidArgument(format!("dataset size must be at least {MIN_GENERATED_SIZE}, got {size}")));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut transitions = Vec::with_capacity(size);
    let fixed = |behavior: BehaviorTier| move |_: usize, s: &EnvState, r: &mut rand_chacha::ChaCha8Rng| scripted_policy(spec, behavior, s, r);
    match tier {
        DatasetTier::Random => collect(spec, size, &mut rng, &mut transitions, fixed(BehaviorTier::Random))?,
        DatasetTier::Medium => collect(spec, size, &mut rng, &mut transitions, fixed(BehaviorTier::Medium))?,
        DatasetTier::Expert => collect(spec, size, &mut rng, &mut transitions, fixed(BehaviorTier::Expert))?,
        DatasetTier::MediumReplay => {
            let episodes = size.div_ceil(spec.horizon).max(2);
            collect(spec, size, &mut rng, &mut transitions, |k, s, r| {
                let weight = k as f64 / (episodes - 1) as f64;
                let behavior = if r.random::<f64>() < weight {
                    BehaviorTier::Medium
                } else {
                    BehaviorTier::Random
                };
                scripted_policy(spec, behavior, s, r)
            })?
        }
        DatasetTier::MediumExpert => {
            collect(spec, size / 2, &mut rng, &mut transitions, fixed(BehaviorTier::Medium))?;
            collect(spec, size - size / 2, &mut rng, &mut transitions, fixed(BehaviorTier::Expert))?;
        }
        DatasetTier::Mixed => {
            return Err(OrlError::InvalidArgument("the `mixed` tier is produced by mixing two datasets, not generated".into()))
        }
    }
    let raw = OfflineDataset::from_transitions(spec.name(), tier, &transitions, None, seed)?;
    let stats = compute_normalization(&raw, DEFAULT_NORM_EPSILON);
    raw.with_stats(Some(stats))
}

/// Half of `a` and half of `b`, each chosen uniformly without replacement,
/// concatenated (`a` first). Statistics are recomputed over the result.
pub fn mix_datasets(a: &OfflineDataset, b: &OfflineDataset, seed: u64) -> Result<OfflineDataset> {
    use rand::SeedableRng;

    if a.env_name != b.env_name || a.obs_dim != b.obs_dim || a.act_dim != b.act_dim {
        return Err(OrlError::InvalidArgument(format!(
            "cannot mix datasets from `{}` ({}x{}) and `{}` ({}x{})",
            a.env_name, a.obs_dim, a.act_dim, b.env_name, b.obs_dim, b.act_dim
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let pick_a = rand::seq::index::sample(&mut rng, a.len(), a.len() / 2).into_vec();
    let pick_b = rand::seq::index::sample(&mut rng, b.len(), b.len() / 2).into_vec();
    let transitions: Vec<Transition> = pick_a
        .into_iter()
        .map(|i| a.transition(i))
        .chain(pick_b.into_iter().map(|i| b.transition(i)))
        .collect();
    let epsilon = a.stats.as_ref().map(|s| s.epsilon).unwrap_or(DEFAULT_NORM_EPSILON);
    let raw = OfflineDataset::from_transitions(&a.env_name, DatasetTier::Mixed, &transitions, None, seed)?;
    let stats = compute_normalization(&raw, epsilon);
    raw.with_stats(Some(stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_size_is_exact() {
        let spec = EnvSpec::new(EnvKind::Pendulum);
        for tier in [DatasetTier::Random, DatasetTier::MediumReplay, DatasetTier::MediumExpert] {
            let d = generate_dataset(&spec, tier, 1234, 3).unwrap();
            assert_eq!(d.len(), 1234);
            assert_eq!(d.tier(), tier);
            assert_eq!(d.obs_dim(), 3);
            assert!(d.stats().is_some());
        }
    }

    #[test]
    fn generation_rejects_bad_arguments() {
        let spec = EnvSpec::new(EnvKind::Lqr1D);
        assert!(matches!(generate_dataset(&spec, DatasetTier::Expert, 999, 0), Err(OrlError::InvalidArgument(_))));
        assert!(matches!(generate_dataset(&spec, DatasetTier::Mixed, 5000, 0), Err(OrlError::InvalidArgument(_))));
        assert!("bogus".parse::<DatasetTier>().is_err());
        assert_eq!("medium-replay".parse::<DatasetTier>().unwrap(), DatasetTier::MediumReplay);
    }

    #[test]
    fn mixing_sizes_and_origin() {
        let spec = EnvSpec::new(EnvKind::Lqr1D);
        let a = generate_dataset(&spec, DatasetTier::Random, 10_000, 1).unwrap();
        let b = generate_dataset(&spec, DatasetTier::Expert, 10_000, 2).unwrap();
        let m = mix_datasets(&a, &b, 9).unwrap();
        assert_eq!(m.len(), 10_000);
        assert_eq!(m.tier(), DatasetTier::Mixed);
        let odd = generate_dataset(&spec, DatasetTier::Random, 1001, 1).unwrap();
        assert_eq!(mix_datasets(&odd, &b, 0).unwrap().len(), 500 + 5000);
        assert_eq!(mix_datasets(&a, &b, 9).unwrap(), m);
    }

    #[test]
    fn mixing_rejects_env_mismatch() {
        let a = generate_dataset(&EnvSpec::new(EnvKind::Lqr1D), DatasetTier::Random, 1000, 1).unwrap();
        let b = generate_dataset(&EnvSpec::new(EnvKind::Pendulum), DatasetTier::Random, 1000, 1).unwrap();
        assert!(matches!(mix_datasets(&a, &b, 0), Err(OrlError::InvalidArgument(_))));
    }

    #[test]
    fn minibatch_contract() {
        let d = generate_dataset(&EnvSpec::new(EnvKind::PointMass2D), DatasetTier::Medium, 2000, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = sample_minibatch(&d, 256, &mut rng).unwrap();
        assert_eq!(b.len(), 256);
        assert_eq!((b.states.rows(), b.states.cols()), (256, 6));
        assert_eq!((b.actions.rows(), b.actions.cols()), (256, 2));
        for (row, &i) in b.indices.iter().enumerate() {
            assert_eq!(b.states.row(row), d.state(i));
            assert_eq!(b.next_states.row(row), d.next_state(i));
        }
        let b2 = sample_minibatch(&d, 256, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(b, b2);
        assert!(sample_minibatch(&d, 2001, &mut rng).is_err());
    }

    #[test]
    fn episode_returns_split_on_discontinuities() {
        let spec = EnvSpec::new(EnvKind::Lqr1D);
        let d = generate_dataset(&spec, DatasetTier::Random, 1050, 8).unwrap();
        let returns = d.episode_returns(spec.horizon);
        assert_eq!(returns.len(), 10);
        let first: f64 = d.rewards()[..100].iter().sum();
        assert_eq!(returns[0], first);
    }
}
