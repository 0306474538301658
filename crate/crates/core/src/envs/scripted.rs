use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{env_reset, env_step, lqr, pendulum, EnvSpec, EnvState, InternalState};
use crate::error::{OrlError, Result};

/// Gaussian noise scale of the expert tier, as a fraction of the action range.
pub const EXPERT_NOISE_FRACTION: f64 = 0.05;
/// Gaussian noise scale of the medium tier, as a fraction of the action range.
pub const MEDIUM_NOISE_FRACTION: f64 = 0.3;
/// Probability that the medium tier substitutes a uniform-random action.
pub const MEDIUM_RANDOM_PROB: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorTier {
    Random,
    Medium,
    Expert,
}

impl fmt::Display for BehaviorTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BehaviorTier::Random => "random",
            BehaviorTier::Medium => "medium",
            BehaviorTier::Expert => "expert",
        })
    }
}

impl FromStr for BehaviorTier {
    type Err = OrlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(BehaviorTier::Random),
            "medium" => Ok(BehaviorTier::Medium),
            "expert" => Ok(BehaviorTier::Expert),
            _ => Err(OrlError::InvalidArgument(format!("unknown behavior tier `{s}`"))),
        }
    }
}

/// Anything that maps environment states to actions.
pub trait Policy {
    fn act(&mut self, state: &EnvState) -> Result<Vec<f64>>;
}

impl<F: FnMut(&EnvState) -> Result<Vec<f64>>> Policy for F {
    fn act(&mut self, state: &EnvState) -> Result<Vec<f64>> {
        self(state)
    }
}

fn uniform_action(spec: &EnvSpec, rng: &mut dyn RngCore) -> Vec<f64> {
    spec.action_low
        .iter()
        .zip(&spec.action_high)
        .map(|(&lo, &hi)| rng.random_range(lo..=hi))
        .collect()
}

fn expert_action(spec: &EnvSpec, state: &EnvState) -> Result<Vec<f64>> {
    match (&state.internal, spec.kind) {
        (InternalState::Lqr { x, v }, super::EnvKind::Lqr1D) => Ok(vec![lqr::expert_action(*x, *v)]),
        (InternalState::PointMass(pm), super::EnvKind::PointMass2D) => Ok(pm.expert_action()),
        (InternalState::Pendulum { theta, theta_dot }, super::EnvKind::Pendulum) => {
            Ok(vec![pendulum::expert_action(*theta, *theta_dot)])
        }
        _ => Err(OrlError::Contract(format!("state does not belong to {}", spec.name()))),
    }
}

/// One action from a scripted behavior policy.
///
/// * `Random`: uniform over the action box.
/// * `Expert`: the environment's near-optimal controller plus Gaussian noise
///   of σ = 0.05·range, clipped to the box.
/// * `Medium`: with probability 0.2 a uniform action, otherwise the
///   noiseless controller plus Gaussian noise of σ = 0.3·range, clipped.
pub fn scripted_policy(spec: &EnvSpec, tier: BehaviorTier, state: &EnvState, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
    match tier {
        BehaviorTier::Random => Ok(uniform_action(spec, rng)),
        BehaviorTier::Expert => noisy_controller(spec, state, EXPERT_NOISE_FRACTION, rng),
        BehaviorTier::Medium => {
            if rng.random::<f64>() < MEDIUM_RANDOM_PROB {
                return Ok(uniform_action(spec, rng));
            }
            noisy_controller(spec, state, MEDIUM_NOISE_FRACTION, rng)
        }
    }
}

fn noisy_controller(spec: &EnvSpec, state: &EnvState, fraction: f64, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
    let mut action = expert_action(spec, state)?;
    for (i, a) in action.iter_mut().enumerate() {
        let sigma = fraction * (spec.action_high[i] - spec.action_low[i]);
        let noise: f64 = Normal::new(0.0, sigma).expect("positive sigma").sample(rng);
        *a += noise;
    }
    spec.clip_action(&mut action);
    Ok(action)
}

/// A scripted policy bundled with its own random stream.
pub struct ScriptedPolicy {
    spec: EnvSpec,
    tier: BehaviorTier,
    rng: ChaCha8Rng,
}

impl ScriptedPolicy {
    pub fn new(spec: &EnvSpec, tier: BehaviorTier, seed: u64) -> Self {
        Self {
            spec: spec.clone(),
            tier,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for ScriptedPolicy {
    fn act(&mut self, state: &EnvState) -> Result<Vec<f64>> {
        scripted_policy(&self.spec, self.tier, state, &mut self.rng)
    }
}

/// Undiscounted return of one full episode started from `env_reset(spec, seed)`.
pub fn run_episode(spec: &EnvSpec, seed: u64, policy: &mut dyn Policy) -> Result<f64> {
    let mut state = env_reset(spec, seed);
    let mut total = 0.0;
    loop {
        let mut action = policy.act(&state)?;
        spec.clip_action(&mut action);
        let step = env_step(spec, &state, &action)?;
        total += step.reward;
        if step.done {
            return Ok(total);
        }
        state = step.next_state;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScores {
    pub random_ref: f64,
    pub expert_ref: f64,
}

/// Mean undiscounted returns of the scripted random and expert policies over
/// episodes seeded `seed, seed + 1, ...`. The random policy's action stream is
/// seeded with `seed`.
pub fn reference_scores(spec: &EnvSpec, episodes: usize, seed: u64) -> Result<ReferenceScores> {
    if episodes < 100 {
        return Err(OrlError::InvalidArgument(format!("reference scores need at least 100 episodes, got {episodes}")));
    }
    let mean_return = |tier| -> Result<f64> {
        let mut policy = ScriptedPolicy::new(spec, tier, seed);
        let mut sum = 0.0;
        for i in 0..episodes {
            sum += run_episode(spec, seed.wrapping_add(i as u64), &mut policy)?;
        }
        Ok(sum / episodes as f64)
    };
    Ok(ReferenceScores {
        random_ref: mean_return(BehaviorTier::Random)?,
        expert_ref: mean_return(BehaviorTier::Expert)?,
    })
}
