//! TD3+BC: twin critics with clipped double-Q targets and target policy
//! smoothing, delayed actor updates on `−λ·Q₁(s, π(s)) + ‖π(s) − a‖²`, and
//! soft target tracking.
//!
//! `λ = α / mean|Q₁(s, a)|` is evaluated on the batch's dataset actions and
//! treated as a constant. Setting `use_q_term = false` yields pure behavior
//! cloning (critics are then never trained); `use_bc_term = false` yields TD3
//! with the λ-scaled deterministic policy gradient.

mod checkpoint;
mod config;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datasets::{sample_minibatch, Batch, NormalizationStats, OfflineDataset};
use crate::envs::{EnvSpec, EnvState, Policy};
use crate::error::{OrlError, Result};
use crate::nn::{AdamState, Matrix, Mlp, MlpGrads, OutputActivation};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{Td3bcConfig, DESK_HIDDEN, PAPER_HIDDEN};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub actor: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub actor_target: Mlp,
    pub critic1_target: Mlp,
    pub critic2_target: Mlp,
    pub actor_opt: AdamState,
    pub critic1_opt: AdamState,
    pub critic2_opt: AdamState,
    pub step_count: u64,
    pub actor_updates: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Zero when the Q term is disabled (critics are not trained).
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
    pub lambda_value: Option<f64>,
    /// `mean|Q₁(s, a)|` on the batch before the critic step.
    pub mean_abs_q: f64,
}

/// Bootstrap targets plus the pieces they were assembled from.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetBatch {
    pub y: Vec<f64>,
    pub q1_next: Vec<f64>,
    pub q2_next: Vec<f64>,
    /// Clipped smoothing noise added to the target actor's actions.
    pub smoothing_noise: Matrix,
    pub next_actions: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticStep {
    pub loss: f64,
    pub mean_abs_q: f64,
}

/// Actor loss and its parameter gradient, without applying an update.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorObjective {
    pub loss: f64,
    pub lambda: Option<f64>,
    pub q_term: f64,
    pub bc_term: f64,
    pub grads: MlpGrads,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActorStep {
    pub loss: f64,
    pub lambda: Option<f64>,
}

fn check_action_box(spec: &EnvSpec) -> Result<()> {
    let unit = spec.action_low.iter().all(|&l| l == -1.0) && spec.action_high.iter().all(|&h| h == 1.0);
    if !unit {
        return Err(OrlError::InvalidArgument(format!("{}: the actor's tanh head requires a [-1, 1] action box", spec.name())));
    }
    Ok(())
}

/// Builds actor, twin critics and exact target copies, deterministic in `seed`.
pub fn agent_init(spec: &EnvSpec, config: &Td3bcConfig, seed: u64) -> Result<TrainState> {
    check_action_box(spec)?;
    if spec.action_low.len() != spec.act_dim || spec.obs_dim == 0 || spec.act_dim == 0 {
        return Err(OrlError::InvalidArgument(format!("{}: inconsistent observation/action dimensions", spec.name())));
    }
    agent_init_dims(spec.obs_dim, spec.act_dim, config, seed)
}

pub fn agent_init_dims(obs_dim: usize, act_dim: usize, config: &Td3bcConfig, seed: u64) -> Result<TrainState> {
    config.validate()?;
    if obs_dim == 0 || act_dim == 0 {
        return Err(OrlError::InvalidArgument("observation and action dimensions must be positive".into()));
    }
    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    let sizes = |input: usize, output: usize| {
        let mut s = vec![input];
        s.extend_from_slice(&config.hidden_sizes);
        s.push(output);
        s
    };
    let actor = Mlp::new(&sizes(obs_dim, act_dim), OutputActivation::Tanh, seeder.random())?;
    let critic1 = Mlp::new(&sizes(obs_dim + act_dim, 1), OutputActivation::Identity, seeder.random())?;
    let critic2 = Mlp::new(&sizes(obs_dim + act_dim, 1), OutputActivation::Identity, seeder.random())?;
    Ok(TrainState {
        actor_opt: AdamState::for_mlp(&actor, config.actor_lr),
        critic1_opt: AdamState::for_mlp(&critic1, config.critic_lr),
        critic2_opt: AdamState::for_mlp(&critic2, config.critic_lr),
        actor_target: actor.clone(),
        critic1_target: critic1.clone(),
        critic2_target: critic2.clone(),
        actor,
        critic1,
        critic2,
        step_count: 0,
        actor_updates: 0,
    })
}

impl TrainState {
    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.actor.output_dim()
    }

    /// Deterministic evaluation policy over raw observations.
    pub fn policy(&self, stats: Option<NormalizationStats>) -> ActorSnapshot {
        ActorSnapshot {
            actor: self.actor.clone(),
            stats,
        }
    }
}

fn critic_input(states: &Matrix, actions: &Matrix) -> Result<Matrix> {
    Matrix::hstack(states, actions)
}

fn non_finite(context: &str) -> OrlError {
    OrlError::Numeric {
        context: context.to_string(),
        layer: None,
        step: None,
    }
}

/// `y = r + γ·(1 − terminal)·min(Q′₁(s′, ã), Q′₂(s′, ã))` with
/// `ã = clip(π′(s′) + clip(ε, −c, c), −1, 1)`, `ε ~ N(0, policy_noise²)`.
pub fn compute_target(batch: &Batch, state: &TrainState, config: &Td3bcConfig, rng: &mut impl Rng) -> Result<TargetBatch> {
    let mut next_actions = state.actor_target.forward(&batch.next_states)?;
    let mut noise = Matrix::zeros(next_actions.rows(), next_actions.cols());
    for (n, a) in noise.as_mut_slice().iter_mut().zip(next_actions.as_mut_slice()) {
        let eps: f64 = rng.sample(StandardNormal);
        *n = (eps * config.policy_noise).clamp(-config.noise_clip, config.noise_clip);
        *a = (*a + *n).clamp(-1.0, 1.0);
    }
    let sa = critic_input(&batch.next_states, &next_actions)?;
    let q1 = state.critic1_target.forward(&sa)?.into_vec();
    let q2 = state.critic2_target.forward(&sa)?.into_vec();
    let y = batch
        .rewards
        .iter()
        .zip(&batch.not_done)
        .zip(q1.iter().zip(&q2))
        .map(|((r, nd), (a, b))| r + config.discount * nd * a.min(*b))
        .collect();
    Ok(TargetBatch {
        y,
        q1_next: q1,
        q2_next: q2,
        smoothing_noise: noise,
        next_actions,
    })
}

/// One Adam step on both critics against fixed targets `y`;
/// loss = `mean(Q₁ − y)² + mean(Q₂ − y)²`.
pub fn critic_update(state: &mut TrainState, batch: &Batch, y: &[f64]) -> Result<CriticStep> {
    let n = batch.len();
    if y.len() != n {
        return Err(OrlError::shape("critic_update targets", n, y.len()));
    }
    let sa = critic_input(&batch.states, &batch.actions)?;
    let mut loss = 0.0;
    let mut mean_abs_q = 0.0;
    let mut updates = Vec::with_capacity(2);
    for (k, critic) in [&state.critic1, &state.critic2].into_iter().enumerate() {
        let trace = critic.forward_trace(&sa)?;
        let q = trace.output().as_slice();
        if k == 0 {
            mean_abs_q = q.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
        }
        let mut upstream = Matrix::zeros(n, 1);
        let mut sq = 0.0;
        for ((u, qi), yi) in upstream.as_mut_slice().iter_mut().zip(q).zip(y) {
            let diff = qi - yi;
            sq += diff * diff;
            *u = 2.0 * diff / n as f64;
        }
        loss += sq / n as f64;
        updates.push(critic.backward_from(&trace, &upstream)?.params);
    }
    if !loss.is_finite() {
        return Err(non_finite("critic loss").at_step(state.step_count));
    }
    let mut grads = updates.into_iter();
    state.critic1_opt.step(&mut state.critic1, &grads.next().unwrap())?;
    state.critic2_opt.step(&mut state.critic2, &grads.next().unwrap())?;
    Ok(CriticStep { loss, mean_abs_q })
}

/// `λ = α / max(mean|Q|, floor)`. An empty slice takes the floor.
pub fn compute_lambda(q_values: &[f64], alpha: f64, lambda_floor: f64) -> f64 {
    let mean_abs = if q_values.is_empty() {
        0.0
    } else {
        q_values.iter().map(|q| q.abs()).sum::<f64>() / q_values.len() as f64
    };
    alpha / mean_abs.max(lambda_floor)
}

/// Evaluates the actor loss and its gradient with respect to the actor's
/// parameters. The critic is held fixed; λ is either recomputed from
/// `Q₁(s, a)` on the batch or taken from `lambda_override`.
pub fn actor_objective(
    actor: &Mlp,
    critic1: &Mlp,
    batch: &Batch,
    config: &Td3bcConfig,
    lambda_override: Option<f64>,
) -> Result<ActorObjective> {
    let n = batch.len();
    let obs_dim = batch.states.cols();
    let act_dim = actor.output_dim();
    let trace = actor.forward_trace(&batch.states)?;
    let pi = trace.output();
    let mut upstream = Matrix::zeros(n, act_dim);

    let mut lambda = None;
    let mut q_term = 0.0;
    if config.use_q_term {
        let lam = match lambda_override {
            Some(l) => l,
            None => {
                let q_data = critic1.forward(&critic_input(&batch.states, &batch.actions)?)?;
                compute_lambda(q_data.as_slice(), config.alpha, config.lambda_floor)
            }
        };
        let q_trace = critic1.forward_trace(&critic_input(&batch.states, pi)?)?;
        q_term = -lam * q_trace.output().mean();
        let dq = Matrix::from_vec(n, 1, vec![-lam / n as f64; n])?;
        let d_input = critic1.input_gradient(&q_trace, &dq)?;
        for r in 0..n {
            let src = &d_input.row(r)[obs_dim..obs_dim + act_dim];
            for (u, g) in upstream.row_mut(r).iter_mut().zip(src) {
                *u += g;
            }
        }
        lambda = Some(lam);
    }

    let mut bc_term = 0.0;
    if config.use_bc_term {
        for r in 0..n {
            let (p, a) = (pi.row(r), batch.actions.row(r));
            let u = upstream.row_mut(r);
            for j in 0..act_dim {
                let diff = p[j] - a[j];
                bc_term += diff * diff;
                u[j] += 2.0 * diff / n as f64;
            }
        }
        bc_term /= n as f64;
    }

    let grads = actor.backward_from(&trace, &upstream)?.params;
    Ok(ActorObjective {
        loss: q_term + bc_term,
        lambda,
        q_term,
        bc_term,
        grads,
    })
}

/// One Adam step on the actor. Must be called only when
/// `step_count % policy_freq == 0`.
pub fn actor_update(state: &mut TrainState, batch: &Batch, config: &Td3bcConfig) -> Result<ActorStep> {
    if state.step_count % config.policy_freq != 0 {
        return Err(OrlError::Contract(format!(
            "actor update at step {} with policy_freq {}",
            state.step_count, config.policy_freq
        )));
    }
    let obj = actor_objective(&state.actor, &state.critic1, batch, config, None)?;
    if !obj.loss.is_finite() {
        return Err(non_finite("actor loss").at_step(state.step_count));
    }
    state.actor_opt.step(&mut state.actor, &obj.grads)?;
    state.actor_updates += 1;
    Ok(ActorStep {
        loss: obj.loss,
        lambda: obj.lambda,
    })
}

/// `θ′ ← τθ + (1 − τ)θ′` for the actor and both critics.
pub fn soft_update_targets(state: &mut TrainState, tau: f64) {
    state.actor_target.soft_update_from(&state.actor, tau);
    state.critic1_target.soft_update_from(&state.critic1, tau);
    state.critic2_target.soft_update_from(&state.critic2, tau);
}

/// Sample → target → critic step; every `policy_freq`-th call also updates
/// the actor and the targets. `step_count` advances by exactly one.
pub fn train_step(state: &mut TrainState, dataset: &OfflineDataset, config: &Td3bcConfig, rng: &mut impl Rng) -> Result<LossReport> {
    let batch = sample_minibatch(dataset, config.batch_size, rng)?;
    train_step_on_batch(state, &batch, config, rng)
}

pub fn train_step_on_batch(state: &mut TrainState, batch: &Batch, config: &Td3bcConfig, rng: &mut impl Rng) -> Result<LossReport> {
    let mut report = LossReport {
        critic_loss: 0.0,
        actor_loss: None,
        lambda_value: None,
        mean_abs_q: 0.0,
    };
    if config.use_q_term {
        let targets = compute_target(batch, state, config, rng)?;
        let step = critic_update(state, batch, &targets.y).map_err(|e| e.at_step(state.step_count))?;
        report.critic_loss = step.loss;
        report.mean_abs_q = step.mean_abs_q;
    }
    state.step_count += 1;
    if state.step_count % config.policy_freq == 0 {
        let step = actor_update(state, batch, config).map_err(|e| e.at_step(state.step_count))?;
        soft_update_targets(state, config.tau);
        report.actor_loss = Some(step.loss);
        report.lambda_value = step.lambda;
    }
    Ok(report)
}

/// Deterministic action for a raw observation: normalize, run the actor,
/// clip to `[−1, 1]`.
pub fn select_action(actor: &Mlp, raw_observation: &[f64], stats: Option<&NormalizationStats>) -> Result<Vec<f64>> {
    if raw_observation.len() != actor.input_dim() {
        return Err(OrlError::shape("select_action observation", actor.input_dim(), raw_observation.len()));
    }
    let obs = match stats {
        Some(s) => s.apply(raw_observation)?,
        None => raw_observation.to_vec(),
    };
    let mut action = actor.forward_one(&obs)?;
    for a in &mut action {
        debug_assert!(!a.is_finite() || a.abs() <= 1.0, "tanh head produced {a}");
        *a = a.clamp(-1.0, 1.0);
    }
    Ok(action)
}

/// Read-only actor copy used for evaluation rollouts.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorSnapshot {
    pub actor: Mlp,
    pub stats: Option<NormalizationStats>,
}

impl ActorSnapshot {
    pub fn act_raw(&self, raw_observation: &[f64]) -> Result<Vec<f64>> {
        select_action(&self.actor, raw_observation, self.stats.as_ref())
    }
}

impl Policy for ActorSnapshot {
    fn act(&mut self, state: &EnvState) -> Result<Vec<f64>> {
        self.act_raw(&state.observation)
    }
}
