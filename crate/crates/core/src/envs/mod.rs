//! Deterministic toy continuous-control environments.
//!
//! Every environment has action box `[−1, 1]^act_dim`, a fixed horizon and no
//! early termination. All randomness lives in [`env_reset`]; [`env_step`] is a
//! pure function of `(state, action)`.

pub mod lqr;
pub mod pendulum;
pub mod point_mass;
mod scripted;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OrlError, Result};
pub use point_mass::PointMass;
pub use scripted::{reference_scores, run_episode, scripted_policy, BehaviorTier, Policy, ReferenceScores, ScriptedPolicy};

/// Episodes and seed used to freeze the normalization anchors into each [`EnvSpec`].
pub const REFERENCE_EPISODES: usize = 10_000;
pub const REFERENCE_SEED: u64 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvKind {
    Lqr1D,
    PointMass2D,
    Pendulum,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::Lqr1D, EnvKind::PointMass2D, EnvKind::Pendulum];

    /// Registry name used on the command line and in dataset headers.
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Lqr1D => "lqr1d",
            EnvKind::PointMass2D => "pointmass",
            EnvKind::Pendulum => "pendulum",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = OrlError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lqr1d" | "lqr" => Ok(EnvKind::Lqr1D),
            "pointmass" | "pointmass2d" | "point_mass" => Ok(EnvKind::PointMass2D),
            "pendulum" => Ok(EnvKind::Pendulum),
            _ => Err(OrlError::UnknownEnv(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub horizon: usize,
    /// Mean undiscounted return of the uniform-random policy.
    pub random_ref: f64,
    /// Mean undiscounted return of the scripted expert.
    pub expert_ref: f64,
    /// Inclusive per-step reward bounds.
    pub reward_bounds: (f64, f64),
}

impl EnvSpec {
    pub fn new(kind: EnvKind) -> Self {
        // anchors: reference_scores(spec, REFERENCE_EPISODES, REFERENCE_SEED)
        let (obs_dim, act_dim, horizon, random_ref, expert_ref, min_reward) = match kind {
            EnvKind::Lqr1D => (2, 1, 100, -13.261741469033598, -2.258417226775105, lqr::MIN_REWARD),
            EnvKind::PointMass2D => (6, 2, 100, -125.98271334401001, -18.209875767579565, -point_mass::MAX_DISTANCE),
            EnvKind::Pendulum => (3, 1, 200, -1227.0164295089007, -153.56030509836296, pendulum::MIN_REWARD),
        };
        Self {
            kind,
            obs_dim,
            act_dim,
            action_low: vec![-1.0; act_dim],
            action_high: vec![1.0; act_dim],
            horizon,
            random_ref,
            expert_ref,
            reward_bounds: (min_reward, 0.0),
        }
    }

    pub fn lookup(name: &str) -> Result<Self> {
        Ok(Self::new(name.parse()?))
    }

    pub fn all() -> Vec<EnvSpec> {
        EnvKind::ALL.iter().map(|&k| Self::new(k)).collect()
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// Largest achievable `|return|` over one episode, from the reward bounds.
    pub fn max_abs_return(&self) -> f64 {
        self.reward_bounds.0.abs().max(self.reward_bounds.1.abs()) * self.horizon as f64
    }

    pub fn clip_action(&self, action: &mut [f64]) {
        for ((a, lo), hi) in action.iter_mut().zip(&self.action_low).zip(&self.action_high) {
            *a = a.clamp(*lo, *hi);
        }
    }

    pub fn action_in_box(&self, action: &[f64]) -> bool {
        action.len() == self.act_dim
            && action
                .iter()
                .zip(&self.action_low)
                .zip(&self.action_high)
                .all(|((a, lo), hi)| *a >= *lo && *a <= *hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InternalState {
    Lqr { x: f64, v: f64 },
    PointMass(PointMass),
    Pendulum { theta: f64, theta_dot: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub observation: Vec<f64>,
    pub internal: InternalState,
    pub steps_elapsed: usize,
    /// Set when the episode ended by reaching the horizon rather than a terminal condition.
    pub timeout: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: EnvState,
    pub reward: f64,
    pub done: bool,
}

impl StepResult {
    /// True only for genuine MDP termination; timeouts still bootstrap.
    pub fn terminal(&self) -> bool {
        self.done && !self.next_state.timeout
    }
}

fn observe(internal: &InternalState) -> Vec<f64> {
    match internal {
        InternalState::Lqr { x, v } => vec![*x, *v],
        InternalState::PointMass(pm) => pm.observation(),
        InternalState::Pendulum { theta, theta_dot } => pendulum::observation(*theta, *theta_dot),
    }
}

pub fn env_reset(spec: &EnvSpec, seed: u64) -> EnvState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let internal = match spec.kind {
        EnvKind::Lqr1D => InternalState::Lqr {
            x: rng.random_range(-1.0..=1.0),
            v: 0.0,
        },
        EnvKind::PointMass2D => {
            let b = point_mass::START_BOX;
            let pos = [rng.random_range(-b..=b), rng.random_range(-b..=b)];
            let goal = [rng.random_range(-b..=b), rng.random_range(-b..=b)];
            InternalState::PointMass(PointMass { pos, vel: [0.0; 2], goal })
        }
        EnvKind::Pendulum => InternalState::Pendulum {
            theta: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            theta_dot: rng.random_range(-1.0..=1.0),
        },
    };
    EnvState {
        observation: observe(&internal),
        internal,
        steps_elapsed: 0,
        timeout: false,
    }
}

pub fn env_step(spec: &EnvSpec, state: &EnvState, action: &[f64]) -> Result<StepResult> {
    if action.len() != spec.act_dim {
        return Err(OrlError::shape("env_step action", spec.act_dim, action.len()));
    }
    if !spec.action_in_box(action) {
        return Err(OrlError::Contract(format!(
            "action {action:?} outside the action box of {}; clip before stepping",
            spec.name()
        )));
    }
    if state.steps_elapsed >= spec.horizon {
        return Err(OrlError::Contract(format!("episode already reached its horizon of {}", spec.horizon)));
    }
    let (internal, reward) = match (&state.internal, spec.kind) {
        (InternalState::Lqr { x, v }, EnvKind::Lqr1D) => {
            let (nx, nv) = lqr::step(*x, *v, action[0]);
            (InternalState::Lqr { x: nx, v: nv }, lqr::reward(*x, action[0]))
        }
        (InternalState::PointMass(pm), EnvKind::PointMass2D) => (InternalState::PointMass(pm.step(action)), pm.reward()),
        (InternalState::Pendulum { theta, theta_dot }, EnvKind::Pendulum) => {
            let (nt, nd) = pendulum::step(*theta, *theta_dot, action[0]);
            (
                InternalState::Pendulum { theta: nt, theta_dot: nd },
                pendulum::reward(*theta, *theta_dot, action[0]),
            )
        }
        _ => return Err(OrlError::Contract(format!("state does not belong to {}", spec.name()))),
    };
    let steps_elapsed = state.steps_elapsed + 1;
    let timeout = steps_elapsed == spec.horizon;
    Ok(StepResult {
        next_state: EnvState {
            observation: observe(&internal),
            internal,
            steps_elapsed,
            timeout,
        },
        reward,
        done: timeout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_lookup() {
        assert_eq!(EnvSpec::lookup("pointmass").unwrap().obs_dim, 6);
        assert_eq!(EnvSpec::lookup("Lqr1D").unwrap().kind, EnvKind::Lqr1D);
        assert!(matches!(EnvSpec::lookup("mujoco"), Err(OrlError::UnknownEnv(_))));
    }

    #[test]
    fn specs_satisfy_invariants() {
        for spec in EnvSpec::all() {
            assert!(spec.expert_ref > spec.random_ref, "{}", spec.name());
            assert!(spec.action_low.iter().zip(&spec.action_high).all(|(l, h)| l < h));
            assert_eq!(spec.action_low.len(), spec.act_dim);
        }
    }

    #[test]
    fn reset_is_deterministic_and_in_start_distribution() {
        for spec in EnvSpec::all() {
            assert_eq!(env_reset(&spec, 42), env_reset(&spec, 42));
            assert_eq!(env_reset(&spec, 42).observation.len(), spec.obs_dim);
        }
        for seed in 0..200 {
            match env_reset(&EnvSpec::new(EnvKind::PointMass2D), seed).internal {
                InternalState::PointMass(pm) => assert!(pm.pos.iter().all(|p| (-1.0..=1.0).contains(p))),
                _ => unreachable!(),
            }
            match env_reset(&EnvSpec::new(EnvKind::Lqr1D), seed).internal {
                InternalState::Lqr { x, v } => {
                    assert!((-1.0..=1.0).contains(&x));
                    assert_eq!(v, 0.0);
                }
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn lqr_equilibrium() {
        let spec = EnvSpec::new(EnvKind::Lqr1D);
        let mut s = env_reset(&spec, 0);
        s.internal = InternalState::Lqr { x: 0.0, v: 0.0 };
        s.observation = vec![0.0, 0.0];
        let r = env_step(&spec, &s, &[0.0]).unwrap();
        assert_eq!(r.reward, 0.0);
        assert_eq!(r.next_state.internal, InternalState::Lqr { x: 0.0, v: 0.0 });
        assert_eq!(r.next_state.observation, vec![0.0, 0.0]);
    }

    #[test]
    fn point_mass_distance_reward() {
        let spec = EnvSpec::new(EnvKind::PointMass2D);
        let pm = PointMass {
            pos: [1.0, 0.0],
            vel: [0.0; 2],
            goal: [0.0, 0.0],
        };
        let s = EnvState {
            observation: pm.observation(),
            internal: InternalState::PointMass(pm),
            steps_elapsed: 0,
            timeout: false,
        };
        assert_eq!(env_step(&spec, &s, &[0.3, -0.7]).unwrap().reward, -1.0);
    }

    #[test]
    fn pendulum_rest_at_bottom_is_fixed_point() {
        let spec = EnvSpec::new(EnvKind::Pendulum);
        let internal = InternalState::Pendulum { theta: 0.0, theta_dot: 0.0 };
        let s = EnvState {
            observation: observe(&internal),
            internal,
            steps_elapsed: 3,
            timeout: false,
        };
        let r = env_step(&spec, &s, &[0.0]).unwrap();
        assert_eq!(r.next_state.internal, internal);
        assert_eq!(r.next_state.observation, s.observation);
    }

    #[test]
    fn out_of_box_action_is_contract_violation() {
        let spec = EnvSpec::new(EnvKind::Lqr1D);
        let s = env_reset(&spec, 1);
        assert!(matches!(env_step(&spec, &s, &[1.5]), Err(OrlError::Contract(_))));
        assert!(matches!(env_step(&spec, &s, &[f64::NAN]), Err(OrlError::Contract(_))));
        assert!(matches!(env_step(&spec, &s, &[0.0, 0.0]), Err(OrlError::Shape { .. })));
    }

    #[test]
    fn episodes_end_exactly_at_horizon_with_timeout() {
        for spec in EnvSpec::all() {
            let mut s = env_reset(&spec, 5);
            for t in 1..=spec.horizon {
                let r = env_step(&spec, &s, &vec![0.5; spec.act_dim]).unwrap();
                assert_eq!(r.done, t == spec.horizon);
                assert!(!r.terminal());
                assert!(r.reward >= spec.reward_bounds.0 && r.reward <= spec.reward_bounds.1);
                s = r.next_state;
            }
            assert!(s.timeout);
            assert!(env_step(&spec, &s, &vec![0.0; spec.act_dim]).is_err());
        }
    }

    #[test]
    fn pendulum_wrap_range() {
        for a in [-10.0, -std::f64::consts::PI, 0.0, 3.0, std::f64::consts::PI, 7.0] {
            let w = pendulum::wrap(a);
            assert!((-std::f64::consts::PI..std::f64::consts::PI).contains(&w), "{a} -> {w}");
        }
        assert_eq!(pendulum::wrap(0.0), 0.0);
    }
}
