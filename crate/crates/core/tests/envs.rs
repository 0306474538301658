use orl_core::envs::{
    env_reset, env_step, lqr, reference_scores, run_episode, BehaviorTier, EnvKind, EnvSpec, InternalState, ScriptedPolicy,
};
use orl_core::metrics::{evaluate_policy, normalized_score};

type M2 = [[f64; 2]; 2];

fn mat_mul(a: &M2, b: &M2) -> M2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn transpose(a: &M2) -> M2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

/// Infinite-horizon gain by iterating the discrete Riccati recursion for
/// cost `x² + 0.1·a²` per step.
fn riccati_gain() -> [f64; 2] {
    let a = lqr::A;
    let b = lqr::B;
    let q = [[lqr::STATE_COST, 0.0], [0.0, 0.0]];
    let r = lqr::ACTION_COST;
    let mut p = q;
    let mut k = [0.0; 2];
    for _ in 0..100_000 {
        // BᵀP (row vector) and BᵀPB (scalar)
        let btp = [b[0] * p[0][0] + b[1] * p[1][0], b[0] * p[0][1] + b[1] * p[1][1]];
        let btpb = btp[0] * b[0] + btp[1] * b[1];
        // K = (R + BᵀPB)⁻¹ BᵀPA
        let btpa = [btp[0] * a[0][0] + btp[1] * a[1][0], btp[0] * a[0][1] + btp[1] * a[1][1]];
        k = [btpa[0] / (r + btpb), btpa[1] / (r + btpb)];
        let atpa = mat_mul(&transpose(&a), &mat_mul(&p, &a));
        let mut next = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                next[i][j] = q[i][j] + atpa[i][j] - btpa[i] * k[j];
            }
        }
        let delta = (0..4).map(|n| (next[n / 2][n % 2] - p[n / 2][n % 2]).abs()).fold(0.0, f64::max);
        p = next;
        if delta < 1e-15 {
            break;
        }
    }
    k
}

#[test]
fn lqr_expert_is_the_riccati_controller() {
    let k = riccati_gain();
    for i in 0..2 {
        assert!((k[i] - lqr::LQR_GAIN[i]).abs() < 1e-9, "gain {i}: oracle {} frozen {}", k[i], lqr::LQR_GAIN[i]);
    }
    for (x, v) in [(0.1, 0.0), (-0.2, 0.15), (0.05, -0.3)] {
        let want = -(k[0] * x + k[1] * v);
        assert!((lqr::expert_action(x, v) - want).abs() < 1e-9);
    }
    // saturates at the box edge
    assert_eq!(lqr::expert_action(3.0, 0.0), -1.0);
}

#[test]
fn tiers_are_ordered_on_every_environment() {
    for spec in EnvSpec::all() {
        let mean_return = |tier| {
            let mut total = 0.0;
            for ep in 0..100u64 {
                let mut policy = ScriptedPolicy::new(&spec, tier, 1000 + ep);
                total += run_episode(&spec, 5000 + ep, &mut policy).unwrap();
            }
            total / 100.0
        };
        let (r, m, e) = (
            mean_return(BehaviorTier::Random),
            mean_return(BehaviorTier::Medium),
            mean_return(BehaviorTier::Expert),
        );
        assert!(e > m && m > r, "{}: expert {e} medium {m} random {r}", spec.name());
    }
}

#[test]
fn reset_and_rollouts_are_deterministic() {
    for spec in EnvSpec::all() {
        assert_eq!(env_reset(&spec, 42), env_reset(&spec, 42));
        let mut p1 = ScriptedPolicy::new(&spec, BehaviorTier::Medium, 3);
        let mut p2 = ScriptedPolicy::new(&spec, BehaviorTier::Medium, 3);
        assert_eq!(run_episode(&spec, 9, &mut p1).unwrap(), run_episode(&spec, 9, &mut p2).unwrap());
    }
}

#[test]
fn initial_state_distributions() {
    let lqr_spec = EnvSpec::new(EnvKind::Lqr1D);
    let pm = EnvSpec::new(EnvKind::PointMass2D);
    for seed in 0..200 {
        let s = env_reset(&lqr_spec, seed);
        assert!(s.observation[0].abs() <= 1.0);
        assert_eq!(s.observation[1], 0.0);
        match env_reset(&pm, seed).internal {
            InternalState::PointMass(p) => assert!(p.pos.iter().all(|c| c.abs() <= 1.0)),
            other => panic!("unexpected state {other:?}"),
        }
    }
}

#[test]
fn equilibria() {
    let spec = EnvSpec::new(EnvKind::Lqr1D);
    let mut s = env_reset(&spec, 0);
    s.internal = InternalState::Lqr { x: 0.0, v: 0.0 };
    s.observation = vec![0.0, 0.0];
    let r = env_step(&spec, &s, &[0.0]).unwrap();
    assert_eq!(r.reward, 0.0);
    assert_eq!(r.next_state.observation, vec![0.0, 0.0]);

    let spec = EnvSpec::new(EnvKind::Pendulum);
    let mut s = env_reset(&spec, 0);
    s.internal = InternalState::Pendulum { theta: 0.0, theta_dot: 0.0 };
    let r = env_step(&spec, &s, &[0.0]).unwrap();
    assert_eq!(r.next_state.internal, InternalState::Pendulum { theta: 0.0, theta_dot: 0.0 });
}

#[test]
fn scripted_expert_reproduces_its_anchor_through_evaluation() {
    for spec in EnvSpec::all() {
        let episodes = 10_000;
        let refs = reference_scores(&spec, episodes, 0).unwrap();
        assert_eq!(refs.expert_ref, spec.expert_ref);
        let mut expert = ScriptedPolicy::new(&spec, BehaviorTier::Expert, 0);
        let rec = evaluate_policy(&mut expert, &spec, 200, 77, 0).unwrap();
        let mean = rec.mean_return();
        let gap = spec.expert_ref - spec.random_ref;
        assert!((mean - spec.expert_ref).abs() < 0.02 * gap, "{}: {mean} vs {}", spec.name(), spec.expert_ref);
        assert!(spec.expert_ref > spec.random_ref);
    }
}

#[test]
fn random_policy_scores_near_zero_against_its_own_anchor() {
    for spec in EnvSpec::all() {
        let mut random = ScriptedPolicy::new(&spec, BehaviorTier::Random, 0);
        let rec = evaluate_policy(&mut random, &spec, 1000, 0, 0).unwrap();
        let score = normalized_score(rec.mean_return(), spec.random_ref, spec.expert_ref).unwrap();
        assert!(score.abs() < 3.0, "{}: {score}", spec.name());
    }
}
