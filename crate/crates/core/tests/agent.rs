use orl_core::agent::{
    actor_objective, agent_init, agent_init_dims, compute_lambda, compute_target, critic_update, select_action, soft_update_targets, train_step, Td3bcConfig,
    TrainState,
};
use orl_core::datasets::{generate_dataset, Batch, DatasetTier, NormalizationStats};
use orl_core::envs::{EnvKind, EnvSpec};
use orl_core::nn::{AdamState, Matrix, Mlp, OutputActivation};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Single linear layer with the given weights and bias.
fn linear(fan_in: usize, weights: Vec<f64>, bias: f64, head: OutputActivation) -> Mlp {
    Mlp::from_layers(vec![Mlp::dense(fan_in, 1, weights, vec![bias])], head).unwrap()
}

fn batch(states: &[&[f64]], actions: &[&[f64]], rewards: &[f64], next_states: &[&[f64]], terminal: &[bool]) -> Batch {
    Batch {
        states: Matrix::from_rows(states).unwrap(),
        actions: Matrix::from_rows(actions).unwrap(),
        rewards: rewards.to_vec(),
        next_states: Matrix::from_rows(next_states).unwrap(),
        not_done: terminal.iter().map(|&t| if t { 0.0 } else { 1.0 }).collect(),
        indices: (0..rewards.len()).collect(),
    }
}

fn replace_critics(state: &mut TrainState, c1: Mlp, c2: Mlp) {
    let lr = Td3bcConfig::default().critic_lr;
    state.critic1_opt = AdamState::for_mlp(&c1, lr);
    state.critic2_opt = AdamState::for_mlp(&c2, lr);
    state.critic1 = c1;
    state.critic2 = c2;
}

#[test]
fn constant_target_critics_give_discounted_minimum() {
    let cfg = Td3bcConfig::default();
    let mut state = agent_init_dims(2, 1, &cfg, 0).unwrap();
    state.critic1_target = linear(3, vec![0.0; 3], 1.0, OutputActivation::Identity);
    state.critic2_target = linear(3, vec![0.0; 3], 2.0, OutputActivation::Identity);
    let b = batch(&[&[0.3, -0.2], &[1.0, 0.5]], &[&[0.1], &[-0.7]], &[0.0, 0.0], &[&[0.2, 0.1], &[-1.0, 0.4]], &[false, false]);
    let t = compute_target(&b, &state, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    for y in t.y {
        assert!((y - 0.99).abs() < 1e-15, "{y}");
    }
}

#[test]
fn exact_critics_have_zero_loss_and_do_not_move() {
    let cfg = Td3bcConfig::default();
    let mut state = agent_init_dims(2, 1, &cfg, 0).unwrap();
    replace_critics(
        &mut state,
        linear(3, vec![0.0; 3], 3.5, OutputActivation::Identity),
        linear(3, vec![0.0; 3], 3.5, OutputActivation::Identity),
    );
    let before = state.clone();
    let b = batch(&[&[0.3, -0.2], &[1.0, 0.5], &[0.0, 0.0]], &[&[0.1], &[-0.7], &[0.9]], &[1.0; 3], &[&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]], &[false; 3]);
    let step = critic_update(&mut state, &b, &[3.5; 3]).unwrap();
    assert_eq!(step.loss, 0.0);
    assert_eq!(state.critic1, before.critic1);
    assert_eq!(state.critic2, before.critic2);
}

#[test]
fn single_transition_critic_loss_by_hand() {
    let cfg = Td3bcConfig::default();
    let mut state = agent_init_dims(1, 1, &cfg, 0).unwrap();
    replace_critics(
        &mut state,
        linear(2, vec![0.5, -0.25], 0.1, OutputActivation::Identity),
        linear(2, vec![-1.5, 2.0], -0.3, OutputActivation::Identity),
    );
    let (s, a, y) = (0.8, -0.4, 0.7);
    let b = batch(&[&[s]], &[&[a]], &[0.0], &[&[0.0]], &[false]);
    let step = critic_update(&mut state, &b, &[y]).unwrap();
    // Q1 = 0.4 + 0.1 + 0.1 = 0.6 ; Q2 = -1.2 - 0.8 - 0.3 = -2.3
    let want = (0.6f64 - 0.7).powi(2) + (-2.3f64 - 0.7).powi(2);
    assert!((step.loss - want).abs() < 1e-12, "{} vs {want}", step.loss);
    assert!((step.mean_abs_q - 0.6).abs() < 1e-12);
}

#[test]
fn lambda_examples() {
    assert_eq!(compute_lambda(&[2.0, -4.0, 6.0, -8.0], 2.5, 1e-8), 0.5);
    assert_eq!(compute_lambda(&[1.0, -1.0, 1.0], 2.5, 1e-8), 2.5);
    let q = [0.3, -1.7, 4.2, 0.05];
    let scaled: Vec<f64> = q.iter().map(|v| v * 7.0).collect();
    let ratio = compute_lambda(&q, 2.5, 1e-8) / compute_lambda(&scaled, 2.5, 1e-8);
    assert!((ratio - 7.0).abs() < 1e-12);
}

#[test]
fn behavior_cloning_minimum_has_zero_loss_and_gradient() {
    let cfg = Td3bcConfig {
        use_q_term: false,
        ..Default::default()
    };
    let state = agent_init_dims(3, 2, &cfg, 5).unwrap();
    let states = Matrix::from_rows(&[[0.1, 0.2, -0.3], [1.0, -1.0, 0.5], [0.0, 0.7, 0.2]]).unwrap();
    let actions = state.actor.forward(&states).unwrap();
    let b = Batch {
        next_states: states.clone(),
        states,
        actions,
        rewards: vec![0.0; 3],
        not_done: vec![1.0; 3],
        indices: vec![0, 1, 2],
    };
    let obj = actor_objective(&state.actor, &state.critic1, &b, &cfg, None).unwrap();
    assert_eq!(obj.loss, 0.0);
    assert!(obj.grads.is_zero());
    assert_eq!(obj.lambda, None);
}

#[test]
fn actor_is_untouched_on_steps_without_an_actor_update() {
    let spec = EnvSpec::new(EnvKind::PointMass2D);
    let cfg = Td3bcConfig {
        hidden_sizes: vec![16, 16],
        batch_size: 32,
        ..Default::default()
    };
    let data = generate_dataset(&spec, DatasetTier::Medium, 2000, 0).unwrap();
    let mut state = agent_init(&spec, &cfg, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..6 {
        let before = state.clone();
        let report = train_step(&mut state, &data, &cfg, &mut rng).unwrap();
        if state.step_count % 2 == 1 {
            assert_eq!(state.actor, before.actor);
            assert_eq!(state.actor_opt, before.actor_opt);
            assert_eq!(state.actor_target, before.actor_target);
            assert!(report.actor_loss.is_none());
        } else {
            assert_ne!(state.actor, before.actor);
            assert!(report.actor_loss.is_some());
        }
        assert_ne!(state.critic1, before.critic1);
    }
}

#[test]
fn soft_update_scalar_example() {
    let cfg = Td3bcConfig {
        hidden_sizes: vec![],
        ..Default::default()
    };
    let mut state = agent_init_dims(1, 1, &cfg, 0).unwrap();
    state.actor = linear(1, vec![2.0], 2.0, OutputActivation::Tanh);
    state.actor_target = linear(1, vec![0.0], 0.0, OutputActivation::Tanh);
    soft_update_targets(&mut state, 0.005);
    let l = &state.actor_target.layers()[0];
    assert!((l.weights()[0] - 0.01).abs() < 1e-15);
    assert!((l.bias()[0] - 0.01).abs() < 1e-15);
}

#[test]
fn observation_at_the_mean_acts_like_the_zero_vector() {
    let spec = EnvSpec::new(EnvKind::PointMass2D);
    let state = agent_init(&spec, &Td3bcConfig::default(), 3).unwrap();
    let obs = [0.4, -0.9, 0.2, 0.1, -0.5, 0.7];
    let stats = NormalizationStats {
        mu: obs.to_vec(),
        sigma: vec![0.3; 6],
        epsilon: 1e-3,
    };
    let a = select_action(&state.actor, &obs, Some(&stats)).unwrap();
    assert_eq!(a, state.actor.forward_one(&[0.0; 6]).unwrap());
    assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn adam_first_step_moves_by_learning_rate_against_the_gradient_sign() {
    let mut opt = AdamState::new(&[4], 3e-4);
    let mut params = vec![1.0, -2.0, 0.5, 0.0];
    let grads = [0.3, -7.0, 1e-3, -0.02];
    opt.step_tensors(&mut [params.as_mut_slice()], &[&grads]).unwrap();
    for ((p, p0), g) in params.iter().zip([1.0, -2.0, 0.5, 0.0]).zip(grads) {
        let want = p0 - 3e-4 * g.signum();
        // epsilon in the denominator shrinks the step slightly for small |g|
        assert!((p - want).abs() < 3e-4 * 1e-8 / g.abs() + 1e-15, "{p} vs {want}");
    }
}
