//! Finite-difference gradient checks shared by the gradient and acceptance
//! suites.

use orl_core::agent::{actor_objective, Td3bcConfig};
use orl_core::datasets::Batch;
use orl_core::nn::{Matrix, Mlp, OutputActivation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

#[derive(Debug, Default)]
pub struct GradStats {
    pub instances: usize,
    pub checked: usize,
    /// Coordinates whose stencil straddles a ReLU kink.
    pub skipped: usize,
    pub worst: f64,
    pub worst_at: String,
}

impl GradStats {
    pub fn passes(&self) -> bool {
        self.worst < TOL && self.skipped * 100 <= self.checked
    }

    fn record(&mut self, analytic: f64, numeric: Option<f64>, at: impl FnOnce() -> String) {
        match numeric {
            Some(n) => {
                let err = relative_error(analytic, n);
                if err > self.worst || self.checked == 0 {
                    self.worst = err;
                    self.worst_at = at();
                }
                self.checked += 1;
            }
            None => self.skipped += 1,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central difference, or `None` when the half-step estimate disagrees with
/// the full-step one.
fn central_difference(f: &mut dyn FnMut(f64) -> f64) -> Option<f64> {
    let full = (f(H) - f(-H)) / (2.0 * H);
    let half = (f(H / 2.0) - f(-H / 2.0)) / H;
    (relative_error(full, half) < 1e-3).then_some(full)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, range: f64) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-range..range)).collect()).unwrap()
}

fn weighted_output(net: &Mlp, x: &Matrix, upstream: &Matrix) -> f64 {
    let y = net.forward(x).unwrap();
    y.as_slice().iter().zip(upstream.as_slice()).map(|(a, b)| a * b).sum()
}

/// Checks parameter and input gradients of `sum(upstream ⊙ net(x))` on random
/// small networks.
pub fn check_mlp(instances: u64, seed: u64) -> GradStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = GradStats::default();
    for instance in 0..instances {
        let depth = rng.random_range(1..=3);
        let mut sizes = vec![rng.random_range(1..=4)];
        for _ in 0..depth {
            sizes.push(rng.random_range(1..=6));
        }
        sizes.push(rng.random_range(1..=3));
        let head = if rng.random_bool(0.5) { OutputActivation::Tanh } else { OutputActivation::Identity };
        let net = Mlp::new(&sizes, head, seed ^ instance).unwrap();
        let batch = rng.random_range(1..=5);
        let x = random_matrix(&mut rng, batch, net.input_dim(), 1.5);
        let upstream = random_matrix(&mut rng, batch, net.output_dim(), 1.5);
        let grads = net.backward(&x, &upstream).unwrap();

        let analytic: Vec<Vec<f64>> = grads.params.tensors().iter().map(|t| t.to_vec()).collect();
        for (t, tensor) in analytic.iter().enumerate() {
            for (i, &a) in tensor.iter().enumerate() {
                let numeric = central_difference(&mut |d| {
                    let mut probe = net.clone();
                    probe.tensors_mut()[t][i] += d;
                    weighted_output(&probe, &x, &upstream)
                });
                stats.record(a, numeric, || format!("instance {instance} tensor {t} index {i}"));
            }
        }
        for i in 0..x.as_slice().len() {
            let numeric = central_difference(&mut |d| {
                let mut probe = x.clone();
                probe.as_mut_slice()[i] += d;
                weighted_output(&net, &probe, &upstream)
            });
            stats.record(grads.inputs.as_slice()[i], numeric, || format!("instance {instance} input {i}"));
        }
        stats.instances += 1;
    }
    stats
}

/// Checks the actor loss gradient with λ held at its batch value, cycling
/// through the three term combinations.
pub fn check_actor_loss(instances: u64, seed: u64) -> GradStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = GradStats::default();
    for instance in 0..instances {
        let obs_dim = rng.random_range(1..=4);
        let act_dim = rng.random_range(1..=3);
        let hidden = rng.random_range(2..=6);
        let n = rng.random_range(1..=6);
        let actor = Mlp::new(&[obs_dim, hidden, hidden, act_dim], OutputActivation::Tanh, 3 * instance).unwrap();
        let critic = Mlp::new(&[obs_dim + act_dim, hidden, hidden, 1], OutputActivation::Identity, 3 * instance + 1).unwrap();
        let batch = Batch {
            states: random_matrix(&mut rng, n, obs_dim, 1.5),
            actions: random_matrix(&mut rng, n, act_dim, 1.0),
            rewards: vec![0.0; n],
            next_states: random_matrix(&mut rng, n, obs_dim, 1.5),
            not_done: vec![1.0; n],
            indices: (0..n).collect(),
        };
        let (use_bc_term, use_q_term) = [(true, true), (true, false), (false, true)][instance as usize % 3];
        let cfg = Td3bcConfig {
            use_bc_term,
            use_q_term,
            alpha: rng.random_range(0.5..5.0),
            ..Default::default()
        };
        let lam = actor_objective(&actor, &critic, &batch, &cfg, None).unwrap().lambda;
        let obj = actor_objective(&actor, &critic, &batch, &cfg, lam).unwrap();
        let analytic: Vec<Vec<f64>> = obj.grads.tensors().iter().map(|t| t.to_vec()).collect();
        for (t, tensor) in analytic.iter().enumerate() {
            for (i, &a) in tensor.iter().enumerate() {
                let numeric = central_difference(&mut |d| {
                    let mut probe = actor.clone();
                    probe.tensors_mut()[t][i] += d;
                    actor_objective(&probe, &critic, &batch, &cfg, lam).unwrap().loss
                });
                stats.record(a, numeric, || format!("instance {instance} tensor {t} index {i}"));
            }
        }
        stats.instances += 1;
    }
    stats
}
