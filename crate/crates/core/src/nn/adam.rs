use super::mlp::{Mlp, MlpGrads};
use crate::error::{OrlError, Result};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Adam optimizer state with bias correction.
///
/// Moments are stored per parameter tensor, in the order produced by
/// [`Mlp::tensors`]: `[w0, b0, w1, b1, ...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(shapes: &[usize], learning_rate: f64) -> Self {
        Self {
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step_count: 0,
            learning_rate,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn for_mlp(net: &Mlp, learning_rate: f64) -> Self {
        let shapes: Vec<usize> = net.tensors().iter().map(|t| t.len()).collect();
        Self::new(&shapes, learning_rate)
    }

    /// One Adam update over a list of parameter tensors.
    ///
    /// Gradients are validated before anything is mutated; on error, both
    /// the parameters and the optimizer state are untouched. The reported
    /// layer index is `tensor_index / 2`, matching the weight/bias pairing of
    /// an [`Mlp`].
    pub fn step_tensors(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(OrlError::shape("adam tensor count", self.first_moment.len(), format!("{} params / {} grads", params.len(), grads.len())));
        }
        for (i, ((p, g), m)) in params.iter().zip(grads).zip(&self.first_moment).enumerate() {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(OrlError::shape("adam tensor length", m.len(), format!("tensor {i}: {} params / {} grads", p.len(), g.len())));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(OrlError::Numeric {
                    context: "adam gradient".into(),
                    layer: Some(i / 2),
                    step: None,
                });
            }
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let bias1 = 1.0 - b1.powi(t);
        let bias2 = 1.0 - b2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                p[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads) -> Result<()> {
        let grads = grads.tensors();
        let mut params = net.tensors_mut();
        self.step_tensors(&mut params, &grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(params: &mut [Vec<f64>], grads: &[Vec<f64>], state: &mut AdamState) -> Result<()> {
        let mut p: Vec<&mut [f64]> = params.iter_mut().map(|v| v.as_mut_slice()).collect();
        let g: Vec<&[f64]> = grads.iter().map(|v| v.as_slice()).collect();
        state.step_tensors(&mut p, &g)
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = vec![vec![1.0, -2.0, 3.5]];
        let mut st = AdamState::new(&[3], 3e-4);
        run(&mut params, &[vec![0.0; 3]], &mut st).unwrap();
        assert_eq!(params[0], vec![1.0, -2.0, 3.5]);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        // From zero moments: m̂ = g, v̂ = g², so Δ = −lr·g/(|g|+eps).
        let lr = 3e-4;
        let g = vec![0.5, -2.0, 1e-3, -7.0];
        let mut params = vec![vec![0.0; 4]];
        let mut st = AdamState::new(&[4], lr);
        run(&mut params, &[g.clone()], &mut st).unwrap();
        for (p, gi) in params[0].iter().zip(&g) {
            let want = -lr * gi / (gi.abs() + DEFAULT_EPSILON);
            assert!((p - want).abs() < 1e-18, "{p} vs {want}");
            assert!((p + lr * gi.signum()).abs() < lr * 1e-4);
        }
    }

    #[test]
    fn constant_gradient_steps_approach_lr_magnitude() {
        let lr = 1e-3;
        let mut params = vec![vec![0.0, 0.0]];
        let mut st = AdamState::new(&[2], lr);
        let g = vec![vec![0.3, -4.0]];
        let mut prev = params[0].clone();
        for _ in 0..2000 {
            run(&mut params, &g, &mut st).unwrap();
            let delta: Vec<f64> = params[0].iter().zip(&prev).map(|(a, b)| a - b).collect();
            assert!(delta[0] < 0.0 && delta[1] > 0.0);
            prev = params[0].clone();
        }
        let last: Vec<f64> = {
            let before = params[0].clone();
            run(&mut params, &g, &mut st).unwrap();
            params[0].iter().zip(&before).map(|(a, b)| a - b).collect()
        };
        assert!((last[0] + lr).abs() < 1e-9);
        assert!((last[1] - lr).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_reports_layer() {
        let mut params = vec![vec![0.0; 2], vec![0.0], vec![0.0; 2], vec![0.0]];
        let grads = vec![vec![0.0; 2], vec![0.0], vec![1.0, f64::NAN], vec![0.0]];
        let mut st = AdamState::new(&[2, 1, 2, 1], 1e-3);
        let err = run(&mut params, &grads, &mut st).unwrap_err();
        assert!(matches!(err, OrlError::Numeric { layer: Some(1), .. }), "{err}");
        assert_eq!(st.step_count, 0);
    }

    proptest! {
        #[test]
        fn update_commutes_with_tensor_permutation(
            values in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..6),
            steps in 1usize..5,
        ) {
            let params: Vec<Vec<f64>> = values.iter().map(|(p, _)| vec![*p]).collect();
            let grads: Vec<Vec<f64>> = values.iter().map(|(_, g)| vec![*g]).collect();
            let n = params.len();
            let shapes = vec![1; n];

            let mut forward = params.clone();
            let mut st = AdamState::new(&shapes, 1e-2);
            for _ in 0..steps {
                run(&mut forward, &grads, &mut st).unwrap();
            }

            let mut rev_params: Vec<Vec<f64>> = params.iter().rev().cloned().collect();
            let rev_grads: Vec<Vec<f64>> = grads.iter().rev().cloned().collect();
            let mut st = AdamState::new(&shapes, 1e-2);
            for _ in 0..steps {
                run(&mut rev_params, &rev_grads, &mut st).unwrap();
            }
            rev_params.reverse();
            prop_assert_eq!(forward, rev_params);
        }

        #[test]
        fn second_moment_stays_non_negative(gs in proptest::collection::vec(-1e3f64..1e3, 1..20)) {
            let mut params = vec![vec![0.0]];
            let mut st = AdamState::new(&[1], 1e-3);
            for g in gs {
                run(&mut params, &[vec![g]], &mut st).unwrap();
                prop_assert!(st.second_moment[0][0] >= 0.0);
            }
        }
    }
}
