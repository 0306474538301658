use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{gemm_ab, gemm_abt, gemm_atb, Matrix};
use crate::error::{OrlError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Tanh,
}

/// One dense layer. `weights` is `fan_out × fan_in`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub(crate) fan_in: usize,
    pub(crate) fan_out: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

impl Dense {
    pub fn fan_in(&self) -> usize {
        self.fan_in
    }

    pub fn fan_out(&self) -> usize {
        self.fan_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }
}

/// Feed-forward network: ReLU on hidden layers, configurable output head.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    output_activation: OutputActivation,
}

/// Activations retained from a forward pass for reverse-mode differentiation.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    input: Matrix,
    /// Post-activation output of every layer; the last entry is the network output.
    activations: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("trace has at least one layer")
    }

    pub fn input(&self) -> &Matrix {
        &self.input
    }
}

/// Parameter gradients, laid out exactly like the network's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<DenseGrads>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl MlpGrads {
    /// Flat tensor view in the same order as [`Mlp::tensors`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|&g| g == 0.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle {
    pub params: MlpGrads,
    pub inputs: Matrix,
}

impl Mlp {
    /// Builds a network with weights and biases drawn uniformly from
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new(layer_sizes: &[usize], output_activation: OutputActivation, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(OrlError::InvalidArgument(format!(
                "layer_sizes needs at least 2 entries, got {}",
                layer_sizes.len()
            )));
        }
        if let Some(pos) = layer_sizes.iter().position(|&s| s == 0) {
            return Err(OrlError::InvalidArgument(format!("layer_sizes[{pos}] is zero")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weights = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..=bound)).collect();
                let bias = (0..fan_out).map(|_| rng.random_range(-bound..=bound)).collect();
                Dense {
                    fan_in,
                    fan_out,
                    weights,
                    bias,
                }
            })
            .collect();
        Ok(Self {
            layers,
            output_activation,
        })
    }

    /// Assembles a network from explicit layers; consecutive layers must chain.
    pub fn from_layers(layers: Vec<Dense>, output_activation: OutputActivation) -> Result<Self> {
        if layers.is_empty() {
            return Err(OrlError::InvalidArgument("network needs at least one layer".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.fan_in == 0 || l.fan_out == 0 {
                return Err(OrlError::InvalidArgument(format!("layer {k} has a zero dimension")));
            }
            if l.weights.len() != l.fan_in * l.fan_out || l.bias.len() != l.fan_out {
                return Err(OrlError::shape(
                    "Mlp::from_layers",
                    format!("{}x{} weights, {} biases", l.fan_out, l.fan_in, l.fan_out),
                    format!("{} weights, {} biases", l.weights.len(), l.bias.len()),
                ));
            }
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].fan_out != pair[1].fan_in {
                return Err(OrlError::shape("Mlp::from_layers", pair[0].fan_out, format!("layer {} fan_in {}", k + 1, pair[1].fan_in)));
            }
        }
        Ok(Self {
            layers,
            output_activation,
        })
    }

    pub fn dense(fan_in: usize, fan_out: usize, weights: Vec<f64>, bias: Vec<f64>) -> Dense {
        Dense {
            fan_in,
            fan_out,
            weights,
            bias,
        }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].fan_in];
        sizes.extend(self.layers.iter().map(|l| l.fan_out));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.fan_out).unwrap_or(0)
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameter tensors in order `[w0, b0, w1, b1, ...]`.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.layer_sizes() == other.layer_sizes() && self.output_activation == other.output_activation
    }

    /// `self ← tau·source + (1−tau)·self`, elementwise.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) {
        debug_assert!(self.same_architecture(source));
        for (dst, src) in self.tensors_mut().into_iter().zip(source.tensors()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = tau * s + (1.0 - tau) * *d;
            }
        }
    }

    fn check_input(&self, inputs: &Matrix) -> Result<()> {
        if inputs.cols() != self.input_dim() {
            return Err(OrlError::shape("mlp forward input columns", self.input_dim(), inputs.cols()));
        }
        Ok(())
    }

    pub fn forward(&self, inputs: &Matrix) -> Result<Matrix> {
        self.check_input(inputs)?;
        let mut x = self.apply_layer(0, inputs);
        for k in 1..self.layers.len() {
            x = self.apply_layer(k, &x);
        }
        Ok(x)
    }

    /// Evaluates a single input vector.
    pub fn forward_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(&Matrix::row_vector(input))?.into_vec())
    }

    pub fn forward_trace(&self, inputs: &Matrix) -> Result<ForwardTrace> {
        self.check_input(inputs)?;
        let mut activations: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for k in 0..self.layers.len() {
            let prev = activations.last().unwrap_or(inputs);
            let next = self.apply_layer(k, prev);
            activations.push(next);
        }
        Ok(ForwardTrace {
            input: inputs.clone(),
            activations,
        })
    }

    fn apply_layer(&self, k: usize, x: &Matrix) -> Matrix {
        let layer = &self.layers[k];
        let batch = x.rows();
        let mut out = Matrix::zeros(batch, layer.fan_out);
        {
            let buf = out.as_mut_slice();
            for row in buf.chunks_exact_mut(layer.fan_out) {
                row.copy_from_slice(&layer.bias);
            }
            gemm_abt(batch, layer.fan_in, layer.fan_out, x.as_slice(), &layer.weights, 1.0, buf);
        }
        let last = k + 1 == self.layers.len();
        if !last {
            out.map_inplace(|v| v.max(0.0));
        } else if self.output_activation == OutputActivation::Tanh {
            out.map_inplace(f64::tanh);
        }
        out
    }

    /// Exact gradients of `sum(upstream ⊙ output)` with respect to parameters and inputs.
    pub fn backward(&self, inputs: &Matrix, upstream: &Matrix) -> Result<GradientBundle> {
        let trace = self.forward_trace(inputs)?;
        self.backward_from(&trace, upstream)
    }

    pub fn backward_from(&self, trace: &ForwardTrace, upstream: &Matrix) -> Result<GradientBundle> {
        let (params, inputs) = self.reverse(trace, upstream, true)?;
        Ok(GradientBundle {
            params: params.expect("parameter gradients requested"),
            inputs,
        })
    }

    /// Input gradient only; parameter gradients are skipped.
    pub fn input_gradient(&self, trace: &ForwardTrace, upstream: &Matrix) -> Result<Matrix> {
        Ok(self.reverse(trace, upstream, false)?.1)
    }

    fn reverse(&self, trace: &ForwardTrace, upstream: &Matrix, want_params: bool) -> Result<(Option<MlpGrads>, Matrix)> {
        let out = trace.output();
        if upstream.rows() != out.rows() || upstream.cols() != out.cols() {
            return Err(OrlError::shape(
                "mlp backward upstream",
                format!("{}x{}", out.rows(), out.cols()),
                format!("{}x{}", upstream.rows(), upstream.cols()),
            ));
        }
        let batch = out.rows();
        let mut delta = upstream.clone();
        if self.output_activation == OutputActivation::Tanh {
            for (d, &y) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
                *d *= 1.0 - y * y;
            }
        }

        let mut grads: Vec<DenseGrads> = Vec::new();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let layer_in = if k == 0 { &trace.input } else { &trace.activations[k - 1] };
            if want_params {
                let mut gw = vec![0.0; layer.fan_out * layer.fan_in];
                gemm_atb(layer.fan_out, batch, layer.fan_in, delta.as_slice(), layer_in.as_slice(), &mut gw);
                let mut gb = vec![0.0; layer.fan_out];
                for row in delta.iter_rows() {
                    for (g, &d) in gb.iter_mut().zip(row) {
                        *g += d;
                    }
                }
                grads.push(DenseGrads { weights: gw, bias: gb });
            }
            let mut dx = Matrix::zeros(batch, layer.fan_in);
            gemm_ab(batch, layer.fan_out, layer.fan_in, delta.as_slice(), &layer.weights, dx.as_mut_slice());
            if k > 0 {
                for (d, &a) in dx.as_mut_slice().iter_mut().zip(layer_in.as_slice()) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = dx;
        }
        let params = want_params.then(|| {
            grads.reverse();
            MlpGrads { layers: grads }
        });
        Ok((params, delta))
    }
}
