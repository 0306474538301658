//! Dense-network numerics: batched forward passes, exact reverse-mode
//! gradients with respect to parameters and inputs, and Adam.
//!
//! All losses built on top of this module are means over the mini-batch;
//! callers pass `∂loss/∂output` (already divided by the batch size) as the
//! upstream matrix, and [`Mlp::backward`] returns the exact gradient of
//! `sum(upstream ⊙ output)`.

mod adam;
mod matrix;
mod mlp;

pub use adam::{AdamState, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON};
pub use matrix::Matrix;
pub use mlp::{Dense, DenseGrads, ForwardTrace, GradientBundle, Mlp, MlpGrads, OutputActivation};
