//! Offline reinforcement learning with TD3+BC on small continuous-control
//! tasks: a dense-network toolkit, three simulated environments with scripted
//! behavior policies, offline datasets, the learner, evaluation metrics and
//! an experiment runner.

pub mod agent;
pub mod datasets;
pub mod envs;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod runner;

pub use error::{OrlError, Result};
