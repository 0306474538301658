//! Learner checkpoint:
//!
//! ```text
//! "ORLC" | u32 version | u64 header length | JSON header | f64 LE payload
//! ```
//!
//! The payload holds the six networks (actor, critic1, critic2 and their
//! targets) as `[w0, b0, w1, b1, ...]`, then the three Adam states as all
//! first moments followed by all second moments. The header records the
//! architecture, optimizer counters, config hash and a payload SHA-256.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Td3bcConfig, TrainState};
use crate::datasets::NormalizationStats;
use crate::error::{OrlError, Result};
use crate::nn::{AdamState, Mlp, OutputActivation};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"ORLC";
pub const CHECKPOINT_VERSION: u32 = 1;

const NETWORKS: [&str; 6] = ["actor", "critic1", "critic2", "actor_target", "critic1_target", "critic2_target"];
const OPTIMIZERS: [&str; 3] = ["actor", "critic1", "critic2"];

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub env_name: String,
    pub seed: u64,
    pub config: Td3bcConfig,
    pub stats: Option<NormalizationStats>,
    pub state: TrainState,
}

#[derive(Serialize, Deserialize)]
struct NetworkHeader {
    name: String,
    layer_sizes: Vec<usize>,
    output_activation: OutputActivation,
}

#[derive(Serialize, Deserialize)]
struct OptimizerHeader {
    name: String,
    step_count: u64,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    env_name: String,
    seed: u64,
    config_hash: String,
    config: Td3bcConfig,
    stats: Option<NormalizationStats>,
    step_count: u64,
    actor_updates: u64,
    networks: Vec<NetworkHeader>,
    optimizers: Vec<OptimizerHeader>,
    payload_sha256: String,
}

fn networks(s: &TrainState) -> [&Mlp; 6] {
    [&s.actor, &s.critic1, &s.critic2, &s.actor_target, &s.critic1_target, &s.critic2_target]
}

fn optimizers(s: &TrainState) -> [&AdamState; 3] {
    [&s.actor_opt, &s.critic1_opt, &s.critic2_opt]
}

fn format_err(section: &'static str, detail: impl Into<String>) -> OrlError {
    OrlError::Format {
        section,
        detail: detail.into(),
    }
}

pub fn write_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let s = &ckpt.state;
    let mut payload = Vec::new();
    let mut put = |vals: &[f64]| {
        for v in vals {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    };
    for net in networks(s) {
        for t in net.tensors() {
            put(t);
        }
    }
    for opt in optimizers(s) {
        for m in opt.first_moment.iter().chain(&opt.second_moment) {
            put(m);
        }
    }
    let header = Header {
        env_name: ckpt.env_name.clone(),
        seed: ckpt.seed,
        config_hash: ckpt.config.config_hash(),
        config: ckpt.config.clone(),
        stats: ckpt.stats.clone(),
        step_count: s.step_count,
        actor_updates: s.actor_updates,
        networks: NETWORKS
            .iter()
            .zip(networks(s))
            .map(|(name, net)| NetworkHeader {
                name: name.to_string(),
                layer_sizes: net.layer_sizes(),
                output_activation: net.output_activation(),
            })
            .collect(),
        optimizers: OPTIMIZERS
            .iter()
            .zip(optimizers(s))
            .map(|(name, o)| OptimizerHeader {
                name: name.to_string(),
                step_count: o.step_count,
                learning_rate: o.learning_rate,
                beta1: o.beta1,
                beta2: o.beta2,
                epsilon: o.epsilon,
            })
            .collect(),
        payload_sha256: hex::encode(Sha256::digest(&payload)),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + payload.len());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    out
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 16 {
        return Err(format_err("magic", format!("file is {} bytes", bytes.len())));
    }
    if bytes[..4] != CHECKPOINT_MAGIC {
        return Err(OrlError::Version(format!("bad magic {:?}, expected {:?}", &bytes[..4], CHECKPOINT_MAGIC)));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(OrlError::Version(format!("checkpoint version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let rest = &bytes[16..];
    if header_len > rest.len() as u64 {
        return Err(format_err("header length", format!("{header_len} exceeds remaining {} bytes", rest.len())));
    }
    let (json, payload) = rest.split_at(header_len as usize);
    let header: Header = serde_json::from_slice(json).map_err(|e| format_err("header", e.to_string()))?;
    if header.config_hash != header.config.config_hash() {
        return Err(format_err("header", "config hash does not match the stored config"));
    }
    if hex::encode(Sha256::digest(payload)) != header.payload_sha256 {
        return Err(format_err("payload", "checksum mismatch"));
    }
    if header.networks.len() != NETWORKS.len() || header.optimizers.len() != OPTIMIZERS.len() {
        return Err(format_err("header", "unexpected network or optimizer count"));
    }

    let mut values = payload.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()));
    if payload.len() % 8 != 0 {
        return Err(format_err("payload", "length is not a multiple of 8"));
    }
    let mut fill = |dst: &mut [f64]| -> Result<()> {
        for d in dst {
            *d = values.next().ok_or_else(|| format_err("payload", "truncated"))?;
        }
        Ok(())
    };

    let mut nets = Vec::with_capacity(NETWORKS.len());
    for nh in &header.networks {
        let mut net = Mlp::new(&nh.layer_sizes, nh.output_activation, 0).map_err(|e| format_err("header", e.to_string()))?;
        for t in net.tensors_mut() {
            fill(t)?;
        }
        nets.push(net);
    }
    let mut opts = Vec::with_capacity(OPTIMIZERS.len());
    for (oh, net) in header.optimizers.iter().zip(&nets) {
        let mut opt = AdamState::for_mlp(net, oh.learning_rate);
        opt.step_count = oh.step_count;
        opt.beta1 = oh.beta1;
        opt.beta2 = oh.beta2;
        opt.epsilon = oh.epsilon;
        for m in opt.first_moment.iter_mut().chain(opt.second_moment.iter_mut()) {
            fill(m)?;
        }
        opts.push(opt);
    }
    if values.next().is_some() {
        return Err(format_err("payload", "trailing data"));
    }

    let mut nets = nets.into_iter();
    let mut opts = opts.into_iter();
    let mut next_net = || nets.next().unwrap();
    let state = TrainState {
        actor: next_net(),
        critic1: next_net(),
        critic2: next_net(),
        actor_target: next_net(),
        critic1_target: next_net(),
        critic2_target: next_net(),
        actor_opt: opts.next().unwrap(),
        critic1_opt: opts.next().unwrap(),
        critic2_opt: opts.next().unwrap(),
        step_count: header.step_count,
        actor_updates: header.actor_updates,
    };
    Ok(Checkpoint {
        env_name: header.env_name,
        seed: header.seed,
        config: header.config,
        stats: header.stats,
        state,
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_checkpoint(ckpt)).map_err(|e| OrlError::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| OrlError::io(path, e))?;
    read_checkpoint(&bytes)
}
