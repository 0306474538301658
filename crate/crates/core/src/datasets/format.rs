//! Dataset container:
//!
//! ```text
//! "ORLD" | u32 version | u64 header length | JSON header | records
//! record = state f64×obs | action f64×act | reward f64 | next_state f64×obs | terminal u8
//! ```
//!
//! All integers and floats are little-endian. The header also carries a
//! SHA-256 of the record section, verified on load.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DatasetTier, NormalizationStats, OfflineDataset};
use crate::error::{OrlError, Result};

pub const DATASET_MAGIC: [u8; 4] = *b"ORLD";
pub const DATASET_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    env_name: String,
    tier: DatasetTier,
    size: u64,
    obs_dim: u64,
    act_dim: u64,
    generator_seed: u64,
    epsilon: Option<f64>,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    records_sha256: Option<String>,
}

fn record_len(obs_dim: usize, act_dim: usize) -> usize {
    8 * (2 * obs_dim + act_dim + 1) + 1
}

pub fn write_dataset(d: &OfflineDataset) -> Vec<u8> {
    let mut records = Vec::with_capacity(d.len() * record_len(d.obs_dim, d.act_dim));
    let put = |buf: &mut Vec<u8>, vals: &[f64]| {
        for v in vals {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    };
    for i in 0..d.len() {
        put(&mut records, d.state(i));
        put(&mut records, d.action(i));
        put(&mut records, &[d.rewards[i]]);
        put(&mut records, d.next_state(i));
        records.push(d.terminals[i] as u8);
    }
    let header = Header {
        env_name: d.env_name.clone(),
        tier: d.tier,
        size: d.len() as u64,
        obs_dim: d.obs_dim as u64,
        act_dim: d.act_dim as u64,
        generator_seed: d.generator_seed,
        epsilon: d.stats.as_ref().map(|s| s.epsilon),
        mu: d.stats.as_ref().map(|s| s.mu.clone()).unwrap_or_default(),
        sigma: d.stats.as_ref().map(|s| s.sigma.clone()).unwrap_or_default(),
        records_sha256: Some(hex::encode(Sha256::digest(&records))),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + records.len());
    out.extend_from_slice(&DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&records);
    out
}

fn take<'a>(buf: &mut &'a [u8], n: usize, section: &'static str) -> Result<&'a [u8]> {
    if buf.len() < n {
        return Err(OrlError::Format {
            section,
            detail: format!("need {n} bytes, {} remain", buf.len()),
        });
    }
    let (head, tail) = buf.split_at(n);
    *buf = tail;
    Ok(head)
}

pub fn read_dataset(bytes: &[u8]) -> Result<OfflineDataset> {
    let mut buf = bytes;
    let magic = take(&mut buf, 4, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(OrlError::Version(format!("bad magic {magic:?}, expected {:?}", DATASET_MAGIC)));
    }
    let version = u32::from_le_bytes(take(&mut buf, 4, "version")?.try_into().unwrap());
    if version != DATASET_VERSION {
        return Err(OrlError::Version(format!("dataset version {version}, expected {DATASET_VERSION}")));
    }
    let header_len = u64::from_le_bytes(take(&mut buf, 8, "header length")?.try_into().unwrap());
    let header_len = usize::try_from(header_len).map_err(|_| OrlError::Format {
        section: "header length",
        detail: format!("{header_len} does not fit in memory"),
    })?;
    let header: Header = serde_json::from_slice(take(&mut buf, header_len, "header")?).map_err(|e| OrlError::Format {
        section: "header",
        detail: e.to_string(),
    })?;

    let (obs_dim, act_dim, size) = (header.obs_dim as usize, header.act_dim as usize, header.size as usize);
    let expected = size
        .checked_mul(record_len(obs_dim, act_dim))
        .ok_or_else(|| OrlError::Format {
            section: "header",
            detail: "record section size overflows".into(),
        })?;
    if buf.len() != expected {
        return Err(OrlError::Format {
            section: "records",
            detail: format!("expected {expected} bytes for {size} records, found {}", buf.len()),
        });
    }
    if let Some(want) = &header.records_sha256 {
        let got = hex::encode(Sha256::digest(buf));
        if &got != want {
            return Err(OrlError::Format {
                section: "records",
                detail: format!("checksum mismatch: header {want}, computed {got}"),
            });
        }
    }

    let stats = match header.epsilon {
        Some(epsilon) => Some(NormalizationStats {
            mu: header.mu,
            sigma: header.sigma,
            epsilon,
        }),
        None => None,
    };
    let mut d = OfflineDataset {
        env_name: header.env_name,
        tier: header.tier,
        obs_dim,
        act_dim,
        states: Vec::with_capacity(size * obs_dim),
        actions: Vec::with_capacity(size * act_dim),
        rewards: Vec::with_capacity(size),
        next_states: Vec::with_capacity(size * obs_dim),
        terminals: Vec::with_capacity(size),
        stats,
        generator_seed: header.generator_seed,
    };
    let f64s = |chunk: &[u8]| -> Vec<f64> {
        chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect()
    };
    for (i, rec) in buf.chunks_exact(record_len(obs_dim, act_dim)).enumerate() {
        let (s, rest) = rec.split_at(8 * obs_dim);
        let (a, rest) = rest.split_at(8 * act_dim);
        let (r, rest) = rest.split_at(8);
        let (ns, term) = rest.split_at(8 * obs_dim);
        d.states.extend(f64s(s));
        d.actions.extend(f64s(a));
        d.rewards.push(f64::from_le_bytes(r.try_into().unwrap()));
        d.next_states.extend(f64s(ns));
        d.terminals.push(match term[0] {
            0 => false,
            1 => true,
            other => {
                return Err(OrlError::Format {
                    section: "records",
                    detail: format!("terminal byte {other} at record {i}"),
                })
            }
        });
    }
    d.validate().map_err(|e| OrlError::Format {
        section: "records",
        detail: e.to_string(),
    })?;
    Ok(d)
}

pub fn save_dataset(d: &OfflineDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_dataset(d)).map_err(|e| OrlError::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<OfflineDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| OrlError::io(path, e))?;
    read_dataset(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::generate_dataset;
    use crate::envs::{EnvKind, EnvSpec};

    fn sample() -> OfflineDataset {
        generate_dataset(&EnvSpec::new(EnvKind::PointMass2D), DatasetTier::Medium, 1500, 11).unwrap()
    }

    #[test]
    fn roundtrip_is_exact() {
        let d = sample();
        let back = read_dataset(&write_dataset(&d)).unwrap();
        assert_eq!(back, d);
        assert_eq!(write_dataset(&back), write_dataset(&d));
    }

    #[test]
    fn layout_prefix() {
        let bytes = write_dataset(&sample());
        assert_eq!(&bytes[..4], b"ORLD");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[16..16 + hlen]).unwrap();
        for key in ["env_name", "tier", "size", "obs_dim", "act_dim", "generator_seed", "epsilon", "mu", "sigma"] {
            assert!(header.get(key).is_some(), "{key}");
        }
        assert_eq!(bytes.len() - 16 - hlen, 1500 * (8 * (6 + 2 + 1 + 6) + 1));
    }

    #[test]
    fn truncated_file_is_format_error() {
        let bytes = write_dataset(&sample());
        for cut in [2, 10, 40, bytes.len() - 1] {
            let err = read_dataset(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, OrlError::Format { .. }), "cut {cut}: {err}");
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = write_dataset(&sample());
        bytes[0] = b'X';
        assert!(matches!(read_dataset(&bytes), Err(OrlError::Version(_))));
        let mut bytes = write_dataset(&sample());
        bytes[4] = 2;
        assert!(matches!(read_dataset(&bytes), Err(OrlError::Version(_))));
    }

    #[test]
    fn corrupted_record_fails_checksum() {
        let mut bytes = write_dataset(&sample());
        let last = bytes.len() - 20;
        bytes[last] ^= 0xff;
        assert!(matches!(read_dataset(&bytes), Err(OrlError::Format { section: "records", .. })));
    }
}
