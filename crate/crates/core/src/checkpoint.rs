//! Versioned JSON checkpoints tagged with the hash of the configuration that
//! produced them.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT: &str = "tsmeta-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub payload: T,
}

impl<T> Checkpoint<T> {
    pub fn new(config_hash: impl Into<String>, payload: T) -> Self {
        Checkpoint {
            format: FORMAT.to_string(),
            version: VERSION,
            config_hash: config_hash.into(),
            payload,
        }
    }
}

pub fn save<T: Serialize>(path: &Path, config_hash: &str, payload: &T) -> Result<()> {
    let ck = Checkpoint::new(config_hash, payload);
    let bytes = serde_json::to_vec(&ck)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint, refusing a different format, version or config hash.
/// An `expected_hash` of `None` skips the hash check.
pub fn load<T: DeserializeOwned>(path: &Path, expected_hash: Option<&str>) -> Result<Checkpoint<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint<T> = serde_json::from_slice(&bytes)?;
    if ck.format != FORMAT || ck.version != VERSION {
        return Err(Error::Data(format!(
            "{}: unsupported checkpoint {} v{}",
            path.display(),
            ck.format,
            ck.version
        )));
    }
    if let Some(expected) = expected_hash {
        if ck.config_hash != expected {
            return Err(Error::HashMismatch {
                expected: expected.to_string(),
                found: ck.config_hash,
            });
        }
    }
    Ok(ck)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Params, TaskNetConfig, TaskNetwork};
    use crate::seed;

    #[test]
    fn network_round_trips_bit_exactly_and_checks_hash() {
        let cfg = TaskNetConfig {
            hidden: vec![4],
            feature_dim: Some(3),
            ..TaskNetConfig::new(2, 3)
        };
        let net = TaskNetwork::new(cfg.clone(), &mut seed::rng(0, "ck", 0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("net.json");
        save(&p, &cfg.hash(), &net).unwrap();
        let back: Checkpoint<TaskNetwork> = load(&p, Some(&cfg.hash())).unwrap();
        assert_eq!(back.payload.fingerprint(), net.fingerprint());
        let other = TaskNetConfig {
            hidden: vec![5],
            ..cfg
        };
        assert!(matches!(
            load::<TaskNetwork>(&p, Some(&other.hash())),
            Err(Error::HashMismatch { .. })
        ));
    }
}
