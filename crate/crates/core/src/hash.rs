//! Config and artifact hashing.

use serde::Serialize;
use sha2::{Digest, Sha256};

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Hash of the canonical (compact JSON, declaration-order fields)
/// serialization of a value.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_vec(value).expect("config types always serialize");
    sha256_hex(&canonical)
}
