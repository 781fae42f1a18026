//! Content hashes of configuration values.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Serialize)]
struct Wrapped<'a, T: Serialize> {
    value: &'a T,
}

/// Lower-case hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Canonical TOML text of any serialisable value.
pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(&Wrapped { value }).map_err(|e| Error::Format(e.to_string()))
}

/// SHA-256 of the canonical TOML text of `value`.
pub fn hash_config<T: Serialize>(value: &T) -> Result<String> {
    Ok(sha256_hex(to_toml(value)?.as_bytes()))
}
