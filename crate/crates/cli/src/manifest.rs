//! Run manifests and bit-stable JSON output.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use hybridsim_core::trace::Conservation;

use crate::error::CliError;

/// Serialize with sorted keys and a trailing newline; byte-stable for equal
/// inputs.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let v = serde_json::to_value(value)
        .map_err(|e| CliError::Runtime(format!("serialization failed: {e}")))?;
    let mut s = serde_json::to_string_pretty(&v)
        .map_err(|e| CliError::Runtime(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// SHA-256 of a file's bytes, hex-encoded.
pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex_digest(&bytes))
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Provenance record written next to every simulation's trace files.
#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunManifest {
    pub manifest_version: u32,
    pub scenario_name: String,
    pub scenario_path: String,
    pub scenario_sha256: String,
    pub seed: u64,
    pub policy: String,
    pub version: String,
    pub horizon_sec: f64,
    pub event_count: u64,
    pub conservation: Conservation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs_csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub requests_csv: Option<String>,
}
