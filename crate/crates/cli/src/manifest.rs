//! Reproducibility manifests written beside command outputs.

use std::path::{Path, PathBuf};

use aircsc::error::{Error, Result};
use serde::Serialize;

/// 64-bit FNV-1a over a byte string, hex-encoded; used to fingerprint inputs
/// and the effective configuration.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

#[derive(Serialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub fnv1a: String,
}

/// Everything needed to re-run the command and reproduce its outputs.
#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub argv: Vec<String>,
    pub inputs: Vec<InputRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub config_fnv1a: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub version: String,
    pub outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            argv: std::env::args().collect(),
            inputs: Vec::new(),
            config: None,
            config_fnv1a: fnv1a_hex(b""),
            seed: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.inputs.push(InputRecord {
            path: path.to_path_buf(),
            fnv1a: fnv1a_hex(&bytes),
        });
        Ok(())
    }

    pub fn record_config(&mut self, config_json: &str) {
        self.config_fnv1a = fnv1a_hex(config_json.as_bytes());
        self.config = serde_json::from_str(config_json).ok();
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
        std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}
