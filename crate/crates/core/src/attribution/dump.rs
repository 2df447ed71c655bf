//! Line-delimited attribution dumps with a SHA-256 sidecar.
//!
//! `<name>.jsonl` holds one [`AttributionMap`] per line, in sentence order;
//! `<name>.jsonl.sha256` holds the lowercase hex digest of the data file.
//! The sidecar is written last, so a dump without one is incomplete.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{AttributionError, AttributionMap};

pub const CHECKSUM_SUFFIX: &str = "sha256";

/// One dump line.
pub type AttributionRecord = AttributionMap;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DumpStatus {
    Missing,
    Valid,
    Corrupt(String),
}

pub fn dump_checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".");
    name.push(CHECKSUM_SUFFIX);
    PathBuf::from(name)
}

fn dump_error(path: &Path, message: impl Into<String>) -> AttributionError {
    AttributionError::Dump {
        path: path.display().to_string(),
        message: message.into(),
    }
}

pub fn write_dump(path: &Path, maps: &[AttributionMap]) -> Result<(), AttributionError> {
    let mut text = String::new();
    for m in maps {
        m.validate()?;
        text.push_str(&serde_json::to_string(m)?);
        text.push('\n');
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("jsonl.partial");
    fs::write(&tmp, text.as_bytes())?;
    fs::rename(&tmp, path)?;
    fs::write(sidecar(path), dump_checksum(text.as_bytes()))?;
    Ok(())
}

pub fn verify_dump(path: &Path) -> DumpStatus {
    let Ok(data) = fs::read(path) else {
        return DumpStatus::Missing;
    };
    let Ok(expected) = fs::read_to_string(sidecar(path)) else {
        return DumpStatus::Corrupt("checksum file missing".into());
    };
    if dump_checksum(&data) != expected.trim() {
        return DumpStatus::Corrupt("checksum mismatch".into());
    }
    DumpStatus::Valid
}

pub fn parse_dump(text: &str) -> Result<Vec<AttributionMap>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// Reads a dump after verifying its checksum.
pub fn read_dump(path: &Path) -> Result<Vec<AttributionMap>, AttributionError> {
    match verify_dump(path) {
        DumpStatus::Valid => {}
        DumpStatus::Missing => return Err(dump_error(path, "missing")),
        DumpStatus::Corrupt(why) => return Err(dump_error(path, why)),
    }
    let text = fs::read_to_string(path)?;
    let maps = parse_dump(&text).map_err(|e| dump_error(path, e.to_string()))?;
    for m in &maps {
        m.validate()?;
    }
    Ok(maps)
}
