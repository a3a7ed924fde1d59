//! On-disk formats: plain-text manifests and little-endian float32 blobs.
//!
//! Every artifact this workspace writes (datasets, checkpoints) is a pair of
//! files: a `key: value` text manifest describing layout and provenance, and
//! one or more raw f32 LE arrays in the field order the manifest documents.
//! The formats are deliberately trivial to parse from any language.

use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Ordered `key: value` manifest. Keys are unique; order is preserved so
/// rewritten manifests are byte-identical.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Manifest::default()
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        debug_assert!(!value.contains('\n'), "manifest values are single-line");
        if let Some(slot) = self.entries.iter_mut().find(|(k, _)| k == key) {
            slot.1 = value;
        } else {
            self.entries.push((key.to_string(), value));
        }
    }

    /// Space-separated float vector value.
    pub fn set_f64s(&mut self, key: &str, values: &[f64]) {
        let joined = values
            .iter()
            .map(|v| format!("{v:?}"))
            .collect::<Vec<_>>()
            .join(" ");
        self.set(key, joined);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::data(format!("manifest missing key `{key}`")))
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse::<T>()
            .map_err(|_| Error::data(format!("manifest key `{key}` has unparseable value `{raw}`")))
    }

    pub fn parse_f64s(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.require(key)?;
        raw.split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::data(format!("bad float `{tok}` in manifest key `{key}`")))
            })
            .collect()
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(": ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut m = Manifest::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| Error::data(format!("manifest line {} lacks `:`", lineno + 1)))?;
            let key = key.trim();
            if m.get(key).is_some() {
                return Err(Error::data(format!("duplicate manifest key `{key}`")));
            }
            m.entries.push((key.to_string(), value.trim().to_string()));
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::data(format!("cannot read manifest {}: {e}", path.display())))?;
        Self::from_text(&text)
    }
}

/// Write f64 values as little-endian f32.
pub fn write_f32_le(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Read a little-endian f32 blob, widening to f64.
pub fn read_f32_le(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path)
        .map_err(|e| Error::data(format!("cannot read blob {}: {e}", path.display())))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::data(format!(
            "blob {} has {} bytes, not a multiple of 4",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}
