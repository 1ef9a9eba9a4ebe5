//! Parameter registry and checkpoint persistence.
//!
//! Checkpoint layout: magic `MSGC`, format version byte, u32 LE manifest
//! length, JSON manifest (name, shape, element offset per parameter), then a
//! single little-endian f32 buffer holding every parameter in manifest order.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"MSGC";
const VERSION: u8 = 1;

/// Ordered collection of named trainable tensors. Registration order is the
/// serialization order, so it must be deterministic.
#[derive(Debug, Default)]
pub struct ParamRegistry {
    entries: Vec<(String, Tensor)>,
}

impl ParamRegistry {
    pub fn new() -> ParamRegistry {
        ParamRegistry::default()
    }

    /// Panics on duplicate names or tensors: each parameter is owned by
    /// exactly one module.
    pub fn register(&mut self, name: &str, t: &Tensor) {
        assert!(
            t.requires_grad(),
            "parameter {name} must be created with requires_grad"
        );
        for (n, existing) in &self.entries {
            assert!(n != name, "duplicate parameter name {name}");
            assert!(
                existing.id() != t.id(),
                "tensor registered twice: {n} and {name}"
            );
        }
        self.entries.push((name.to_string(), t.clone()));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_elements(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zero_grads(&self) {
        for (_, t) in &self.entries {
            t.zero_grad();
        }
    }

    pub fn any_nonfinite(&self) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, t)| t.data().iter().any(|v| !v.is_finite()))
            .map(|(n, _)| n.as_str())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

/// Serializes every registered parameter as f32.
pub fn save_checkpoint(reg: &ParamRegistry, path: &Path) -> Result<()> {
    let mut manifest = Vec::with_capacity(reg.len());
    let mut offset = 0usize;
    for (name, t) in reg.iter() {
        manifest.push(ManifestEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset,
        });
        offset += t.len();
    }
    let manifest_json = serde_json::to_vec(&manifest)?;
    let mut buf = Vec::with_capacity(9 + manifest_json.len() + offset * 4);
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.extend_from_slice(&(manifest_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&manifest_json);
    for (_, t) in reg.iter() {
        for &v in t.data().iter() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Loads a checkpoint into an existing registry. Names, shapes, and order
/// must match exactly.
pub fn load_checkpoint(reg: &ParamRegistry, path: &Path) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 9 || &bytes[0..4] != MAGIC {
        return Err(format_err(path, "not a checkpoint file"));
    }
    if bytes[4] != VERSION {
        return Err(format_err(path, format!("unsupported version {}", bytes[4])));
    }
    let mlen = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    if bytes.len() < 9 + mlen {
        return Err(format_err(path, "truncated manifest"));
    }
    let manifest: Vec<ManifestEntry> = serde_json::from_slice(&bytes[9..9 + mlen])
        .map_err(|e| format_err(path, format!("bad manifest: {e}")))?;
    if manifest.len() != reg.len() {
        return Err(format_err(
            path,
            format!("expected {} parameters, found {}", reg.len(), manifest.len()),
        ));
    }
    let payload = &bytes[9 + mlen..];
    let expected_elems: usize = manifest.iter().map(|m| m.shape.iter().product::<usize>()).sum();
    if payload.len() != expected_elems * 4 {
        return Err(format_err(
            path,
            format!("payload holds {} bytes, expected {}", payload.len(), expected_elems * 4),
        ));
    }
    for (entry, (name, t)) in manifest.iter().zip(reg.iter()) {
        if entry.name != name {
            return Err(format_err(
                path,
                format!("parameter order mismatch: {} vs {}", entry.name, name),
            ));
        }
        if entry.shape != t.shape() {
            return Err(format_err(
                path,
                format!("shape mismatch for {}: {:?} vs {:?}", name, entry.shape, t.shape()),
            ));
        }
        let start = entry.offset * 4;
        let n = t.len();
        let mut vals = Vec::with_capacity(n);
        for i in 0..n {
            let b = &payload[start + i * 4..start + i * 4 + 4];
            let v = f32::from_le_bytes(b.try_into().unwrap()) as f64;
            if !v.is_finite() {
                return Err(format_err(path, format!("non-finite value in {name}")));
            }
            vals.push(v);
        }
        t.set_data(&vals);
    }
    Ok(())
}
