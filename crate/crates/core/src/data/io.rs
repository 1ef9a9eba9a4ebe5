//! Dataset persistence: the `.tnsr` binary tensor container and the JSON
//! dataset manifest with deterministic hash-based split assignment.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::phantom::{ModalityBundle, MODALITY_NAMES, NUM_MODALITIES};

const MAGIC: &[u8; 4] = b"TNSR";
const VERSION: u8 = 1;
const MAX_EXTENT: u32 = 1 << 28;

/// Container layout: magic "TNSR", version u8, rank u32 LE, extents u32[rank],
/// then little-endian f32 values in row-major order.
pub fn save_tensor(t: &Tensor, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(9 + 4 * t.rank() + 4 * t.len());
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &e in t.shape() {
        buf.extend_from_slice(&(e as u32).to_le_bytes());
    }
    for &v in t.data().iter() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Format {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    if bytes.len() < 9 {
        return Err(bad("truncated header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    if bytes[4] != VERSION {
        return Err(bad("unsupported format version"));
    }
    let rank = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    if rank > 8 {
        return Err(bad("rank overflow"));
    }
    if bytes.len() < 9 + 4 * rank {
        return Err(bad("truncated extent table"));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut count: u64 = 1;
    for i in 0..rank {
        let e = u32::from_le_bytes(bytes[9 + 4 * i..13 + 4 * i].try_into().unwrap());
        if e == 0 || e > MAX_EXTENT {
            return Err(bad("extent overflow"));
        }
        shape.push(e as usize);
        count = count.saturating_mul(e as u64);
    }
    let payload = &bytes[9 + 4 * rank..];
    if payload.len() as u64 != count * 4 {
        return Err(bad("truncated payload"));
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Tensor::from_vec(&shape, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub modalities: Vec<String>,
    pub seg_mask: String,
    pub split: Split,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub samples: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.samples.iter().filter(move |e| e.split == split)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deterministic 80/10/10 split by sample id.
pub fn split_for_id(sample_id: &str) -> Split {
    match fnv1a64(sample_id) % 100 {
        0..=79 => Split::Train,
        80..=89 => Split::Val,
        _ => Split::Test,
    }
}

pub fn save_bundle(bundle: &ModalityBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (name, img) in MODALITY_NAMES.iter().zip(&bundle.images) {
        let p = dir.join(format!("{}_{}.tnsr", bundle.sample_id, name));
        save_tensor(img, &p)?;
        written.push(p);
    }
    let p = dir.join(format!("{}_seg.tnsr", bundle.sample_id));
    save_tensor(&bundle.seg_tensor(), &p)?;
    written.push(p);
    Ok(written)
}

pub fn load_bundle(dir: &Path, entry: &ManifestEntry) -> Result<ModalityBundle> {
    let mut images = Vec::with_capacity(NUM_MODALITIES);
    for rel in &entry.modalities {
        images.push(load_tensor(&dir.join(rel))?);
    }
    let seg_t = load_tensor(&dir.join(&entry.seg_mask))?;
    let image_size = seg_t.shape()[0];
    let seg_mask: Vec<u8> = seg_t.data().iter().map(|&v| v as u8).collect();
    Ok(ModalityBundle {
        images,
        availability: [true; NUM_MODALITIES],
        seg_mask,
        image_size,
        sample_id: entry.sample_id.clone(),
    })
}

/// Scan a directory of bundle files and build the manifest. Sample ids come
/// from `<id>_seg.tnsr` files; each must have all four modality files.
pub fn dataset_manifest(dir: &Path) -> Result<DatasetManifest> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(id) = name.strip_suffix("_seg.tnsr") {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    let mut seen = std::collections::HashSet::new();
    let mut samples = Vec::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.clone()) {
            return Err(Error::Format {
                path: dir.to_path_buf(),
                msg: format!("duplicate sample id {id}"),
            });
        }
        let mut modalities = Vec::with_capacity(NUM_MODALITIES);
        for name in MODALITY_NAMES {
            let rel = format!("{id}_{name}.tnsr");
            if !dir.join(&rel).is_file() {
                return Err(Error::Format {
                    path: dir.to_path_buf(),
                    msg: format!("missing modality file {rel}"),
                });
            }
            modalities.push(rel);
        }
        samples.push(ManifestEntry {
            sample_id: id.clone(),
            modalities,
            seg_mask: format!("{id}_seg.tnsr"),
            split: split_for_id(&id),
        });
    }
    Ok(DatasetManifest { samples })
}
