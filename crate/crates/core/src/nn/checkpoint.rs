use std::fs;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::{Group, ParamStore, Scalar};
use crate::env::GridGeometry;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Metadata stored next to the parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub architecture: serde_json::Value,
    pub geometry: Option<GridGeometry>,
    pub step: u64,
    pub seed: u64,
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    group: Group,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    endianness: String,
    meta: CheckpointMeta,
    checksum: String,
    tensors: Vec<TensorEntry>,
}

/// Writes `manifest.json` and `params.bin` (32-bit little-endian tensors in
/// name-sorted order) into `dir`.
pub fn save_checkpoint<F: Scalar>(dir: &Path, store: &ParamStore<F>, meta: &CheckpointMeta) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut order: Vec<usize> = (0..store.len()).collect();
    order.sort_by(|&a, &b| store.params()[a].name.cmp(&store.params()[b].name));
    let mut bytes = Vec::with_capacity(store.num_values() * 4);
    let mut tensors = Vec::with_capacity(order.len());
    for i in order {
        let p = &store.params()[i];
        tensors.push(TensorEntry {
            name: p.name.clone(),
            group: p.group,
            shape: p.value.shape().to_vec(),
            offset: bytes.len() as u64,
        });
        for v in p.value.iter() {
            bytes.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
    }
    let manifest = Manifest {
        format_version: CHECKPOINT_FORMAT_VERSION,
        endianness: "little".into(),
        meta: meta.clone(),
        checksum: store.checksum(),
        tensors,
    };
    crate::env::io_util::write_json(&dir.join("manifest.json"), &manifest)?;
    crate::env::io_util::write_bytes(&dir.join("params.bin"), &bytes)
}

/// Reads a checkpoint back as a 32-bit parameter store. The store's seed is
/// the checkpoint's seed.
pub fn load_checkpoint(dir: &Path) -> Result<(ParamStore<f32>, CheckpointMeta)> {
    let mpath = dir.join("manifest.json");
    let manifest: Manifest = crate::env::io_util::read_json(&mpath)?;
    if manifest.format_version != CHECKPOINT_FORMAT_VERSION || manifest.endianness != "little" {
        return Err(Error::MalformedManifest {
            path: mpath,
            reason: format!(
                "unsupported checkpoint format {} / {}",
                manifest.format_version, manifest.endianness
            ),
        });
    }
    let ppath = dir.join("params.bin");
    let bytes = crate::env::io_util::read_bytes(&ppath)?;
    let total: usize = manifest.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if bytes.len() != total * 4 {
        return Err(Error::TruncatedPayload {
            path: ppath,
            expected: (total * 4) as u64,
            found: bytes.len() as u64,
        });
    }
    let mut store = ParamStore::new(manifest.meta.seed);
    for t in &manifest.tensors {
        let n: usize = t.shape.iter().product();
        let start = t.offset as usize;
        let data: Vec<f32> = bytes
            .get(start..start + n * 4)
            .ok_or_else(|| Error::MalformedManifest {
                path: mpath.clone(),
                reason: format!("tensor {} out of bounds", t.name),
            })?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let value = ArrayD::from_shape_vec(IxDyn(&t.shape), data).map_err(|e| Error::MalformedManifest {
            path: mpath.clone(),
            reason: e.to_string(),
        })?;
        store.add(t.name.clone(), t.group, value);
    }
    let found = store.checksum();
    if found != manifest.checksum {
        return Err(Error::ChecksumMismatch {
            expected: manifest.checksum,
            found,
        });
    }
    Ok((store, manifest.meta))
}
