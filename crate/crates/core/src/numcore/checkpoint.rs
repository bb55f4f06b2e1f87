use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{ParamStore, Tensor};

/// One tensor inside the binary buffer file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the buffer file.
    pub offset: usize,
}

/// JSON manifest accompanying a little-endian `f64` buffer file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub buffer: String,
    pub tensors: Vec<TensorEntry>,
    pub metadata: serde_json::Value,
}

const FORMAT: &str = "f64-le";

fn buffer_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Writes `<stem>.json` (manifest) and `<stem>.bin` (buffers).
pub fn write_checkpoint(manifest_path: &Path, params: &ParamStore, metadata: serde_json::Value) -> Result<()> {
    let bin = buffer_path(manifest_path);
    let mut bytes = Vec::with_capacity(params.scalar_count() * 8);
    let mut tensors = Vec::with_capacity(params.len());
    for (name, t) in params.names().iter().zip(params.tensors()) {
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset: bytes.len(),
        });
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        format: FORMAT.to_string(),
        buffer: bin
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        tensors,
        metadata,
    };
    fs::write(&bin, &bytes).map_err(|e| Error::io(&bin, e))?;
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(manifest_path, json).map_err(|e| Error::io(manifest_path, e))?;
    Ok(())
}

/// Reads a checkpoint back into a fresh store, preserving tensor order.
pub fn read_checkpoint(manifest_path: &Path) -> Result<(ParamStore, CheckpointManifest)> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: manifest_path.to_path_buf(),
        message: e.to_string(),
    })?;
    if manifest.format != FORMAT {
        return Err(Error::Parse {
            path: manifest_path.to_path_buf(),
            message: format!("unsupported buffer format {}", manifest.format),
        });
    }
    let bin = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.buffer);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let mut store = ParamStore::new();
    for entry in &manifest.tensors {
        let n: usize = entry.shape.iter().product();
        let end = entry.offset + n * 8;
        if end > bytes.len() {
            return Err(Error::Parse {
                path: bin.clone(),
                message: format!("tensor {} runs past the end of the buffer", entry.name),
            });
        }
        let data = bytes[entry.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        store.add(entry.name.clone(), Tensor::new(entry.shape.clone(), data)?);
    }
    Ok((store, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let mut store = ParamStore::new();
        store.add("a", Tensor::new(vec![2, 2], vec![0.1, -1e-300, f64::MIN_POSITIVE, 3.0]).unwrap());
        store.add("b", Tensor::new(vec![3], vec![1.0 / 3.0, 2.0, -0.0]).unwrap());
        write_checkpoint(&path, &store, serde_json::json!({"k": 1})).unwrap();
        let (back, manifest) = read_checkpoint(&path).unwrap();
        assert_eq!(manifest.tensors[1].offset, 32);
        assert_eq!(manifest.metadata["k"], 1);
        for (x, y) in store.tensors().iter().zip(back.tensors()) {
            assert_eq!(x.shape(), y.shape());
            for (p, q) in x.data().iter().zip(y.data()) {
                assert_eq!(p.to_bits(), q.to_bits());
            }
        }
        assert_eq!(back.names(), store.names());
    }
}
