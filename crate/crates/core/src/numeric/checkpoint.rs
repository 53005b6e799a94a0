//! Manifest + blob framing shared by parameter checkpoints and datasets.
//!
//! `<path>` holds a JSON manifest `{format, version, blocks: [{name, shape,
//! offset}], meta}`; `<path>.bin` holds an 8-byte magic followed by every
//! block as little-endian `f64`. Offsets count `f64` elements after the magic.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{DenseArray, ParamStore};

pub const BLOB_MAGIC: [u8; 8] = *b"PUPBLOB\x01";
pub const FORMAT_VERSION: &str = "v1";
pub const CHECKPOINT_FORMAT: &str = "puppeteer-params";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: String,
    pub blocks: Vec<BlockEntry>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub fn blob_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".bin");
    PathBuf::from(s)
}

pub fn write_blocks(
    path: &Path,
    format: &str,
    blocks: &[(&str, &DenseArray)],
    meta: serde_json::Value,
) -> Result<()> {
    let mut entries = Vec::with_capacity(blocks.len());
    let total: usize = blocks.iter().map(|(_, a)| a.len()).sum();
    let mut blob = Vec::with_capacity(8 + 8 * total);
    blob.extend_from_slice(&BLOB_MAGIC);
    let mut offset = 0;
    for (name, arr) in blocks {
        entries.push(BlockEntry {
            name: name.to_string(),
            shape: arr.shape().to_vec(),
            offset,
        });
        for v in arr.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        offset += arr.len();
    }
    let manifest = Manifest {
        format: format.to_string(),
        version: FORMAT_VERSION.to_string(),
        blocks: entries,
        meta,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let json = serde_json::to_vec_pretty(&manifest)?;
    fs::write(path, json).map_err(|e| Error::io(path, e))?;
    let bp = blob_path(path);
    fs::write(&bp, blob).map_err(|e| Error::io(&bp, e))?;
    Ok(())
}

pub fn read_blocks(path: &Path, format: &str) -> Result<(Vec<(String, DenseArray)>, serde_json::Value)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_slice(&bytes).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: format!("bad manifest: {e}"),
    })?;
    if manifest.format != format {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("expected format {format:?}, found {:?}", manifest.format),
        });
    }
    if manifest.version != FORMAT_VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: manifest.version,
            expected: FORMAT_VERSION.to_string(),
        });
    }
    let bp = blob_path(path);
    let blob = fs::read(&bp).map_err(|e| Error::io(&bp, e))?;
    if blob.len() < 8 || blob[..8] != BLOB_MAGIC {
        return Err(Error::Format {
            path: bp,
            msg: "bad magic bytes".into(),
        });
    }
    let payload = &blob[8..];
    if payload.len() % 8 != 0 {
        return Err(Error::Format {
            path: bp,
            msg: "blob length is not a multiple of 8".into(),
        });
    }
    let n_values = payload.len() / 8;
    let mut out = Vec::with_capacity(manifest.blocks.len());
    for entry in manifest.blocks {
        let n: usize = entry.shape.iter().product();
        if entry.offset + n > n_values {
            return Err(Error::Format {
                path: bp,
                msg: format!("block {} extends past end of blob", entry.name),
            });
        }
        let data = payload[entry.offset * 8..(entry.offset + n) * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let arr = DenseArray::new(entry.shape, data).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        out.push((entry.name, arr));
    }
    Ok((out, manifest.meta))
}

pub fn save_params(store: &ParamStore, path: &Path, meta: serde_json::Value) -> Result<()> {
    let blocks: Vec<(&str, &DenseArray)> = store
        .blocks()
        .iter()
        .map(|b| (b.name.as_str(), &b.value))
        .collect();
    write_blocks(path, CHECKPOINT_FORMAT, &blocks, meta)
}

pub fn load_params(path: &Path) -> Result<(ParamStore, serde_json::Value)> {
    let (blocks, meta) = read_blocks(path, CHECKPOINT_FORMAT)?;
    let mut store = ParamStore::new();
    for (name, arr) in blocks {
        store.add(name, arr);
    }
    Ok((store, meta))
}
