//! Checkpoint archive: one file holding every parameter tensor keyed by
//! module path, optimizer state, and a JSON echo of the full configuration
//! and corpus constants.
//!
//! Layout: magic `SVCK`, u32 schema, u64 JSON length, the JSON metadata,
//! u32 tensor count, then per tensor a length-prefixed name, u32 rows,
//! u32 cols and the little-endian `f64` data.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::dataset::CorpusStats;
use crate::error::{Error, Result};
use crate::mat::Mat;

const MAGIC: &[u8; 4] = b"SVCK";
pub const SCHEMA: u32 = 1;

/// Everything a checkpoint knows besides raw tensors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub schema: u32,
    pub step: usize,
    pub opt_step: u64,
    pub pipeline: PipelineConfig,
    pub stats: CorpusStats,
}

pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: BTreeMap<String, Mat>,
}

pub fn save(path: impl AsRef<Path>, meta: &CheckpointMeta, tensors: &BTreeMap<String, Mat>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    let json = serde_json::to_vec(meta)?;
    w.write_all(MAGIC)?;
    w.write_all(&SCHEMA.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, mat) in tensors {
        let nb = name.as_bytes();
        w.write_all(&(nb.len() as u32).to_le_bytes())?;
        w.write_all(nb)?;
        w.write_all(&(mat.rows() as u32).to_le_bytes())?;
        w.write_all(&(mat.cols() as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(mat.len() * 8);
        for v in mat.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let corrupt = |msg: String| Error::Corrupt {
        path: path.to_path_buf(),
        msg,
    };
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let mut u32b = [0u8; 4];
    let mut u64b = [0u8; 8];
    r.read_exact(&mut u32b)?;
    let schema = u32::from_le_bytes(u32b);
    if schema != SCHEMA {
        return Err(corrupt(format!("unsupported schema {schema}")));
    }
    r.read_exact(&mut u64b)?;
    let jlen = u64::from_le_bytes(u64b) as usize;
    let mut jbuf = vec![0u8; jlen];
    r.read_exact(&mut jbuf)?;
    let meta: CheckpointMeta = serde_json::from_slice(&jbuf)?;

    r.read_exact(&mut u32b)?;
    let count = u32::from_le_bytes(u32b) as usize;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        r.read_exact(&mut u32b)?;
        let nlen = u32::from_le_bytes(u32b) as usize;
        let mut nbuf = vec![0u8; nlen];
        r.read_exact(&mut nbuf)?;
        let name = String::from_utf8(nbuf).map_err(|_| corrupt("tensor name not utf-8".into()))?;
        r.read_exact(&mut u32b)?;
        let rows = u32::from_le_bytes(u32b) as usize;
        r.read_exact(&mut u32b)?;
        let cols = u32::from_le_bytes(u32b) as usize;
        let mut dbuf = vec![0u8; rows * cols * 8];
        r.read_exact(&mut dbuf)?;
        let data: Vec<f64> = dbuf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(corrupt(format!("non-finite values in tensor {name}")));
        }
        tensors.insert(name, Mat::from_vec(rows, cols, data));
    }
    Ok(Checkpoint { meta, tensors })
}
