//! Binary checkpoint format.
//!
//! ```text
//! magic      8 bytes  "SAFEPEN1"
//! desc_len   u32 LE
//! descriptor desc_len bytes of UTF-8 JSON {architecture, layers, param_count}
//! params     param_count × f32 LE, in flat parameter order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Architecture, PenParams};
use crate::error::{Result, SafeError};

const MAGIC: &[u8; 8] = b"SAFEPEN1";

#[derive(Debug, Serialize, Deserialize)]
struct Descriptor {
    architecture: Architecture,
    layers: Vec<String>,
    param_count: usize,
}

pub fn write_checkpoint<W: Write>(params: &PenParams, mut out: W) -> std::io::Result<()> {
    let arch = params.architecture();
    let desc = Descriptor {
        architecture: arch.clone(),
        layers: arch.layer_list(),
        param_count: params.len(),
    };
    let json = serde_json::to_vec(&desc).map_err(std::io::Error::other)?;
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    for &v in params.values() {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    out.flush()
}

/// Reads a checkpoint; when `expected` is given the stored architecture
/// must match it.
pub fn read_checkpoint<R: Read>(mut input: R, expected: Option<&Architecture>) -> Result<PenParams> {
    let fmt = |m: &str| SafeError::Format(format!("checkpoint: {m}"));
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|_| fmt("truncated header"))?;
    if &magic != MAGIC {
        return Err(fmt("bad magic"));
    }
    let mut len = [0u8; 4];
    input.read_exact(&mut len).map_err(|_| fmt("truncated header"))?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    input.read_exact(&mut json).map_err(|_| fmt("truncated descriptor"))?;
    let desc: Descriptor = serde_json::from_slice(&json).map_err(|e| fmt(&e.to_string()))?;
    desc.architecture.validate()?;
    if let Some(arch) = expected {
        if *arch != desc.architecture {
            return Err(SafeError::ArchitectureMismatch(format!(
                "expected {:?}, checkpoint holds {:?}",
                arch, desc.architecture
            )));
        }
    }
    if desc.param_count != desc.architecture.param_count() {
        return Err(SafeError::ArchitectureMismatch(format!(
            "descriptor lists {} parameters, architecture needs {}",
            desc.param_count,
            desc.architecture.param_count()
        )));
    }
    let mut raw = Vec::new();
    input.read_to_end(&mut raw).map_err(|e| fmt(&e.to_string()))?;
    if raw.len() != desc.param_count * 4 {
        return Err(fmt(&format!(
            "expected {} parameter bytes, found {}",
            desc.param_count * 4,
            raw.len()
        )));
    }
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    PenParams::from_values(&desc.architecture, values)
}

pub fn save_checkpoint(params: &PenParams, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| SafeError::io(path, e))?;
    write_checkpoint(params, BufWriter::new(file)).map_err(|e| SafeError::io(path, e))
}

pub fn load_checkpoint(path: &Path, expected: Option<&Architecture>) -> Result<PenParams> {
    let file = File::open(path).map_err(|e| SafeError::io(path, e))?;
    read_checkpoint(BufReader::new(file), expected)
}
