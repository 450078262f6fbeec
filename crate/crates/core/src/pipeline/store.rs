//! Binary embedding stores.
//!
//! ```text
//! magic     8 bytes "SAFEEMB1"
//! version   u32 LE (1)
//! model_id  u32 LE
//! d         u32 LE
//! n         u64 LE
//! n records: patch_id (u32 LE byte length + UTF-8), label u8 (0 Healthy,
//!            1 Unhealthy), d × f32 LE
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::ensemble::EmbeddingSpace;
use crate::error::{Result, SafeError};
use crate::labels::Class;
use crate::numerics::Matrix;

const MAGIC: &[u8; 8] = b"SAFEEMB1";
const VERSION: u32 = 1;

/// Labeled embeddings at storage precision.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub model_id: u32,
    pub dim: usize,
    pub patch_ids: Vec<String>,
    pub labels: Vec<Class>,
    /// Row-major, `patch_ids.len() × dim`.
    pub values: Vec<f32>,
}

impl EmbeddingStore {
    pub fn new(model_id: u32, dim: usize, rows: Vec<(String, Class, Vec<f64>)>) -> Result<Self> {
        let mut store = EmbeddingStore {
            model_id,
            dim,
            patch_ids: Vec::with_capacity(rows.len()),
            labels: Vec::with_capacity(rows.len()),
            values: Vec::with_capacity(rows.len() * dim),
        };
        for (id, label, v) in rows {
            if v.len() != dim {
                return Err(SafeError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            store.patch_ids.push(id);
            store.labels.push(label);
            store.values.extend(v.iter().map(|&x| x as f32));
        }
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.patch_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patch_ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_space(&self) -> Result<EmbeddingSpace> {
        let data = self.values.iter().map(|&x| x as f64).collect();
        EmbeddingSpace::new(
            self.model_id as usize,
            Matrix::new(self.len(), self.dim, data)?,
            self.labels.clone(),
            self.patch_ids.clone(),
        )
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.model_id.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for i in 0..self.len() {
            let id = self.patch_ids[i].as_bytes();
            w.write_all(&(id.len() as u32).to_le_bytes())?;
            w.write_all(id)?;
            w.write_all(&[self.labels[i].index() as u8])?;
            for v in self.row(i) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let fmt = |m: &str| SafeError::Format(format!("embedding store: {m}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| fmt("truncated header"))?;
        if &magic != MAGIC {
            return Err(fmt("bad magic"));
        }
        let mut u32_buf = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> Result<u32> {
            r.read_exact(&mut u32_buf).map_err(|_| fmt("truncated"))?;
            Ok(u32::from_le_bytes(u32_buf))
        };
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(fmt(&format!("unsupported version {version}")));
        }
        let model_id = read_u32(&mut r)?;
        let dim = read_u32(&mut r)? as usize;
        let mut n_buf = [0u8; 8];
        r.read_exact(&mut n_buf).map_err(|_| fmt("truncated header"))?;
        let n = u64::from_le_bytes(n_buf) as usize;
        let mut rows = Vec::new();
        let mut values = Vec::new();
        let mut labels = Vec::new();
        let mut row_bytes = vec![0u8; dim * 4];
        for _ in 0..n {
            let len = read_u32(&mut r)? as usize;
            let mut id = vec![0u8; len];
            r.read_exact(&mut id).map_err(|_| fmt("truncated record"))?;
            rows.push(String::from_utf8(id).map_err(|_| fmt("patch id is not UTF-8"))?);
            let mut label = [0u8; 1];
            r.read_exact(&mut label).map_err(|_| fmt("truncated record"))?;
            labels.push(match label[0] {
                0 => Class::Healthy,
                1 => Class::Unhealthy,
                b => return Err(fmt(&format!("bad label byte {b}"))),
            });
            r.read_exact(&mut row_bytes).map_err(|_| fmt("truncated record"))?;
            values.extend(
                row_bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])),
            );
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| fmt(&e.to_string()))? != 0 {
            return Err(fmt("trailing bytes"));
        }
        Ok(EmbeddingStore {
            model_id,
            dim,
            patch_ids: rows,
            labels,
            values,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| SafeError::io(path, e))?;
        self.write_to(BufWriter::new(f)).map_err(|e| SafeError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| SafeError::io(path, e))?;
        Self::read_from(BufReader::new(f))
    }
}
