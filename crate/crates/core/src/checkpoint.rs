//! Named-tensor checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "NDRC"                      magic
//! u32                         format version
//! u32 + bytes                 UTF-8 JSON metadata (config, step counter, ...)
//! repeated until EOF:
//!   u32 + bytes               UTF-8 tensor name
//!   u32                       rank
//!   u64 * rank                dims
//!   f32 * prod(dims)          payload
//! ```

use std::path::Path;

use serde_json::Value;

use crate::error::{NdrError, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"NDRC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: Value,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(meta: Value) -> Self {
        Self { meta, tensors: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let meta = serde_json::to_vec(&self.meta)?;
        put_len(&mut out, meta.len())?;
        out.extend_from_slice(&meta);
        for (name, t) in &self.tensors {
            put_len(&mut out, name.len())?;
            out.extend_from_slice(name.as_bytes());
            put_len(&mut out, t.rank())?;
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(NdrError::IncompatibleCheckpoint("bad magic (expected NDRC)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(NdrError::IncompatibleCheckpoint(format!(
                "format version {version}, this build reads {FORMAT_VERSION}"
            )));
        }
        let meta_len = r.u32()? as usize;
        let meta: Value = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| NdrError::IncompatibleCheckpoint(format!("metadata: {e}")))?;
        let mut tensors = Vec::new();
        while r.pos < bytes.len() {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| NdrError::IncompatibleCheckpoint("tensor name is not UTF-8".into()))?
                .to_owned();
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).filter(|&c| c > 0);
            let count = count.ok_or_else(|| NdrError::IncompatibleCheckpoint(format!("bad dims {dims:?} for `{name}`")))?;
            let payload = r.take(count.checked_mul(4).ok_or_else(|| truncated())?)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                .collect();
            tensors.push((name, Tensor::new(&dims, data)?));
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| NdrError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_len(out: &mut Vec<u8>, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| NdrError::Invalid(format!("length {n} does not fit the checkpoint format")))?;
    out.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

fn truncated() -> NdrError {
    NdrError::IncompatibleCheckpoint("truncated file".into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(truncated)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
