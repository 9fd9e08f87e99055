//! Dumps of the dictionary and per-scale query tensors for inspection.
//!
//! Every tensor `name` is written three ways: `name.csv` (rows over the last
//! axis), `name.f32` (raw little-endian f32) and `name.json` (shape sidecar).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{NdrError, Result};
use crate::model::NdrNetworks;
use crate::synth::Image;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: &'static str,
}

pub fn tensor_csv(t: &Tensor) -> String {
    let cols = t.shape().last().copied().unwrap_or(1).max(1);
    let mut out = String::new();
    for row in t.data().chunks(cols) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.9e}")).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

pub fn tensor_f32_bytes(t: &Tensor) -> Vec<u8> {
    t.data().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

pub fn write_tensor(dir: &Path, name: &str, t: &Tensor) -> Result<ExportedTensor> {
    let meta = ExportedTensor { name: name.to_owned(), shape: t.shape().to_vec(), dtype: "f32le" };
    crate::io::write_atomic(&dir.join(format!("{name}.csv")), tensor_csv(t).as_bytes())?;
    crate::io::write_atomic(&dir.join(format!("{name}.f32")), &tensor_f32_bytes(t))?;
    let json = serde_json::to_string_pretty(&meta)? + "\n";
    crate::io::write_atomic(&dir.join(format!("{name}.json")), json.as_bytes())?;
    Ok(meta)
}

/// Writes `dictionary`, and per scale `s`: `affinity_s{s}`, `u_prime_s{s}`
/// and `u_s{s}` for the given input. Returns what was written, plus an
/// `index.json` listing it.
pub fn inspect_ndr(net: &NdrNetworks, image: &Image, dir: &Path) -> Result<Vec<ExportedTensor>> {
    crate::io::ensure_dir(dir)?;
    let mut written = Vec::new();
    if let Some(d) = net.restore.dictionary() {
        let t = &net.params.tensors()[d.id.index()];
        written.push(write_tensor(dir, "dictionary", t)?);
    }
    let (_, trace) = net.restore_with_trace(image)?;
    for (s, tr) in trace.iter().enumerate() {
        if let Some(a) = &tr.affinity {
            written.push(write_tensor(dir, &format!("affinity_s{s}"), a)?);
        }
        if let Some(u) = &tr.u_prime {
            written.push(write_tensor(dir, &format!("u_prime_s{s}"), u)?);
        }
        written.push(write_tensor(dir, &format!("u_s{s}"), &tr.u)?);
    }
    let json = serde_json::to_string_pretty(&written)? + "\n";
    crate::io::write_atomic(&dir.join("index.json"), json.as_bytes())?;
    Ok(written)
}

/// Reads back a `.f32` dump given its sidecar.
pub fn read_tensor(dir: &Path, name: &str) -> Result<Tensor> {
    let side = dir.join(format!("{name}.json"));
    let text = std::fs::read_to_string(&side).map_err(|e| NdrError::io(&side, e))?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    let shape: Vec<usize> = serde_json::from_value(v["shape"].clone())?;
    let raw_path = dir.join(format!("{name}.f32"));
    let raw = std::fs::read(&raw_path).map_err(|e| NdrError::io(&raw_path, e))?;
    let data = raw.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))).collect();
    Tensor::new(&shape, data)
}

pub fn written_paths(dir: &Path, items: &[ExportedTensor]) -> Vec<PathBuf> {
    items
        .iter()
        .flat_map(|t| ["csv", "f32", "json"].map(|ext| dir.join(format!("{}.{ext}", t.name))))
        .collect()
}
