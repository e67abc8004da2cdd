//! Checkpoint format: a two-line text header followed by raw values.
//!
//! ```text
//! DIFFCORE-CKPT v1
//! {"params":[{"name":"w","shape":[2,3]},...],"total_len":6}
//! <total_len × 8 bytes, f64 little-endian, flat layout>
//! ```
//!
//! The manifest pins names, shapes, and order, so a checkpoint can rebuild a
//! store from scratch or be verified against an existing one.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DiffError;
use crate::params::ParameterStore;
use crate::Result;

const MAGIC: &str = "DIFFCORE-CKPT v1";

#[derive(Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    params: Vec<ParamMeta>,
    total_len: usize,
}

/// Writes the store's parameters to `path`.
pub fn save_checkpoint(store: &ParameterStore, path: &Path) -> Result<()> {
    let manifest = Manifest {
        params: store
            .ids()
            .map(|id| ParamMeta { name: store.name(id).to_string(), shape: store.shape(id).to_vec() })
            .collect(),
        total_len: store.flat_len(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{MAGIC}")?;
    let header = serde_json::to_string(&manifest)
        .map_err(|e| DiffError::Checkpoint(format!("manifest serialization: {e}")))?;
    writeln!(w, "{header}")?;
    for v in store.flatten() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint into a brand-new store.
pub fn load_checkpoint(path: &Path) -> Result<ParameterStore> {
    let (manifest, flat) = read_raw(path)?;
    let mut store = ParameterStore::new();
    let mut off = 0;
    for p in &manifest.params {
        let n: usize = p.shape.iter().product();
        if off + n > flat.len() {
            return Err(DiffError::Checkpoint(format!("manifest overruns data at '{}'", p.name)));
        }
        store.register(&p.name, &p.shape, flat[off..off + n].to_vec())?;
        off += n;
    }
    if off != flat.len() {
        return Err(DiffError::Checkpoint(format!(
            "manifest covers {off} values but file holds {}",
            flat.len()
        )));
    }
    Ok(store)
}

/// Loads a checkpoint into an existing store, requiring identical names,
/// order, and shapes.
pub fn restore_checkpoint(store: &mut ParameterStore, path: &Path) -> Result<()> {
    let (manifest, flat) = read_raw(path)?;
    if manifest.params.len() != store.len() {
        return Err(DiffError::Checkpoint(format!(
            "checkpoint has {} parameters, store has {}",
            manifest.params.len(),
            store.len()
        )));
    }
    for (id, meta) in store.ids().zip(&manifest.params) {
        if store.name(id) != meta.name || store.shape(id) != meta.shape.as_slice() {
            return Err(DiffError::Checkpoint(format!(
                "parameter mismatch: store has '{}' {:?}, checkpoint has '{}' {:?}",
                store.name(id),
                store.shape(id),
                meta.name,
                meta.shape
            )));
        }
    }
    store.unflatten(&flat)
}

fn read_raw(path: &Path) -> Result<(Manifest, Vec<f64>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut all = Vec::new();
    r.read_to_end(&mut all)?;

    let take_line = |from: usize| -> Result<(usize, &[u8])> {
        match all[from..].iter().position(|&b| b == b'\n') {
            Some(p) => Ok((from + p + 1, &all[from..from + p])),
            None => Err(DiffError::Checkpoint("truncated header".into())),
        }
    };
    let (after_magic, magic) = take_line(0)?;
    if magic != MAGIC.as_bytes() {
        return Err(DiffError::Checkpoint("bad magic line".into()));
    }
    let (data_start, header) = take_line(after_magic)?;
    let manifest: Manifest = serde_json::from_slice(header)
        .map_err(|e| DiffError::Checkpoint(format!("manifest parse: {e}")))?;

    let body = &all[data_start..];
    if body.len() != manifest.total_len * 8 {
        return Err(DiffError::Checkpoint(format!(
            "expected {} data bytes, found {}",
            manifest.total_len * 8,
            body.len()
        )));
    }
    let flat = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((manifest, flat))
}
