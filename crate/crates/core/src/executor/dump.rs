//! Flat weight dump: a little-endian `f64` blob plus a JSON index.
//!
//! Index entries locate each tensor by element offset and length into the
//! blob, in `(kind, op, name)` order with parameters before buffers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::weights::WeightStore;
use crate::error::ExecError;

pub const WEIGHTS_FORMAT: &str = "aog-weights/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Param,
    Buffer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexEntry {
    pub op: usize,
    pub name: String,
    pub kind: EntryKind,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightIndex {
    pub format: String,
    pub dtype: String,
    pub seed: u64,
    pub total: usize,
    pub entries: Vec<IndexEntry>,
}

/// Returns `(blob, index_json)`.
pub fn dump_weights(w: &WeightStore) -> (Vec<u8>, Vec<u8>) {
    let mut blob = Vec::new();
    let mut entries = Vec::new();
    let mut offset = 0;
    for (kind, maps) in [
        (EntryKind::Param, &w.params),
        (EntryKind::Buffer, &w.buffers),
    ] {
        for (&op, m) in maps {
            for (name, v) in m {
                entries.push(IndexEntry {
                    op,
                    name: name.clone(),
                    kind,
                    offset,
                    len: v.len(),
                });
                offset += v.len();
                for x in v {
                    blob.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
    }
    let index = WeightIndex {
        format: WEIGHTS_FORMAT.into(),
        dtype: "f64-le".into(),
        seed: w.seed,
        total: offset,
        entries,
    };
    let mut json = serde_json::to_vec_pretty(&index).expect("index serializes");
    json.push(b'\n');
    (blob, json)
}

pub fn load_weights(blob: &[u8], index_json: &[u8]) -> Result<WeightStore, ExecError> {
    let index: WeightIndex = serde_json::from_slice(index_json)
        .map_err(|e| ExecError::Weights(format!("bad weight index: {e}")))?;
    if index.format != WEIGHTS_FORMAT || index.dtype != "f64-le" {
        return Err(ExecError::Weights(format!(
            "unsupported weight format `{}` / `{}`, expected `{WEIGHTS_FORMAT}` / `f64-le`",
            index.format, index.dtype
        )));
    }
    if blob.len() != index.total * 8 {
        return Err(ExecError::Weights(format!(
            "blob holds {} bytes, index describes {} values",
            blob.len(),
            index.total
        )));
    }
    let mut store = WeightStore {
        seed: index.seed,
        params: BTreeMap::new(),
        buffers: BTreeMap::new(),
    };
    for e in index.entries {
        let end = e
            .offset
            .checked_add(e.len)
            .filter(|&end| end <= index.total)
            .ok_or_else(|| {
                ExecError::Weights(format!(
                    "entry {}/{} runs past the end of the blob",
                    e.op, e.name
                ))
            })?;
        let values = blob[e.offset * 8..end * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let maps = match e.kind {
            EntryKind::Param => &mut store.params,
            EntryKind::Buffer => &mut store.buffers,
        };
        if maps
            .entry(e.op)
            .or_default()
            .insert(e.name.clone(), values)
            .is_some()
        {
            return Err(ExecError::Weights(format!(
                "duplicate entry {}/{}",
                e.op, e.name
            )));
        }
    }
    Ok(store)
}
