//! Model checkpoint format (little-endian):
//! - magic: `TNFM`
//! - version: u32 (= 1)
//! - metadata length: u64, then that many bytes of UTF-8 JSON
//! - parameter blobs as f32, in the order listed by the metadata

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{Dense, EncoderParams, ModalityEncoder};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::relations::{CategoryGraph, RelationKind, RelationTable};

use super::{EpochStats, TrainConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TNFM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ModalitySpec {
    name: String,
    input_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorSpec {
    name: String,
    len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RelationSpec {
    kind: RelationKind,
    untied: bool,
    categories: Vec<String>,
    pairs: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Metadata {
    config: TrainConfig,
    modalities: Vec<ModalitySpec>,
    embed_dim: usize,
    hidden_dim: Option<usize>,
    dropout_rate: f64,
    relations: Option<RelationSpec>,
    epoch: usize,
    history: Vec<EpochStats>,
    tensors: Vec<TensorSpec>,
}

pub fn encode_checkpoint(model: &Model) -> Result<Vec<u8>> {
    let tensors = model.tensors();
    let meta = Metadata {
        config: model.config.clone(),
        modalities: model
            .encoders
            .encoders
            .iter()
            .map(|e| ModalitySpec {
                name: e.modality.clone(),
                input_dim: e.input_dim(),
            })
            .collect(),
        embed_dim: model.encoders.embed_dim(),
        hidden_dim: model.encoders.encoders.first().and_then(|e| e.hidden.as_ref().map(|h| h.out_dim)),
        dropout_rate: model.encoders.dropout_rate,
        relations: model.relations.as_ref().map(|r| RelationSpec {
            kind: r.kind(),
            untied: r.untied(),
            categories: r.graph().categories().to_vec(),
            pairs: r.graph().named_pairs(),
        }),
        epoch: model.epoch,
        history: model.history.clone(),
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorSpec {
                name: name.clone(),
                len: t.len(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&meta)?;
    let floats: usize = tensors.iter().map(|(_, t)| t.len()).sum();
    let mut buf = Vec::with_capacity(16 + json.len() + 4 * floats);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, t) in &tensors {
        for v in t.iter() {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Model> {
    if bytes.len() < 16 {
        return Err(Error::format(path, "truncated checkpoint header"));
    }
    if &bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "bad magic (expected TNFM)"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let meta_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let meta_end = 16usize
        .checked_add(meta_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::format(path, "truncated checkpoint metadata"))?;
    let meta: Metadata = serde_json::from_slice(&bytes[16..meta_end])
        .map_err(|e| Error::format(path, format!("checkpoint metadata: {e}")))?;

    let d = meta.embed_dim;
    let encoders = meta
        .modalities
        .iter()
        .map(|m| {
            let (hidden, out_in) = match meta.hidden_dim {
                Some(h) => (Some(Dense::zeros(h, m.input_dim)), h),
                None => (None, m.input_dim),
            };
            ModalityEncoder {
                modality: m.name.clone(),
                hidden,
                output: Dense::zeros(d, out_in),
            }
        })
        .collect();
    let encoders = EncoderParams {
        encoders,
        dropout_rate: meta.dropout_rate,
    };
    let fused = encoders.fused_dim();
    let relations = match &meta.relations {
        Some(spec) => {
            let graph = CategoryGraph::from_named_pairs(spec.categories.clone(), &spec.pairs)?;
            let rows = graph.num_relations() * if spec.untied { 2 } else { 1 };
            Some(RelationTable::from_parts(
                graph,
                spec.kind,
                spec.untied,
                fused,
                vec![0.0; rows * fused],
            )?)
        }
        None => None,
    };
    let mut model = Model {
        config: meta.config,
        encoders,
        relations,
        epoch: meta.epoch,
        history: meta.history,
    };

    let mut offset = meta_end;
    {
        let mut tensors = model.tensors_mut();
        if tensors.len() != meta.tensors.len() {
            return Err(Error::format(
                path,
                format!(
                    "metadata lists {} tensors, model shape implies {}",
                    meta.tensors.len(),
                    tensors.len()
                ),
            ));
        }
        for ((name, t), spec) in tensors.iter_mut().zip(&meta.tensors) {
            if *name != spec.name || t.len() != spec.len {
                return Err(Error::format(
                    path,
                    format!("tensor {} (len {}) does not match shape of {name} (len {})", spec.name, spec.len, t.len()),
                ));
            }
            let end = offset + 4 * spec.len;
            if end > bytes.len() {
                return Err(Error::format(path, format!("truncated tensor {name}")));
            }
            for (v, c) in t.iter_mut().zip(bytes[offset..end].chunks_exact(4)) {
                *v = f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
            }
            offset = end;
        }
    }
    if offset != bytes.len() {
        return Err(Error::format(
            path,
            format!("{} trailing bytes after the last tensor", bytes.len() - offset),
        ));
    }
    model.check_finite()?;
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
