//! Self-describing model checkpoints.
//!
//! Layout: an 8-byte magic (`CSIHARCK`), a little-endian u32 header length,
//! a JSON header, then the payload of concatenated little-endian f32
//! parameter arrays. The header carries a format/version tag, the model
//! configuration (including the bound normalization constant and loss
//! trace) and the name, shape and payload offset of every array.
//!
//! Classifier checkpoints embed their attached VAEs (arrays namespaced
//! `vae<i>/...`), so one file is enough to run inference.
//!
//! Parameters are serialized as f32. Loading restores them into the f64
//! training representation; a save/load round trip therefore quantizes
//! parameters to f32 precision, which is part of the interchange contract.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{build_architecture, ArchError, ArchitectureSpec, ClassifierModel};
use crate::vae::{VaeConfig, VaeError, VaeModel};

pub const MAGIC: &[u8; 8] = b"CSIHARCK";
pub const FORMAT: &str = "csi-har-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error(transparent)]
    Arch(#[from] ArchError),
}

#[derive(Debug, Serialize, Deserialize)]
struct ArrayMeta {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the payload.
    offset: u64,
    /// Number of f32 values.
    count: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct VaeMeta {
    config: VaeConfig,
    norm_constant: f64,
    loss_trace: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClassifierMeta {
    spec: ArchitectureSpec,
    loss_trace: Vec<f64>,
    vaes: Vec<VaeMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    vae: Option<VaeMeta>,
    #[serde(skip_serializing_if = "Option::is_none")]
    classifier: Option<ClassifierMeta>,
    arrays: Vec<ArrayMeta>,
}

struct ArchiveBuilder {
    arrays: Vec<ArrayMeta>,
    payload: Vec<u8>,
}

impl ArchiveBuilder {
    fn new() -> ArchiveBuilder {
        ArchiveBuilder {
            arrays: Vec::new(),
            payload: Vec::new(),
        }
    }

    fn push(&mut self, name: String, shape: &[usize], values: &[f64]) {
        let offset = self.payload.len() as u64;
        for &v in values {
            self.payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
        self.arrays.push(ArrayMeta {
            name,
            shape: shape.to_vec(),
            offset,
            count: values.len() as u64,
        });
    }

    fn finish(self, kind: &str, vae: Option<VaeMeta>, classifier: Option<ClassifierMeta>) -> Vec<u8> {
        let header = Header {
            format: FORMAT.to_string(),
            version: VERSION,
            kind: kind.to_string(),
            vae,
            classifier,
            arrays: self.arrays,
        };
        let header_json = serde_json::to_vec(&header).expect("header serialization cannot fail");
        let mut out = Vec::with_capacity(12 + header_json.len() + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&header_json);
        out.extend_from_slice(&self.payload);
        out
    }
}

fn parse_archive(bytes: &[u8]) -> Result<(Header, &[u8]), CheckpointError> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(CheckpointError::Format("bad magic".to_string()));
    }
    let header_len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    let header_end = 12 + header_len;
    if bytes.len() < header_end {
        return Err(CheckpointError::Format("truncated header".to_string()));
    }
    let header: Header = serde_json::from_slice(&bytes[12..header_end])?;
    if header.format != FORMAT {
        return Err(CheckpointError::Format(format!(
            "unknown format tag {:?}",
            header.format
        )));
    }
    if header.version != VERSION {
        return Err(CheckpointError::Format(format!(
            "unsupported version {}",
            header.version
        )));
    }
    Ok((header, &bytes[header_end..]))
}

fn read_array(payload: &[u8], meta: &ArrayMeta) -> Result<Vec<f64>, CheckpointError> {
    let start = meta.offset as usize;
    let end = start + meta.count as usize * 4;
    if payload.len() < end {
        return Err(CheckpointError::Format(format!(
            "array {:?} extends past the payload",
            meta.name
        )));
    }
    Ok(payload[start..end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn vae_meta(model: &VaeModel) -> VaeMeta {
    VaeMeta {
        config: model.config().clone(),
        norm_constant: model.norm_constant(),
        loss_trace: model.loss_trace().to_vec(),
    }
}

// ---------------------------------------------------------------------------
// VAE checkpoints
// ---------------------------------------------------------------------------

/// Serializes a VAE checkpoint. Byte-deterministic for a given model.
pub fn vae_to_bytes(model: &VaeModel) -> Vec<u8> {
    let mut builder = ArchiveBuilder::new();
    for (name, shape, values) in model.named_parameters() {
        builder.push(name.to_string(), shape, values);
    }
    builder.finish("vae", Some(vae_meta(model)), None)
}

pub fn vae_from_bytes(bytes: &[u8]) -> Result<VaeModel, CheckpointError> {
    let (header, payload) = parse_archive(bytes)?;
    if header.kind != "vae" {
        return Err(CheckpointError::Format(format!(
            "expected a vae checkpoint, found {:?}",
            header.kind
        )));
    }
    let meta = header
        .vae
        .ok_or_else(|| CheckpointError::Format("missing vae metadata".to_string()))?;
    let mut model = VaeModel::new(meta.config, meta.norm_constant)?;
    for array in &header.arrays {
        let values = read_array(payload, array)?;
        model.load_named_parameter(&array.name, &array.shape, &values)?;
    }
    model.set_loss_trace(meta.loss_trace);
    Ok(model)
}

pub fn save_vae(model: &VaeModel, path: &Path) -> Result<(), CheckpointError> {
    Ok(std::fs::write(path, vae_to_bytes(model))?)
}

pub fn load_vae(path: &Path) -> Result<VaeModel, CheckpointError> {
    vae_from_bytes(&std::fs::read(path)?)
}

// ---------------------------------------------------------------------------
// Classifier checkpoints
// ---------------------------------------------------------------------------

/// Serializes a classifier checkpoint with its embedded VAEs.
pub fn classifier_to_bytes(model: &ClassifierModel) -> Vec<u8> {
    let mut builder = ArchiveBuilder::new();
    for (name, shape, values) in model.named_parameters() {
        builder.push(name.to_string(), shape, values);
    }
    for (i, vae) in model.vaes().iter().enumerate() {
        for (name, shape, values) in vae.named_parameters() {
            builder.push(format!("vae{i}/{name}"), shape, values);
        }
    }
    let meta = ClassifierMeta {
        spec: model.spec().clone(),
        loss_trace: model.loss_trace().to_vec(),
        vaes: model.vaes().iter().map(vae_meta).collect(),
    };
    builder.finish("classifier", None, Some(meta))
}

pub fn classifier_from_bytes(bytes: &[u8]) -> Result<ClassifierModel, CheckpointError> {
    let (header, payload) = parse_archive(bytes)?;
    if header.kind != "classifier" {
        return Err(CheckpointError::Format(format!(
            "expected a classifier checkpoint, found {:?}",
            header.kind
        )));
    }
    let meta = header
        .classifier
        .ok_or_else(|| CheckpointError::Format("missing classifier metadata".to_string()))?;
    let mut vaes = Vec::with_capacity(meta.vaes.len());
    for vm in meta.vaes {
        let mut vae = VaeModel::new(vm.config, vm.norm_constant)?;
        vae.set_loss_trace(vm.loss_trace);
        vaes.push(vae);
    }
    let mut model = build_architecture(meta.spec.kind, vaes, meta.spec.seed)?;
    model.set_spec(meta.spec);
    model.set_loss_trace(meta.loss_trace);
    // load arrays: mlp ones into the classifier, vae<i>/ ones into VAEs
    for array in &header.arrays {
        let values = read_array(payload, array)?;
        if let Some(rest) = array.name.strip_prefix("vae") {
            let (idx, name) = rest.split_once('/').ok_or_else(|| {
                CheckpointError::Format(format!("malformed array name {:?}", array.name))
            })?;
            let idx: usize = idx.parse().map_err(|_| {
                CheckpointError::Format(format!("malformed array name {:?}", array.name))
            })?;
            model
                .vae_mut(idx)
                .ok_or_else(|| {
                    CheckpointError::Format(format!("array {:?} names a missing VAE", array.name))
                })?
                .load_named_parameter(name, &array.shape, &values)?;
        } else {
            model.load_named_parameter(&array.name, &array.shape, &values)?;
        }
    }
    Ok(model)
}

pub fn save_classifier(model: &ClassifierModel, path: &Path) -> Result<(), CheckpointError> {
    Ok(std::fs::write(path, classifier_to_bytes(model))?)
}

pub fn load_classifier(path: &Path) -> Result<ClassifierModel, CheckpointError> {
    classifier_from_bytes(&std::fs::read(path)?)
}
