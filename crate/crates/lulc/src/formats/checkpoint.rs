//! `CKPT` model checkpoints.
//!
//! Layout: magic, version `u8`, a `u32`-length-prefixed JSON header (model
//! configuration, epoch, optional training configuration and the name,
//! shape and trainability of every parameter in registry order), then all
//! parameter values as `f32` LE in that order. An optional optimizer
//! section follows: magic `ADAM`, a JSON header with the Adam settings and
//! step, then first and second moments of each trainable parameter.

use lulc_core::grad::{AdamConfig, AdamState, Tensor};
use lulc_core::pccnn::{Model, ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use super::bytes::{put_json, Reader};
use crate::error::{FormatError, Result};

pub const MAGIC: &[u8; 4] = b"CKPT";
pub const ADAM_MAGIC: &[u8; 4] = b"ADAM";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    /// Completed training epochs.
    pub epoch: usize,
    pub train: Option<TrainConfig>,
    pub adam: Option<AdamState>,
}

#[derive(Serialize, Deserialize)]
struct ParamHeader {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    epoch: usize,
    train: Option<TrainConfig>,
    params: Vec<ParamHeader>,
}

#[derive(Serialize, Deserialize)]
struct AdamHeader {
    config: AdamConfig,
    step: u64,
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let entries = ckpt.model.params().entries();
    let header = Header {
        config: ckpt.model.config().clone(),
        epoch: ckpt.epoch,
        train: ckpt.train.clone(),
        params: entries
            .iter()
            .map(|e| ParamHeader { name: e.name.clone(), shape: e.value.shape().to_vec(), trainable: e.trainable })
            .collect(),
    };
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    put_json(&mut out, &header);
    for e in entries {
        put_f32s(&mut out, e.value.data());
    }
    if let Some(adam) = &ckpt.adam {
        out.extend_from_slice(ADAM_MAGIC);
        put_json(&mut out, &AdamHeader { config: adam.config, step: adam.step });
        for (e, (m, v)) in entries.iter().zip(adam.m.iter().zip(&adam.v)) {
            if e.trainable {
                put_f32s(&mut out, m);
                put_f32s(&mut out, v);
            }
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let what = "checkpoint";
    let mut r = Reader::new(bytes, what);
    r.magic(MAGIC)?;
    let version = r.u8()?;
    if version != VERSION {
        return Err(FormatError::BadVersion { format: what, expected: VERSION, found: version }.into());
    }
    let header: Header = r.json()?;
    let mut model = Model::new(header.config.clone(), 0)?;
    let expected = model.params().entries();
    if expected.len() != header.params.len()
        || expected
            .iter()
            .zip(&header.params)
            .any(|(e, h)| e.name != h.name || e.value.shape() != h.shape.as_slice() || e.trainable != h.trainable)
    {
        return Err(FormatError::malformed(what, "parameter list does not match the configuration").into());
    }
    let mut values = Vec::with_capacity(header.params.len());
    for h in &header.params {
        let n = h.shape.iter().product();
        values.push((h.name.clone(), Tensor::new(&h.shape, r.f32s(n)?)?));
    }
    model.params_mut().load_values(values)?;
    let adam = if r.is_done() {
        None
    } else {
        if !r.at_tag(ADAM_MAGIC) {
            return Err(FormatError::malformed(what, "unknown section after parameters").into());
        }
        r.magic(ADAM_MAGIC)?;
        let ah: AdamHeader = r.json()?;
        let mut state = AdamState::new(ah.config, model.params());
        state.step = ah.step;
        for (i, h) in header.params.iter().enumerate() {
            if h.trainable {
                let n = h.shape.iter().product();
                state.m[i] = r.f32s(n)?;
                state.v[i] = r.f32s(n)?;
            }
        }
        r.finish()?;
        Some(state)
    };
    Ok(Checkpoint { model, epoch: header.epoch, train: header.train, adam })
}
