//! JSON model checkpoints: a dims header plus flat named parameter arrays.
//! `serde_json` prints every f64 with a shortest round-trip representation,
//! so save/load is exact at fp64.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ctr_core::model::{ModelDims, ModelParams};

#[derive(Serialize, Deserialize, Clone)]
pub struct DimsWire {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attn_dim: usize,
    pub history_len: usize,
    pub aux_dim: usize,
    pub n_categories: usize,
    pub time_aware: bool,
}

impl From<&ModelDims> for DimsWire {
    fn from(d: &ModelDims) -> Self {
        Self {
            embed_dim: d.embed_dim,
            hidden_dim: d.hidden_dim,
            attn_dim: d.attn_dim,
            history_len: d.history_len,
            aux_dim: d.aux_dim,
            n_categories: d.n_categories,
            time_aware: d.time_aware,
        }
    }
}

impl From<DimsWire> for ModelDims {
    fn from(w: DimsWire) -> Self {
        Self {
            embed_dim: w.embed_dim,
            hidden_dim: w.hidden_dim,
            attn_dim: w.attn_dim,
            history_len: w.history_len,
            aux_dim: w.aux_dim,
            n_categories: w.n_categories,
            time_aware: w.time_aware,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ParamWire {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointWire {
    dims: DimsWire,
    model_config_hash: String,
    params: Vec<ParamWire>,
}

/// Stable identifier of the model architecture, shared by runs that are
/// comparable regardless of sampler or seed.
pub fn model_config_hash(dims: &ModelDims) -> String {
    use sha2::{Digest, Sha256};
    let canonical = serde_json::to_string(&DimsWire::from(dims)).expect("dims serialize");
    let digest = Sha256::digest(canonical.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save(path: &Path, model: &ModelParams) -> Result<()> {
    let wire = CheckpointWire {
        dims: DimsWire::from(&model.dims),
        model_config_hash: model_config_hash(&model.dims),
        params: model
            .params()
            .iter()
            .map(|p| ParamWire {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                values: p.value.data().to_vec(),
            })
            .collect(),
    };
    let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
    serde_json::to_writer(BufWriter::new(file), &wire)
        .with_context(|| format!("write {}", path.display()))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelParams> {
    let file = File::open(path).with_context(|| format!("open {}", path.display()))?;
    let wire: CheckpointWire = serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("parse {}", path.display()))?;
    let dims: ModelDims = wire.dims.into();
    let mut model = ModelParams::init(dims, 0).map_err(|e| anyhow::anyhow!("{e}"))?;
    let expected = model.params().len();
    if wire.params.len() != expected {
        bail!(
            "{}: checkpoint has {} parameters, model expects {expected}",
            path.display(),
            wire.params.len()
        );
    }
    for p in wire.params {
        model
            .params_mut()
            .load_values(&p.name, &p.values)
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    }
    Ok(model)
}
