//! The resolved run configuration echoed into every run directory, with all
//! defaults materialized.

use serde::Serialize;

use crate::checkpoint::DimsWire;

#[derive(Serialize)]
pub struct DataEcho {
    pub train: Option<String>,
    pub test: Option<String>,
    pub synth_config: Option<String>,
    pub split_frac: f64,
    pub history_len: usize,
    pub n_categories: usize,
    pub aux_dim: usize,
}

#[derive(Serialize)]
pub struct ResolvedConfig {
    pub command: String,
    pub sampler: String,
    pub seed: u64,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub lr_d: f64,
    pub lr_g: f64,
    pub lr_halve_every: usize,
    pub gamma: f64,
    pub lambda_i: f64,
    pub lambda_h: f64,
    pub candidates: usize,
    pub t0: f64,
    pub t_decay: f64,
    pub k: usize,
    pub pre_epochs: usize,
    pub eval_every: usize,
    pub dims: DimsWire,
    pub data: DataEcho,
    pub model_config_hash: String,
    pub out_dir: String,
}
