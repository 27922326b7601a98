//! Run-directory artifacts: per-step and per-epoch metric CSVs and the
//! summary JSON. Floats print with Rust's shortest round-trip formatting,
//! so identical runs produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use ctr_core::evaluation::EpochMetrics;
use ctr_core::sampler::StepRow;

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_step_csv(path: &Path, rows: &[StepRow]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
    let mut out = BufWriter::new(file);
    writeln!(
        out,
        "epoch,step,d_loss,g_surrogate,mean_reward,baseline,temperature,train_auc_snapshot"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.epoch,
            r.step,
            r.d_loss,
            opt(r.g_surrogate),
            opt(r.mean_reward),
            opt(r.baseline),
            opt(r.temperature),
            opt(r.train_auc_snapshot)
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_epoch_csv(path: &Path, rows: &[EpochMetrics]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "epoch,test_auc,d_loss,mean_reward,tau,tau_random")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.epoch,
            opt(r.test_auc),
            r.d_loss,
            opt(r.mean_reward),
            opt(r.tau),
            opt(r.tau_random)
        )?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
pub struct RunSummary {
    pub sampler: String,
    pub seed: u64,
    pub model_config_hash: String,
    pub final_test_auc: Option<f64>,
    pub best_test_auc: Option<f64>,
    pub best_epoch: Option<usize>,
    pub batch_size: usize,
    pub steps_per_epoch: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rela_impr_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_auc: Option<f64>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}
