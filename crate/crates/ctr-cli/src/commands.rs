use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use ctr_core::calibration::{normalize_scores, CalibrationModel};
use ctr_core::data::Dataset;
use ctr_core::evaluation::{auc, rela_impr};
use ctr_core::model::{ModelDims, ModelParams};
use ctr_core::sampler::{evaluate_auc, train, SamplerKind, TrainConfig, TrainOutput};
use ctr_core::synth::{generate_synthetic, split_by_time, SyntheticConfig, HORIZON_START};

use crate::checkpoint::{self, model_config_hash, DimsWire};
use crate::cli::{
    out_root, CalibrateArgs, DataArgs, EvalArgs, ModelArgs, SweepArgs, SynthesizeArgs, TrainArgs,
    TrainerArgs,
};
use crate::config::{DataEcho, ResolvedConfig};
use crate::jsonl::{load_jsonl, write_jsonl, write_truth_sidecar, SchemaConfig};
use crate::outputs::{write_epoch_csv, write_json, write_step_csv, RunSummary};

fn load_synth_config(path: Option<&Path>) -> Result<SyntheticConfig> {
    match path {
        None => Ok(SyntheticConfig::default()),
        Some(p) => {
            let text =
                fs::read_to_string(p).with_context(|| format!("read {}", p.display()))?;
            SyntheticConfig::parse_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))
        }
    }
}

fn day_aligned_boundary(cfg: &SyntheticConfig, split_frac: f64) -> i64 {
    let days = (cfg.horizon_days as f64 * split_frac).floor() as i64;
    HORIZON_START + days.clamp(0, cfg.horizon_days as i64) * 86_400
}

/// Resolve train/test datasets from file paths or an in-memory synthetic
/// generation split by date.
fn resolve_datasets(data: &DataArgs) -> Result<(Dataset, Option<Dataset>)> {
    match (&data.train, &data.test) {
        (Some(train_path), test_path) => {
            let schema = SchemaConfig {
                history_len: data.history_len,
                n_categories: data.n_categories,
            };
            let train = load_jsonl(train_path, &schema)?;
            let test = match test_path {
                Some(p) => Some(load_jsonl(p, &schema)?),
                None => None,
            };
            Ok((train, test))
        }
        (None, Some(_)) => bail!("--test without --train"),
        (None, None) => {
            let mut cfg = load_synth_config(data.synth_config.as_deref())?;
            cfg.history_len = data.history_len;
            if let Some(n) = data.n_categories {
                cfg.n_categories = n;
            }
            let ds = generate_synthetic(&cfg).map_err(|e| anyhow::anyhow!("{e}"))?;
            let (train, test) = split_by_time(ds, day_aligned_boundary(&cfg, data.split_frac));
            Ok((train, Some(test)))
        }
    }
}

fn build_dims(model: &ModelArgs, data: &DataArgs, train: &Dataset, test: Option<&Dataset>) -> ModelDims {
    let n_categories = data
        .n_categories
        .unwrap_or_else(|| train.n_categories.max(test.map_or(0, |t| t.n_categories)));
    ModelDims {
        embed_dim: model.embed_dim,
        hidden_dim: model.hidden_dim,
        attn_dim: model.attn_dim,
        history_len: data.history_len,
        aux_dim: train.aux_dim(),
        n_categories,
        time_aware: !model.no_time,
    }
}

fn build_train_config(t: &TrainerArgs) -> Result<TrainConfig> {
    let sampler: SamplerKind = t.sampler.parse().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(TrainConfig {
        sampler,
        epochs: t.epochs,
        steps_per_epoch: t.steps_per_epoch,
        lr_d: t.lr_d,
        lr_g: t.lr_g,
        lr_halve_every: t.lr_halve_every,
        gamma: t.gamma,
        lambda_i: t.lambda_i,
        lambda_h: t.lambda_h,
        candidates: t.candidates,
        t0: t.t0,
        t_decay: t.t_decay,
        k_samples: t.k,
        pre_epochs: t.pre_epochs,
        eval_every: t.eval_every,
        seed: t.seed,
    })
}

fn path_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

pub fn cmd_synthesize(args: &SynthesizeArgs) -> Result<PathBuf> {
    let mut cfg = load_synth_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.n_samples {
        cfg.n_samples = n;
    }
    if let Some(ctr) = args.ctr {
        cfg.ctr = ctr;
    }
    if let Some(a) = args.periodic_amplitude {
        cfg.periodic_amplitude = a;
    }
    cfg.validate().map_err(|e| anyhow::anyhow!("{e}"))?;

    let out_dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| out_root().join(format!("synth-seed{}", cfg.seed)));
    fs::create_dir_all(&out_dir)?;
    let files = ["train.jsonl", "test.jsonl", "train.truth.jsonl", "test.truth.jsonl"];
    if !args.force {
        for f in files {
            let p = out_dir.join(f);
            if p.exists() {
                bail!("{} exists; pass --force to overwrite", p.display());
            }
        }
    }

    let ds = generate_synthetic(&cfg).map_err(|e| anyhow::anyhow!("{e}"))?;
    let (train, test) = split_by_time(ds, day_aligned_boundary(&cfg, args.split_frac));
    write_jsonl(&out_dir.join("train.jsonl"), &train)?;
    write_jsonl(&out_dir.join("test.jsonl"), &test)?;
    write_truth_sidecar(&out_dir.join("train.truth.jsonl"), train.truth.as_ref().unwrap())?;
    write_truth_sidecar(&out_dir.join("test.truth.jsonl"), test.truth.as_ref().unwrap())?;
    fs::write(out_dir.join("synth.config"), cfg.to_string())?;
    println!(
        "wrote {} train / {} test samples (train CTR {:.5}) under {}",
        train.len(),
        test.len(),
        train.ctr().unwrap_or(f64::NAN),
        out_dir.display()
    );
    Ok(out_dir)
}

pub fn cmd_train(args: &TrainArgs) -> Result<PathBuf> {
    let cfg = build_train_config(&args.trainer)?;
    let (train_ds, test_ds) = resolve_datasets(&args.data)?;
    let dims = build_dims(&args.model, &args.data, &train_ds, test_ds.as_ref());

    let out_dir = args.out_dir.clone().unwrap_or_else(|| {
        out_root().join(format!("train-{}-seed{}", cfg.sampler, cfg.seed))
    });
    fs::create_dir_all(&out_dir)?;

    let output = train(&train_ds, test_ds.as_ref(), &dims, &cfg)
        .map_err(|e| anyhow::anyhow!("training failed: {e}"))?;

    write_run_outputs(&out_dir, "train", &args.data, &cfg, &dims, &output)?;
    println!(
        "{}: final test AUC {}",
        out_dir.display(),
        output
            .final_test_auc()
            .map(|a| format!("{a:.4}"))
            .unwrap_or_else(|| "n/a".into())
    );
    Ok(out_dir)
}

fn write_run_outputs(
    out_dir: &Path,
    command: &str,
    data: &DataArgs,
    cfg: &TrainConfig,
    dims: &ModelDims,
    output: &TrainOutput,
) -> Result<()> {
    let resolved = ResolvedConfig {
        command: command.into(),
        sampler: cfg.sampler.to_string(),
        seed: cfg.seed,
        epochs: cfg.epochs,
        steps_per_epoch: cfg.steps_per_epoch,
        batch_size: output.batch_size,
        lr_d: cfg.lr_d,
        lr_g: cfg.lr_g,
        lr_halve_every: cfg.lr_halve_every,
        gamma: cfg.gamma,
        lambda_i: cfg.lambda_i,
        lambda_h: cfg.lambda_h,
        candidates: cfg.candidates,
        t0: cfg.t0,
        t_decay: cfg.t_decay,
        k: cfg.k_samples,
        pre_epochs: cfg.pre_epochs,
        eval_every: cfg.eval_every,
        dims: DimsWire::from(dims),
        data: DataEcho {
            train: path_str(&data.train),
            test: path_str(&data.test),
            synth_config: path_str(&data.synth_config),
            split_frac: data.split_frac,
            history_len: data.history_len,
            n_categories: dims.n_categories,
            aux_dim: dims.aux_dim,
        },
        model_config_hash: model_config_hash(dims),
        out_dir: out_dir.display().to_string(),
    };
    write_json(&out_dir.join("config.resolved"), &resolved)?;
    write_step_csv(&out_dir.join("metrics.csv"), &output.steps)?;
    write_epoch_csv(&out_dir.join("epochs.csv"), &output.epochs)?;
    checkpoint::save(&out_dir.join("checkpoint-final.json"), &output.model)?;
    match &output.best {
        Some((_, _, best)) => checkpoint::save(&out_dir.join("checkpoint-best.json"), best)?,
        None => checkpoint::save(&out_dir.join("checkpoint-best.json"), &output.model)?,
    }
    let summary = RunSummary {
        sampler: cfg.sampler.to_string(),
        seed: cfg.seed,
        model_config_hash: model_config_hash(dims),
        final_test_auc: output.final_test_auc(),
        best_test_auc: output.best.as_ref().map(|(_, a, _)| *a),
        best_epoch: output.best.as_ref().map(|(e, _, _)| *e),
        batch_size: output.batch_size,
        steps_per_epoch: output.realized_steps_per_epoch,
        rela_impr_pct: None,
        baseline_auc: None,
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(())
}

#[derive(Serialize)]
pub struct EvalReport {
    pub auc: f64,
    pub n_positives: usize,
    pub n_negatives: usize,
    pub model_config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rela_impr_pct: Option<f64>,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport> {
    let model = checkpoint::load(&args.checkpoint)?;
    let schema = SchemaConfig {
        history_len: model.dims.history_len,
        n_categories: Some(model.dims.n_categories),
    };
    let ds = load_jsonl(&args.data, &schema)?;

    let base_auc = match (&args.base_auc, &args.baseline_run) {
        (Some(b), _) => Some(*b),
        (None, Some(dir)) => {
            let text = fs::read_to_string(dir.join("summary.json"))
                .with_context(|| format!("read {}/summary.json", dir.display()))?;
            let summary: serde_json::Value = serde_json::from_str(&text)?;
            let a = summary
                .get("final_test_auc")
                .and_then(|v| v.as_f64())
                .context("baseline run has no final_test_auc")?;
            Some(a)
        }
        (None, None) => None,
    };

    let measured = evaluate_auc(&model, &ds).map_err(|e| anyhow::anyhow!("{e}"))?;
    let rela = match base_auc {
        Some(b) => Some(rela_impr(measured, b).map_err(|e| anyhow::anyhow!("{e}"))?),
        None => None,
    };
    if let Some(path) = &args.scores_out {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(out, "score,label")?;
        for s in ds.positives.iter().chain(&ds.negatives) {
            let f = model.score_sample(s).map_err(|e| anyhow::anyhow!("{e}"))?;
            writeln!(out, "{},{}", f, u8::from(s.label))?;
        }
    }
    let report = EvalReport {
        auc: measured,
        n_positives: ds.positives.len(),
        n_negatives: ds.negatives.len(),
        model_config_hash: model_config_hash(&model.dims),
        base_auc,
        rela_impr_pct: rela,
    };
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(report)
}

#[derive(Serialize)]
pub struct CalibrationRow {
    pub n_buckets: usize,
    pub mean_calibrated_ctr: f64,
    pub empirical_test_ctr: f64,
    pub relative_error: f64,
}

#[derive(Serialize)]
pub struct CalibrationReport {
    pub epsilon: f64,
    pub rows: Vec<CalibrationRow>,
}

fn scores_and_labels(model: &ModelParams, ds: &Dataset) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut scores = Vec::with_capacity(ds.len());
    let mut labels = Vec::with_capacity(ds.len());
    for s in ds.positives.iter().chain(&ds.negatives) {
        scores.push(model.score_sample(s).map_err(|e| anyhow::anyhow!("{e}"))?);
        labels.push(s.label);
    }
    Ok((scores, labels))
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<CalibrationReport> {
    if args.n_buckets.is_empty() {
        bail!("--n-buckets needs at least one value");
    }
    let model = checkpoint::load(&args.checkpoint)?;
    let schema = SchemaConfig {
        history_len: model.dims.history_len,
        n_categories: Some(model.dims.n_categories),
    };
    let train_ds = load_jsonl(&args.train_data, &schema)?;
    let test_ds = load_jsonl(&args.test_data, &schema)?;

    let (train_scores, train_labels) = scores_and_labels(&model, &train_ds)?;
    let (test_scores, test_labels) = scores_and_labels(&model, &test_ds)?;
    let train_sigmas = normalize_scores(&train_scores);
    let test_sigmas = normalize_scores(&test_scores);
    let empirical =
        test_labels.iter().filter(|&&l| l).count() as f64 / test_labels.len().max(1) as f64;
    if empirical == 0.0 {
        bail!("test set has no positives; empirical CTR is zero");
    }

    let out_dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| out_root().join("calibration"));
    fs::create_dir_all(&out_dir)?;

    let mut rows = Vec::new();
    let mut last_model: Option<CalibrationModel> = None;
    for &n in &args.n_buckets {
        let cal = CalibrationModel::fit(&train_sigmas, &train_labels, n, args.epsilon)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        let mean = cal
            .calibrate_dataset(&test_sigmas)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        rows.push(CalibrationRow {
            n_buckets: n,
            mean_calibrated_ctr: mean,
            empirical_test_ctr: empirical,
            relative_error: (mean - empirical).abs() / empirical,
        });
        write_calibration_model(&out_dir.join(format!("calibration-n{n}.json")), &cal)?;
        last_model = Some(cal);
    }
    if let Some(cal) = &last_model {
        write_calibration_model(&out_dir.join("calibration.json"), cal)?;
    }

    {
        use std::io::Write;
        let mut out =
            std::io::BufWriter::new(fs::File::create(out_dir.join("calibration_report.csv"))?);
        writeln!(out, "n_buckets,mean_calibrated_ctr,empirical_test_ctr,relative_error")?;
        for r in &rows {
            writeln!(
                out,
                "{},{},{},{}",
                r.n_buckets, r.mean_calibrated_ctr, r.empirical_test_ctr, r.relative_error
            )?;
        }
    }

    if args.per_category {
        write_per_category(&out_dir, args, &model, &train_ds, &test_ds)?;
    }

    let report = CalibrationReport { epsilon: args.epsilon, rows };
    write_json(&out_dir.join("calibration_summary.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(report)
}

#[derive(Serialize)]
struct CalibrationModelWire {
    n: usize,
    epsilon: f64,
    rates: Vec<f64>,
}

fn write_calibration_model(path: &Path, cal: &CalibrationModel) -> Result<()> {
    write_json(
        path,
        &CalibrationModelWire {
            n: cal.n_buckets(),
            epsilon: cal.epsilon(),
            rates: cal.rates().to_vec(),
        },
    )
}

/// Refit and apply the calibration per target category, at the last
/// requested bucket count.
fn write_per_category(
    out_dir: &Path,
    args: &CalibrateArgs,
    model: &ModelParams,
    train_ds: &Dataset,
    test_ds: &Dataset,
) -> Result<()> {
    use std::io::Write;
    let n = *args.n_buckets.last().unwrap();
    let cats: BTreeSet<usize> = test_ds
        .positives
        .iter()
        .chain(&test_ds.negatives)
        .map(|s| s.target.cid3)
        .collect();
    let subset = |ds: &Dataset, cid: usize| -> Dataset {
        Dataset {
            positives: ds.positives.iter().filter(|s| s.target.cid3 == cid).cloned().collect(),
            negatives: ds.negatives.iter().filter(|s| s.target.cid3 == cid).cloned().collect(),
            n_categories: ds.n_categories,
            truth: None,
        }
    };
    let mut out =
        std::io::BufWriter::new(fs::File::create(out_dir.join("per_category.csv"))?);
    writeln!(out, "cid3,n_test,mean_calibrated_ctr,empirical_test_ctr,relative_error")?;
    for cid in cats {
        let tr = subset(train_ds, cid);
        let te = subset(test_ds, cid);
        let empirical = te.ctr().unwrap_or(0.0);
        if tr.is_empty() || tr.positives.is_empty() || empirical == 0.0 {
            writeln!(out, "{},{},,,", cid, te.len())?;
            continue;
        }
        let (tr_scores, tr_labels) = scores_and_labels(model, &tr)?;
        let (te_scores, _) = scores_and_labels(model, &te)?;
        let cal = CalibrationModel::fit(
            &normalize_scores(&tr_scores),
            &tr_labels,
            n,
            args.epsilon,
        )
        .map_err(|e| anyhow::anyhow!("{e}"))?;
        let mean = cal
            .calibrate_dataset(&normalize_scores(&te_scores))
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        writeln!(
            out,
            "{},{},{},{},{}",
            cid,
            te.len(),
            mean,
            empirical,
            (mean - empirical).abs() / empirical
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub mean_final_auc: f64,
    pub std_final_auc: f64,
    pub n_seeds: usize,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<SweepRow>> {
    if args.values.is_empty() {
        bail!("--values needs at least one entry");
    }
    if args.seeds == 0 {
        bail!("--seeds must be >= 1");
    }
    let axis = args.axis.to_ascii_lowercase();
    if axis != "c" && axis != "t0" {
        bail!("--axis must be c or t0");
    }
    let (train_ds, test_ds) = resolve_datasets(&args.data)?;
    let test_ds = test_ds.context("sweeps need test data for the final AUC")?;
    let dims = build_dims(&args.model, &args.data, &train_ds, Some(&test_ds));
    let out_dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| out_root().join(format!("sweep-{axis}")));
    fs::create_dir_all(&out_dir)?;

    let mut rows = Vec::new();
    for &value in &args.values {
        let mut finals = Vec::new();
        for s in 0..args.seeds {
            let mut cfg = build_train_config(&args.trainer)?;
            cfg.seed = args.trainer.seed + s as u64;
            match axis.as_str() {
                "c" => {
                    if value < 1.0 || value.fract() != 0.0 {
                        bail!("candidate sizes must be positive integers, got {value}");
                    }
                    cfg.candidates = value as usize;
                }
                _ => {
                    if value <= 0.0 {
                        bail!("temperatures must be positive, got {value}");
                    }
                    cfg.t0 = value;
                }
            }
            let run_dir = out_dir.join(format!("{axis}{value}-seed{}", cfg.seed));
            fs::create_dir_all(&run_dir)?;
            let output = train(&train_ds, Some(&test_ds), &dims, &cfg)
                .map_err(|e| anyhow::anyhow!("sweep run failed: {e}"))?;
            write_run_outputs(&run_dir, "sweep", &args.data, &cfg, &dims, &output)?;
            finals.push(output.final_test_auc().context("sweep run produced no AUC")?);
        }
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        let std = if finals.len() < 2 {
            0.0
        } else {
            (finals.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>()
                / (finals.len() - 1) as f64)
                .sqrt()
        };
        rows.push(SweepRow {
            value,
            mean_final_auc: mean,
            std_final_auc: std,
            n_seeds: finals.len(),
        });
    }

    {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(fs::File::create(out_dir.join("sweep.csv"))?);
        writeln!(out, "value,mean_final_auc,std_final_auc,n_seeds")?;
        for r in &rows {
            writeln!(out, "{},{},{},{}", r.value, r.mean_final_auc, r.std_final_auc, r.n_seeds)?;
        }
    }
    write_json(&out_dir.join("sweep_summary.json"), &rows)?;
    println!("{}", serde_json::to_string_pretty(&rows)?);
    Ok(rows)
}
