//! Command-line surface. Flags mirror the run-configuration fields in
//! kebab-case; `CTR_OUT_ROOT` sets the default output root (fallback
//! `./runs`).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ctr",
    about = "Time-aware attention CTR models with adversarial negative sampling",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and write date-split train/test files.
    Synthesize(SynthesizeArgs),
    /// Train a model with the configured sampler.
    Train(TrainArgs),
    /// Score a dataset with a checkpoint and report AUC / RelaImpr.
    Eval(EvalArgs),
    /// Fit isotonic CTR calibration on train scores and apply it to test.
    Calibrate(CalibrateArgs),
    /// Repeat training over an axis of C or T0 values and several seeds.
    Sweep(SweepArgs),
}

pub fn out_root() -> PathBuf {
    std::env::var_os("CTR_OUT_ROOT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

#[derive(Args, Clone)]
pub struct DataArgs {
    /// Training dataset (JSON-Lines).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Test dataset (JSON-Lines).
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Synthetic config file (key = value); generates data in memory when
    /// no dataset paths are given.
    #[arg(long)]
    pub synth_config: Option<PathBuf>,
    /// Fraction of the horizon used as training days for in-memory splits.
    #[arg(long, default_value_t = 0.75)]
    pub split_frac: f64,
    /// History length L; shorter histories are left-padded at load time.
    #[arg(long, default_value_t = 10)]
    pub history_len: usize,
    /// Category vocabulary size; inferred from the data when omitted.
    #[arg(long)]
    pub n_categories: Option<usize>,
}

#[derive(Args, Clone)]
pub struct ModelArgs {
    /// Item embedding width d.
    #[arg(long, default_value_t = 90)]
    pub embed_dim: usize,
    /// GRU hidden width h.
    #[arg(long, default_value_t = 90)]
    pub hidden_dim: usize,
    /// Attention projection width v.
    #[arg(long, default_value_t = 64)]
    pub attn_dim: usize,
    /// Strip the temporal components (the "GRU attention" ablation).
    #[arg(long, default_value_t = false)]
    pub no_time: bool,
}

#[derive(Args, Clone)]
pub struct TrainerArgs {
    /// uniform | under-sample-1to5 | user-fixed | pointwise | rgan |
    /// rgan-score-only | rgan-penalty-only | irgan-style
    #[arg(long, default_value = "rgan")]
    pub sampler: String,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 30)]
    pub steps_per_epoch: usize,
    #[arg(long, default_value_t = 0.02)]
    pub lr_d: f64,
    #[arg(long, default_value_t = 0.01)]
    pub lr_g: f64,
    /// Halve both learning rates every this many epochs (0 disables).
    #[arg(long, default_value_t = 10)]
    pub lr_halve_every: usize,
    /// Pairwise hinge margin.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Item-embedding penalty coefficient.
    #[arg(long, default_value_t = 3.0)]
    pub lambda_i: f64,
    /// History-embedding penalty coefficient.
    #[arg(long, default_value_t = 5.0)]
    pub lambda_h: f64,
    /// Candidate-set size C.
    #[arg(long, default_value_t = 20)]
    pub candidates: usize,
    /// Initial policy temperature.
    #[arg(long, default_value_t = 20.0)]
    pub t0: f64,
    /// Per-epoch temperature decay.
    #[arg(long, default_value_t = 0.98)]
    pub t_decay: f64,
    /// Policy samples per positive, K.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Discriminator warm-up epochs before adversarial training.
    #[arg(long, default_value_t = 2)]
    pub pre_epochs: usize,
    /// Evaluate test AUC every this many epochs (0: final epoch only).
    #[arg(long, default_value_t = 1)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args)]
pub struct SynthesizeArgs {
    /// Synthetic config file (key = value); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the sample count.
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// Override the target CTR.
    #[arg(long)]
    pub ctr: Option<f64>,
    /// Override the periodic amplitude.
    #[arg(long)]
    pub periodic_amplitude: Option<f64>,
    /// Fraction of the horizon that lands in the training file.
    #[arg(long, default_value_t = 0.75)]
    pub split_frac: f64,
    /// Output directory for train.jsonl / test.jsonl and sidecars.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Overwrite existing dataset files.
    #[arg(long, default_value_t = false)]
    pub force: bool,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub trainer: TrainerArgs,
    /// Run directory (default: <out-root>/train-<sampler>-seed<seed>).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset to score (JSON-Lines).
    #[arg(long)]
    pub data: PathBuf,
    /// Base AUC for RelaImpr.
    #[arg(long)]
    pub base_auc: Option<f64>,
    /// Run directory of a baseline; its summary.json supplies the base AUC.
    #[arg(long)]
    pub baseline_run: Option<PathBuf>,
    /// Also write the report JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-sample scores (CSV: score,label) here.
    #[arg(long)]
    pub scores_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub train_data: PathBuf,
    #[arg(long)]
    pub test_data: PathBuf,
    /// Bucket counts to fit, e.g. 100,1000,10000.
    #[arg(long, value_delimiter = ',', default_values_t = vec![300usize])]
    pub n_buckets: Vec<usize>,
    /// Strictification slope.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Also report mean calibrated CTR per target category.
    #[arg(long, default_value_t = false)]
    pub per_category: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub trainer: TrainerArgs,
    /// Which hyperparameter the sweep walks: c | t0.
    #[arg(long)]
    pub axis: String,
    /// Axis values, e.g. 1,5,20,35.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    /// Seeds per value (consecutive from --seed).
    #[arg(long, default_value_t = 3)]
    pub seeds: usize,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}
