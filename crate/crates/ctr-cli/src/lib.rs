//! File formats, configuration and experiment orchestration around
//! `ctr-core`: JSON-Lines datasets, JSON checkpoints and calibration models,
//! CSV metrics, and the `synthesize` / `train` / `eval` / `calibrate` /
//! `sweep` subcommands.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod jsonl;
pub mod outputs;
