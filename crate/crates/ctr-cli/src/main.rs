use anyhow::Result;
use clap::Parser;

use ctr_cli::cli::{Cli, Command};
use ctr_cli::commands;

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synthesize(args) => {
            commands::cmd_synthesize(&args)?;
        }
        Command::Train(args) => {
            commands::cmd_train(&args)?;
        }
        Command::Eval(args) => {
            commands::cmd_eval(&args)?;
        }
        Command::Calibrate(args) => {
            commands::cmd_calibrate(&args)?;
        }
        Command::Sweep(args) => {
            commands::cmd_sweep(&args)?;
        }
    }
    Ok(())
}
