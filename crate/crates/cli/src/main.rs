//! Command-line driver: phantom generation, binary pretraining, fold
//! training, evaluation and the built-in verification suites.

mod commands;
mod options;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use options::{EvalArgs, GenDataArgs, PretrainArgs, SuiteArgs, TrainArgs};

#[derive(Debug, Parser)]
#[command(name = "a2dmn", version, about = "Layered-tissue ultrasound segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic phantom dataset (PGM images, masks, manifest).
    GenData(GenDataArgs),
    /// Train the binary tumor-versus-rest variant for encoder transfer.
    Pretrain(PretrainArgs),
    /// Cross-validated semantic training; one best checkpoint per fold.
    Train(TrainArgs),
    /// Per-fold, per-class IoU / Hausdorff / average distance as CSV.
    Eval(EvalArgs),
    /// Double-precision central-difference checks of every operation.
    Gradcheck(SuiteArgs),
    /// Compare losses, convolutions and metrics with reference code.
    Oracle(SuiteArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Pretrain(a) => commands::pretrain(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
        Command::Oracle(a) => commands::oracle(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
