//! `adnlf` command-line front end.

mod commands;
mod config;
mod error;
mod index;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::{EvaluateRequest, PredictRequest};
use crate::config::{parse_delimiter, resolve_run, DataArgs, Fallback, Mode, ModelArgs};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "adnlf", version, about = "Non-negative latent factor models with self-adapting α-β divergence")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write train/validation/test files, a subset manifest and the scaling.
    Split(DataArgs),
    /// Train a model (adaptive by default) and write model, trace and report.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Train one manual model per (α, β) grid cell and tabulate test RMSE.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Predict raw-scale values for (row id, column id) pairs.
    Predict {
        #[command(flatten)]
        model: ModelInput,
        /// File of row id, column id pairs.
        pairs: PathBuf,
        /// Write predictions here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Report the raw-scale RMSE of a model on a triple file.
    Evaluate {
        #[command(flatten)]
        model: ModelInput,
        /// Rating triples to score.
        triples: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ModelInput {
    #[arg(long)]
    model: PathBuf,
    /// Id sidecar [default: <model>.index].
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long, default_value = ",")]
    delimiter: String,
    #[arg(long)]
    header: bool,
    /// Unknown ids: fail, or predict the training mean.
    #[arg(long, value_enum, default_value_t = Fallback::Error)]
    fallback: Fallback,
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Split(data) => commands::split(&data.resolve()?),
        Command::Train { data, model } => commands::train(&resolve_run(&data, &model, None)?),
        Command::Sweep { data, model } => {
            commands::sweep(&resolve_run(&data, &model, Some(Mode::Sweep))?)
        }
        Command::Predict {
            model,
            pairs,
            output,
        } => commands::predict(&PredictRequest {
            model: &model.model,
            index: model.index.as_deref(),
            pairs: &pairs,
            delimiter: parse_delimiter(&model.delimiter)?,
            header: model.header,
            fallback: model.fallback,
            output: output.as_deref(),
        }),
        Command::Evaluate { model, triples } => commands::evaluate(&EvaluateRequest {
            model: &model.model,
            index: model.index.as_deref(),
            triples: &triples,
            delimiter: parse_delimiter(&model.delimiter)?,
            header: model.header,
            fallback: model.fallback,
        }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // clap reports usage errors with status 2, matching configuration errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
