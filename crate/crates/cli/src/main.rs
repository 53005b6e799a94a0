//! `puppeteer` command-line entry point.

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use puppeteer_core::Error;

#[derive(Parser)]
#[command(name = "puppeteer", version, about = "Hierarchical world-model agents on a 2D puppet terrain suite")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// JSON run configuration; defaults are used for missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config value, e.g. `--set task.gap_length=1.2`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Run seed (same as `--set seed=N`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate reference clips and scripted offline tracking rollouts.
    GenData,
    /// Train the tracking agent.
    TrainTracker,
    /// Train the puppeteer on top of a frozen tracker.
    TrainPuppeteer,
    /// Continue training a puppeteer checkpoint on another task.
    Finetune,
    /// Evaluate agents on the configured task.
    Eval(EvalArgs),
    /// Tracking metrics or naturalness tables.
    #[command(subcommand)]
    Metrics(MetricsArgs),
    /// SVG figures from JSONL logs.
    #[command(subcommand)]
    Plot(PlotArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalWhich {
    Plan,
    Policy,
    Scripted,
    All,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long, value_enum, default_value_t = EvalWhich::Plan)]
    pub mode: EvalWhich,
    /// Also run the gap-length sweep from `eval.gap_sweep`.
    #[arg(long)]
    pub sweep: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TrackingPolicyKind {
    Model,
    Scripted,
    Random,
}

#[derive(Subcommand)]
pub enum MetricsArgs {
    /// Success rate, tracking error and CoMic score over the clip set.
    Tracking {
        #[arg(long, value_enum, default_value_t = TrackingPolicyKind::Model)]
        policy: TrackingPolicyKind,
    },
    /// Naturalness table from evaluation dumps.
    Naturalness {
        /// `METHOD:CKPT_EVAL.jsonl:FINAL_EVAL.jsonl`, once per method and seed.
        #[arg(long = "input", required = true)]
        inputs: Vec<String>,
    },
}

#[derive(Subcommand)]
pub enum PlotArgs {
    /// Episode return against training step.
    Learning {
        #[arg(long = "log", required = true)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Torso path over the terrain from an evaluation dump.
    Trajectory {
        #[arg(long)]
        dump: PathBuf,
        #[arg(long, default_value_t = 0)]
        episode: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData => commands::gen_data(&cli.common),
        Command::TrainTracker => commands::train_tracker(&cli.common),
        Command::TrainPuppeteer => commands::train_puppeteer(&cli.common),
        Command::Finetune => commands::finetune(&cli.common),
        Command::Eval(a) => commands::eval(&cli.common, &a),
        Command::Metrics(a) => commands::metrics(&cli.common, &a),
        Command::Plot(a) => plot::run(&cli.common, &a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
