//! `connector`: command-line front end for the connector study toolkit.
//!
//! Subcommands: gradcheck, forward, cost, toy-train, compare, score,
//! advise. Every run resolves its configuration (flags > config file >
//! built-in defaults), writes its outputs into `--out-dir`, and drops a
//! `<subcommand>-manifest.txt` beside them; re-running with the manifest as
//! the config file reproduces the outputs bit for bit.

mod cmds;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use connector_core::CoreError;

/// Validation errors exit 1, runtime errors exit 2.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NonFinite { .. } | CoreError::Diverged { .. } => {
                CliError::Runtime(format!("{e}"))
            }
            other => CliError::Validation(format!("{other}")),
        }
    }
}

#[derive(Parser)]
#[command(name = "connector", version, about = "Vision-language connector study toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Flat key=value config file (e.g. a previous run manifest)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for outputs and the run manifest (default "out")
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Master seed; all randomness derives from it
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ConnectorFlags {
    /// linear | mlp | avgpool | attnpool (q-former) | convmap (c-abstractor)
    #[arg(long)]
    connector: Option<String>,
    /// Input (visual encoder) channel dimension
    #[arg(long)]
    d_v: Option<usize>,
    /// Output (LLM hidden) dimension
    #[arg(long)]
    d_llm: Option<usize>,
    /// Compressed token count (perfect square; compressing connectors only)
    #[arg(long)]
    tokens: Option<usize>,
    /// Cross-attention hidden dim (attnpool only)
    #[arg(long)]
    attn_dim: Option<usize>,
    /// Odd convolution kernel size (convmap only)
    #[arg(long)]
    kernel: Option<usize>,
    /// Include bias terms (true/false)
    #[arg(long)]
    bias: Option<bool>,
}

#[derive(Args)]
struct HyperFlags {
    #[arg(long, allow_negative_numbers = true)]
    lr: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    momentum: Option<f64>,
    /// Fraction of samples held out for the final accuracy
    #[arg(long, allow_negative_numbers = true)]
    holdout: Option<f64>,
}

#[derive(Args)]
struct DatasetFlags {
    /// coarse | fine | reasoning
    #[arg(long)]
    task: Option<String>,
    /// Patch grid side length
    #[arg(long)]
    grid_side: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    /// Additive background noise scale
    #[arg(long, allow_negative_numbers = true)]
    noise: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check analytic gradients against central finite differences
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Connector kind or "all"
        #[arg(long)]
        connector: Option<String>,
        /// Finite-difference step (0 < eps <= 1e-2)
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Run one connector forward pass on seeded synthetic patches
    Forward {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        connector: ConnectorFlags,
        /// Patch grid side length
        #[arg(long)]
        grid_side: Option<usize>,
        /// Load parameters from this checkpoint instead of seeded init
        #[arg(long)]
        checkpoint: Option<String>,
        /// Also save the parameters used (file name inside out-dir)
        #[arg(long)]
        save_checkpoint: Option<String>,
    },
    /// Per-sample FLOP accounting and predicted training-time reduction
    Cost {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        connector: ConnectorFlags,
        /// Square image resolution in pixels
        #[arg(long)]
        resolution: Option<usize>,
        /// Training stage (1 = pre-train, 2 = fine-tune text lengths)
        #[arg(long)]
        stage: Option<usize>,
        /// Override the stage's expected text tokens per sample
        #[arg(long)]
        text_tokens: Option<usize>,
        #[arg(long)]
        llm_hidden: Option<usize>,
        #[arg(long)]
        llm_layers: Option<usize>,
    },
    /// Train one connector on a synthetic planted-signal task
    ToyTrain {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        connector: ConnectorFlags,
        #[command(flatten)]
        dataset: DatasetFlags,
        #[command(flatten)]
        hyper: HyperFlags,
    },
    /// Sweep connectors x tasks x seeds and rank them
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated connector kinds
        #[arg(long)]
        connectors: Option<String>,
        /// Comma-separated task kinds
        #[arg(long)]
        tasks: Option<String>,
        /// Comma-separated run seeds
        #[arg(long)]
        seeds: Option<String>,
        /// Compressed token count for compressing kinds
        #[arg(long)]
        tokens: Option<usize>,
        #[arg(long)]
        d_v: Option<usize>,
        #[arg(long)]
        d_llm: Option<usize>,
        #[command(flatten)]
        dataset: DatasetFlags,
        #[command(flatten)]
        hyper: HyperFlags,
    },
    /// Aggregate benchmark sub-task results into coarse/fine/reasoning scores
    Score {
        #[command(flatten)]
        common: Common,
        /// Input CSV: benchmark,sub_task,correct,total
        #[arg(long)]
        results: Option<String>,
        /// macro | micro
        #[arg(long)]
        mode: Option<String>,
        /// Taxonomy extension CSV: benchmark,sub_task,granularity
        #[arg(long)]
        taxonomy: Option<String>,
    },
    /// Recommend a connector for a resolution, priority, and budget
    Advise {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        resolution: Option<usize>,
        /// coarse | fine | reasoning | balanced
        #[arg(long)]
        priority: Option<String>,
        /// ample | limited
        #[arg(long)]
        budget: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cmds::dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
