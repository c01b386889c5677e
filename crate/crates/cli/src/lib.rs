//! `lumenlab`: data generation, estimator and model training, sampling,
//! evaluation, benchmarking and plots.
//!
//! Exit codes: 0 on success, 1 on a runtime failure (one line on stderr),
//! 2 on a usage error.

mod commands;
mod config;
pub mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::ECHO_FILE;

#[derive(Parser, Debug)]
#[command(name = "lumenlab", version, about = "Flow-matching relighting laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub(crate) struct Common {
    /// `key = value` file applied over the defaults; flags win over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory; the resolved configuration is written here first.
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum LossTerm {
    Fast,
    Phy,
    Depth,
    Normal,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Switch {
    On,
    Off,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum BenchModel {
    Trained,
    Oracle,
    Random,
    CopyDegraded,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset split.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Number of samples.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train and freeze the geometry estimator.
    TrainEstimator {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Train the relighting model.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        estimator: Option<PathBuf>,
        /// Continue from a saved training state.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long, value_enum)]
        disable_loss: Vec<LossTerm>,
        #[arg(long, value_enum)]
        augment: Option<Switch>,
    },
    /// Relight one sample of a dataset.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        index: Option<usize>,
        /// Euler steps (a power of two).
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Quality metrics on a held-out split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        estimator: Option<PathBuf>,
        /// Comma-separated sampling budgets.
        #[arg(long)]
        steps: Option<String>,
    },
    /// Attribute-controllability benchmark.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        estimator: Option<PathBuf>,
        #[arg(long, value_enum)]
        model: Option<BenchModel>,
        /// Cases per attribute.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        steps: Option<String>,
    },
    /// Render loss, attribute and steps-vs-PSNR plots from report CSVs.
    Plot {
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::GenData { common, n } => commands::gen_data(&common, n),
        Command::TrainEstimator { common, data, iterations } => commands::train_estimator(&common, data, iterations),
        Command::Train {
            common,
            data,
            estimator,
            resume,
            iterations,
            disable_loss,
            augment,
        } => commands::train(&common, data, estimator, resume, iterations, &disable_loss, augment),
        Command::Sample {
            common,
            checkpoint,
            data,
            index,
            steps,
        } => commands::sample(&common, checkpoint, data, index, steps),
        Command::Eval {
            common,
            checkpoint,
            data,
            estimator,
            steps,
        } => commands::eval(&common, checkpoint, data, estimator, steps),
        Command::Bench {
            common,
            checkpoint,
            estimator,
            model,
            n,
            steps,
        } => commands::bench(&common, checkpoint, estimator, model, n, steps),
        Command::Plot { reports, out } => plot::emit_plots(&reports, &out).map(|_| ()),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_string().replace('\n', " "));
            1
        }
    }
}
