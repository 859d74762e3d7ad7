//! The `jex` command line.
//!
//! [`run`] parses arguments and executes one subcommand in-process;
//! [`main_with`] adds error printing and exit codes on top.

mod commands;
mod config;
mod data;
mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use jex_core::ScoreMode;
use jex_owsplit::SplitName;

pub use config::overlay;
pub use data::DataArgs;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "jex",
    version,
    about = "Open-world VQA splits, toy corpora and exemplar-attention models"
)]
pub struct Cli {
    /// Random seed (overrides the config)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file whose keys override the configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file or directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Base training configuration [default: paper, or the checkpoint's own]
    #[arg(long, global = true, value_enum)]
    pub preset: Option<Preset>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Desk-scale dimensions for the toy corpus
    Toy,
    /// Full-size dimensions
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exact,
    Consensus,
}

impl From<Mode> for ScoreMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Exact => ScoreMode::Exact,
            Mode::Consensus => ScoreMode::Consensus,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pick unknown categories and split triplets into the four sets
    Split {
        /// COCO-style instance files
        #[arg(long, num_args = 1.., required = true)]
        instances: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        questions: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        annotations: Vec<PathBuf>,
        /// JSON map of category name to extra match phrases
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Write a synthetic corpus with a known open-world split
    GenToy,
    /// Train the grid model (stage 1), the exemplar model (stage 2), or both
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "both")]
        stage: Stage,
        /// Stage-1 checkpoint to start stage 2 from
        #[arg(long)]
        init: Option<PathBuf>,
        /// Exemplar store for stage 2
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Build an exemplar store from a trained model's Trainset embeddings
    BuildStore {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
    },
    /// Score a checkpoint on one split
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, default_value = "valset_known")]
        split: SplitName,
        #[arg(long, value_enum, default_value = "exact")]
        mode: Mode,
    },
    /// Answer one question about one feature file
    Answer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        store: Option<PathBuf>,
        /// A `.jexf` feature file
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        question: String,
    },
    /// Naive and Tucker parameter counts of one fusion
    ParamCount {
        #[arg(long, default_value_t = 2400)]
        n_q: u64,
        #[arg(long, default_value_t = 2048)]
        n_v: u64,
        #[arg(long, default_value_t = 2000)]
        n_e: u64,
        #[arg(long, default_value_t = 310)]
        t_q: u64,
        #[arg(long, default_value_t = 310)]
        t_v: u64,
        #[arg(long, default_value_t = 510)]
        t_e: u64,
    },
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    commands::dispatch(cli)
}

/// Like [`run`] but prints help, version and errors, returning the exit code.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("jex: {e}");
            e.exit_code()
        }
    }
}
