//! `ppr`: dataset build, splitting, training, search, evaluation and
//! agreement analysis for phonological property recognition.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ppr_core::splits::Partition;
use ppr_core::{PropertyKind, SplitMode, TrackerKind};

/// Environment variable naming the default data root for `build`.
pub const DATA_ROOT_ENV: &str = "PPR_DATA_ROOT";

#[derive(Debug, Parser)]
#[command(name = "ppr", version, about = "Phonological property recognition from skeleton sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Output directory (created if missing, locked while the command runs).
    #[arg(long)]
    out: PathBuf,
    /// TOML experiment configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TaskArgs {
    /// Dataset archive written by `build`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Split manifest written by `split`.
    #[arg(long)]
    split: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Join lexicon and video index and load every matched keypoint file.
    Build {
        #[command(flatten)]
        common: Common,
        /// Lexicon CSV [default: $PPR_DATA_ROOT/lexicon.csv].
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Video index CSV [default: $PPR_DATA_ROOT/index.csv].
        #[arg(long)]
        index: Option<PathBuf>,
        /// Root that keypoint paths are relative to [default: $PPR_DATA_ROOT].
        #[arg(long)]
        keypoints: Option<PathBuf>,
        #[arg(long, env = DATA_ROOT_ENV)]
        data_root: Option<PathBuf>,
        /// Keep only videos from this tracker (mocap3d or pose2d).
        #[arg(long)]
        tracker: Option<TrackerKind>,
        /// Skip shoulder-based coordinate normalization.
        #[arg(long)]
        no_normalize_coords: bool,
    },
    /// Write a stratified train/val/test manifest for one property.
    Split {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        property: Option<PropertyKind>,
        /// phoneme (video-level) or gloss (gloss-disjoint).
        #[arg(long)]
        mode: Option<SplitMode>,
        /// Train, validation and test fractions, e.g. 0.7,0.15,0.15.
        #[arg(long, value_parser = config::parse_ratios)]
        ratios: Option<[f64; 3]>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one model with validation-MCC epoch selection.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        task: TaskArgs,
        /// Model family with default hyperparameters, used when the config has no [model].
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Refit on train ∪ val for the selected number of epochs.
        #[arg(long)]
        final_fit: bool,
    },
    /// Seeded random hyperparameter search.
    Search {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        task: TaskArgs,
        /// Family whose default search space is used when the config has no [search].
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Repeat train → final fit → test over several seeds.
    SeedStudy {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long)]
        family: Option<String>,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
    /// Evaluate a checkpoint on one partition.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_partition)]
        partition: Partition,
        /// Significance level of the accuracy interval.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Model label in the report [default: the model family].
        #[arg(long)]
        name: Option<String>,
    },
    /// Agreement among models and cross-task joint misclassification.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Evaluation reports; reports of the same task are compared.
        #[arg(long, num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
    },
    /// Render evaluation reports as a results table.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
    },
    /// Export the built-in property taxonomy.
    Taxonomy {
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic raw corpus (lexicon, index, keypoint files).
    Synth {
        #[command(flatten)]
        common: Common,
        /// Motion class of each gloss, e.g. 0,1,1.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5")]
        classes: Vec<usize>,
        /// Videos per gloss, e.g. 3,2,1.
        #[arg(long, value_delimiter = ',', default_value = "4")]
        videos: Vec<usize>,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        #[arg(long, default_value = "pose2d")]
        tracker: TrackerKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_partition(s: &str) -> Result<Partition, String> {
    match s {
        "train" => Ok(Partition::Train),
        "val" => Ok(Partition::Val),
        "test" => Ok(Partition::Test),
        _ => Err(format!("unknown partition {s:?}; expected train, val or test")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
                eprintln!("  {line}");
            }
            return ExitCode::FAILURE;
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e:#}", commands::error_code(&e));
            ExitCode::FAILURE
        }
    }
}
