mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use gemcap_core::dataforge::Split;
use gemcap_core::lexicon::{DescriptionLevel, JewelryClass};

use config::{parse_level, Format, Overrides};
use failure::Failure;

/// Synthetic jewelry data, captioning models and their evaluation.
#[derive(Debug, Parser)]
#[command(name = "gemcap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render and augment a dataset into DIR (manifest.jsonl and images/).
    GenData {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Write one render and one example of every augmentation as PNGs.
    AugmentPreview {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_parser = parse_class, default_value = "ring")]
        class: JewelryClass,
        #[arg(long, default_value = "preview")]
        out: PathBuf,
    },
    /// Train a model and write checkpoint, log and test report under DIR.
    Train {
        #[command(flatten)]
        overrides: Overrides,
        /// Existing manifest; otherwise a dataset is generated into DIR.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Score a checkpoint on one split of a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Exit with code 3 when the score falls below this.
        #[arg(long)]
        min_ccr: Option<f64>,
    },
    /// Caption one PNG with a trained captioning model.
    Caption {
        image: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Level to validate against; defaults to the model's.
        #[arg(long, value_parser = parse_level)]
        level: Option<DescriptionLevel>,
        /// Extra sampled decodes to try when the greedy caption fails to validate.
        #[arg(long, default_value_t = 0)]
        retries: usize,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Finite-difference gradient checks for every layer.
    GradCheck {
        #[arg(long, default_value_t = 100)]
        probes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Hyperparameter sweep. Threads come from GEMCAP_THREADS (unset or 0 is serial).
    Grid {
        #[command(flatten)]
        overrides: Overrides,
        /// Use the published axes and reject values outside them.
        #[arg(long)]
        paper_grid: bool,
        /// List the points without training.
        #[arg(long)]
        plan_only: bool,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the built-in lexicon as JSON.
    DumpLexicon,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

fn parse_class(s: &str) -> Result<JewelryClass, String> {
    JewelryClass::parse(s).map_err(|e| e.to_string())
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::GenData { overrides, out } => commands::gen_data(&overrides.resolve()?, &out),
        Command::AugmentPreview {
            overrides,
            class,
            out,
        } => commands::augment_preview(&overrides.resolve()?, class, &out),
        Command::Train {
            overrides,
            data,
            out,
        } => commands::train(overrides.resolve()?, data.as_deref(), &out),
        Command::Eval {
            checkpoint,
            data,
            split,
            format,
            min_ccr,
        } => commands::eval(&checkpoint, &data, split.into(), format, min_ccr),
        Command::Caption {
            image,
            checkpoint,
            level,
            retries,
            temperature,
            seed,
        } => commands::caption(&image, &checkpoint, level, retries, temperature, seed),
        Command::GradCheck { probes, seed } => commands::grad_check(probes, seed),
        Command::Grid {
            overrides,
            paper_grid,
            plan_only,
            data,
            out,
        } => {
            let config = overrides.resolve_axes()?;
            let spec = config.grid_spec(paper_grid, &overrides.cell, &overrides.scale)?;
            commands::grid(config, spec, plan_only, data.as_deref(), out.as_deref())
        }
        Command::DumpLexicon => commands::dump_lexicon(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code())
        }
    }
}
