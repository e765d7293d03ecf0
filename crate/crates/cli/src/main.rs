mod commands;
mod config;
mod error;
mod io;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::Ctx;
use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

#[derive(Parser, Debug)]
#[command(name = "shapeaug", version, about = "Grasping-dataset augmentation by latent shape interpolation")]
struct Cli {
    /// Pipeline configuration (JSON); unspecified fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Working directory holding every command's inputs and outputs.
    #[arg(long, global = true, default_value = "work")]
    out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the shape corpus.
    Corpus {
        #[command(subcommand)]
        source: CorpusSource,
    },
    /// Train the autoencoder (phase 1) and optionally the critic (phase 2).
    Train {
        #[arg(long, value_enum)]
        mode: TrainMode,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Phase-1 checkpoint to continue from in ae-critic mode.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Score every corpus shape by rarity and graspness.
    Score {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Also write SVG histograms and the latent scatter plot.
        #[arg(long)]
        svg: bool,
        #[arg(long, hide = true)]
        oracle: bool,
    },
    /// Generate interpolated shapes and the augmented dataset manifest.
    Generate {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compare interpolant fragmentation of two checkpoints across weights.
    Evaluate {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        checkpoint_a: Option<PathBuf>,
        #[arg(long)]
        checkpoint_b: Option<PathBuf>,
        /// Comma-separated weights in [0, 0.5].
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
}

#[derive(Subcommand, Debug)]
enum CorpusSource {
    /// Procedural boxes, spheres, cylinders, capsules, L-prisms and plates.
    Toy {
        #[arg(long)]
        count: Option<usize>,
    },
    /// Every `.obj` file in a directory.
    Import {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TrainMode {
    Ae,
    AeCritic,
}

fn run(cli: Cli) -> Result<()> {
    let mut config = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Command::Evaluate { alphas: Some(a), .. } = &cli.command {
        config.evaluate.alphas = a.clone();
    }
    if let Command::Corpus { source: CorpusSource::Toy { count: Some(n) } } = &cli.command {
        config.corpus.count = *n;
    }
    config.validate()?;
    let jobs = match cli.jobs {
        Some(0) => return Err(CliError::usage("--jobs must be at least 1")),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let ctx = Ctx { config, out: cli.out, jobs };
    match cli.command {
        Command::Corpus { source: CorpusSource::Toy { .. } } => commands::corpus::toy(&ctx),
        Command::Corpus { source: CorpusSource::Import { input } } => commands::corpus::import(&ctx, &input),
        Command::Train { mode, corpus, init } => commands::train::run(&ctx, mode, corpus, init),
        Command::Score { corpus, checkpoint, svg, oracle } => commands::score::run(&ctx, corpus, checkpoint, svg, oracle),
        Command::Generate { corpus, scores, checkpoint } => commands::generate::run(&ctx, corpus, scores, checkpoint),
        Command::Evaluate { corpus, checkpoint_a, checkpoint_b, .. } => {
            commands::evaluate::run(&ctx, corpus, checkpoint_a, checkpoint_b)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::usage(e.kind().to_string()).with_details(vec![e.to_string()]);
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.kind.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.kind.exit_code() as u8)
        }
    }
}
