use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fut_cli::commands::{self, TrainOptions};
use fut_cli::config::Overrides;
use fut_cli::{exit_code, EXIT_OK, EXIT_USAGE};
use fut_core::dataset::Split;

/// Train, evaluate and size Transformer forecasting, vision and fusion models.
#[derive(Parser)]
#[command(name = "fut", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Scalars {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Base learning rate.
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the model of a run config.
    Train {
        config: PathBuf,
        #[command(flatten)]
        scalars: Scalars,
        /// Output directory, instead of `train.output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write into an existing output directory.
        #[arg(long)]
        force: bool,
        /// Train on this many generated samples per input instead of the configured data.
        #[arg(long, value_name = "SAMPLES")]
        synthetic: Option<usize>,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Score a checkpoint on one split of a config's data.
    Eval {
        checkpoint: PathBuf,
        /// Run config whose [data] section (and seed) defines the splits.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "val")]
        split: Split,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Metrics JSON path; defaults to eval-<split>.json next to the checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Count parameters of configs or checkpoints.
    Params {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Compare summed single-task models against the multi-task ones.
        #[arg(long)]
        compare: bool,
    },
    /// Train every variant of a hyperparameter grid and rank them.
    Sweep {
        grid: PathBuf,
        #[command(flatten)]
        scalars: Scalars,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
        #[arg(long, short)]
        quiet: bool,
    },
}

fn overrides(s: Scalars, out: Option<PathBuf>) -> Overrides {
    Overrides {
        epochs: s.epochs,
        batch_size: s.batch_size,
        seed: s.seed,
        lr: s.lr,
        out,
    }
}

fn run(cli: Cli) -> fut_core::Result<()> {
    match cli.command {
        Command::Train {
            config,
            scalars,
            out,
            force,
            synthetic,
            quiet,
        } => {
            let options = TrainOptions {
                overrides: overrides(scalars, out),
                force,
                synthetic,
                quiet,
            };
            commands::train(&config, &options).map(|_| ())
        }
        Command::Eval {
            checkpoint,
            data,
            split,
            batch_size,
            seed,
            out,
        } => {
            let o = Overrides {
                batch_size,
                seed,
                ..Overrides::default()
            };
            commands::eval(&checkpoint, &data, split, &o, out.as_deref()).map(|_| ())
        }
        Command::Params { paths, compare } => {
            print!("{}", commands::params_report(&paths, compare)?);
            Ok(())
        }
        Command::Sweep {
            grid,
            scalars,
            out,
            force,
            quiet,
        } => commands::sweep(&grid, &overrides(scalars, out), force, quiet).map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
