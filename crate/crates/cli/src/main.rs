use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use protofair::data::{generate, load_csv};
use protofair_cli::{eval_checkpoint, gen_data, run_experiment, CliError, ExperimentConfig, VariantSelection};

#[derive(Parser)]
#[command(name = "protofair", version, about = "Fairness-regularized contrastive training on synthetic biased data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Baseline,
    Protofair,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Train baseline and/or regularized encoders for every seed.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (overrides `out_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seed list (overrides `seeds`).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, value_enum, default_value = "both")]
        variant: VariantArg,
    },
    /// Write the synthetic train/val/test splits as CSV.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit and score a linear probe on a saved encoder.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Supplies the data and probe settings when CSVs are not given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, requires = "test")]
        train: Option<PathBuf>,
        #[arg(long, requires = "train")]
        test: Option<PathBuf>,
    },
}

fn load(config: Option<PathBuf>) -> Result<ExperimentConfig, CliError> {
    match config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Run { config, out, seeds, variant } => {
            let mut cfg = load(config)?;
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            if let Some(seeds) = seeds {
                cfg.seeds = seeds;
            }
            let which = match variant {
                VariantArg::Baseline => VariantSelection::Baseline,
                VariantArg::Protofair => VariantSelection::Protofair,
                VariantArg::Both => VariantSelection::Both,
            };
            run_experiment(&cfg, which, &mut stdout)?;
        }
        Command::GenData { config, out } => gen_data(&load(config)?, &out)?,
        Command::Eval { checkpoint, config, train, test } => {
            let cfg = load(config)?;
            let (train, test) = match (train, test) {
                (Some(a), Some(b)) => (load_csv(a)?, load_csv(b)?),
                _ => {
                    cfg.validate()?;
                    let d = generate(&cfg.dataset_spec())?;
                    (d.train, d.test)
                }
            };
            let r = eval_checkpoint(&checkpoint, &train, &test, cfg.probe_epochs, cfg.probe_lr)?;
            use std::io::Write;
            writeln!(
                stdout,
                "acc {:.6}  eo {:.6}  tpr_gap {:.6}  fpr_gap {:.6}",
                r.accuracy, r.eo, r.tpr_gap, r.fpr_gap
            )?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
