use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spikeprune::commands::{self, CHECKPOINT_FILE};
use spikeprune::config::{Overrides, RunConfig};
use spikeprune::error::FaultClass;
use spikeprune::{Error, Result};

#[derive(Parser)]
#[command(name = "spikeprune", version, about = "Train, prune and evaluate STDP spiking networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Pruning threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Quantization levels, zero included.
    #[arg(long)]
    levels: Option<usize>,
    /// Excitatory (and inhibitory) neuron count.
    #[arg(long)]
    neurons: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train, label and test one configuration.
    Train(Common),
    /// Test a saved network.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Defaults to checkpoint.spk in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// One run per pruning threshold.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4")]
        thresholds: Vec<f64>,
    },
    /// Pruning while training against random initial sparsity.
    CompareSparse {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.3,0.4,0.5")]
        targets: Vec<f64>,
    },
    /// Write a saved network's input weights as a PGM grid.
    ExportWeights {
        #[command(flatten)]
        common: Common,
        /// Defaults to checkpoint.spk in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Defaults to weights.pgm in the output directory.
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&c.config)?;
    cfg.apply(&Overrides {
        threshold: c.threshold,
        levels: c.levels,
        neurons: c.neurons,
        seed: c.seed,
        out: c.out.clone(),
    });
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => {
            let cfg = load_config(&c)?;
            cfg.validate()?;
            let data = commands::load_data(&cfg)?;
            let out = commands::cmd_train(&cfg, &data)?;
            println!(
                "accuracy {:.4}  connectivity {:.4}  test spikes {}  -> {}",
                out.metrics.accuracy,
                out.metrics.connectivity,
                out.metrics.total_test_exc_spikes,
                out.checkpoint.display()
            );
        }
        Command::Evaluate { common, checkpoint } => {
            let cfg = load_config(&common)?;
            cfg.validate()?;
            let ck = checkpoint.unwrap_or_else(|| cfg.output.dir.join(CHECKPOINT_FILE));
            let data = commands::load_data(&cfg)?;
            let m = commands::cmd_evaluate(&cfg, &data, &ck)?;
            println!(
                "accuracy {:.4}  connectivity {:.4}  test spikes {}",
                m.accuracy, m.connectivity, m.total_test_exc_spikes
            );
        }
        Command::Sweep { common, thresholds } => {
            let cfg = load_config(&common)?;
            cfg.validate()?;
            let data = commands::load_data(&cfg)?;
            print!("{}", commands::cmd_sweep(&cfg, &data, &thresholds)?.to_csv());
        }
        Command::CompareSparse { common, targets } => {
            let cfg = load_config(&common)?;
            cfg.validate()?;
            let data = commands::load_data(&cfg)?;
            print!("{}", commands::cmd_compare_sparse(&cfg, &data, &targets)?.to_csv());
        }
        Command::ExportWeights { common, checkpoint, pgm } => {
            let cfg = load_config(&common)?;
            let ck = checkpoint.unwrap_or_else(|| cfg.output.dir.join(CHECKPOINT_FILE));
            let pgm = pgm.unwrap_or_else(|| cfg.output.dir.join("weights.pgm"));
            let g = commands::cmd_export_weights(&ck, &pgm)?;
            println!("{}x{} grid -> {}", g.width, g.height, pgm.display());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        FaultClass::Config => 2,
        FaultClass::Data => 3,
        FaultClass::Runtime => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
