use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cleansel::commands::{self, CommonOptions, SweepGrid, TrainOptions};

#[derive(Parser)]
#[command(name = "cleansel", version, about = "Clean-sample selection under instance-dependent label noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file; defaults to the boundary-idn preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `train.seed` (and restricts ablate/sweep to this seed).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl From<Common> for CommonOptions {
    fn from(c: Common) -> Self {
        Self {
            config: c.config,
            seed: c.seed,
            out: c.out,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a noisy training split and a clean test split.
    GenData(Common),
    /// Train one model and write its report, checkpoint and data.
    Train {
        #[command(flatten)]
        common: Common,
        /// Write per-epoch partition dumps.
        #[arg(long)]
        dump_partitions: bool,
        /// Read train.csv and test.csv from this directory instead of generating.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Recompute metrics of a train output directory and check its report.
    Eval {
        run_dir: PathBuf,
    },
    /// Run the four method variants over the preset seeds.
    Ablate(Common),
    /// Grid over the selection hyperparameters (comma-separated lists).
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        theta: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        theta_agg: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        lambda_min: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        lambda_max: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        n_max: Vec<usize>,
    },
}

fn run(cli: Cli) -> cleansel::Result<()> {
    match cli.command {
        Command::GenData(c) => {
            let opts = CommonOptions::from(c);
            let (train, test) = commands::gen_data(&opts)?;
            println!(
                "wrote {} training samples (noise rate {:.4}) and {} test samples to {}",
                train.len(),
                train.noise_rate(),
                test.len(),
                opts.out.display()
            );
        }
        Command::Train {
            common,
            dump_partitions,
            data,
        } => {
            let opts = TrainOptions {
                common: common.into(),
                dump_partitions,
                data,
            };
            let r = commands::train(&opts)?;
            println!(
                "{} seed {}: final test accuracy {:.4}",
                r.method.as_str(),
                r.seed,
                r.final_test_accuracy()
            );
        }
        Command::Eval { run_dir } => {
            let s = commands::eval(&run_dir)?;
            println!(
                "final test accuracy {:.4}; {} partition dumps agree with the report",
                s.final_test_accuracy,
                s.epochs.len()
            );
        }
        Command::Ablate(c) => {
            let opts = CommonOptions::from(c);
            let rows = commands::ablate(&opts)?;
            print!("{}", commands::ablation_csv(&rows));
        }
        Command::Sweep {
            common,
            theta,
            theta_agg,
            lambda_min,
            lambda_max,
            n_max,
        } => {
            let grid = SweepGrid {
                theta,
                theta_agg,
                lambda_min,
                lambda_max,
                n_max,
            };
            let rows = commands::sweep(&common.into(), &grid)?;
            println!("{} grid points written", rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
