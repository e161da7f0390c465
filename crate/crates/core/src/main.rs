use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracdivcurl::cli::{error_code, list_experiments, output_dir, run, ExperimentConfig};

#[derive(Parser)]
#[command(version, about = "Discrete fractional div-curl experiments")]
struct Args {
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for parallel sums and trials.
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the available experiments.
    List,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match args.command {
        None | Some(Command::List) => {
            print!("{}", list_experiments());
            ExitCode::SUCCESS
        }
        Some(Command::Run { config, seed, threads, out }) => {
            let mut cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            if seed.is_some() {
                cfg.seed = seed;
            }
            let dir = output_dir(&cfg, out.as_deref());
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(t) = threads {
                builder = builder.num_threads(t);
            }
            let pool = match builder.build() {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: cannot start thread pool: {e}");
                    return ExitCode::from(2);
                }
            };
            match pool.install(|| run(&cfg, &dir, threads)) {
                Ok(code) => {
                    if code != 0 {
                        eprintln!("{}: convergence or tolerance check failed, see {}", cfg.experiment.name(), dir.display());
                    }
                    ExitCode::from(code as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(error_code(&e) as u8)
                }
            }
        }
    }
}
