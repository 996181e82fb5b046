use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dampwave::cli::{parse, run_experiment, ExitStatus, RunOptions};

#[derive(Parser)]
#[command(name = "dampwave", version, about = "Damped stochastic wave solver and verification harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Override experiment.paths.
        #[arg(long)]
        paths: Option<usize>,
        /// Override experiment.base_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override output.directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for the path ensemble.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Skip the lambda*tau < 1 check (for demonstrating failures).
        #[arg(long)]
        override_gate: bool,
    },
}

fn exit(status: ExitStatus) -> ExitCode {
    ExitCode::from(status.code() as u8)
}

fn main() -> ExitCode {
    let Command::Run {
        config,
        paths,
        seed,
        out,
        workers,
        override_gate,
    } = Cli::parse().command;
    let text = match std::fs::read_to_string(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", config.display());
            return exit(ExitStatus::Io);
        }
    };
    let mut cfg = match parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return exit(ExitStatus::Config);
        }
    };
    if let Some(p) = paths {
        cfg.experiment.paths = p;
    }
    if let Some(s) = seed {
        cfg.experiment.base_seed = s;
    }
    if let Some(o) = out {
        cfg.output.directory = o;
    }
    if let Err(e) = cfg.validate(!override_gate) {
        eprintln!("{e}");
        return exit(ExitStatus::Config);
    }
    let workers = workers.max(1);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot start worker pool: {e}");
            return exit(ExitStatus::Config);
        }
    };
    let opts = RunOptions {
        gate: !override_gate,
        workers,
    };
    let status = pool.install(|| run_experiment(&cfg, &opts));
    if status != ExitStatus::Ok {
        eprintln!("run finished with status {status:?}; see failure.json");
    }
    exit(status)
}
