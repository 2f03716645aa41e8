use std::path::PathBuf;
use std::process::ExitCode;

use bathy_cli::{exit, run, Command, ExperimentConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bathy", version, about = "Bottom reconstruction from free-surface observations")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Forward run: trajectory, conserved quantities and a surface record.
    Simulate(Args),
    /// Observer run: error histories and a snapshot archive.
    Observe(Args),
    /// Spectrum of the reconstruction operator.
    Eigen(Args),
    /// Full reconstruction from a coupled run, a surface record or a snapshot archive.
    Reconstruct(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Flat `key = value` experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    output: PathBuf,
    /// `key=value`, applied after the file; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Observe(a) => (Command::Observe, a),
        Cmd::Eigen(a) => (Command::Eigen, a),
        Cmd::Reconstruct(a) => (Command::Reconstruct, a),
    };
    let result = ExperimentConfig::load(&args.config, &args.overrides).and_then(|cfg| run(command, &cfg, &args.output));
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
