use std::process::ExitCode;

use clap::{Parser, Subcommand};
use livesense_cli::analyze::analyze;
use livesense_cli::commands::{self, AnalyzeArgs, RunArgs, SimArgs};
use livesense_cli::CliError;

/// Real-time Wi-Fi CSI range-Doppler sensing.
///
/// Exit codes: 0 ok, 1 config error, 2 I/O error, 3 stream degraded.
#[derive(Debug, Parser)]
#[command(name = "livesense", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Process a live stream, optionally serving the WebSocket API.
    Run(RunArgs),
    /// Write a simulated trace file.
    Sim(SimArgs),
    /// Dump per-batch maps and detections of a trace as JSON and PGM.
    Analyze(AnalyzeArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result: Result<(), CliError> = match &cli.command {
        Command::Run(a) => commands::run(a).map(|_| ()),
        Command::Sim(a) => commands::sim(a).map(|n| log::info!("wrote {n} frames to {}", a.out.display())),
        Command::Analyze(a) => analyze(a).map(|s| {
            log::info!("{} frames, {} batches -> {}", s.frames, s.batches, a.out_dir.display())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("livesense: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
