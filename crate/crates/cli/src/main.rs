use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;
use ricci_cli::{cmd_check, cmd_flow, configure_threads, CliConfig, CliError};

/// Discrete surface Ricci flow on triangle meshes.
#[derive(Parser)]
#[command(name = "ricci", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the flow and write the final metric, a report and (for E² disks) a UV layout.
    Flow(CliConfig),
    /// Audit topology, Gauss-Bonnet and the face Hessians of the initial metric.
    Check(CliConfig),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(e) = configure_threads(std::env::var("RICCI_THREADS").ok().as_deref()) {
        error!("{e}");
        return ExitCode::from(1);
    }
    let outcome = match &cli.command {
        Command::Flow(cfg) => cmd_flow(cfg),
        Command::Check(cfg) => cmd_check(cfg),
    };
    match outcome {
        Ok(outcome) => {
            println!("{}", outcome.json);
            ExitCode::from(outcome.code as u8)
        }
        Err(CliError::InfeasibleTarget(report)) => {
            eprintln!("error: infeasible target curvature");
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
