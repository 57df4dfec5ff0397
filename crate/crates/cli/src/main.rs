//! `oppdtn`: experiment runner, trace tools, report generator and live node.

mod commands;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{GenTraceArgs, NodeArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(name = "oppdtn", version, about = "Opportunistic DTN routing: simulator, reports and live node")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the router x TTL x seed matrix of an experiment config.
    Simulate {
        #[arg(long)]
        config: std::path::PathBuf,
        /// Added to every configured seed.
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
        /// Output directory (overrides [run] out).
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
    /// Generate a synthetic community contact trace.
    GenTrace(GenTraceArgs),
    /// Recompute metrics and reports from run logs.
    Report {
        #[arg(long)]
        logs: std::path::PathBuf,
        #[arg(long)]
        out: std::path::PathBuf,
        /// replicas or overhead (default: the mode recorded in the logs).
        #[arg(long)]
        cost_mode: Option<String>,
    },
    /// Convert a connection-event or pairwise trace to pairwise intervals
    /// with dense node ids.
    ConvertTrace {
        #[arg(long)]
        input: std::path::PathBuf,
        #[arg(long)]
        out: std::path::PathBuf,
        /// auto, pairwise or events.
        #[arg(long, default_value = "auto")]
        format: String,
        /// Multiplier turning trace time units into seconds.
        #[arg(long, default_value_t = 1.0)]
        time_scale: f64,
    },
    /// Run a live node daemon.
    Node(NodeArgs),
    /// Print every experiment config key with its default.
    ConfigKeys,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OPPDTN_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, seed_offset, out } => commands::simulate(&config, seed_offset, out.as_deref()),
        Command::GenTrace(args) => commands::gen_trace(&args),
        Command::Report { logs, out, cost_mode } => commands::report(&logs, &out, cost_mode.as_deref()),
        Command::ConvertTrace {
            input,
            out,
            format,
            time_scale,
        } => commands::convert_trace(&input, &out, &format, time_scale),
        Command::Node(args) => commands::node(&args),
        Command::ConfigKeys => {
            print!("{}", oppdtn_core::config::key_table());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("oppdtn: {e}");
            ExitCode::from(e.code())
        }
    }
}
