//! `skewnet` command-line interface.

mod cmd;
mod output;
mod params;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Load-balancing networks with compatibility constraints.
#[derive(Parser, Debug)]
#[command(name = "skewnet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a generated graph as JSON.
    Generate(cmd::generate::GenerateArgs),
    /// Simulate one graph and write per-server metrics.
    Simulate(cmd::simulate::SimulateArgs),
    /// Simulate a generator family over one varied parameter.
    Sweep(cmd::sweep::SweepArgs),
    /// Run a graph and its transformed copy on shared randomness and check dominance.
    Couple(cmd::couple::CoupleArgs),
    /// Solve the truncated chain and run the exact checks.
    Exact(cmd::exact::ExactArgs),
    /// Report skewed-neighborhood sizes and the core around the largest.
    DetectSkew(cmd::skew::DetectSkewArgs),
    /// Run an experiment preset from a config file or by name.
    Preset(cmd::preset::PresetArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd::generate::run(a),
        Command::Simulate(a) => cmd::simulate::run(a),
        Command::Sweep(a) => cmd::sweep::run(a),
        Command::Couple(a) => cmd::couple::run(a),
        Command::Exact(a) => cmd::exact::run(a),
        Command::DetectSkew(a) => cmd::skew::run(a),
        Command::Preset(a) => cmd::preset::run(a),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
