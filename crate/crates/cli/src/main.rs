//! `rotonly`: generate synthetic view graphs, optimize rotations, evaluate
//! them against ground truth and run Monte Carlo sweeps.
//!
//! Exit codes: 0 on success, 1 when a valid request fails while running,
//! 2 for invalid arguments, configuration or input files.

mod args;
mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Optimize(a) => commands::optimize_cmd(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Montecarlo(a) => commands::montecarlo(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.inner());
            e.exit_code()
        }
    }
}
