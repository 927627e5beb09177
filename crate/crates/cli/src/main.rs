//! `swingid`: simulate swing dynamics, estimate the state matrix, sweep
//! experiment grids and evaluate spectra and error bounds.
//!
//! Exit codes: 0 on success, 2 for bad input (config, files, flags, too few
//! samples), 3 for numerical failures.

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Eigen(a) => commands::eigen(a),
        Command::Bound(a) => commands::bound(a),
        Command::Kron(a) => commands::kron(a),
        Command::Fixture(a) => commands::fixture(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() {
                EXIT_INPUT
            } else {
                EXIT_NUMERICAL
            })
        }
    }
}
