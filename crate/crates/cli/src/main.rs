//! `navsim`: render slices, register fiducials, run and analyse sessions,
//! and serve a live session to the master and mini displays.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = args::Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("navsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
