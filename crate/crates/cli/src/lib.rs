//! The `lsep` command-line pipeline.

pub mod args;
pub mod commands;
pub mod config;

use std::ffi::OsString;

use clap::CommandFactory;

pub use commands::run;
pub use config::{parse_args, parse_args_with, RunConfig, UsageError};

/// Parses, runs and maps the outcome to an exit status: 0 on success, 1 on a
/// runtime error, 2 on a usage error.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match parse_args(argv) {
        Ok(cfg) => cfg,
        Err(UsageError::Clap(e)) => {
            let _ = e.print();
            return e.exit_code();
        }
        Err(e) => {
            eprintln!("error: {e}\n\n{}", args::Cli::command().render_usage());
            return e.exit_code();
        }
    };
    match run(&cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("lsep {}: {e:#}", cfg.command.name());
            1
        }
    }
}
