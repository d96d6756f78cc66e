//! Command-line front end: scene generation, experiment runs, gain sweeps,
//! resolver queries and trace analysis.
//!
//! Exit codes: 0 success, 1 unresolved (`resolve`), 2 usage or parse
//! error, 3 scene generation failure, 4 scenario error, 5 I/O failure.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod summary;
pub mod trace;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

pub use commands::Cli;
pub use config::RunConfig;
pub use error::{exit, CliError};

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    exit::OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    exit::USAGE
                }
            }
        }
    };
    match commands::dispatch(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
