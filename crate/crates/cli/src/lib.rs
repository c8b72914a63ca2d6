//! Command-line front end of `semtransfer`.
//!
//! Exit codes: 0 success, 2 I/O or parse failure, 3 validation or domain
//! error, 4 non-convergence under `--strict` (a warning otherwise). Errors
//! are written to standard error as one JSON object.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

use crate::commands::{execute, Cli};
use crate::error::{CliError, EXIT_OK};

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { error::EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            let _ = std::io::stdout().flush();
            match outcome.not_converged {
                Some(msg) if outcome.strict => {
                    let e = CliError::NotConverged(msg);
                    eprintln!("{}", e.to_json());
                    e.exit_code()
                }
                Some(msg) => {
                    eprintln!("{}", serde_json::json!({ "warning": { "kind": "not_converged", "message": msg } }));
                    EXIT_OK
                }
                None => EXIT_OK,
            }
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
