//! Library side of the `occlusim` command: argument definitions and one
//! function per subcommand, so the pipeline can be driven from tests.

pub mod args;
pub mod commands;
pub mod plot;

use occlusim::{Error, Result};

pub use args::{Cli, Command, Coverage};

/// Runs a parsed command and returns its summary as one line of JSON.
pub fn run(cli: &Cli) -> Result<String> {
    let summary = match &cli.command {
        Command::Generate(a) => serde_json::to_string(&commands::cmd_generate(a)?),
        Command::Reconstruct(a) => serde_json::to_string(&commands::cmd_reconstruct(a)?),
        Command::Evaluate(a) => serde_json::to_string(&commands::cmd_evaluate(a)?),
        Command::Sweep(a) => serde_json::to_string(&commands::cmd_sweep(a)?),
        Command::Preview(a) => serde_json::to_string(&commands::cmd_preview(a)?),
    };
    Ok(summary?)
}

/// `error kind=<kind> message=<json string>`, always a single line.
pub fn error_line(kind: &str, message: &str) -> String {
    let quoted = serde_json::to_string(message).unwrap_or_else(|_| "\"\"".into());
    format!("error kind={kind} message={quoted}")
}

pub fn format_error(e: &Error) -> String {
    error_line(e.kind(), &e.to_string())
}
