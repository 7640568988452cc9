//! The `mlnmt` command-line tool.
//!
//! Exit codes: 0 on success, 1 on runtime errors, 2 on usage errors.

mod args;
mod commands;
mod overlay;
mod output;

use std::ffi::OsString;
use std::fmt;

use clap::Parser;

pub use args::{Cli, Command};
pub use output::{CHECKPOINT_FILE, MANIFEST_FILE, REPORT_FILE, VOCAB_FILE};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<mlnmt::Error> for Failure {
    fn from(e: mlnmt::Error) -> Self {
        match e {
            mlnmt::Error::UnregisteredLanguage { .. } | mlnmt::Error::InvalidLanguage(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

/// Parses `argv` (program name first), applies any `--config` overlay and runs the command.
pub fn run(argv: Vec<OsString>) -> i32 {
    let argv = match overlay::find_config(&argv) {
        None => argv,
        Some(path) => {
            let path = std::path::PathBuf::from(path);
            let text = match std::fs::read_to_string(&path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read config {}: {e}", path.display());
                    return 2;
                }
            };
            match overlay::config_args(&text, &path) {
                Ok(extra) => overlay::splice(argv, extra),
                Err(e) => {
                    eprintln!("error: {e}");
                    return 2;
                }
            }
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
