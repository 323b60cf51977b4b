//! Command-line driver: argument parsing, config files and subcommand
//! dispatch for the `reidbench` binary.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;

use args::Cli;
use error::CliError;

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::parse_from_args(argv) {
        Ok(c) => c,
        Err(e) => {
            return match CliError::from_clap(&e) {
                None => {
                    let _ = e.print();
                    0
                }
                Some(kind) => {
                    eprintln!(
                        "error[{kind}]: {}",
                        e.render()
                            .to_string()
                            .trim_start_matches("error: ")
                            .trim_end()
                    );
                    2
                }
            };
        }
    };
    if let Some(n) = cli.common.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error[BadValue]: --workers {n}: {e}");
            return 2;
        }
    }
    match commands::dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
