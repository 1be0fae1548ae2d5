//! Command-line front end for `subfrac-core`: argument parsing, experiment
//! drivers and CSV/JSON reports.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{parse_args, CliError, Exit, RunConfig};
pub use runner::{execute, run};

/// Full entry point: parse, run, and return the process exit code.
pub fn main_with<S: AsRef<str>>(argv: &[S]) -> i32 {
    match parse_args(argv) {
        Ok(cfg) => run(&cfg).code(),
        Err(e) => {
            if e.exit == Exit::Ok {
                print!("{}", e.message);
            } else {
                eprint!("{}", e.message);
                if !e.message.ends_with('\n') {
                    eprintln!();
                }
            }
            e.exit.code()
        }
    }
}
