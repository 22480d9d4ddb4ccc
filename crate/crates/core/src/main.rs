use std::process::ExitCode;

use clap::Parser;
use thermal_kms::cli::{run, Cli, EXIT_ERROR};

fn main() -> ExitCode {
    match Cli::try_parse() {
        Ok(cli) => ExitCode::from(run(&cli)),
        Err(e) => {
            // clap reports usage errors as 2, which is reserved for failed checks
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            ExitCode::from(code)
        }
    }
}
