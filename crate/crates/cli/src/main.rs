//! `ccd`: runs the co-design experiments on a case file and writes CSV
//! tables, SVG plots and a run manifest.
//!
//! Exit status 0 on success, 1 on invalid input, 2 when a solve failed.

mod args;
mod plot;
mod run;
mod table;

use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match args::Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = args::RunSpec::from_cli(cli)
        .map_err(run::RunError::Invalid)
        .and_then(|spec| run::run(&spec));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ccd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
