use std::process::ExitCode;

use clap::Parser;
use pairsdf_cli::args::Cli;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match pairsdf_cli::run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(pairsdf_cli::EXIT_VALIDATION),
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(pairsdf_cli::exit_code(&e))
        }
    }
}
