use clap::Parser;

use swe_cli::{run, Cli, CliError};
use swe_core::Error;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        if let CliError::Core(Error::IdMismatch { missing, unexpected }) = &e {
            for id in missing {
                eprintln!("missing: {id}");
            }
            for id in unexpected {
                eprintln!("unexpected: {id}");
            }
        }
        std::process::exit(e.exit_code());
    }
}
