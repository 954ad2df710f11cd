use std::process::ExitCode;

use clap::Parser;
use umo_cli::{commands, error::EXIT_USAGE, resolve, set_threads, version_text, Cli, CliError};

fn run(cli: &Cli) -> Result<(), CliError> {
    if cli.version {
        print!("{}", version_text());
        return Ok(());
    }
    let cfg = resolve(cli)?.ok_or_else(|| CliError::Usage("a subcommand is required (see --help)".into()))?;
    set_threads(cli)?;
    commands::run(&cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
