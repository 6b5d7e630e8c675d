mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn one_line(e: &anyhow::Error) -> String {
    format!("{e:#}").replace('\n', " ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.render().to_string();
            let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("error: invalid arguments");
            eprintln!("{line}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();

    let plan = match commands::plan(&cli) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    if cli.dry_run {
        println!("{}: configuration valid (dry run, nothing written)", cli.command.name());
        return ExitCode::SUCCESS;
    }
    match commands::execute(&cli, plan) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
