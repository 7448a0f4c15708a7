use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use trafficdig_cli::{run, Command, Options, RunConfig};

/// Directed information graphs for traffic sensor networks.
#[derive(Debug, Parser)]
#[command(name = "trafficdig", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML file with default values for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    options: Options,
}

fn one_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: {}", one_line(first.trim_start_matches("error:")));
            return ExitCode::from(2);
        }
    };
    let options = match &cli.config {
        Some(path) => Options::from_toml_file(path).map(|file| cli.options.clone().or(file)),
        None => Ok(cli.options.clone()),
    };
    let result = options.and_then(|options| {
        let config = RunConfig { command: cli.command, options };
        run(&config, &mut std::io::stdout().lock())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
