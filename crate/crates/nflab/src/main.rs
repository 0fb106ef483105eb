use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nflab::config::{parse_config, parse_str, Loaded};
use nflab::io::Output;
use nflab::runner::Pool;
use nflab::Command;

/// Simulation and analysis of the neural-field equation on a circle.
#[derive(Debug, Parser)]
#[command(name = "nflab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides `sim.seed`).
    #[arg(long)]
    seed: Option<u64>,
}

const EXIT_ERROR: u8 = 1;
const EXIT_VIOLATION: u8 = 2;

fn load(cli: &Cli) -> anyhow::Result<Loaded> {
    let mut loaded = match &cli.config {
        Some(path) => parse_config(path)?,
        None => parse_str("", std::path::Path::new("."))?,
    };
    if let Some(seed) = cli.seed {
        loaded.config.sim.seed = seed;
    }
    if let Some(out) = &cli.out {
        loaded.config.output.dir = out.clone();
    }
    Ok(Loaded::new(loaded.config)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| {
        let loaded = load(&cli)?;
        let pool = Pool::from_env()?;
        let out = Output::create(&loaded.config.output.dir, &loaded.fingerprint())?;
        nflab::run(cli.command, &loaded, &out, &pool)
    })();
    match result {
        Ok(outcome) => {
            println!("{}: {}", cli.command.name(), outcome.summary);
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for v in &outcome.violations {
                eprintln!("violation: {v}");
            }
            if outcome.ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VIOLATION)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
