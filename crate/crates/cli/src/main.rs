use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use sptrain_cli::config::Scenario;
use sptrain_cli::runner::{run, Command};

/// Simulator for a cavity-based source of single-photon pulse trains.
#[derive(Parser, Debug)]
#[command(name = "sptrain", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Scenario file (flat key = value, MHz and us units).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named preset: paper-d1 or paper-d2.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory for CSV files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Scenario overrides, repeatable: --override key=value.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads for sweeps and correlation grids.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Integrate the reduced dynamics and write trajectory.csv.
    Simulate,
    /// Train-integrated two-time correlation; writes g2.csv.
    G2,
    /// Full master-equation run; writes oracle.csv (+ comparison summary).
    Oracle,
    /// Fock-cutoff convergence study; writes converge.csv.
    Converge,
    /// One simulation per sweep value; writes sweep.csv.
    Sweep,
}

fn build_scenario(cli: &Cli) -> Result<Scenario> {
    let mut scenario = match (&cli.preset, &cli.config) {
        (Some(name), None) => Scenario::preset(name)?,
        (None, Some(path)) => Scenario::load(path)?,
        (Some(name), Some(path)) => {
            // Preset base, then the file keys on top.
            let mut s = Scenario::preset(name)?;
            let text = std::fs::read_to_string(path)?;
            for (i, line) in text.lines().enumerate() {
                let line = match line.find('#') {
                    Some(pos) => &line[..pos],
                    None => line,
                }
                .trim();
                if line.is_empty() {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    bail!("line {}: expected `key = value`, got `{line}`", i + 1);
                };
                let key = key.trim();
                if key == "preset" {
                    continue;
                }
                s.apply_kv(key, value.trim(), i + 1)?;
            }
            s
        }
        (None, None) => bail!("provide --preset NAME or --config PATH"),
    };
    for (i, item) in cli.overrides.iter().enumerate() {
        let Some((key, value)) = item.split_once('=') else {
            bail!("--override expects key=value, got `{item}`");
        };
        scenario.apply_kv(key.trim(), value.trim(), i + 1)?;
    }
    scenario.validate()?;
    Ok(scenario)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::G2 => Command::G2,
        Cmd::Oracle => Command::Oracle,
        Cmd::Converge => Command::Converge,
        Cmd::Sweep => Command::Sweep,
    };
    let scenario = match build_scenario(&cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    match run(command, &scenario, &cli.out, cli.jobs) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
