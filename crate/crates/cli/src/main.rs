use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use tipflow::experiments::{self, Overrides, Scenario, VerdictParams, PRESETS};

#[derive(Parser)]
#[command(name = "tipflow", version, about = "Tip-set simulations and fluid models of DAG ledgers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or a scenario file.
    Run {
        /// Preset name (see `list-presets`) or path to a TOML scenario.
        scenario: String,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
        /// Steps for simulations, end time for fluid runs.
        #[arg(long)]
        horizon: Option<u64>,
        /// Override any field, e.g. `--set sim.lambda=40`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Recompute the verdict from the CSVs of an output directory.
    Verdict {
        dir: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        tail_fraction: f64,
        #[arg(long, default_value_t = 0.5)]
        slope_epsilon: f64,
    },
    /// List the shipped presets.
    ListPresets,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { scenario, out, seed, runs, horizon, set } => {
            let overrides = Overrides { seed, runs, horizon, set };
            let scenario = Scenario::load(&scenario, &overrides)?;
            let name = scenario.name.clone();
            let outcome = experiments::run(scenario, &out)
                .with_context(|| format!("running `{name}`"))?;
            println!("{name}: outputs in {}", out.display());
            for line in &outcome.summary {
                println!("  {line}");
            }
            if !outcome.as_expected {
                println!("  outcome differs from the expected {:?}", outcome.scenario.expected);
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verdict { dir, tail_fraction, slope_epsilon } => {
            let params = VerdictParams { tail_fraction, slope_epsilon };
            let report = experiments::verdict_from_dir(&dir, params)?;
            let mut stdout = std::io::stdout().lock();
            report.write(&mut stdout)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ListPresets => {
            for preset in PRESETS {
                let scenario = Scenario::parse_with(preset.source, &Overrides::default())?;
                println!("{:<18} {:<12} {}", preset.name, format!("{:?}", scenario.expected), scenario.description);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
