use std::path::PathBuf;
use std::process::ExitCode;

use cbas_bench::{report, run_scenario, BenchError, ExperimentConfig, Scenario};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cbas-bench", about = "Run and summarize CbAS benchmark scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the scenario named in the config.
        #[arg(long)]
        scenario: Option<String>,
        /// Overrides the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config file without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recompute the summary tables of an output directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Run {
            config,
            scenario,
            seed,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(name) = scenario {
                cfg.scenario = Scenario::parse(&name)
                    .ok_or_else(|| BenchError::Config(format!("unknown scenario {name:?}")))?;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            cfg.validate()?;
            let output = run_scenario(&cfg)?;
            output.write_to(&cfg.output_dir)?;
            eprintln!(
                "{}: {} runs written to {}",
                cfg.scenario.name(),
                output.runs.len(),
                cfg.output_dir.display()
            );
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            eprintln!("{}: ok ({})", config.display(), cfg.scenario.name());
        }
        Command::Report { input } => {
            report::report(&input)?;
            eprintln!("recomputed summaries in {}", input.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
