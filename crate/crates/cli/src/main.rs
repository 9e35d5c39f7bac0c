use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jlm_core::LienardSystem;
use jlm_lab::cheillini::cheillini_report;
use jlm_lab::scan::{divergence_scan, parse_grid};
use jlm_lab::{run_scenario, ConfigError, LabError, ScenarioConfig, EXIT_CONFIG, EXIT_PASS};

/// Worker threads for sample-parallel checks; results do not depend on it.
const WORKERS_ENV: &str = "JLM_LAB_WORKERS";

#[derive(Parser)]
#[command(
    name = "jlm-lab",
    version,
    about = "Last-multiplier verification scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write its trajectory CSV and report.
    Run {
        config: PathBuf,
        /// Directory for output files (default: current directory).
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Solve the Cheillini condition for a Liénard system.
    Cheillini {
        #[arg(long, allow_hyphen_values = true)]
        vprime: String,
        #[arg(long, allow_hyphen_values = true)]
        k: String,
        #[arg(long, default_value_t = 1.0)]
        mass: f64,
        #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
        qmin: f64,
        #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
        qmax: f64,
        #[arg(long, default_value_t = 41)]
        samples: usize,
    },
    /// Tabulate the divergence and its closed form over a grid.
    DivergenceScan {
        config: PathBuf,
        /// Axes such as `q=-2:2:41,p=-1:1:21`.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn configure_workers() -> Result<(), String> {
    let Ok(value) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let workers: usize = value
        .parse()
        .ok()
        .filter(|&w| w > 0)
        .ok_or_else(|| format!("{WORKERS_ENV} must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| e.to_string())
}

fn fail(e: LabError) -> ExitCode {
    eprintln!("jlm-lab: {e}");
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_workers() {
        eprintln!("jlm-lab: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    match cli.command {
        Command::Run { config, out_dir } => {
            let outcome = ScenarioConfig::load(&config)
                .map_err(LabError::from)
                .and_then(|c| run_scenario(&c, &out_dir));
            match outcome {
                Ok(o) => {
                    for check in &o.report.checks {
                        let label = check
                            .multiplier
                            .as_deref()
                            .map(|m| format!(" [{m}]"))
                            .unwrap_or_default();
                        let max = check
                            .stats
                            .as_ref()
                            .map(|s| format!(" max {:e}", s.max))
                            .unwrap_or_default();
                        println!("{:?}: {}{label}{max}", check.verdict, check.name);
                    }
                    println!("trajectory: {}", o.trajectory_path.display());
                    println!("report: {}", o.report_path.display());
                    ExitCode::from(o.exit_code)
                }
                Err(e) => fail(e),
            }
        }
        Command::Cheillini {
            vprime,
            k,
            mass,
            qmin,
            qmax,
            samples,
        } => match LienardSystem::parse(&vprime, &k, mass) {
            Ok(sys) => {
                let (text, code) = cheillini_report(&sys, qmin, qmax, samples);
                print!("{text}");
                ExitCode::from(code)
            }
            Err(e) => fail(
                ConfigError::Invalid {
                    field: "--vprime/--k/--mass".into(),
                    message: e.to_string(),
                }
                .into(),
            ),
        },
        Command::DivergenceScan { config, grid, out } => {
            let result = ScenarioConfig::load(&config)
                .and_then(|c| c.field())
                .and_then(|(field, _)| Ok((parse_grid(&grid, &field)?, field)))
                .map_err(LabError::from)
                .and_then(|(axes, field)| divergence_scan(&field, &axes));
            match result {
                Ok(csv) => match out {
                    Some(path) => match std::fs::write(&path, csv) {
                        Ok(()) => ExitCode::from(EXIT_PASS),
                        Err(e) => fail(LabError::Io {
                            path: path.display().to_string(),
                            message: e.to_string(),
                        }),
                    },
                    None => {
                        print!("{csv}");
                        ExitCode::from(EXIT_PASS)
                    }
                },
                Err(e) => fail(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
