use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use segeval::{exit, report::fmt_g, RunConfig, RunError};
use segeval_core::selftest::{run_selftest, SelftestOptions, Suite};

#[derive(Parser)]
#[command(name = "segeval", version, about = "Evaluate 3D segmentations against ground truth")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate every case in the manifest and write CSV reports.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check headers and geometry of every case without computing metrics.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare production kernels against brute-force references.
    Selftest {
        /// Comma-separated subset of: confusion, surface, components.
        #[arg(long)]
        suites: Option<String>,
    },
}

fn load_config(path: &Path) -> Result<RunConfig, ExitCode> {
    RunConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(exit::CONFIG_ERROR)
    })
}

fn cmd_run(path: &Path) -> ExitCode {
    let config = match load_config(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match segeval::run(&config) {
        Ok(outcome) => {
            for f in &outcome.failures {
                eprintln!("{}: {} failed ({}): {}", f.patient_id, f.stage, f.kind, f.message);
            }
            let point = outcome.selected_threshold.map_or_else(|| "none".to_string(), fmt_g);
            println!(
                "{}/{} cases evaluated, {} rows, operating threshold {}",
                outcome.succeeded, outcome.cases, outcome.rows, point
            );
            println!("reports in {}", config.output_dir.display());
            if outcome.succeeded == 0 {
                ExitCode::from(exit::NO_SUCCESS)
            } else {
                ExitCode::from(exit::SUCCESS)
            }
        }
        Err(e @ (RunError::Manifest(_) | RunError::OutputDir { .. } | RunError::Pool(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::CONFIG_ERROR)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::NO_SUCCESS)
        }
    }
}

fn cmd_validate(path: &Path) -> ExitCode {
    let config = match load_config(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match segeval::validate(&config.manifest) {
        Ok(diags) => {
            for d in &diags {
                println!("{}: {}: {}", d.patient_id, d.kind, d.message);
            }
            println!("{} diagnostic(s)", diags.len());
            if diags.is_empty() {
                ExitCode::from(exit::SUCCESS)
            } else {
                ExitCode::from(exit::NO_SUCCESS)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::CONFIG_ERROR)
        }
    }
}

fn cmd_selftest(suites: Option<&str>) -> ExitCode {
    let selected: Vec<Suite> = match suites {
        None => Suite::ALL.to_vec(),
        Some(list) => {
            let mut out = Vec::new();
            for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                match Suite::parse(name) {
                    Some(s) => out.push(s),
                    None => {
                        eprintln!("error: unknown suite `{name}`");
                        return ExitCode::from(exit::CONFIG_ERROR);
                    }
                }
            }
            out
        }
    };
    let report = run_selftest(&selected, &SelftestOptions::default());
    for s in &report.suites {
        let verdict = if s.passed() { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {}: {} cases, max deviation {:e} (tolerance {:e}), {} failure(s)",
            s.suite.name(),
            s.cases,
            s.max_deviation,
            s.tolerance,
            s.failure_count
        );
        for f in &s.failures {
            println!("  {f}");
        }
    }
    if report.passed() {
        println!("selftest passed");
        ExitCode::from(exit::SUCCESS)
    } else {
        println!("selftest failed");
        ExitCode::from(exit::NO_SUCCESS)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run { config } => cmd_run(config),
        Command::Validate { config } => cmd_validate(config),
        Command::Selftest { suites } => cmd_selftest(suites.as_deref()),
    }
}
