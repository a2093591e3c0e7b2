use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use leibniz_core::report::{emit_report, Format, EXIT_USAGE};
use leibniz_core::runner::{run_path, Overrides};

/// Run the checks declared in a scenario file and report the verdicts.
///
/// Exit status: 0 all checks hold or match their expectations, 1 a violation,
/// failed precondition or missed expectation, 2 parse or usage error,
/// 3 inconclusive.
#[derive(Debug, Parser)]
#[command(name = "leibniz", version)]
struct Cli {
    /// Scenario file.
    scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the inclusion tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value = "text", value_parser = ["text", "structured"])]
    format: String,
    /// Only run these rules or checks (repeatable).
    #[arg(long = "rule")]
    rules: Vec<String>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let format: Format = cli.format.parse().expect("restricted by clap");
    if let Some(t) = cli.tol {
        if !(t.is_finite() && t >= 0.0) {
            eprintln!("error: --tol must be a finite non-negative number");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    }
    let overrides = Overrides {
        seed: cli.seed,
        tol: cli.tol,
        only: cli.rules,
    };
    let report = match run_path(&cli.scenario, &overrides) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    let text = emit_report(&report, format);
    match &cli.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(EXIT_USAGE as u8);
            }
        }
        None => print!("{text}"),
    }
    ExitCode::from(report.exit_code() as u8)
}
