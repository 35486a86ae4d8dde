//! `colht` command-line entry point.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 numeric
//! non-convergence (partial output is still written), 4 size guard exceeded.

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use colht_cli::{emit_report, emit_to_dir, read_config, run_experiment, FailureKind, Format, Mode};

#[derive(Parser, Debug)]
#[command(name = "colht", version, about = "Distributed hypothesis testing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for the report and timings; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads for Monte Carlo trials.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Reject unknown configuration keys (default).
    #[arg(long, global = true, conflicts_with = "lax")]
    strict: bool,
    /// Warn about unknown configuration keys instead of failing.
    #[arg(long, global = true)]
    lax: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Feasible exponent over an R-grid.
    Exponent,
    /// Exponent for testing against independence.
    Independence,
    /// One-way communication exponent.
    Unidirectional,
    /// Zero-rate exponent and the exact one-bit scheme.
    ZeroRate,
    /// Monte Carlo simulation of the protocol.
    Simulate,
    /// Monte Carlo against exact enumeration on random configurations.
    OracleAudit,
    /// Converse bound on random explicit codes.
    ConverseAudit,
    /// Telescoping mutual-information identity on random joints.
    IdentityAudit,
}

impl Command {
    fn mode(self) -> Mode {
        match self {
            Command::Exponent => Mode::Exponent,
            Command::Independence => Mode::Independence,
            Command::Unidirectional => Mode::Unidirectional,
            Command::ZeroRate => Mode::ZeroRate,
            Command::Simulate => Mode::Simulate,
            Command::OracleAudit => Mode::OracleAudit,
            Command::ConverseAudit => Mode::ConverseAudit,
            Command::IdentityAudit => Mode::IdentityAudit,
        }
    }
}

const EXIT_INVALID: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_SIZE_GUARD: u8 = 4;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVALID);
        }
    }
    let mode = cli.command.mode();
    let parsed = match &cli.config {
        Some(path) => read_config(path, !cli.lax, Some(mode)),
        // audits that need no matrices can run from defaults
        None => colht_cli::parse_config("", !cli.lax, Some(mode)),
    };
    let mut parsed = match parsed {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVALID);
        }
    };
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(seed) = cli.seed {
        parsed.config.seed = seed;
    }
    let format = cli.format.or(parsed.config.output.format).unwrap_or_default();
    let out_dir = cli.out.clone().or_else(|| parsed.config.output.dir.clone());
    let report = run_experiment(&parsed.config);
    let written = match &out_dir {
        Some(dir) => emit_to_dir(&report, format, dir),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            emit_report(&report.body, format, &mut lock).and_then(|()| lock.flush())
        }
    };
    if let Err(e) = written {
        eprintln!("error: cannot write report: {e}");
        return ExitCode::from(EXIT_INVALID);
    }
    for t in &report.body.tasks {
        if let Some(f) = &t.failure {
            eprintln!("{}: {}", t.task, f.message);
        }
    }
    match report.body.worst_failure() {
        None => ExitCode::SUCCESS,
        Some(FailureKind::InvalidInput) => ExitCode::from(EXIT_INVALID),
        Some(FailureKind::NotConverged) => ExitCode::from(EXIT_NOT_CONVERGED),
        Some(FailureKind::SizeGuard) => ExitCode::from(EXIT_SIZE_GUARD),
    }
}
