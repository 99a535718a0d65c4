//! Command-line entry point: `run` a config's mechanism matrix, or
//! `replay` one completed run from its metadata.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ldplab::config;
use ldplab::error::HarnessError;
use ldplab::replay;
use ldplab::report;
use ldplab::runner::{self, SummaryRecord};

#[derive(Parser)]
#[command(
    name = "ldplab",
    version,
    about = "Streaming local-differential-privacy lab: run mechanism sweeps over \
             synthetic or CSV data streams, audit every run, replay any of them"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every (mechanism, epsilon, w, seed) cell of a config's matrix.
    Run {
        /// Flat key-value config file; see the repository README for the schema.
        config: PathBuf,
        /// Output directory; overrides the config's `out` key.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop scheduling runs after the first audit violation (default).
        #[arg(long, conflicts_with = "keep_going")]
        fail_fast: bool,
        /// Run the whole matrix even when audits fail; still exit nonzero.
        #[arg(long)]
        keep_going: bool,
    },
    /// Re-execute one run from its metadata, rewriting its output files.
    Replay {
        /// Run identifier, as printed by `run` and used in the file names.
        run_id: String,
        /// Directory holding meta_<run_id>.txt and the original outputs.
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, fail_fast, keep_going } => {
            cmd_run(&config, out, fail_fast || !keep_going)
        }
        Command::Replay { run_id, dir } => cmd_replay(&run_id, &dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn describe(record: &SummaryRecord) -> String {
    format!(
        "{}: mre={} cfpu={} audit={}",
        record.spec.run_id(),
        record.mre,
        record.cfpu,
        if record.audit_pass { "pass" } else { "fail" }
    )
}

fn cmd_run(config_path: &Path, out: Option<PathBuf>, fail_fast: bool) -> Result<(), HarnessError> {
    let config = config::load(config_path)?;
    let out_dir = out
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from(config::DEFAULT_OUT_DIR));
    let report = runner::execute_matrix(&config, &out_dir, fail_fast)?;
    for record in &report.summaries {
        println!("{}", describe(record));
    }
    println!(
        "wrote {} summary rows to {}",
        report.summaries.len(),
        report::summary_path(&out_dir).display()
    );
    if report.skipped > 0 {
        println!("skipped {} runs after the first violation (fail-fast)", report.skipped);
    }
    if !report.violations.is_empty() {
        let first = &report.violations[0];
        return Err(HarnessError::AuditViolation(format!(
            "{} violation(s); first: run {} failed {} for user {} in the window ending at \
             {} (observed {}, limit {}); details in {}",
            report.violations.len(),
            first.run_id,
            first.audit,
            first.violation.user,
            first.violation.window_end,
            first.violation.observed,
            first.violation.limit,
            report::violations_path(&out_dir).display()
        )));
    }
    Ok(())
}

fn cmd_replay(run_id: &str, dir: &Path) -> Result<(), HarnessError> {
    let record = replay::replay(run_id, dir)?;
    println!("{}", describe(&record));
    if !record.audit_pass {
        return Err(HarnessError::AuditViolation(format!(
            "replayed run {} fails its audits",
            record.spec.run_id()
        )));
    }
    Ok(())
}
