//! Command-line front end for the frog-model toolkit.
//!
//! Every run is described by an [`plan::ExperimentPlan`]. The plan is
//! written into the JSON report next to the result, so `frog replay
//! report.json` rebuilds the same files byte for byte, whatever `--threads`
//! says.

use std::ffi::OsString;
use std::time::Instant;

use clap::Parser;
use frog_core::FrogError;

pub mod args;
pub mod commands;
pub mod plan;
pub mod report;

use args::{Cli, CommandArgs, RunArgs};
use plan::{Command, ExperimentPlan};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_PLAN: i32 = 2;
pub const EXIT_CENSORING: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Plan(String),
    Frog(FrogError),
    Io(String),
}

impl From<FrogError> for CliError {
    fn from(e: FrogError) -> Self {
        CliError::Frog(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Plan(m) => write!(f, "plan error: {m}"),
            CliError::Frog(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Plan(_) => EXIT_PLAN,
            CliError::Frog(FrogError::CensoringBudget { .. }) => EXIT_CENSORING,
            CliError::Frog(_) => EXIT_PLAN,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

/// Parses `argv` (program name first), runs, and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("frog: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let (command, args) = match cli.command {
        CommandArgs::Replay(r) => {
            let plan = plan::load_plan(&r.path)?;
            return execute(&plan, r.exec.threads);
        }
        CommandArgs::SampleEnv(a) => (Command::SampleEnv, a),
        CommandArgs::Passage(a) => (Command::Passage, a),
        CommandArgs::Mu(a) => (Command::Mu, a),
        CommandArgs::Tails(a) => (Command::Tails, a),
        CommandArgs::Concentration(a) => (Command::Concentration, a),
        CommandArgs::Truncation(a) => (Command::Truncation, a),
        CommandArgs::Percolation(a) => (Command::Percolation, a),
        CommandArgs::Audit(a) => (Command::Audit, a),
    };
    let RunArgs { plan: plan_args, exec } = args;
    let plan = plan::resolve(command, &plan_args)?;
    execute(&plan, exec.threads)
}

/// Runs a resolved plan and writes exactly the two declared outputs.
pub fn execute(plan: &ExperimentPlan, threads: Option<usize>) -> Result<(), CliError> {
    let started = Instant::now();
    let out = commands::execute(plan, threads)?;
    let report = report::build_report(plan, &out.result)?;
    report::write_json(&plan.outputs.json, &report)?;
    out.table.write(&plan.outputs.csv)?;
    report::print_summary(&out.summary);
    eprintln!("frog: {} finished in {:.2?}", plan.command.name(), started.elapsed());
    Ok(())
}
