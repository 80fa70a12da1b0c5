//! Command-line front end.

pub mod args;
mod convert;
mod experiment;
mod tools;

use clap::Parser;
use log::error;

use crate::error::{Error, ErrorKind, Result};
use crate::train::Task;
use args::{Cli, Command, ExperimentConfig};

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e.kind() {
        ErrorKind::Validation => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numeric => 3,
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::arg("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::arg(format!("thread pool: {e}")))?;
    }
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    match &cli.command {
        Command::Convert(a) => convert::run(a),
        Command::Train(a) => experiment::run_training(Task::Classification, a, &cfg),
        Command::Associate(a) => experiment::run_training(Task::Association, a, &cfg),
        Command::Eval(a) => experiment::run_eval(a, &cfg),
        Command::Gradcheck(a) => tools::run_gradcheck(a),
        Command::Sweep(a) => tools::run_sweep(a, &cfg),
        Command::Circuit(a) => tools::run_circuit(a, &cfg),
    }
}

/// Runs the CLI on `argv` and returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
