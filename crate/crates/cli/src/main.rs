//! `pse` command-line entry point.

mod args;
mod commands;
mod config;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::Parser;
use pse_core::{Error, ErrorClass, Result};

use args::{Cli, Command};

const THREADS_ENV: &str = "PSE_NUM_THREADS";

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Runtime => 3,
    }
}

fn thread_cap(jobs: Option<usize>) -> Result<Option<usize>> {
    let env = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
            Error::Config(format!("{THREADS_ENV}={v:?} is not a thread count"))
        })?),
        Err(_) => None,
    };
    let cap = match (jobs, env) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    if cap == Some(0) {
        return Err(Error::Config("thread count must be at least 1".into()));
    }
    Ok(cap)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = thread_cap(cli.jobs)? {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let seed = cli.seed;
    match &cli.command {
        Command::Enhance(a) => commands::enhance(a),
        Command::Mix(a) => commands::mix(a, seed),
        Command::TrainToy(a) => commands::train(a, seed),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => commands::bench(a, seed),
        Command::Embed(a) => commands::embed(a),
        Command::Inspect(a) => commands::inspect(a),
        Command::ToyCorpus(a) => commands::toy_corpus(a, seed),
    }
}

fn main() -> ExitCode {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let argv = match config::merge(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
