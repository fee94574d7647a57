//! `vistacast` command-line driver. [`run`] parses arguments, executes one
//! subcommand against a data root and returns the process exit code.

pub mod args;
mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::time::Instant;

use chrono::Utc;
use clap::Parser;
use vistacast_core::store::{DataRoot, RunLogEntry};

pub use args::Cli;
pub use config::Settings;

/// Exit codes: 0 success or help, 1 usage or user error, 2 internal error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { error::EXIT_USER } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    let started_at = Utc::now();
    let clock = Instant::now();
    let root = DataRoot::new(&cli.data_root);
    let settings = Settings::load(cli.config.as_deref()).map(|s| commands::effective_settings(s, &cli.command));
    let (result, digest, seed) = match settings {
        Ok(s) => (commands::execute(&root, &cli.command, &s), s.digest(), commands::run_seed(&cli.command, &s)),
        Err(e) => (Err(e), String::new(), None),
    };
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            error::exit_code(e)
        }
    };
    if root.path().is_dir() {
        let entry = RunLogEntry {
            command: cli.command.name().to_string(),
            config_digest: digest,
            seed,
            started_at,
            duration_ms: clock.elapsed().as_millis() as u64,
            exit_code: code,
        };
        if let Err(e) = root.append_run(&entry) {
            log::warn!("run log: {e}");
        }
    }
    code
}
