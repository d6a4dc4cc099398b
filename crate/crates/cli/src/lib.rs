//! `carbonet` pipeline: prep → learn → analyze → dbn, plus serve and export-dot.

use std::ffi::OsString;
use std::fmt;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;

pub use config::{Flags, PipelineConfig};

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    /// Prefixes the message with where the failure happened.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<carbonet_core::Error> for Failure {
    fn from(e: carbonet_core::Error) -> Self {
        Self {
            code: if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_INPUT },
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::input(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::input(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "carbonet", version, about = "Bayesian networks for daily returns")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Filter prices with AR-GARCH and GARCH-only, then discretize into tertiles
    Prep(Flags),
    /// Bootstrap structure learning and CPT fitting on the AR-GARCH panel
    Learn(Flags),
    /// MPE, evidence sweep, sensitivity and tornado reports for a target
    Analyze(Flags),
    /// Learn next-day transitions on the GARCH-only panel and report shocks
    Dbn(Flags),
    /// Serve the model over HTTP
    Serve(Flags),
    /// Print a model as Graphviz DOT
    ExportDot(Flags),
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Prep(f) => commands::prep(&f.resolve()?).map(drop),
        Command::Learn(f) => commands::learn(&f.resolve()?).map(drop),
        Command::Analyze(f) => commands::analyze(&f.resolve()?).map(drop),
        Command::Dbn(f) => commands::dbn(&f.resolve()?).map(drop),
        Command::Serve(f) => commands::serve(&f.resolve()?),
        Command::ExportDot(f) => {
            let dot = commands::export_dot(&f.resolve()?)?;
            print!("{dot}");
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs. Returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    }
}
