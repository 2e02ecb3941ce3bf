//! Batch front end: loads a model and run config, runs one pipeline stage (or
//! all of them) and writes JSON/CSV reports.

pub mod commands;
pub mod config;
pub mod output;

use std::fmt;

pub use commands::{run, Outcome};
pub use config::{Command, Format, RunConfig};

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    /// Unreadable or invalid config, model file or arguments; unwritable
    /// output directory.
    Config = 2,
    /// The model fails the solvability conditions.
    Assumption = 3,
    /// Free-boundary, lattice or verification failure.
    Solver = 4,
    /// Monte Carlo estimate unusable or inconsistent with the solved value.
    Estimation = 5,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Clone)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    pub fn new(exit: Exit, message: impl Into<String>) -> Self {
        Self {
            exit,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<robdiv::Error> for CliError {
    fn from(e: robdiv::Error) -> Self {
        use robdiv::Error as E;
        let exit = match &e {
            E::InvalidModel(_) | E::InvalidArgument(_) | E::Cfl { .. } => Exit::Config,
            E::Assumption(_) | E::BeyondUpperLandmark { .. } => Exit::Assumption,
            E::Domain { .. }
            | E::Diverged { .. }
            | E::Bracket { .. }
            | E::ShootingTolerance { .. }
            | E::Picard { .. } => Exit::Solver,
            E::Estimation(_) => Exit::Estimation,
        };
        CliError::new(exit, e.to_string())
    }
}
