//! Standard-library side of the preference-optimisation lab: JSON and CSV
//! formats, a parallel experiment runner, verification suites and the
//! `pref-lab` command-line tool.

pub mod cli;
pub mod error;
pub mod formats;
pub mod runner;
pub mod verify;

pub use error::{LabError, Result};
