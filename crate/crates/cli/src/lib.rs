//! Command implementations behind the `hybridsim` binary: scenario
//! simulation, trace-based system identification, and paired-seed A/B
//! experiments with criteria reports.

pub mod error;
pub mod experiment;
pub mod identify;
pub mod manifest;
pub mod simulate;

pub use error::CliError;
