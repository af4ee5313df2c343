//! `identify`: fit the plant matrices from an epochs CSV and report
//! residual and conditioning diagnostics.

use std::io::BufReader;
use std::path::PathBuf;

use hybridsim_core::ident::{fit_least_squares, FitReport};
use hybridsim_core::model::BoxConstraints;
use hybridsim_core::trace::read_epochs_csv;

use crate::error::CliError;
use crate::manifest::to_sorted_json;

pub struct IdentifyArgs {
    pub trace: PathBuf,
    pub n: usize,
    pub m: usize,
    pub ridge: f64,
    pub out: Option<PathBuf>,
}

pub struct IdentifyOutcome {
    pub report: FitReport,
    pub report_json: String,
    pub unstable: bool,
}

/// Spectral radii this close to 1 (or above) trigger the stability warning.
const STABILITY_MARGIN: f64 = 1e-6;

pub fn cmd_identify(args: &IdentifyArgs) -> Result<IdentifyOutcome, CliError> {
    let file = std::fs::File::open(&args.trace)
        .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", args.trace.display())))?;
    let trace = read_epochs_csv(BufReader::new(file))?;
    if trace.state_dim() != args.n || trace.control_dim() != args.m {
        return Err(CliError::Parse(format!(
            "trace has n={}, m={} but the command declared n={}, m={}",
            trace.state_dim(),
            trace.control_dim(),
            args.n,
            args.m
        )));
    }
    let report = fit_least_squares(
        &trace,
        BoxConstraints::unbounded(args.n),
        BoxConstraints::unbounded(args.m),
        args.ridge,
    )?;
    let unstable = report.spectral_radius_a >= 1.0 - STABILITY_MARGIN;
    let report_json = to_sorted_json(&report)?;
    if let Some(path) = &args.out {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, &report_json)?;
    }
    Ok(IdentifyOutcome { report, report_json, unstable })
}
