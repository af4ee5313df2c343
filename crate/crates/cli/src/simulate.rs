//! `simulate`: run one scenario and write epochs CSV, requests CSV, and a
//! run manifest.

use std::path::{Path, PathBuf};

use hybridsim_core::scenario::{load_scenario, Scenario};
use hybridsim_core::sim;
use hybridsim_core::trace::{write_epochs_csv, write_requests_csv, Trace};

use crate::error::CliError;
use crate::manifest::{file_sha256, to_sorted_json, RunManifest};

pub struct SimulateArgs {
    pub scenario: PathBuf,
    pub seed: Option<u64>,
    /// Defaults to the scenario's `outputs.directory`.
    pub out: Option<PathBuf>,
}

pub struct SimulateOutcome {
    pub seed: u64,
    pub trace: Trace,
    pub epochs_csv: Option<PathBuf>,
    pub requests_csv: Option<PathBuf>,
    pub manifest_json: PathBuf,
}

/// Seed precedence: CLI flag, then HYBRIDSIM_SEED, then the scenario default.
pub fn resolve_seed(flag: Option<u64>, scenario: &Scenario) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var("HYBRIDSIM_SEED") {
        Ok(text) => text
            .parse()
            .map_err(|e| CliError::Parse(format!("HYBRIDSIM_SEED `{text}` is not a seed: {e}"))),
        Err(_) => Ok(scenario.default_seed),
    }
}

pub fn write_trace_files(
    trace: &Trace,
    dir: &Path,
    prefix: &str,
) -> Result<(PathBuf, PathBuf), CliError> {
    std::fs::create_dir_all(dir)?;
    let epochs_path = dir.join(format!("{prefix}epochs.csv"));
    let requests_path = dir.join(format!("{prefix}requests.csv"));
    let mut epochs = Vec::new();
    write_epochs_csv(&mut epochs, &trace.epoch_samples)?;
    std::fs::write(&epochs_path, epochs)?;
    let mut requests = Vec::new();
    write_requests_csv(&mut requests, &trace.request_log)?;
    std::fs::write(&requests_path, requests)?;
    Ok((epochs_path, requests_path))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<SimulateOutcome, CliError> {
    let scenario = load_scenario(&args.scenario)?;
    let seed = resolve_seed(args.seed, &scenario)?;
    let trace = sim::run(&scenario, seed)?;

    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&scenario.outputs.directory));
    std::fs::create_dir_all(&out_dir)?;
    let mut epochs_csv = None;
    if scenario.outputs.write_epochs {
        let path = out_dir.join("epochs.csv");
        let mut buf = Vec::new();
        write_epochs_csv(&mut buf, &trace.epoch_samples)?;
        std::fs::write(&path, buf)?;
        epochs_csv = Some(path);
    }
    let mut requests_csv = None;
    if scenario.outputs.write_requests {
        let path = out_dir.join("requests.csv");
        let mut buf = Vec::new();
        write_requests_csv(&mut buf, &trace.request_log)?;
        std::fs::write(&path, buf)?;
        requests_csv = Some(path);
    }
    let manifest = RunManifest {
        manifest_version: 1,
        scenario_name: scenario.name.clone(),
        scenario_path: args.scenario.display().to_string(),
        scenario_sha256: file_sha256(&args.scenario)?,
        seed,
        policy: scenario.control_loop.policy.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        horizon_sec: scenario.horizon_sec,
        event_count: trace.event_count,
        conservation: trace.conservation,
        epochs_csv: scenario.outputs.write_epochs.then(|| "epochs.csv".to_string()),
        requests_csv: scenario.outputs.write_requests.then(|| "requests.csv".to_string()),
    };
    let manifest_json = out_dir.join("manifest.json");
    std::fs::write(&manifest_json, to_sorted_json(&manifest)?)?;

    Ok(SimulateOutcome { seed, trace, epochs_csv, requests_csv, manifest_json })
}
