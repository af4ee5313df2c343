//! `experiment`: run a scenario once per (controller, seed) pair with paired
//! seeds, compare every listed controller against the `none` baseline on
//! both criteria, and emit per-run traces, per-controller family-latency
//! histograms, and an aggregate report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use hybridsim_core::metrics::{
    build_histogram, criteria_report_from_records, duplicate_count, latency_samples,
    CriteriaReport, CriteriaThresholds, HistogramRange,
};
use hybridsim_core::scenario::{load_scenario, Scenario};
use hybridsim_core::sim;
use hybridsim_core::trace::Trace;

use crate::error::CliError;
use crate::manifest::{file_sha256, to_sorted_json};
use crate::simulate::write_trace_files;

pub const BASELINE: &str = "none";
const HISTOGRAM_BINS: usize = 30;

pub struct ExperimentArgs {
    pub scenario: PathBuf,
    pub controllers: Vec<String>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub jobs: usize,
    pub check: bool,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunSummary {
    pub controller: String,
    pub seed: u64,
    pub epochs_csv: String,
    pub requests_csv: String,
    pub generated: u64,
    pub completed: u64,
    pub dropped: u64,
    pub in_flight: u64,
    pub duplicates: u64,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SeedComparison {
    pub seed: u64,
    #[serde(flatten)]
    pub report: CriteriaReport,
}

/// Seed-averaged comparison of one controller against the baseline.
#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MeanComparison {
    pub relative_latency_change: f64,
    pub dup_reduction: f64,
    pub tail_mass_reduction: f64,
    pub baseline_tail_mass_ratio: f64,
    pub candidate_tail_mass_ratio: f64,
    pub baseline_duplicates: f64,
    pub candidate_duplicates: f64,
    pub criterion1_pass: bool,
    pub criterion2_pass: bool,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ControllerResult {
    pub per_seed: Vec<SeedComparison>,
    pub mean: MeanComparison,
    pub histogram_csv: String,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentReport {
    pub scenario_name: String,
    pub scenario_sha256: String,
    pub baseline: String,
    pub controllers: Vec<String>,
    pub seeds: Vec<u64>,
    pub thresholds: CriteriaThresholds,
    pub results: BTreeMap<String, ControllerResult>,
    pub runs: Vec<RunSummary>,
}

pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub report_json_path: PathBuf,
    /// Set when `--check` applies and some controller failed criterion 2.
    pub check_failed: bool,
}

fn dedup_preserving_order(names: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for n in names {
        if !out.contains(n) {
            out.push(n.clone());
        }
    }
    out
}

/// Execute the (controller, seed) grid, up to `jobs` runs in parallel;
/// results come back in grid order regardless of scheduling.
fn run_grid(
    scenario: &Scenario,
    controllers: &[String],
    seeds: &[u64],
    jobs: usize,
) -> Vec<((String, u64), Result<Trace, String>)> {
    let grid: Vec<(String, u64)> = controllers
        .iter()
        .flat_map(|c| seeds.iter().map(move |&s| (c.clone(), s)))
        .collect();
    let slots: Mutex<Vec<Option<Result<Trace, String>>>> = Mutex::new(vec![None; grid.len()]);
    let next = AtomicUsize::new(0);
    let workers = jobs.max(1).min(grid.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= grid.len() {
                    break;
                }
                let (controller, seed) = &grid[idx];
                let result =
                    sim::run_policy(scenario, controller, *seed).map_err(|e| e.to_string());
                slots.lock().unwrap()[idx] = Some(result);
            });
        }
    });
    let results = slots.into_inner().unwrap();
    grid.into_iter()
        .zip(results)
        .map(|(key, slot)| (key, slot.expect("every grid slot is filled")))
        .collect()
}

fn write_histogram_csv(path: &Path, samples: &[f64]) -> Result<(), CliError> {
    let hist = build_histogram(samples, HISTOGRAM_BINS, HistogramRange::Auto)
        .map_err(|e| CliError::Runtime(format!("histogram failed: {e}")))?;
    let mut text = String::from("bin_lo,bin_hi,count\n");
    for (i, count) in hist.counts.iter().enumerate() {
        text.push_str(&format!(
            "{},{},{}\n",
            hist.bin_edges[i],
            hist.bin_edges[i + 1],
            count
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn cmd_experiment(args: &ExperimentArgs) -> Result<ExperimentOutcome, CliError> {
    if args.seeds.is_empty() {
        return Err(CliError::Validation("at least one seed is required".into()));
    }
    if args.controllers.is_empty() {
        return Err(CliError::Validation("at least one controller is required".into()));
    }
    let scenario = load_scenario(&args.scenario)?;

    let candidates = dedup_preserving_order(&args.controllers);
    let mut to_run = candidates.clone();
    if !to_run.iter().any(|c| c == BASELINE) {
        to_run.insert(0, BASELINE.to_string());
    }
    // Fail fast on unknown controller names.
    for name in &to_run {
        scenario.build_policy(name).map_err(CliError::from)?;
    }

    std::fs::create_dir_all(&args.out)?;
    let outcomes = run_grid(&scenario, &to_run, &args.seeds, args.jobs);

    // Flush every successful run's traces before reporting any failure, so
    // partial results survive an aborted grid.
    let mut traces: Vec<((String, u64), Trace)> = Vec::new();
    let mut runs = Vec::new();
    let mut first_failure: Option<String> = None;
    for ((controller, seed), outcome) in outcomes {
        match outcome {
            Ok(trace) => {
                let prefix = format!("{controller}_s{seed}_");
                write_trace_files(&trace, &args.out, &prefix)?;
                runs.push(RunSummary {
                    controller: controller.clone(),
                    seed,
                    epochs_csv: format!("{prefix}epochs.csv"),
                    requests_csv: format!("{prefix}requests.csv"),
                    generated: trace.conservation.generated,
                    completed: trace.conservation.completed,
                    dropped: trace.conservation.dropped,
                    in_flight: trace.conservation.in_flight,
                    duplicates: duplicate_count(&trace.request_log),
                });
                traces.push(((controller, seed), trace));
            }
            Err(e) if first_failure.is_none() => {
                first_failure = Some(format!("{controller}/seed {seed}: {e}"));
            }
            Err(_) => {}
        }
    }
    if let Some(failure) = first_failure {
        return Err(CliError::Runtime(failure));
    }
    let trace_of = |controller: &str, seed: u64| -> &Trace {
        traces
            .iter()
            .find(|((c, s), _)| c == controller && *s == seed)
            .map(|(_, t)| t)
            .expect("grid contains every pair")
    };

    let thresholds = CriteriaThresholds::default();
    let mut results = BTreeMap::new();
    for controller in &candidates {
        let mut per_seed = Vec::new();
        for &seed in &args.seeds {
            let baseline = trace_of(BASELINE, seed);
            let candidate = trace_of(controller, seed);
            let report = criteria_report_from_records(
                &baseline.request_log,
                &candidate.request_log,
                thresholds,
            )
            .map_err(|e| CliError::Runtime(format!("criteria on seed {seed}: {e}")))?;
            per_seed.push(SeedComparison { seed, report });
        }
        let relative_latency_change =
            mean_of(per_seed.iter().map(|s| s.report.criterion1.relative_change));
        let dup_reduction =
            mean_of(per_seed.iter().map(|s| s.report.criterion2.dup_reduction));
        let tail_mass_reduction =
            mean_of(per_seed.iter().map(|s| s.report.criterion2.tail_mass_reduction));
        let mean = MeanComparison {
            relative_latency_change,
            dup_reduction,
            tail_mass_reduction,
            baseline_tail_mass_ratio: mean_of(
                per_seed.iter().map(|s| s.report.criterion2.tail_baseline.tail_mass_ratio),
            ),
            candidate_tail_mass_ratio: mean_of(
                per_seed.iter().map(|s| s.report.criterion2.tail_candidate.tail_mass_ratio),
            ),
            baseline_duplicates: mean_of(
                per_seed.iter().map(|s| s.report.criterion2.dup_count_baseline as f64),
            ),
            candidate_duplicates: mean_of(
                per_seed.iter().map(|s| s.report.criterion2.dup_count_candidate as f64),
            ),
            criterion1_pass: relative_latency_change.abs() <= thresholds.latency_change,
            criterion2_pass: dup_reduction >= thresholds.dup_reduction
                && tail_mass_reduction >= thresholds.tail_mass_reduction,
        };

        let hist_name = format!("hist_{controller}.csv");
        let hist_path = args.out.join(&hist_name);
        let pooled: Vec<f64> = args
            .seeds
            .iter()
            .flat_map(|&seed| {
                latency_samples(trace_of(controller, seed), true)
                    .map(|s| s.samples)
                    .unwrap_or_default()
            })
            .collect();
        if !pooled.is_empty() {
            write_histogram_csv(&hist_path, &pooled)?;
        }
        results.insert(
            controller.clone(),
            ControllerResult { per_seed, mean, histogram_csv: hist_name },
        );
    }
    // Baseline histogram for the before/after picture even when `none` is
    // not among the candidates.
    if !candidates.iter().any(|c| c == BASELINE) {
        let pooled: Vec<f64> = args
            .seeds
            .iter()
            .flat_map(|&seed| {
                latency_samples(trace_of(BASELINE, seed), true)
                    .map(|s| s.samples)
                    .unwrap_or_default()
            })
            .collect();
        if !pooled.is_empty() {
            write_histogram_csv(&args.out.join(format!("hist_{BASELINE}.csv")), &pooled)?;
        }
    }

    let report = ExperimentReport {
        scenario_name: scenario.name.clone(),
        scenario_sha256: file_sha256(&args.scenario)?,
        baseline: BASELINE.to_string(),
        controllers: candidates.clone(),
        seeds: args.seeds.clone(),
        thresholds,
        results,
        runs,
    };
    let report_json_path = args.out.join("report.json");
    std::fs::write(&report_json_path, to_sorted_json(&report)?)?;

    let check_failed =
        args.check && report.results.values().any(|r| !r.mean.criterion2_pass);
    Ok(ExperimentOutcome { report, report_json_path, check_failed })
}

/// Recompute one controller/seed criteria report from trace CSV files on
/// disk; lets callers audit the aggregate report.
pub fn recompute_from_files(
    out_dir: &Path,
    controller: &str,
    seed: u64,
) -> Result<CriteriaReport, CliError> {
    let read = |name: &str| -> Result<Vec<hybridsim_core::trace::RequestRecord>, CliError> {
        let file = std::fs::File::open(out_dir.join(name))
            .map_err(|e| CliError::Parse(format!("cannot read {name}: {e}")))?;
        Ok(hybridsim_core::trace::read_requests_csv(std::io::BufReader::new(file))?)
    };
    let baseline = read(&format!("{BASELINE}_s{seed}_requests.csv"))?;
    let candidate = read(&format!("{controller}_s{seed}_requests.csv"))?;
    criteria_report_from_records(&baseline, &candidate, CriteriaThresholds::default())
        .map_err(|e| CliError::Runtime(e.to_string()))
}
