use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hybridsim_cli::error::CliError;
use hybridsim_cli::experiment::{cmd_experiment, ExperimentArgs};
use hybridsim_cli::identify::{cmd_identify, IdentifyArgs};
use hybridsim_cli::simulate::{cmd_simulate, SimulateArgs};

/// Hybrid cloud simulator: scenario runs, system identification, and
/// controller A/B experiments.
#[derive(Parser)]
#[command(name = "hybridsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Run one scenario and write epochs CSV, requests CSV, and a manifest.
    Simulate {
        /// Scenario JSON file.
        #[arg(long)]
        scenario: PathBuf,
        /// Seed override (precedence: this flag, HYBRIDSIM_SEED, scenario
        /// default).
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the scenario's outputs.directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the plant matrices from an epochs CSV.
    Identify {
        /// Epochs CSV (t,x_0..,u_0..).
        #[arg(long)]
        trace: PathBuf,
        /// State dimension the trace must carry.
        #[arg(long)]
        n: usize,
        /// Control dimension the trace must carry.
        #[arg(long)]
        m: usize,
        /// Ridge regularization weight.
        #[arg(long, default_value_t = 0.0)]
        ridge: f64,
        /// Write the fit report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run controllers x seeds with paired seeds and report both criteria
    /// against the `none` baseline.
    Experiment {
        /// Scenario JSON file.
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated controller names from the scenario's policy map.
        #[arg(long, value_delimiter = ',', required = true)]
        controllers: Vec<String>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Max parallel simulation runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Exit non-zero when any controller fails criterion 2.
        #[arg(long)]
        check: bool,
    },
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Commands::Simulate { scenario, seed, out } => {
            let outcome = cmd_simulate(&SimulateArgs { scenario, seed, out })?;
            let c = outcome.trace.conservation;
            println!(
                "simulated seed {}: generated {}, completed {}, dropped {}, in flight {}",
                outcome.seed, c.generated, c.completed, c.dropped, c.in_flight
            );
            for p in [&outcome.epochs_csv, &outcome.requests_csv].into_iter().flatten() {
                println!("wrote {}", p.display());
            }
            println!("wrote {}", outcome.manifest_json.display());
            Ok(0)
        }
        Commands::Identify { trace, n, m, ridge, out } => {
            let outcome = cmd_identify(&IdentifyArgs { trace, n, m, ridge, out: out.clone() })?;
            if outcome.unstable {
                eprintln!(
                    "warning: fitted A has spectral radius {:.6} >= 1; the model is not stable",
                    outcome.report.spectral_radius_a
                );
            }
            match out {
                Some(path) => println!("wrote {}", path.display()),
                None => print!("{}", outcome.report_json),
            }
            Ok(0)
        }
        Commands::Experiment { scenario, controllers, seeds, out, jobs, check } => {
            let outcome = cmd_experiment(&ExperimentArgs {
                scenario,
                controllers,
                seeds,
                out,
                jobs,
                check,
            })?;
            for (name, result) in &outcome.report.results {
                println!(
                    "{name}: latency change {:+.1}%, dup reduction {:.1}%, tail mass reduction {:.1}% (criterion1 {}, criterion2 {})",
                    100.0 * result.mean.relative_latency_change,
                    100.0 * result.mean.dup_reduction,
                    100.0 * result.mean.tail_mass_reduction,
                    if result.mean.criterion1_pass { "pass" } else { "fail" },
                    if result.mean.criterion2_pass { "pass" } else { "fail" },
                );
            }
            println!("wrote {}", outcome.report_json_path.display());
            if outcome.check_failed {
                eprintln!("check failed: criterion 2 not met");
                return Ok(1);
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
