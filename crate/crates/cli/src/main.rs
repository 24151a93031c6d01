use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use restore_cli::scenario::{Checks, SweepSpec};
use restore_cli::settings::{Settings, SETTINGS_ENV};
use restore_cli::{run_compare, run_oracle, run_solve, run_sweep, run_validate, CliError, Outcome, RunOptions, SolveOutputs};

#[derive(Parser)]
#[command(name = "restore", version, about = "Critical load restoration for unbalanced distribution feeders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan the restoration of one outage event.
    Solve {
        feeder: PathBuf,
        event: PathBuf,
        #[command(flatten)]
        common: Common,
        /// CSV table of bus voltage phasors.
        #[arg(long)]
        phasors: Option<PathBuf>,
        /// CSV of the relaxation bound and integral part per solve.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Run randomised scenarios around a base feeder.
    Sweep {
        feeder: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sweep: SweepArgs,
        /// Check every island against exhaustive search.
        #[arg(long)]
        oracle: bool,
        /// Solve the lossless linear model next to the engine.
        #[arg(long)]
        compare_milp: bool,
    },
    /// Exhaustive search over load statuses for one event.
    Oracle {
        feeder: PathBuf,
        event: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Engine against the linear (and, on single-phase islands, cone) model.
    Compare {
        feeder: PathBuf,
        /// Compare on one event instead of a sweep.
        #[arg(long)]
        event: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Check a feeder, an event against it, or a result document.
    Validate {
        feeder: Option<PathBuf>,
        #[arg(long)]
        event: Option<PathBuf>,
        /// Result document to check against the schema.
        #[arg(long)]
        result: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML file of default tolerances.
    #[arg(long, env = SETTINGS_ENV)]
    settings: Option<PathBuf>,
    /// Level weights, highest first, replacing those of the feeder.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// Reference bus of the island that contains it.
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    solver_tol: Option<f64>,
    #[arg(long)]
    integrality_tol: Option<f64>,
    #[arg(long)]
    binding_tol: Option<f64>,
    #[arg(long)]
    exactness_threshold: Option<f64>,
    #[arg(long)]
    dominance_margin: Option<f64>,
    /// Largest island the exhaustive search accepts.
    #[arg(long)]
    oracle_max_loads: Option<usize>,
    /// JSON result path; standard output when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Zero all timings so repeated runs give identical documents.
    #[arg(long)]
    no_timings: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML file with the sweep ranges; flags override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    scenarios: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn options(&self) -> Result<RunOptions, CliError> {
        let mut s = match &self.settings {
            Some(p) => Settings::load(p)?,
            None => Settings::default(),
        };
        let over = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        over(&mut s.solver_tol, self.solver_tol);
        over(&mut s.integrality_tol, self.integrality_tol);
        over(&mut s.binding_tol, self.binding_tol);
        over(&mut s.exactness_threshold, self.exactness_threshold);
        over(&mut s.dominance_margin, self.dominance_margin);
        if let Some(n) = self.oracle_max_loads {
            s.oracle_max_loads = n;
        }
        s.check()?;
        Ok(RunOptions {
            settings: s,
            weights: self.weights.clone(),
            reference: self.reference.clone(),
            omit_timings: self.no_timings,
        })
    }
}

impl SweepArgs {
    fn spec(&self) -> Result<SweepSpec, CliError> {
        let mut spec = match &self.spec {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(p.display().to_string(), e))?;
                toml::from_str(&text).map_err(|e| CliError::Spec(e.to_string()))?
            }
            None => SweepSpec::default(),
        };
        if let Some(n) = self.scenarios {
            spec.scenarios = n;
        }
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        Ok(spec)
    }
}

fn emit(out: &Outcome, path: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(&out.doc).expect("document serializes") + "\n";
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(p.display().to_string(), e))?,
        None => print!("{text}"),
    }
    if let Some(t) = &out.text {
        if path.is_some() {
            print!("{t}");
        } else {
            eprint!("{t}");
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let (outcome, output) = match cli.command {
        Command::Solve {
            feeder,
            event,
            common,
            phasors,
            trajectory,
        } => {
            let out = SolveOutputs { phasors, trajectory };
            (run_solve(&feeder, &event, &common.options()?, &out)?, common.output)
        }
        Command::Sweep {
            feeder,
            common,
            sweep,
            oracle,
            compare_milp,
        } => {
            let checks = Checks {
                oracle,
                milp: compare_milp,
                misocp: false,
            };
            (run_sweep(&feeder, &sweep.spec()?, checks, &common.options()?)?, common.output)
        }
        Command::Oracle { feeder, event, common } => (run_oracle(&feeder, &event, &common.options()?)?, common.output),
        Command::Compare {
            feeder,
            event,
            common,
            sweep,
        } => (
            run_compare(&feeder, event.as_deref(), &sweep.spec()?, &common.options()?)?,
            common.output,
        ),
        Command::Validate {
            feeder,
            event,
            result,
            common,
        } => (
            run_validate(feeder.as_deref(), event.as_deref(), result.as_deref(), &common.options()?)?,
            common.output,
        ),
    };
    emit(&outcome, output.as_deref())?;
    Ok(outcome)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(o) => ExitCode::from(o.status as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
