//! Command-line front end of the restoration engine.
//!
//! Every command produces a JSON result document that satisfies the schema
//! in `schema/result.schema.json`; tables and plot data go to CSV files.

pub mod document;
pub mod scenario;
pub mod settings;
pub mod synth;

use std::path::{Path, PathBuf};

use restoration::engine::{solve_restoration, RestorationPlan, Verdict};
use restoration::netmodel::{apply_event, parse_feeder, validate_network, EventSpec, NetError, Network};
use restoration::oracle::brute_force_clr;
use restoration::topology::find_target_islands;
use restoration::IslandGraph;
use serde_json::{json, Value};
use thiserror::Error;

use document::{aggregate, comparison_table, strip_timings, sweep_document, validate_document, SCHEMA_VERSION};
use scenario::{generate_scenarios, prepared_islands, run_case, run_scenarios, Checks, Scenario, ScenarioRecord, SweepSpec};
use settings::Settings;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("settings: {0}")]
    Settings(String),
    #[error("sweep: {0}")]
    Spec(String),
    #[error("{0}")]
    Invalid(String),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("result document breaks the schema: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    Error = 1,
    Infeasible = 2,
}

/// A finished command: its document, exit status and optional text for
/// the terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub doc: Value,
    pub status: ExitStatus,
    pub text: Option<String>,
}

/// Options shared by every command that runs the engine.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub settings: Settings,
    /// Replaces the level weights of the feeder.
    pub weights: Option<Vec<f64>>,
    pub reference: Option<String>,
    /// Zero every wall-clock field so repeated runs emit identical bytes.
    pub omit_timings: bool,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(path.display().to_string(), e))
}

/// Replaces level weights and re-weights the loads.
pub fn set_weights(net: &mut Network, weights: &[f64]) -> Result<(), CliError> {
    if weights.len() != net.weights.len() {
        return Err(CliError::Invalid(format!(
            "{} weights given for {} levels",
            weights.len(),
            net.weights.len()
        )));
    }
    net.weights = weights.to_vec();
    for l in &mut net.loads {
        l.weight = weights[l.level - 1];
    }
    Ok(())
}

/// Reads, re-weights and validates a feeder document.
pub fn load_feeder(path: &Path, opts: &RunOptions) -> Result<Network, CliError> {
    let mut net = parse_feeder(&read(path)?)?;
    if let Some(w) = &opts.weights {
        set_weights(&mut net, w)?;
    }
    let report = validate_network(&net);
    if !report.is_valid() {
        let lines: Vec<String> = report.issues.iter().map(ToString::to_string).collect();
        return Err(CliError::Invalid(format!("{}: {}", path.display(), lines.join("; "))));
    }
    Ok(net)
}

pub fn load_event(path: &Path) -> Result<EventSpec, CliError> {
    Ok(EventSpec::from_json(&read(path)?)?)
}

fn finish(mut doc: Value, status: ExitStatus, text: Option<String>, opts: &RunOptions) -> Result<Outcome, CliError> {
    if opts.omit_timings {
        strip_timings(&mut doc);
    }
    validate_document(&doc).map_err(|e| CliError::Schema(e.join("; ")))?;
    Ok(Outcome { doc, status, text })
}

/// Where `solve` writes its tables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveOutputs {
    pub phasors: Option<PathBuf>,
    pub trajectory: Option<PathBuf>,
}

pub fn phasor_csv(plans: &[&RestorationPlan]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(["island", "bus", "phase", "magnitude_pu", "angle_deg"])?;
    for p in plans {
        let Some(d) = &p.dispatch else { continue };
        for b in &d.buses {
            for (k, ph) in b.phases.iter().enumerate() {
                w.write_record([
                    p.island.to_string(),
                    b.bus.clone(),
                    ph.label().to_string(),
                    format!("{:.6}", b.magnitude[k]),
                    format!("{:.4}", b.angle_deg[k]),
                ])?;
            }
        }
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8"))
}

/// Per-solve bound trajectory, ready for plotting.
pub fn trajectory_csv(plans: &[&RestorationPlan]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(["island", "solve", "w_sdp", "w_int", "rank_ratio", "branch", "k_star", "n_re"])?;
    for p in plans {
        let Some(t) = &p.trace else { continue };
        for s in &t.states {
            let branch = serde_json::to_value(s.branch()).expect("branch serializes");
            w.write_record([
                p.island.to_string(),
                s.index.to_string(),
                format!("{:.9}", s.w_sdp),
                format!("{:.9}", s.w_int),
                format!("{:.3e}", s.rank_ratio),
                branch.as_str().unwrap_or_default().to_string(),
                s.step.as_ref().map(|x| x.k_star.to_string()).unwrap_or_default(),
                s.step.as_ref().map(|x| x.n_re.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8"))
}

/// Plans every island of one event.
pub fn run_solve(feeder: &Path, event: &Path, opts: &RunOptions, out: &SolveOutputs) -> Result<Outcome, CliError> {
    opts.settings.check()?;
    let net = load_feeder(feeder, opts)?;
    let ev = load_event(event)?;
    let post = apply_event(&net, &ev)?;
    let cfg = opts.settings.engine(opts.reference.clone());
    if let Some(r) = &cfg.reference {
        if net.bus(r).is_none() {
            return Err(CliError::Invalid(format!("unknown reference bus \"{r}\"")));
        }
    }
    let results = solve_restoration(&post, &cfg);

    let plans: Vec<&RestorationPlan> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let failures: Vec<_> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    for f in &failures {
        log::error!("island {}: {}", f.island, f.error);
    }
    let restored: Vec<&String> = plans.iter().flat_map(|p| &p.restored).collect();
    let summary = json!({
        "objective": plans.iter().map(|p| p.objective).sum::<f64>(),
        "restored": restored,
        "iterations": plans.iter().map(|p| p.iterations()).max().unwrap_or(0),
        "verified": failures.is_empty() && plans.iter().all(|p| p.verdict == Verdict::VerifiedGlobal),
        "max_rank_ratio": plans.iter().map(|p| p.max_rank_ratio()).fold(0.0, f64::max),
        "seconds": plans.iter().map(|p| p.seconds).sum::<f64>(),
    });
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "kind": "solve",
        "feeder": net.name,
        "event": ev,
        "summary": summary,
        "plans": plans,
        "failures": failures,
    });

    if let Some(p) = &out.phasors {
        write(p, &phasor_csv(&plans)?)?;
    }
    if let Some(p) = &out.trajectory {
        write(p, &trajectory_csv(&plans)?)?;
    }
    let status = if failures.iter().any(|f| f.infeasible) {
        ExitStatus::Infeasible
    } else if failures.is_empty() {
        ExitStatus::Ok
    } else {
        ExitStatus::Error
    };
    finish(doc, status, None, opts)
}

/// Randomised sweep around a base feeder.
pub fn run_sweep(feeder: &Path, spec: &SweepSpec, checks: Checks, opts: &RunOptions) -> Result<Outcome, CliError> {
    opts.settings.check()?;
    let net = load_feeder(feeder, opts)?;
    let scenarios = generate_scenarios(&net, spec)?;
    let cfg = opts.settings.engine(opts.reference.clone());
    let records = run_scenarios(&net, &scenarios, &cfg, &opts.settings.oracle(), checks);
    let doc = sweep_document(&net.name, spec, &records);
    let text = doc["aggregate"]["milp"]
        .is_object()
        .then(|| comparison_table(&aggregate(&records).milp.expect("linear model compared")));
    finish(doc, ExitStatus::Ok, text, opts)
}

/// Engine against the linear model (and the cone model on single-phase
/// islands), for one event or a sweep.
pub fn run_compare(
    feeder: &Path,
    event: Option<&Path>,
    spec: &SweepSpec,
    opts: &RunOptions,
) -> Result<Outcome, CliError> {
    opts.settings.check()?;
    let checks = Checks {
        milp: true,
        misocp: true,
        ..Checks::default()
    };
    let net = load_feeder(feeder, opts)?;
    let cfg = opts.settings.engine(opts.reference.clone());
    let records: Vec<ScenarioRecord> = match event {
        Some(path) => {
            let ev = load_event(path)?;
            let case = run_case(&net, &ev, &cfg, &opts.settings.oracle(), checks)?;
            vec![ScenarioRecord {
                scenario: Scenario {
                    index: 0,
                    faults: ev.faulted_lines.clone(),
                    ratings: vec![],
                    levels: vec![],
                },
                case: Some(case),
                error: None,
            }]
        }
        None => {
            let scenarios = generate_scenarios(&net, spec)?;
            run_scenarios(&net, &scenarios, &cfg, &opts.settings.oracle(), checks)
        }
    };
    let agg = aggregate(&records);
    let table = agg.milp.as_ref().map(comparison_table).unwrap_or_default();
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "kind": "compare",
        "feeder": net.name,
        "spec": event.is_none().then_some(spec),
        "aggregate": agg,
        "table": table,
        "scenarios": records,
    });
    finish(doc, ExitStatus::Ok, Some(table), opts)
}

fn load_ids(net: &Network, g: &IslandGraph) -> Vec<String> {
    net.loads
        .iter()
        .filter(|l| g.contains_bus(&l.bus))
        .map(|l| l.id.clone())
        .collect()
}

/// Exhaustive search next to the engine on every island of an event.
pub fn run_oracle(feeder: &Path, event: &Path, opts: &RunOptions) -> Result<Outcome, CliError> {
    opts.settings.check()?;
    let net = load_feeder(feeder, opts)?;
    let ev = load_event(event)?;
    let post = apply_event(&net, &ev)?;
    let cfg = opts.settings.engine(opts.reference.clone());
    let ocfg = opts.settings.oracle();
    let plans = solve_restoration(&post, &cfg);
    let data = prepared_islands(&post, &cfg);

    let mut islands = Vec::new();
    let mut failed = false;
    for (g, d) in &data {
        let plan = plans.iter().find_map(|r| r.as_ref().ok().filter(|p| p.island == g.id));
        let engine = plan.map(|p| json!({"restored": p.restored, "objective": p.objective, "verdict": p.verdict}));
        let mut entry = json!({
            "island": g.id,
            "loads": load_ids(&net, g),
            "engine": engine,
            "oracle": null,
            "agrees": null,
        });
        if let Some(d) = d {
            match brute_force_clr(d, &ocfg) {
                Ok(o) => {
                    let optima: Vec<Vec<&String>> = o
                        .optima
                        .iter()
                        .map(|on| d.loads.iter().zip(on).filter(|(_, &x)| x).map(|(l, _)| &l.id).collect())
                        .collect();
                    entry["oracle"] = json!({
                        "objective": o.objective,
                        "optima": optima,
                        "examined": o.examined,
                        "solved": o.solved,
                        "feasible": o.feasible,
                    });
                    if let Some(p) = plan {
                        entry["agrees"] = json!((p.objective - o.objective).abs() <= 1e-9 * o.objective.abs().max(1.0));
                    }
                }
                Err(e) => {
                    failed = true;
                    entry["error"] = json!(e.to_string());
                }
            }
        }
        islands.push(entry);
    }
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "kind": "oracle",
        "feeder": net.name,
        "event": ev,
        "islands": islands,
    });
    finish(doc, if failed { ExitStatus::Error } else { ExitStatus::Ok }, None, opts)
}

/// Checks a feeder (with an optional event) and/or a result document.
pub fn run_validate(
    feeder: Option<&Path>,
    event: Option<&Path>,
    result: Option<&Path>,
    opts: &RunOptions,
) -> Result<Outcome, CliError> {
    let mut doc = json!({ "schema_version": SCHEMA_VERSION, "kind": "validate", "valid": true });
    let mut problems: Vec<String> = vec![];

    if let Some(path) = feeder {
        let mut net = parse_feeder(&read(path)?)?;
        if let Some(w) = &opts.weights {
            set_weights(&mut net, w)?;
        }
        let report = validate_network(&net);
        problems.extend(report.issues.iter().map(ToString::to_string));
        doc["feeder"] = json!(net.name);
        doc["issues"] = json!(report.issues);
        if let Some(e) = event {
            let ev = load_event(e)?;
            let post = apply_event(&net, &ev)?;
            let islands: Vec<Value> = find_target_islands::<f64>(&post)
                .iter()
                .map(|g| {
                    json!({
                        "island": g.id,
                        "buses": g.vertices,
                        "sources": g.sources,
                        "loads": load_ids(&post.net, g),
                        "restorable": g.restorable(),
                    })
                })
                .collect();
            doc["event"] = json!(ev);
            doc["islands"] = json!(islands);
        }
    }
    if let Some(path) = result {
        let v: Value = serde_json::from_str(&read(path)?)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        let errors = validate_document(&v).err().unwrap_or_default();
        problems.extend(errors.iter().map(|e| format!("{}: {e}", path.display())));
        doc["result_errors"] = json!(errors);
    }
    if feeder.is_none() && result.is_none() {
        return Err(CliError::Invalid("nothing to validate".into()));
    }
    doc["valid"] = json!(problems.is_empty());
    let status = if problems.is_empty() { ExitStatus::Ok } else { ExitStatus::Error };
    finish(doc, status, (!problems.is_empty()).then(|| problems.join("\n")), opts)
}
