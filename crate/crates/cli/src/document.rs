use serde::Serialize;
use serde_json::{json, Value};

use crate::scenario::{CaseRecord, ScenarioRecord, SweepSpec};

pub const SCHEMA_VERSION: &str = "1.0";

/// JSON schema every emitted document satisfies.
pub const RESULT_SCHEMA: &str = include_str!("../../../schema/result.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub iterations: usize,
    pub scenarios: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OracleSummary {
    /// Islands the exhaustive search finished on.
    pub checked: usize,
    pub agree: usize,
    /// Verified islands whose objective differs from the search.
    pub verified_disagree: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MilpSummary {
    /// Scenarios where every island was compared.
    pub compared: usize,
    pub same: usize,
    pub different: usize,
    /// Scenarios where the linear model restores a strict superset.
    pub superset: usize,
    pub engine_mean_seconds: f64,
    pub milp_mean_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepAggregate {
    pub scenarios: usize,
    pub completed: usize,
    pub failed: usize,
    pub iteration_histogram: Vec<HistogramBin>,
    pub verified: usize,
    pub verified_rate: f64,
    pub max_rank_ratio: f64,
    pub mean_seconds: f64,
    pub max_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub milp: Option<MilpSummary>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn aggregate(records: &[ScenarioRecord]) -> SweepAggregate {
    let cases: Vec<&CaseRecord> = records.iter().filter_map(|r| r.case.as_ref()).collect();
    let top = cases.iter().map(|c| c.iterations).max().unwrap_or(0);
    let iteration_histogram = (0..=top)
        .map(|k| HistogramBin {
            iterations: k,
            scenarios: cases.iter().filter(|c| c.iterations == k).count(),
        })
        .collect();
    let verified = cases.iter().filter(|c| c.verified).count();
    let islands = || cases.iter().flat_map(|c| c.islands.iter());

    let oracle = islands().any(|i| i.oracle.is_some() || i.errors.iter().any(|e| e.starts_with("oracle"))).then(|| {
        let mut s = OracleSummary::default();
        for i in islands() {
            match &i.oracle {
                Some(o) => {
                    s.checked += 1;
                    s.agree += o.agrees as usize;
                    s.verified_disagree += (i.verified() && !o.agrees) as usize;
                }
                None => s.errors += i.errors.iter().filter(|e| e.starts_with("oracle")).count(),
            }
        }
        s
    });

    let milp = islands().any(|i| i.milp.is_some()).then(|| {
        let mut s = MilpSummary::default();
        let compared: Vec<&&CaseRecord> = cases
            .iter()
            .filter(|c| c.failures.is_empty() && c.islands.iter().all(|i| i.milp.is_some() || i.loads == 0))
            .collect();
        s.compared = compared.len();
        for c in &compared {
            let ms: Vec<_> = c.islands.iter().filter_map(|i| i.milp.as_ref()).collect();
            if ms.iter().all(|m| m.same) {
                s.same += 1;
            } else {
                s.different += 1;
                if ms.iter().all(|m| m.same || m.superset) {
                    s.superset += 1;
                }
            }
        }
        s.engine_mean_seconds = mean(compared.iter().map(|c| c.islands.iter().map(|i| i.seconds).sum()));
        s.milp_mean_seconds = mean(
            compared
                .iter()
                .map(|c| c.islands.iter().filter_map(|i| i.milp.as_ref()).map(|m| m.seconds).sum()),
        );
        s
    });

    SweepAggregate {
        scenarios: records.len(),
        completed: cases.len(),
        failed: records.len() - cases.len(),
        iteration_histogram,
        verified,
        verified_rate: if records.is_empty() {
            0.0
        } else {
            verified as f64 / records.len() as f64
        },
        max_rank_ratio: islands().map(|i| i.max_rank_ratio).fold(0.0, f64::max),
        mean_seconds: mean(cases.iter().map(|c| c.seconds)),
        max_seconds: cases.iter().map(|c| c.seconds).fold(0.0, f64::max),
        oracle,
        milp,
    }
}

/// Plain-text summary of an engine/linear-model comparison.
pub fn comparison_table(m: &MilpSummary) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<48}{:>12}{:>12}\n", "Formulations", "SDP engine", "MILP"));
    out.push_str(&format!(
        "{:<48}{:>12.3}{:>12.3}\n",
        "Average computation time (s)", m.engine_mean_seconds, m.milp_mean_seconds
    ));
    out.push_str(&format!(
        "{:<48}{:>24}\n",
        "Number of scenarios with same/different results",
        format!("{}/{}", m.same, m.different)
    ));
    out.push_str(&format!(
        "{:<48}{:>24}\n",
        "Scenarios where the MILP restores a superset", m.superset
    ));
    out
}

pub fn sweep_document(feeder: &str, spec: &SweepSpec, records: &[ScenarioRecord]) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "kind": "sweep",
        "feeder": feeder,
        "spec": spec,
        "aggregate": aggregate(records),
        "scenarios": records,
    })
}

/// Removes wall-clock fields so documents of repeated runs compare equal.
pub fn strip_timings(v: &mut Value) {
    match v {
        Value::Object(m) => {
            for (k, x) in m.iter_mut() {
                if k == "seconds" || k.ends_with("_seconds") {
                    *x = json!(0.0);
                } else {
                    strip_timings(x);
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(strip_timings),
        _ => {}
    }
}

/// Checks a document against [`RESULT_SCHEMA`].
pub fn validate_document(doc: &Value) -> Result<(), Vec<String>> {
    let schema: Value = serde_json::from_str(RESULT_SCHEMA).expect("bundled schema is JSON");
    let validator = jsonschema::validator_for(&schema).expect("bundled schema compiles");
    let errors: Vec<String> = validator
        .iter_errors(doc)
        .map(|e| format!("{}: {}", e.instance_path, e))
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}
