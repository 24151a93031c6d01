use std::time::Instant;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use restoration::conic::solve_mip;
use restoration::engine::{solve_restoration, EngineConfig, RestorationPlan, Verdict};
use restoration::models::{build_clr_milp, build_clr_misocp, misocp_flows, prepare_island, socp_exactness, Fixes, IslandData};
use restoration::netmodel::{apply_event, EventSpec, LineKind, LineState, Network, PostEventNetwork};
use restoration::oracle::{brute_force_clr, OracleConfig};
use restoration::topology::{find_target_islands, minimum_diameter_spanning_tree};
use restoration::IslandGraph;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Randomisation ranges of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub scenarios: usize,
    pub seed: u64,
    pub min_faults: usize,
    pub max_faults: usize,
    /// Lines that may fault. Empty means every closed fixed line.
    pub fault_lines: Vec<String>,
    /// Each source rating is scaled by a uniform draw from this range.
    pub min_rating_scale: f64,
    pub max_rating_scale: f64,
    /// Permute the priority levels among the loads.
    pub shuffle_levels: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            scenarios: 200,
            seed: 0,
            min_faults: 1,
            max_faults: 2,
            fault_lines: vec![],
            min_rating_scale: 0.5,
            max_rating_scale: 1.5,
            shuffle_levels: true,
        }
    }
}

impl SweepSpec {
    pub fn check(&self) -> Result<(), CliError> {
        if self.min_faults > self.max_faults {
            return Err(CliError::Spec("min_faults exceeds max_faults".into()));
        }
        let (lo, hi) = (self.min_rating_scale, self.max_rating_scale);
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(CliError::Spec("rating scale range must satisfy 0 <= min <= max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub index: usize,
    pub faults: Vec<String>,
    /// Source id and rating multiplier.
    pub ratings: Vec<(String, f64)>,
    /// Load id and priority level.
    pub levels: Vec<(String, usize)>,
}

impl Scenario {
    /// The modified network and the event to apply to it.
    pub fn apply(&self, base: &Network) -> (Network, EventSpec) {
        let mut net = base.clone();
        for (id, scale) in &self.ratings {
            if let Some(s) = net.sources.iter_mut().find(|s| &s.id == id) {
                s.p_rate_kw *= scale;
                s.q_rate_kvar *= scale;
            }
        }
        for (id, level) in &self.levels {
            if let Some(l) = net.loads.iter_mut().find(|l| &l.id == id) {
                l.level = *level;
                l.weight = base.weights[level - 1];
            }
        }
        let ev = EventSpec {
            faulted_lines: self.faults.clone(),
            unavailable_sources: vec![],
        };
        (net, ev)
    }
}

/// Draws the scenarios of a sweep. The same seed gives the same sequence.
pub fn generate_scenarios(base: &Network, spec: &SweepSpec) -> Result<Vec<Scenario>, CliError> {
    spec.check()?;
    let candidates: Vec<String> = if spec.fault_lines.is_empty() {
        base.lines
            .iter()
            .filter(|l| l.kind == LineKind::Fixed && l.state == LineState::Closed)
            .map(|l| l.id.clone())
            .collect()
    } else {
        for id in &spec.fault_lines {
            if base.find_line(id).is_none() {
                return Err(CliError::Spec(format!("unknown fault line \"{id}\"")));
            }
        }
        spec.fault_lines.clone()
    };
    if spec.max_faults > candidates.len() {
        return Err(CliError::Spec(format!(
            "{} faults requested but only {} lines may fault",
            spec.max_faults,
            candidates.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let levels: Vec<usize> = base.loads.iter().map(|l| l.level).collect();
    Ok((0..spec.scenarios)
        .map(|index| {
            let n = rng.random_range(spec.min_faults..=spec.max_faults);
            let mut faults: Vec<String> = candidates.choose_multiple(&mut rng, n).cloned().collect();
            faults.sort();
            let ratings = base
                .sources
                .iter()
                .map(|s| {
                    let k = if spec.min_rating_scale == spec.max_rating_scale {
                        spec.min_rating_scale
                    } else {
                        rng.random_range(spec.min_rating_scale..spec.max_rating_scale)
                    };
                    (s.id.clone(), k)
                })
                .collect();
            let mut lv = levels.clone();
            if spec.shuffle_levels {
                lv.shuffle(&mut rng);
            }
            Scenario {
                index,
                faults,
                ratings,
                levels: base.loads.iter().map(|l| l.id.clone()).zip(lv).collect(),
            }
        })
        .collect())
}

/// Which cross-checks to run next to the engine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Checks {
    pub oracle: bool,
    pub milp: bool,
    /// Cone model on single-phase islands.
    pub misocp: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub objective: f64,
    pub optima: usize,
    pub examined: usize,
    pub solved: usize,
    /// Engine and exhaustive objectives coincide.
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MilpCheck {
    pub restored: Vec<String>,
    pub objective: f64,
    pub nodes: usize,
    pub seconds: f64,
    pub same: bool,
    /// The linear model restores everything the engine does and more.
    pub superset: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MisocpCheck {
    pub restored: Vec<String>,
    pub objective: f64,
    /// Worst normalised gap of the cone constraints at the optimum.
    pub residual: f64,
    pub same: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IslandRecord {
    pub island: usize,
    pub loads: usize,
    pub restored: Vec<String>,
    pub objective: f64,
    pub iterations: usize,
    pub verdict: Verdict,
    pub max_rank_ratio: f64,
    /// Relaxation bound and integral part per solve.
    pub w_sdp: Vec<f64>,
    pub w_int: Vec<f64>,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub milp: Option<MilpCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub misocp: Option<MisocpCheck>,
    /// Failure of the engine or of a cross-check.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

impl IslandRecord {
    fn from_plan(p: &RestorationPlan) -> Self {
        let (w_sdp, w_int) = p
            .trace
            .as_ref()
            .map(|t| t.states.iter().map(|s| (s.w_sdp, s.w_int)).unzip())
            .unwrap_or_default();
        IslandRecord {
            island: p.island,
            loads: p.restored.len() + p.unserved.len(),
            restored: p.restored.clone(),
            objective: p.objective,
            iterations: p.iterations(),
            verdict: p.verdict,
            max_rank_ratio: p.max_rank_ratio(),
            w_sdp,
            w_int,
            seconds: p.seconds,
            oracle: None,
            milp: None,
            misocp: None,
            errors: vec![],
        }
    }

    pub fn verified(&self) -> bool {
        self.verdict == Verdict::VerifiedGlobal && self.errors.is_empty()
    }
}

/// Engine results of one event with optional cross-checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseRecord {
    pub islands: Vec<IslandRecord>,
    /// Islands the engine could not plan.
    pub failures: Vec<String>,
    pub infeasible: bool,
    pub objective: f64,
    /// Largest iteration count over the islands.
    pub iterations: usize,
    pub verified: bool,
    pub seconds: f64,
}

/// Island data as the engine builds it, or `None` without a source.
pub fn prepared_islands(post: &PostEventNetwork, cfg: &EngineConfig) -> Vec<(IslandGraph, Option<IslandData>)> {
    find_target_islands(post)
        .into_iter()
        .map(|g: IslandGraph| {
            let d = g.restorable().then(|| {
                let t = minimum_diameter_spanning_tree(&g).ok()?;
                let r = cfg.reference.as_deref().filter(|r| g.contains_bus(r));
                prepare_island(&post.net, &g, &t, r).ok()
            });
            (g, d.flatten())
        })
        .collect()
}

/// Restored set of the lossless linear model.
pub fn milp_restore(d: &IslandData, cfg: &EngineConfig) -> Result<(Vec<bool>, usize, f64), String> {
    let started = Instant::now();
    let (p, map) = build_clr_milp(d, &Fixes::new());
    let sol = solve_mip(&p, &cfg.solver).map_err(|e| e.to_string())?;
    if !sol.is_optimal() {
        return Err(format!("linear model ended {:?}", sol.status));
    }
    let g = map.gamma_values(&sol).ok_or("linear model returned no values")?;
    Ok((g.iter().map(|&x| x > 0.5).collect(), sol.stats.nodes, started.elapsed().as_secs_f64()))
}

/// Restored set of the mixed-integer cone model and its exactness residual.
pub fn misocp_restore(d: &IslandData, cfg: &EngineConfig) -> Result<(Vec<bool>, f64), String> {
    let (p, map) = build_clr_misocp(d, None, &Fixes::new(), true).map_err(|e| e.to_string())?;
    let sol = solve_mip(&p, &cfg.solver).map_err(|e| e.to_string())?;
    if !sol.is_optimal() {
        return Err(format!("cone model ended {:?}", sol.status));
    }
    let on: Vec<bool> = map.gamma_values(&sol).ok_or("cone model returned no values")?.iter().map(|&x| x > 0.5).collect();
    let (sol, map) = misocp_flows(d, &on, &cfg.solver).map_err(|e| e.to_string())?;
    let residual = socp_exactness(&sol, &map).ok_or("cone model returned no values")?;
    Ok((on, residual))
}

fn pick(d: &IslandData, on: &[bool]) -> Vec<String> {
    d.loads.iter().zip(on).filter(|(_, &x)| x).map(|(l, _)| l.id.clone()).collect()
}

fn weight_of(d: &IslandData, on: &[bool]) -> f64 {
    d.loads.iter().zip(on).filter(|(_, &x)| x).map(|(l, _)| l.weight).sum()
}

fn objectives_agree(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Plans an event and runs the requested cross-checks per island.
pub fn run_case(net: &Network, ev: &EventSpec, cfg: &EngineConfig, oracle: &OracleConfig, checks: Checks) -> Result<CaseRecord, CliError> {
    let started = Instant::now();
    let post = apply_event(net, ev)?;
    let plans = solve_restoration(&post, cfg);
    let data = if checks.oracle || checks.milp || checks.misocp {
        prepared_islands(&post, cfg)
    } else {
        vec![]
    };

    let mut islands = Vec::new();
    let mut failures = Vec::new();
    let mut infeasible = false;
    for r in &plans {
        let p = match r {
            Ok(p) => p,
            Err(f) => {
                infeasible |= f.infeasible;
                failures.push(format!("island {}: {}", f.island, f.error));
                continue;
            }
        };
        let mut rec = IslandRecord::from_plan(p);
        let d = data.iter().find(|(g, _)| g.id == p.island).and_then(|(_, d)| d.as_ref());
        if let Some(d) = d {
            if checks.oracle {
                match brute_force_clr(d, oracle) {
                    Ok(o) => {
                        rec.oracle = Some(OracleCheck {
                            agrees: objectives_agree(o.objective, p.objective),
                            objective: o.objective,
                            optima: o.optima.len(),
                            examined: o.examined,
                            solved: o.solved,
                        })
                    }
                    Err(e) => rec.errors.push(format!("oracle: {e}")),
                }
            }
            if checks.milp {
                match milp_restore(d, cfg) {
                    Ok((on, nodes, seconds)) => {
                        let ids = pick(d, &on);
                        let objective = weight_of(d, &on);
                        let same = ids == rec.restored;
                        let superset = !same && rec.restored.iter().all(|r| ids.contains(r));
                        rec.milp = Some(MilpCheck {
                            restored: ids,
                            objective,
                            nodes,
                            seconds,
                            same,
                            superset,
                        });
                    }
                    Err(e) => rec.errors.push(format!("milp: {e}")),
                }
            }
            if checks.misocp && d.single_phase() {
                match misocp_restore(d, cfg) {
                    Ok((on, residual)) => {
                        let ids = pick(d, &on);
                        rec.misocp = Some(MisocpCheck {
                            same: ids == rec.restored,
                            objective: weight_of(d, &on),
                            restored: ids,
                            residual,
                        });
                    }
                    Err(e) => rec.errors.push(format!("misocp: {e}")),
                }
            }
        }
        islands.push(rec);
    }
    Ok(CaseRecord {
        objective: islands.iter().map(|i| i.objective).sum(),
        iterations: islands.iter().map(|i| i.iterations).max().unwrap_or(0),
        verified: failures.is_empty() && islands.iter().all(IslandRecord::verified),
        islands,
        failures,
        infeasible,
        seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioRecord {
    pub scenario: Scenario,
    #[serde(flatten)]
    pub case: Option<CaseRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Runs every scenario, in parallel, returning records in scenario order.
pub fn run_scenarios(
    base: &Network,
    scenarios: &[Scenario],
    cfg: &EngineConfig,
    oracle: &OracleConfig,
    checks: Checks,
) -> Vec<ScenarioRecord> {
    scenarios
        .par_iter()
        .map(|sc| {
            let (net, ev) = sc.apply(base);
            match run_case(&net, &ev, cfg, oracle, checks) {
                Ok(case) => {
                    for f in &case.failures {
                        log::warn!("scenario {}: {f}", sc.index);
                    }
                    ScenarioRecord {
                        scenario: sc.clone(),
                        case: Some(case),
                        error: None,
                    }
                }
                Err(e) => {
                    log::warn!("scenario {}: {e}", sc.index);
                    ScenarioRecord {
                        scenario: sc.clone(),
                        case: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect()
}
