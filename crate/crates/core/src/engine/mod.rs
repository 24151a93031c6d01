//! Load pickup by iterating the semidefinite relaxation.
//!
//! Each round solves the relaxation, pins fully restored loads on and drops
//! loads the objective gap cannot pay for, until every status is integral.
//! The trace of bounds then either certifies the answer as globally optimal
//! or leaves it unverified. A final fixed-status solve sets the dispatch.

mod criterion;
mod iterate;
mod weights;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::conic::{ConicError, SolveStatus, SolverSettings};
use crate::models::{
    prepare_island, recover_phasors, solve_dispatch, IslandData, ModelError, PhasorProfile, SdpOptions, EXACTNESS_THRESHOLD,
};
use crate::netmodel::PostEventNetwork;
use crate::topology::{find_target_islands, minimum_diameter_spanning_tree, TopologyError};
use crate::{IslandGraph, SpanningTree};

pub use criterion::{
    check_optimality_criterion, check_sufficient_conditions, ClosePair, SufficiencyReport, ThinLine, Verdict,
};
pub use iterate::{
    add_constraints, binding_loads, classify, iterate, Branch, Classification, ConstraintBatch, IterState,
    IterationTrace, StepOutcome, Termination,
};
pub use weights::{
    compute_n_re, identify_k_star, validate_weights, DominanceViolation, LevelViolation, WeightReport, WeightScheme,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid weights: {0}")]
    Weights(String),
    #[error("level weight is zero")]
    ZeroWeight,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("solve {iteration}: {source}")]
    Solver { iteration: usize, source: ConicError },
    #[error("solve {iteration} ended {status:?}")]
    NotSolved { iteration: usize, status: SolveStatus },
    #[error("no new status fixed after solve {0}")]
    NoProgress(usize),
    #[error("dispatch with fixed statuses ended {0:?}")]
    Dispatch(SolveStatus),
}

impl EngineError {
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            EngineError::NotSolved {
                status: SolveStatus::Infeasible,
                ..
            } | EngineError::Dispatch(SolveStatus::Infeasible)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Statuses within this of 0 or 1 count as integral.
    pub integrality_tol: f64,
    /// Relative distance at which a voltage or current limit binds.
    pub binding_tol: f64,
    pub exactness_threshold: f64,
    /// Factor required by the per-kW weight dominance check.
    pub dominance_margin: f64,
    pub ampacity_multiple: f64,
    pub kw_gap: f64,
    /// Reference bus override, used by the island that contains it.
    pub reference: Option<String>,
    pub sdp: SdpOptions,
    pub dispatch: SdpOptions,
    pub solver: SolverSettings<f64>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            integrality_tol: 1e-4,
            binding_tol: 1e-4,
            exactness_threshold: EXACTNESS_THRESHOLD,
            dominance_margin: 10.0,
            ampacity_multiple: 2.0,
            kw_gap: 0.01,
            reference: None,
            sdp: SdpOptions::default(),
            dispatch: SdpOptions::dispatch(),
            solver: SolverSettings::default(),
        }
    }
}

/// Switch actions of the chosen tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopologySummary {
    pub lines: Vec<String>,
    pub close: Vec<String>,
    pub open: Vec<String>,
    pub diameter: f64,
}

impl TopologySummary {
    pub fn new(g: &IslandGraph, t: &SpanningTree) -> Self {
        TopologySummary {
            lines: t.line_ids(g).map(String::from).collect(),
            close: t.close.clone(),
            open: t.open.clone(),
            diameter: t.diameter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestorationPlan {
    pub island: usize,
    pub buses: Vec<String>,
    pub reference: Option<String>,
    pub topology: Option<TopologySummary>,
    /// Load ids in island order.
    pub restored: Vec<String>,
    pub unserved: Vec<String>,
    /// Sum of the weights of the restored loads.
    pub objective: f64,
    pub dispatch: Option<PhasorProfile>,
    pub trace: Option<IterationTrace>,
    pub verdict: Verdict,
    pub weights: Option<WeightReport>,
    pub sufficiency: Option<SufficiencyReport>,
    pub seconds: f64,
}

impl RestorationPlan {
    pub fn iterations(&self) -> usize {
        self.trace.as_ref().map_or(0, IterationTrace::iterations)
    }

    /// Worst rank ratio over the iteration solves.
    pub fn max_rank_ratio(&self) -> f64 {
        self.trace.as_ref().map_or(0.0, IterationTrace::max_rank_ratio)
    }

    fn empty(g: &IslandGraph, unserved: Vec<String>) -> Self {
        RestorationPlan {
            island: g.id,
            buses: g.vertices.clone(),
            reference: None,
            topology: None,
            restored: vec![],
            unserved,
            objective: 0.0,
            dispatch: None,
            trace: None,
            verdict: Verdict::VerifiedGlobal,
            weights: None,
            sufficiency: None,
            seconds: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IslandFailure {
    pub island: usize,
    pub buses: Vec<String>,
    pub error: String,
    /// The solver proved a fixed-status or relaxed problem infeasible.
    pub infeasible: bool,
}

/// Least-generation operating point for fixed statuses, with phasors.
pub fn final_dispatch(d: &IslandData, restored: &[bool], cfg: &EngineConfig) -> Result<PhasorProfile, EngineError> {
    let (sol, map) = solve_dispatch(d, restored, &cfg.dispatch, &cfg.solver, cfg.exactness_threshold).map_err(|e| match e {
        ModelError::Solver(source) => EngineError::Solver {
            iteration: usize::MAX,
            source,
        },
        ModelError::NotSolved(status) => EngineError::Dispatch(status),
        e => e.into(),
    })?;
    Ok(recover_phasors(d, &sol, &map, cfg.exactness_threshold)?)
}

/// Runs the iteration, the certificate and the dispatch on prepared data.
pub fn plan_island(d: &IslandData, cfg: &EngineConfig) -> Result<PlanCore, EngineError> {
    let ws = WeightScheme::new(d.weights.clone())?;
    let (restored, trace) = iterate(d, &ws, cfg)?;
    // the certificate leans on the weight ordering; without it a higher
    // level fixed early can block a lower-level set worth more
    let ordered = validate_weights(&ws, &d.loads, 1.0);
    let verdict = match check_optimality_criterion(&trace, &ws) {
        Verdict::VerifiedGlobal if !(ordered.separation_holds() && ordered.dominance_holds()) => Verdict::Unverified,
        v => v,
    };
    let dispatch = final_dispatch(d, &restored, cfg)?;
    Ok(PlanCore {
        restored,
        trace,
        verdict,
        dispatch,
        weights: validate_weights(&ws, &d.loads, cfg.dominance_margin),
        sufficiency: check_sufficient_conditions(d, cfg.ampacity_multiple, cfg.kw_gap),
    })
}

/// Island-level result of [`plan_island`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlanCore {
    pub restored: Vec<bool>,
    pub trace: IterationTrace,
    pub verdict: Verdict,
    pub dispatch: PhasorProfile,
    pub weights: WeightReport,
    pub sufficiency: SufficiencyReport,
}

fn solve_island(post: &PostEventNetwork, g: &IslandGraph, cfg: &EngineConfig) -> Result<RestorationPlan, EngineError> {
    let started = std::time::Instant::now();
    let load_ids: Vec<String> = post
        .net
        .loads
        .iter()
        .filter(|l| g.contains_bus(&l.bus))
        .map(|l| l.id.clone())
        .collect();
    if !g.restorable() {
        return Ok(RestorationPlan::empty(g, load_ids));
    }
    let tree = minimum_diameter_spanning_tree(g)?;
    let reference = cfg.reference.as_deref().filter(|r| g.contains_bus(r));
    let d = prepare_island(&post.net, g, &tree, reference)?;
    let core = plan_island(&d, cfg)?;
    let pick = |on: bool| -> Vec<String> {
        d.loads
            .iter()
            .zip(&core.restored)
            .filter(|(_, &r)| r == on)
            .map(|(l, _)| l.id.clone())
            .collect()
    };
    let objective = d
        .loads
        .iter()
        .zip(&core.restored)
        .filter(|(_, &r)| r)
        .map(|(l, _)| l.weight)
        .sum();
    Ok(RestorationPlan {
        island: g.id,
        buses: g.vertices.clone(),
        reference: Some(d.buses[d.reference].id.clone()),
        topology: Some(TopologySummary::new(g, &tree)),
        restored: pick(true),
        unserved: pick(false),
        objective,
        dispatch: Some(core.dispatch),
        trace: Some(core.trace),
        verdict: core.verdict,
        weights: Some(core.weights),
        sufficiency: Some(core.sufficiency),
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Plans every target island of a post-event network.
///
/// Islands are solved independently; a failure in one is reported in its
/// slot and does not stop the others. Sourceless islands get empty plans.
pub fn solve_restoration(post: &PostEventNetwork, cfg: &EngineConfig) -> Vec<Result<RestorationPlan, IslandFailure>> {
    let islands: Vec<IslandGraph> = find_target_islands(post);
    islands
        .par_iter()
        .map(|g| {
            solve_island(post, g, cfg).map_err(|e| IslandFailure {
                island: g.id,
                buses: g.vertices.clone(),
                infeasible: e.is_infeasible(),
                error: e.to_string(),
            })
        })
        .collect()
}
