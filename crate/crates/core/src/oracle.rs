//! Exhaustive ground truth for small instances.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::conic::{ConicError, SolverSettings};
use crate::models::{rank1_ratio, solve_dispatch, IslandData, ModelError, SdpOptions, EXACTNESS_THRESHOLD};
use crate::scalar::Scalar;
use crate::topology::{tree_diameter, validate_radial, IslandGraph, TopologyError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{count} loads exceed the enumeration limit of {limit}")]
    TooManyLoads { count: usize, limit: usize },
    #[error("{count} extra edges exceed the enumeration limit of {limit}")]
    TooManyEdges { count: usize, limit: usize },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Solver(#[from] ConicError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub max_loads: usize,
    pub exactness_threshold: f64,
    pub solver: SolverSettings<f64>,
    pub dispatch: SdpOptions,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            max_loads: 16,
            exactness_threshold: EXACTNESS_THRESHOLD,
            solver: SolverSettings::default(),
            dispatch: SdpOptions::dispatch(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    /// Every status vector reaching the optimum.
    pub optima: Vec<Vec<bool>>,
    pub objective: f64,
    /// Vectors enumerated, including those screened out without a solve.
    pub examined: usize,
    pub solved: usize,
    pub feasible: usize,
}

/// Whether fixed statuses admit an exact operating point.
pub fn status_feasible(d: &IslandData, on: &[bool], cfg: &OracleConfig) -> Result<bool, ConicError> {
    match solve_dispatch(d, on, &cfg.dispatch, &cfg.solver, cfg.exactness_threshold) {
        Ok((sol, map)) => Ok(rank1_ratio(&sol, &map).is_some_and(|r| r <= cfg.exactness_threshold)),
        Err(ModelError::Solver(e)) => Err(e),
        Err(_) => Ok(false),
    }
}

/// Best load statuses by enumeration.
///
/// Vectors are visited in groups of equal weighted sum, best first. A
/// vector whose demand exceeds the total active or reactive rating is
/// rejected without a solve; the rest are checked with a fixed-status
/// relaxation that must come back optimal and rank one. The first group
/// with a feasible member is returned whole.
pub fn brute_force_clr(d: &IslandData, cfg: &OracleConfig) -> Result<OracleResult, OracleError> {
    let n = d.loads.len();
    if n > cfg.max_loads {
        return Err(OracleError::TooManyLoads {
            count: n,
            limit: cfg.max_loads,
        });
    }
    let total = 1usize << n;
    let bits = |m: usize| -> Vec<bool> { (0..n).map(|i| m >> i & 1 == 1).collect() };
    let weight = |m: usize| -> f64 { (0..n).filter(|i| m >> i & 1 == 1).map(|i| d.loads[i].weight).sum() };

    let p_cap: f64 = d.sources.iter().map(|s| s.p_rate).sum();
    let q_cap: f64 = d.sources.iter().map(|s| s.q_rate).sum();
    let screen = |m: usize| -> bool {
        let (mut p, mut q) = (0.0, 0.0);
        for (_, l) in d.loads.iter().enumerate().filter(|(i, _)| m >> i & 1 == 1) {
            let s: num_complex::Complex64 = l.demand.iter().sum();
            p += s.re;
            q += s.im;
        }
        let slack = 1e-9 * (1.0 + p_cap.max(q_cap));
        p <= p_cap + slack && q <= q_cap + slack
    };

    let mut order: Vec<(f64, usize)> = (0..total).map(|m| (weight(m), m)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut examined = 0;
    let mut solved = 0;
    let mut feasible = 0;
    let mut start = 0;
    while start < order.len() {
        let w = order[start].0;
        let tol = 1e-9 * w.abs().max(1.0);
        let end = start + order[start..].iter().take_while(|(x, _)| (x - w).abs() <= tol).count();
        let group: Vec<usize> = order[start..end].iter().map(|&(_, m)| m).collect();
        examined += group.len();
        let candidates: Vec<usize> = group.into_iter().filter(|&m| screen(m)).collect();
        solved += candidates.len();
        let checks: Vec<Result<bool, ConicError>> = candidates
            .par_iter()
            .map(|&m| status_feasible(d, &bits(m), cfg))
            .collect();
        let mut optima = Vec::new();
        for (m, ok) in candidates.iter().zip(checks) {
            if ok? {
                optima.push(bits(*m));
            }
        }
        if !optima.is_empty() {
            feasible += optima.len();
            return Ok(OracleResult {
                optima,
                objective: w,
                examined,
                solved,
                feasible,
            });
        }
        start = end;
    }
    // the all-off vector failed too
    Ok(OracleResult {
        optima: vec![],
        objective: 0.0,
        examined,
        solved,
        feasible,
    })
}

/// Smallest diameter over all spanning trees, by dropping every subset of
/// `cyclomatic` edges and keeping the drops that leave a tree.
pub fn brute_force_mdst<T: Scalar>(g: &IslandGraph<T>, max_extra_edges: usize) -> Result<T, OracleError> {
    if g.vertices.is_empty() {
        return Err(TopologyError::Empty.into());
    }
    let m = g.edges.len();
    let n = g.vertices.len();
    if m + 1 < n {
        return Err(TopologyError::Disconnected.into());
    }
    let extra = m + 1 - n;
    if extra > max_extra_edges {
        return Err(OracleError::TooManyEdges {
            count: extra,
            limit: max_extra_edges,
        });
    }
    let mut best: Option<T> = None;
    let mut drop: Vec<usize> = (0..extra).collect();
    loop {
        let keep: Vec<usize> = (0..m).filter(|k| !drop.contains(k)).collect();
        if validate_radial(g, &keep) {
            let d = tree_diameter(g, &keep)?;
            if best.is_none_or(|b| d < b) {
                best = Some(d);
            }
        }
        // next combination in lexicographic order
        let Some(i) = (0..extra).rev().find(|&i| drop[i] < m - extra + i) else {
            break;
        };
        drop[i] += 1;
        for j in i + 1..extra {
            drop[j] = drop[j - 1] + 1;
        }
    }
    best.ok_or(OracleError::Topology(TopologyError::Disconnected))
}
