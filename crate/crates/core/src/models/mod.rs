//! Restoration formulations over a chosen island and radial topology.
//!
//! [`IslandData`] carries the per-unit island with its tree oriented away
//! from the reference bus. Three builders produce conic programs from it:
//! the semidefinite relaxation of the unbalanced branch flow model, the
//! second-order cone model for single-phase islands, and the lossless linear
//! model with binary load statuses.

mod cmat;
mod diagnostics;
mod milp;
mod misocp;
mod sdp;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::netmodel::{Network, PhaseSet};
use crate::topology::{orient, IslandGraph, SpanningTree};

pub use diagnostics::{
    balance_mismatch, block_rank_ratio, line_block_values, rank1_ratio, recover_phasors, socp_exactness, BusPhasors,
    PhasorProfile, SourceOutput, EXACTNESS_THRESHOLD,
};
pub use milp::{build_clr_milp, MilpMap};
pub use misocp::{build_clr_misocp, misocp_flows, SocpMap};
pub use sdp::{build_clr_sdp, solve_dispatch, SdpMap, SdpObjective, SdpOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("island {0} has no source")]
    NoSource(usize),
    #[error("spanning tree does not match island {0}")]
    TreeMismatch(usize),
    #[error("unknown reference bus \"{0}\"")]
    Reference(String),
    #[error("formulation needs a single-phase island: {0}")]
    Unbalanced(String),
    #[error("solution is not rank one (ratio {0:.3e})")]
    NotExact(f64),
    #[error("solution has no values")]
    NoSolution,
    #[error(transparent)]
    Solver(#[from] crate::conic::ConicError),
    #[error("solver ended {0:?}")]
    NotSolved(crate::conic::SolveStatus),
}

/// Load statuses pinned by the caller, keyed by island load index.
pub type Fixes = BTreeMap<usize, bool>;

#[derive(Debug, Clone, PartialEq)]
pub struct BusData {
    pub id: String,
    pub phases: PhaseSet,
    pub kv: f64,
    /// Squared magnitude bounds per phase in canonical order of `phases`.
    pub vmin2: Vec<f64>,
    pub vmax2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineData {
    pub id: String,
    /// Island edge index.
    pub edge: usize,
    pub parent: usize,
    pub child: usize,
    pub phases: PhaseSet,
    pub z: DMatrix<Complex64>,
    /// Squared current limits per line phase.
    pub imax2: Vec<f64>,
    /// Per-phase apparent power limits.
    pub smax: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadData {
    pub id: String,
    pub bus: usize,
    /// Per bus phase, canonical order of the bus's phase set.
    pub demand: Vec<Complex64>,
    pub weight: f64,
    pub level: usize,
    pub kw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceData {
    pub id: String,
    pub bus: usize,
    pub p_rate: f64,
    pub q_rate: f64,
    pub fixed_p: bool,
}

/// Island in per-unit with its tree oriented from the reference bus.
///
/// Powers are per phase on `s_base_kva / 3`, voltages on the line-to-neutral
/// base of each bus.
#[derive(Debug, Clone, PartialEq)]
pub struct IslandData {
    pub island: usize,
    pub s_base_kva: f64,
    pub weights: Vec<f64>,
    pub reference: usize,
    /// Nominal phasors at the reference bus, indexed by phase.
    pub v0: [Complex64; 3],
    pub buses: Vec<BusData>,
    /// Breadth-first from the reference.
    pub lines: Vec<LineData>,
    pub loads: Vec<LoadData>,
    pub sources: Vec<SourceData>,
}

impl IslandData {
    /// Per-phase power base in kVA.
    pub fn s_phase(&self) -> f64 {
        self.s_base_kva / 3.0
    }

    pub fn load_index(&self, id: &str) -> Option<usize> {
        self.loads.iter().position(|l| l.id == id)
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Line whose child is `bus`.
    pub fn parent_line(&self, bus: usize) -> Option<usize> {
        self.lines.iter().position(|l| l.child == bus)
    }

    /// Lines touching `bus` in either direction.
    pub fn incident_lines(&self, bus: usize) -> impl Iterator<Item = usize> + '_ {
        self.lines
            .iter()
            .enumerate()
            .filter(move |(_, l)| l.parent == bus || l.child == bus)
            .map(|(k, _)| k)
    }

    /// Positions of `sub` inside the phases of bus `b`.
    pub(crate) fn positions(&self, b: usize, sub: PhaseSet) -> Vec<usize> {
        sub.iter()
            .map(|p| self.buses[b].phases.position(p).expect("line phases on bus"))
            .collect()
    }

    pub fn total_demand_kw(&self) -> f64 {
        self.loads.iter().map(|l| l.kw).sum()
    }

    /// Whether every bus and line uses one and the same phase.
    pub fn single_phase(&self) -> bool {
        let first = self.buses[0].phases;
        first.len() == 1
            && self.buses.iter().all(|b| b.phases == first)
            && self.lines.iter().all(|l| l.phases == first)
    }
}

/// Picks the reference bus: an explicit override, a bus flagged as
/// reference, or else the bus of the largest-rated source (first on ties).
pub fn choose_reference(
    net: &Network,
    island: &IslandGraph<f64>,
    requested: Option<&str>,
) -> Result<usize, ModelError> {
    if let Some(r) = requested {
        return island
            .vertex(r)
            .ok_or_else(|| ModelError::Reference(r.to_string()));
    }
    if let Some(i) = island
        .vertices
        .iter()
        .position(|v| net.bus(v).is_some_and(|b| b.is_reference))
    {
        return Ok(i);
    }
    let mut best: Option<(f64, usize)> = None;
    for s in net.sources.iter().filter(|s| island.sources.contains(&s.id)) {
        let v = island.vertex(&s.bus).expect("source in island");
        if best.is_none_or(|(p, _)| s.p_rate_kw > p) {
            best = Some((s.p_rate_kw, v));
        }
    }
    best.map(|(_, v)| v).ok_or(ModelError::NoSource(island.id))
}

/// Converts an island and its tree into per-unit model data.
pub fn prepare_island(
    net: &Network,
    island: &IslandGraph<f64>,
    tree: &SpanningTree<f64>,
    reference: Option<&str>,
) -> Result<IslandData, ModelError> {
    if !island.restorable() {
        return Err(ModelError::NoSource(island.id));
    }
    let root = choose_reference(net, island, reference)?;
    let directed = orient(island, &tree.edges, root).ok_or(ModelError::TreeMismatch(island.id))?;

    let s_base = net.s_base_kva;
    let s_ph = s_base / 3.0;
    let buses: Vec<BusData> = island
        .vertices
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let b = net.bus(id).expect("island bus in network");
            let (lo, hi): (Vec<f64>, Vec<f64>) = if i == root {
                b.phases.iter().map(|_| (1.0, 1.0)).unzip()
            } else {
                b.phases
                    .iter()
                    .map(|p| (b.vmin[p.index()].powi(2), b.vmax[p.index()].powi(2)))
                    .unzip()
            };
            BusData {
                id: id.clone(),
                phases: b.phases,
                kv: b.kv_base,
                vmin2: lo,
                vmax2: hi,
            }
        })
        .collect();

    let lines = directed
        .iter()
        .map(|d| {
            let e = &island.edges[d.edge];
            let l = net.find_line(&e.line).expect("island line in network");
            let kv = net.bus(&l.from).expect("line bus").kv_base;
            let z_base = kv * kv * 1000.0 / s_base;
            let i_base = s_base / (3f64.sqrt() * kv);
            LineData {
                id: l.id.clone(),
                edge: d.edge,
                parent: d.parent,
                child: d.child,
                phases: l.phases,
                z: l.z.map(|z| z / z_base),
                imax2: l
                    .phases
                    .iter()
                    .map(|p| (l.ampacity[p.index()] / i_base).powi(2))
                    .collect(),
                smax: l.phases.iter().map(|p| l.flow_limit[p.index()] / s_ph).collect(),
            }
        })
        .collect();

    let loads = net
        .loads
        .iter()
        .filter_map(|ld| {
            let b = island.vertex(&ld.bus)?;
            Some(LoadData {
                id: ld.id.clone(),
                bus: b,
                demand: buses[b]
                    .phases
                    .iter()
                    .map(|p| ld.demand[p.index()] / s_ph)
                    .collect(),
                weight: ld.weight,
                level: ld.level,
                kw: ld.total_kw(),
            })
        })
        .collect();

    let sources = net
        .sources
        .iter()
        .filter(|s| island.sources.contains(&s.id))
        .map(|s| SourceData {
            id: s.id.clone(),
            bus: island.vertex(&s.bus).expect("source bus"),
            p_rate: s.p_rate_kw / s_ph,
            q_rate: s.q_rate_kvar / s_ph,
            fixed_p: s.fixed_active(),
        })
        .collect();

    let v0 = [0, 1, 2].map(|k| net.sequence.phasor(crate::netmodel::Phase::ALL[k]));
    Ok(IslandData {
        island: island.id,
        s_base_kva: s_base,
        weights: net.weights.clone(),
        reference: root,
        v0,
        buses,
        lines,
        loads,
        sources,
    })
}
