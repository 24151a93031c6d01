//! Three-phase network data model, feeder document ingestion and outage events.

mod event;
mod feeder;
mod phase;
mod validate;

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use event::{apply_event, EventSpec, PostEventNetwork};
pub use feeder::{parse_feeder, serialize_feeder, FEEDER_FORMAT, FEEDER_VERSION};
pub use phase::{Phase, PhaseSet};
pub use validate::{validate_network, IssueKind, ValidationIssue, ValidationReport};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{kind} \"{id}\" references unknown {target} \"{reference}\"")]
    Dangling {
        kind: &'static str,
        id: String,
        target: &'static str,
        reference: String,
    },
    #[error("duplicate {kind} id \"{id}\"")]
    Duplicate { kind: &'static str, id: String },
    #[error("level weights must be strictly decreasing and nonnegative: {0:?}")]
    Weights(Vec<f64>),
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("unknown {kind} \"{id}\" in event")]
    UnknownEventId { kind: &'static str, id: String },
    #[error("event document: {0}")]
    Event(#[from] serde_json::Error),
}

/// Rotation of phases b and c relative to phase a at the reference bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseSequence {
    /// b lags a by 120 degrees.
    #[default]
    Abc,
    /// b leads a by 120 degrees.
    Acb,
}

impl PhaseSequence {
    /// Nominal angle of `p` in degrees.
    pub fn angle_deg(self, p: Phase) -> f64 {
        match (self, p) {
            (_, Phase::A) => 0.0,
            (PhaseSequence::Abc, Phase::B) | (PhaseSequence::Acb, Phase::C) => -120.0,
            (PhaseSequence::Abc, Phase::C) | (PhaseSequence::Acb, Phase::B) => 120.0,
        }
    }

    pub fn phasor(self, p: Phase) -> Complex64 {
        Complex64::from_polar(1.0, self.angle_deg(p).to_radians())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    pub phases: PhaseSet,
    /// Line-to-line base voltage in kV.
    pub kv_base: f64,
    /// Per-phase magnitude bounds in p.u., indexed by [`Phase::index`].
    pub vmin: [f64; 3],
    pub vmax: [f64; 3],
    pub is_reference: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineKind {
    Fixed,
    Switch,
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineState {
    Closed,
    Open,
    Faulted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub id: String,
    pub from: String,
    pub to: String,
    pub phases: PhaseSet,
    /// Series impedance in ohms, referred to the `from` bus voltage level.
    pub z: DMatrix<Complex64>,
    /// Per-phase current limit in amperes, indexed by [`Phase::index`].
    pub ampacity: [f64; 3],
    /// Per-phase apparent power limit in kVA (linearized model only).
    pub flow_limit: [f64; 3],
    pub kind: LineKind,
    pub state: LineState,
}

impl Line {
    pub fn connects(&self, a: &str, b: &str) -> bool {
        (self.from == a && self.to == b) || (self.from == b && self.to == a)
    }

    /// Endpoint across the line from `bus`.
    pub fn other(&self, bus: &str) -> &str {
        if self.from == bus {
            &self.to
        } else {
            &self.from
        }
    }

    pub fn is_switchable(&self) -> bool {
        matches!(self.kind, LineKind::Switch | LineKind::Tie)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Load {
    pub id: String,
    pub bus: String,
    pub phases: PhaseSet,
    /// Per-phase wye demand (kW + j kvar), indexed by [`Phase::index`].
    pub demand: [Complex64; 3],
    pub level: usize,
    /// Assigned from the network's level weights.
    pub weight: f64,
}

impl Load {
    pub fn total_kw(&self) -> f64 {
        self.demand.iter().map(|s| s.re).sum()
    }

    pub fn total_kvar(&self) -> f64 {
        self.demand.iter().map(|s| s.im).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Diesel,
    Storage,
    Pv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub id: String,
    pub bus: String,
    pub kind: SourceKind,
    pub p_rate_kw: f64,
    pub q_rate_kvar: f64,
    pub microgrid: Option<String>,
}

impl Source {
    /// PV output is pinned at its active power rating.
    pub fn fixed_active(&self) -> bool {
        self.kind == SourceKind::Pv
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub name: String,
    /// Three-phase apparent power base in kVA.
    pub s_base_kva: f64,
    pub sequence: PhaseSequence,
    /// Substation bus fed by the (unavailable) utility.
    pub utility_bus: Option<String>,
    /// Level weights w^1 > ... > w^n.
    pub weights: Vec<f64>,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub loads: Vec<Load>,
    pub sources: Vec<Source>,
}

impl Network {
    pub fn level_count(&self) -> usize {
        self.weights.len()
    }

    pub fn bus(&self, id: &str) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn bus_index(&self) -> HashMap<&str, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.as_str(), i))
            .collect()
    }

    /// Finds a line by id, or by an `"x-y"` endpoint pair in either orientation.
    pub fn find_line(&self, id: &str) -> Option<&Line> {
        self.line_position(id).map(|i| &self.lines[i])
    }

    pub fn line_position(&self, id: &str) -> Option<usize> {
        if let Some(i) = self.lines.iter().position(|l| l.id == id) {
            return Some(i);
        }
        let (a, b) = id.split_once('-')?;
        self.lines.iter().position(|l| l.connects(a, b))
    }

    pub fn load_at(&self, bus: &str) -> Option<&Load> {
        self.loads.iter().find(|l| l.bus == bus)
    }

    pub fn sources_at<'a>(&'a self, bus: &'a str) -> impl Iterator<Item = &'a Source> + 'a {
        self.sources.iter().filter(move |s| s.bus == bus)
    }

    pub fn switches(&self) -> impl Iterator<Item = &Line> {
        self.lines.iter().filter(|l| l.is_switchable())
    }

    /// Weight of a level (1-based); `None` outside `1..=n`.
    pub fn level_weight(&self, level: usize) -> Option<f64> {
        level.checked_sub(1).and_then(|k| self.weights.get(k)).copied()
    }
}

pub(crate) fn zero_demand() -> [Complex64; 3] {
    [Complex64::new(0.0, 0.0); 3]
}
