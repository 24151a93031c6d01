use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use super::{Network, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    WeightsNotDecreasing,
    NegativeWeight,
    DuplicateId,
    DanglingReference,
    ParallelLine,
    VoltageBounds,
    PhaseMismatch,
    ImpedanceShape,
    Ampacity,
    LevelRange,
    SourceRating,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationIssue {
    pub kind: IssueKind,
    /// Element the issue concerns, if any.
    pub subject: Option<String>,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.subject {
            Some(s) => write!(f, "{s}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has(&self, kind: IssueKind) -> bool {
        self.issues.iter().any(|i| i.kind == kind)
    }

    fn push(&mut self, kind: IssueKind, subject: Option<&str>, message: String) {
        self.issues.push(ValidationIssue {
            kind,
            subject: subject.map(String::from),
            message,
        });
    }
}

/// Checks every data-model invariant and lists each violation found.
pub fn validate_network(net: &Network) -> ValidationReport {
    let mut r = ValidationReport::default();

    if net.weights.windows(2).any(|w| !(w[0] > w[1])) {
        r.push(
            IssueKind::WeightsNotDecreasing,
            None,
            format!("weights not strictly decreasing: {:?}", net.weights),
        );
    }
    if net.weights.iter().any(|w| !(*w >= 0.0)) {
        r.push(
            IssueKind::NegativeWeight,
            None,
            format!("weights must be nonnegative: {:?}", net.weights),
        );
    }

    let mut ids = HashSet::new();
    for b in &net.buses {
        if !ids.insert(b.id.as_str()) {
            r.push(IssueKind::DuplicateId, Some(&b.id), "duplicate bus id".into());
        }
        for p in b.phases.iter() {
            let k = p.index();
            if !(b.vmin[k] <= b.vmax[k]) {
                r.push(
                    IssueKind::VoltageBounds,
                    Some(&b.id),
                    format!(
                        "phase {}: vmin {} exceeds vmax {}",
                        p.label(),
                        b.vmin[k],
                        b.vmax[k]
                    ),
                );
            }
        }
    }

    let mut line_ids = HashSet::new();
    let mut pairs = HashSet::new();
    for l in &net.lines {
        if !line_ids.insert(l.id.as_str()) {
            r.push(IssueKind::DuplicateId, Some(&l.id), "duplicate line id".into());
        }
        let key = if l.from < l.to {
            (l.from.as_str(), l.to.as_str())
        } else {
            (l.to.as_str(), l.from.as_str())
        };
        if !pairs.insert(key) {
            r.push(
                IssueKind::ParallelLine,
                Some(&l.id),
                format!("second line between {} and {}", l.from, l.to),
            );
        }
        for end in [&l.from, &l.to] {
            match net.bus(end) {
                None => r.push(
                    IssueKind::DanglingReference,
                    Some(&l.id),
                    format!("unknown bus \"{end}\""),
                ),
                Some(b) if !l.phases.is_subset(b.phases) => r.push(
                    IssueKind::PhaseMismatch,
                    Some(&l.id),
                    format!("line phases {} not on bus {} ({})", l.phases, b.id, b.phases),
                ),
                Some(_) => {}
            }
        }
        let n = l.phases.len();
        if l.z.nrows() != n || l.z.ncols() != n {
            r.push(
                IssueKind::ImpedanceShape,
                Some(&l.id),
                format!("impedance is {}x{}, phases need {n}x{n}", l.z.nrows(), l.z.ncols()),
            );
        }
        if l.phases.iter().any(|p| !(l.ampacity[p.index()] > 0.0)) {
            r.push(IssueKind::Ampacity, Some(&l.id), "ampacity must be positive".into());
        }
    }

    let mut load_ids = HashSet::new();
    for ld in &net.loads {
        if !load_ids.insert(ld.id.as_str()) {
            r.push(IssueKind::DuplicateId, Some(&ld.id), "duplicate load id".into());
        }
        match net.bus(&ld.bus) {
            None => r.push(
                IssueKind::DanglingReference,
                Some(&ld.id),
                format!("unknown bus \"{}\"", ld.bus),
            ),
            Some(b) => {
                let stray: Vec<Phase> = ld
                    .phases
                    .iter()
                    .filter(|p| !b.phases.contains(*p))
                    .collect();
                if !stray.is_empty() {
                    let labels: String = stray.iter().map(|p| p.label()).collect();
                    r.push(
                        IssueKind::PhaseMismatch,
                        Some(&ld.id),
                        format!("load on phase {labels} of a phase-{{{}}} bus", b.phases),
                    );
                }
            }
        }
        if ld.level == 0 || ld.level > net.level_count() {
            r.push(
                IssueKind::LevelRange,
                Some(&ld.id),
                format!("level {} outside 1..={}", ld.level, net.level_count()),
            );
        }
    }

    let mut source_ids = HashSet::new();
    for s in &net.sources {
        if !source_ids.insert(s.id.as_str()) {
            r.push(IssueKind::DuplicateId, Some(&s.id), "duplicate source id".into());
        }
        if net.bus(&s.bus).is_none() {
            r.push(
                IssueKind::DanglingReference,
                Some(&s.id),
                format!("unknown bus \"{}\"", s.bus),
            );
        }
        if !(s.p_rate_kw >= 0.0) || !(s.q_rate_kvar >= 0.0) {
            r.push(
                IssueKind::SourceRating,
                Some(&s.id),
                "ratings must be nonnegative".into(),
            );
        }
    }
    r
}
