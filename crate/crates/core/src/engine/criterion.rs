use serde::Serialize;

use super::iterate::{Branch, IterationTrace};
use super::weights::{objective_tol, WeightScheme};
use crate::models::IslandData;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    VerifiedGlobal,
    Unverified,
}

/// Certifies a trace as globally optimal when no iteration dropped a load
/// at a binding limit (or by fallback) and every iteration `j` satisfies
/// `W_int[j+1] >= W_int[j] + w^{K*[j]} n_re[j]`.
pub fn check_optimality_criterion(tr: &IterationTrace, ws: &WeightScheme) -> Verdict {
    for pair in tr.states.windows(2) {
        let (cur, next) = (&pair[0], &pair[1]);
        let Some(step) = &cur.step else {
            return Verdict::Unverified;
        };
        if matches!(step.batch.branch, Branch::Step4 | Branch::Fallback) {
            return Verdict::Unverified;
        }
        let need = cur.w_int + ws.w(step.k_star) * step.n_re as f64;
        if next.w_int < need - objective_tol(need) {
            return Verdict::Unverified;
        }
    }
    Verdict::VerifiedGlobal
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThinLine {
    pub line: String,
    /// Smallest per-phase ampacity over the island demand current.
    pub multiple: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosePair {
    pub a: String,
    pub b: String,
    pub level: usize,
    pub relative_gap: f64,
}

/// Heuristic screen for the two conditions that make the certificate
/// likely. Both are proxies; passing them proves nothing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SufficiencyReport {
    pub ampacity_multiple: f64,
    pub kw_gap: f64,
    pub thin_lines: Vec<ThinLine>,
    pub close_pairs: Vec<ClosePair>,
}

impl SufficiencyReport {
    pub fn thermal_ok(&self) -> bool {
        self.thin_lines.is_empty()
    }

    pub fn demands_distinct(&self) -> bool {
        self.close_pairs.is_empty()
    }
}

/// Flags lines whose ampacity is below `ampacity_multiple` times the
/// island demand current at nominal voltage, and same-level load pairs
/// whose kW demands differ by less than `kw_gap` relative.
pub fn check_sufficient_conditions(d: &IslandData, ampacity_multiple: f64, kw_gap: f64) -> SufficiencyReport {
    // per-phase share of the total apparent demand at 1 p.u.
    let demand: f64 = d
        .loads
        .iter()
        .map(|l| l.demand.iter().sum::<num_complex::Complex64>().norm())
        .sum::<f64>()
        / 3.0;
    let thin_lines = d
        .lines
        .iter()
        .filter_map(|l| {
            let amp = l.imax2.iter().map(|i| i.sqrt()).fold(f64::INFINITY, f64::min);
            let multiple = if demand > 0.0 { amp / demand } else { f64::INFINITY };
            (multiple < ampacity_multiple).then(|| ThinLine {
                line: l.id.clone(),
                multiple,
            })
        })
        .collect();

    let mut close_pairs = Vec::new();
    for (i, a) in d.loads.iter().enumerate() {
        for b in d.loads[i + 1..].iter().filter(|b| b.level == a.level) {
            let top = a.kw.abs().max(b.kw.abs());
            let rel = if top > 0.0 { (a.kw - b.kw).abs() / top } else { 0.0 };
            if rel < kw_gap {
                close_pairs.push(ClosePair {
                    a: a.id.clone(),
                    b: b.id.clone(),
                    level: a.level,
                    relative_gap: rel,
                });
            }
        }
    }
    SufficiencyReport {
        ampacity_multiple,
        kw_gap,
        thin_lines,
        close_pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::iterate::{ConstraintBatch, IterState, StepOutcome, Termination};
    use crate::models::Fixes;

    fn state(w_int: f64, step: Option<(Branch, usize, usize)>) -> IterState {
        IterState {
            index: 0,
            fixes: Fixes::new(),
            gamma: vec![],
            w_sdp: 0.0,
            w_int,
            rank_ratio: 0.0,
            ones: vec![],
            ni: vec![],
            step: step.map(|(branch, k_star, n_re)| StepOutcome {
                k_star,
                n_re,
                c1: vec![],
                c2: vec![],
                c3: vec![],
                c4: vec![],
                batch: ConstraintBatch {
                    branch,
                    ones: vec![],
                    zeros: vec![],
                },
            }),
            solve_seconds: 0.0,
        }
    }

    fn trace(states: Vec<IterState>) -> IterationTrace {
        IterationTrace {
            states,
            termination: Termination::Integral,
        }
    }

    #[test]
    fn thirteen_node_trace_is_certified() {
        let ws = WeightScheme::new(vec![100.0, 10.0, 0.2]).unwrap();
        let tr = trace(vec![
            state(210.0, Some((Branch::Step3, 3, 0))),
            state(210.2, Some((Branch::Step3, 4, 0))),
            state(210.2, None),
        ]);
        assert_eq!(check_optimality_criterion(&tr, &ws), Verdict::VerifiedGlobal);
    }

    #[test]
    fn step_four_is_never_certified() {
        let ws = WeightScheme::new(vec![1.0]).unwrap();
        let tr = trace(vec![state(1.0, Some((Branch::Step4, 1, 0))), state(2.0, None)]);
        assert_eq!(check_optimality_criterion(&tr, &ws), Verdict::Unverified);
    }

    #[test]
    fn stalled_lower_bound_is_not_certified() {
        let ws = WeightScheme::new(vec![1.0]).unwrap();
        let tr = trace(vec![state(1.0, Some((Branch::Step5, 1, 2))), state(2.0, None)]);
        assert_eq!(check_optimality_criterion(&tr, &ws), Verdict::Unverified);
        let tr = trace(vec![state(1.0, Some((Branch::Step5, 1, 2))), state(3.0, None)]);
        assert_eq!(check_optimality_criterion(&tr, &ws), Verdict::VerifiedGlobal);
    }

    #[test]
    fn integral_start_is_certified() {
        let ws = WeightScheme::new(vec![1.0]).unwrap();
        assert_eq!(check_optimality_criterion(&trace(vec![state(1.0, None)]), &ws), Verdict::VerifiedGlobal);
    }
}
