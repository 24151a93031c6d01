use std::cmp::Ordering;
use std::time::Instant;

use serde::Serialize;

use super::weights::{compute_n_re, identify_k_star, WeightScheme};
use super::{EngineConfig, EngineError};
use crate::conic::{solve_conic, ConicSolution};
use crate::models::{build_clr_sdp, rank1_ratio, Fixes, IslandData, SdpMap, SdpObjective, SdpOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// All statuses integral; nothing added.
    Terminal,
    /// Loads above the affordable level dropped.
    Step3,
    /// One load at a binding voltage or current limit dropped.
    Step4,
    /// Level `K*` cut down to what the gap can pay for.
    Step5,
    /// No rule produced a new fix; the smallest status was dropped.
    Fallback,
}

/// Status fixes produced by one pass of the constraint procedure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintBatch {
    pub branch: Branch,
    pub ones: Vec<usize>,
    pub zeros: Vec<usize>,
}

/// Sets and levels behind one constraint batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutcome {
    pub k_star: usize,
    pub n_re: usize,
    pub c1: Vec<usize>,
    pub c2: Vec<usize>,
    pub c3: Vec<usize>,
    pub c4: Vec<usize>,
    pub batch: ConstraintBatch,
}

/// One relaxation solve and what was done with it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterState {
    pub index: usize,
    /// Fixes in force for this solve.
    #[serde(skip)]
    pub fixes: Fixes,
    pub gamma: Vec<f64>,
    pub w_sdp: f64,
    pub w_int: f64,
    pub rank_ratio: f64,
    pub ones: Vec<usize>,
    pub ni: Vec<usize>,
    /// Absent on the terminal solve.
    pub step: Option<StepOutcome>,
    pub solve_seconds: f64,
}

impl IterState {
    pub fn branch(&self) -> Branch {
        self.step.as_ref().map_or(Branch::Terminal, |s| s.batch.branch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Integral,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationTrace {
    pub states: Vec<IterState>,
    pub termination: Termination,
}

impl IterationTrace {
    /// Number of constraint batches added.
    pub fn iterations(&self) -> usize {
        self.states.iter().filter(|s| s.step.is_some()).count()
    }

    pub fn last(&self) -> &IterState {
        self.states.last().expect("trace has at least one solve")
    }

    pub fn max_rank_ratio(&self) -> f64 {
        self.states.iter().map(|s| s.rank_ratio).fold(0.0, f64::max)
    }
}

/// Split of a status vector into restored, fractional and dropped loads.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub ones: Vec<usize>,
    pub ni: Vec<usize>,
    pub w_sdp: f64,
    pub w_int: f64,
}

/// Statuses above `1 - eps` count as restored, those in `[eps, 1 - eps]`
/// as fractional.
pub fn classify(d: &IslandData, gamma: &[f64], eps: f64) -> Classification {
    let ones: Vec<usize> = (0..gamma.len()).filter(|&i| gamma[i] > 1.0 - eps).collect();
    let ni: Vec<usize> = (0..gamma.len())
        .filter(|&i| gamma[i] >= eps && gamma[i] <= 1.0 - eps)
        .collect();
    let w_sdp = d.loads.iter().zip(gamma).map(|(l, g)| l.weight * g).sum();
    let w_int = ones.iter().map(|&i| d.loads[i].weight).sum();
    Classification { ones, ni, w_sdp, w_int }
}

/// Order used to drop loads: smallest status, then largest demand, then id.
fn drop_order(d: &IslandData, gamma: &[f64], a: usize, b: usize) -> Ordering {
    gamma[a]
        .total_cmp(&gamma[b])
        .then_with(|| d.loads[b].kw.total_cmp(&d.loads[a].kw))
        .then_with(|| d.loads[a].id.cmp(&d.loads[b].id))
}

/// Loads whose bus voltage or an adjacent line current sits at its limit,
/// within `tol` relative. The reference bus is held, not bounded, and is
/// skipped.
pub fn binding_loads(d: &IslandData, sol: &ConicSolution<f64>, map: &SdpMap, tol: f64) -> Vec<bool> {
    let Some(x) = sol.x.as_ref() else {
        return vec![false; d.loads.len()];
    };
    let near = |v: f64, bound: f64| (v - bound).abs() <= tol * bound.abs().max(f64::MIN_POSITIVE);
    let bus_binding: Vec<bool> = (0..d.buses.len())
        .map(|b| {
            if b != d.reference {
                let bus = &d.buses[b];
                let v = map.v[b].eval(x);
                let at_voltage =
                    (0..bus.phases.len()).any(|a| near(v[(a, a)].re, bus.vmin2[a]) || near(v[(a, a)].re, bus.vmax2[a]));
                if at_voltage {
                    return true;
                }
            }
            d.incident_lines(b).any(|k| {
                let i = map.i[k].eval(x);
                d.lines[k]
                    .imax2
                    .iter()
                    .enumerate()
                    .any(|(a, &lim)| lim.is_finite() && near(i[(a, a)].re, lim))
            })
        })
        .collect();
    d.loads.iter().map(|l| bus_binding[l.bus]).collect()
}

/// One pass of the constraint procedure over a fractional solution.
///
/// Restored loads are always pinned to one. Then exactly one rule adds
/// zeros: loads of a level the gap cannot afford (step 3), the
/// smallest-status load at a binding limit on level `K*` (step 4), or every
/// level-`K*` load beyond the `n_re` largest statuses together with the
/// level-`K*` loads already at zero (step 5).
pub fn add_constraints(
    d: &IslandData,
    ws: &WeightScheme,
    gamma: &[f64],
    fixes: &Fixes,
    binding: &[bool],
    eps: f64,
) -> Result<StepOutcome, EngineError> {
    let cls = classify(d, gamma, eps);
    let k_star = identify_k_star(cls.w_sdp, cls.w_int, ws);
    let ones = cls.ones.clone();
    let mut out = StepOutcome {
        k_star,
        n_re: 0,
        c1: vec![],
        c2: vec![],
        c3: vec![],
        c4: vec![],
        batch: ConstraintBatch {
            branch: Branch::Step3,
            ones,
            zeros: vec![],
        },
    };
    let mut ni = cls.ni.clone();
    ni.sort_by(|&a, &b| drop_order(d, gamma, a, b));

    let w_above = ws.w(k_star - 1);
    out.c1 = ni.iter().copied().filter(|&i| d.loads[i].weight >= w_above).collect();
    if !out.c1.is_empty() {
        out.batch.zeros = out.c1.clone();
        return Ok(out);
    }

    out.c2 = ni
        .iter()
        .copied()
        .filter(|&i| d.loads[i].level == k_star && binding[i])
        .collect();
    if let Some(&j) = out.c2.first() {
        out.batch.branch = Branch::Step4;
        out.batch.zeros = vec![j];
        return Ok(out);
    }

    out.batch.branch = Branch::Step5;
    out.n_re = compute_n_re(cls.w_sdp, cls.w_int, ws.w(k_star))?;
    out.c3 = ni[..ni.len().saturating_sub(out.n_re)].to_vec();
    out.c4 = (0..d.loads.len())
        .filter(|&i| d.loads[i].level == k_star && gamma[i] < eps && !fixes.contains_key(&i))
        .collect();
    let mut zeros: Vec<usize> = out.c3.iter().chain(&out.c4).copied().collect();
    zeros.sort_unstable();
    zeros.dedup();
    if zeros.is_empty() {
        out.batch.branch = Branch::Fallback;
        zeros.push(ni[0]);
    }
    out.batch.zeros = zeros;
    Ok(out)
}

/// Give on the weighted load when the penalised relaxation is held to the
/// plain optimum, as a fraction of the guard band on the lightest load.
const SERVED_SLACK: f64 = 0.1;

type Solved = ((ConicSolution<f64>, SdpMap), Vec<f64>);

fn solve_sdp(d: &IslandData, fixes: &Fixes, opts: &SdpOptions, cfg: &EngineConfig, index: usize) -> Result<Solved, EngineError> {
    let (p, map) = build_clr_sdp(d, fixes, opts);
    let sol = solve_conic(&p, &cfg.solver).map_err(|e| EngineError::Solver {
        iteration: index,
        source: e,
    })?;
    if !sol.is_optimal() {
        return Err(EngineError::NotSolved {
            iteration: index,
            status: sol.status,
        });
    }
    let gamma = map.gamma_values(&sol).ok_or(EngineError::NotSolved {
        iteration: index,
        status: sol.status,
    })?;
    Ok(((sol, map), gamma))
}

/// Solves the relaxation repeatedly, fixing statuses until it comes back
/// integral. Returns the rounded statuses and the per-solve trace.
pub fn iterate(d: &IslandData, ws: &WeightScheme, cfg: &EngineConfig) -> Result<(Vec<bool>, IterationTrace), EngineError> {
    let mut fixes = Fixes::new();
    let mut states: Vec<IterState> = Vec::new();
    let w_min = d.loads.iter().map(|l| l.weight).filter(|&w| w > 0.0).fold(f64::INFINITY, f64::min);
    let slack = if w_min.is_finite() { SERVED_SLACK * cfg.integrality_tol * w_min } else { 0.0 };
    loop {
        let index = states.len();
        if index > d.loads.len() {
            return Err(EngineError::NoProgress(index));
        }
        let started = Instant::now();
        // the bound comes from the plain relaxation; the penalised one then
        // picks a low-rank point among its optima
        let plain = SdpOptions {
            objective: SdpObjective::Served,
            ..cfg.sdp
        };
        let (_, gamma) = solve_sdp(d, &fixes, &plain, cfg, index)?;
        let bound = classify(d, &gamma, cfg.integrality_tol).w_sdp;
        let tight = SdpOptions {
            served_floor: Some(bound - slack),
            ..cfg.sdp
        };
        let ((sol, map), gamma) = solve_sdp(d, &fixes, &tight, cfg, index)?;
        let rank_ratio = rank1_ratio(&sol, &map).unwrap_or(0.0);
        let mut cls = classify(d, &gamma, cfg.integrality_tol);
        cls.w_sdp = cls.w_sdp.max(bound);
        log::debug!(
            "island {} solve {index}: W_sdp {:.6} W_int {:.6} ratio {rank_ratio:.2e} fractional {:?}",
            d.island,
            cls.w_sdp,
            cls.w_int,
            cls.ni
        );

        let step = if cls.ni.is_empty() {
            None
        } else {
            let binding = binding_loads(d, &sol, &map, cfg.binding_tol);
            Some(add_constraints(d, ws, &gamma, &fixes, &binding, cfg.integrality_tol)?)
        };
        let done = step.is_none();
        let in_force = fixes.clone();
        if let Some(s) = &step {
            let before = fixes.len();
            for &i in &s.batch.ones {
                fixes.insert(i, true);
            }
            for &i in &s.batch.zeros {
                fixes.insert(i, false);
            }
            if fixes.len() == before {
                return Err(EngineError::NoProgress(index));
            }
        }
        states.push(IterState {
            index,
            fixes: in_force,
            gamma,
            w_sdp: cls.w_sdp,
            w_int: cls.w_int,
            rank_ratio,
            ones: cls.ones,
            ni: cls.ni,
            step,
            solve_seconds: started.elapsed().as_secs_f64(),
        });
        if done {
            break;
        }
    }
    let last = states.last().expect("at least one solve");
    let restored = (0..d.loads.len()).map(|i| last.ones.contains(&i)).collect();
    Ok((
        restored,
        IterationTrace {
            states,
            termination: Termination::Integral,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LoadData;

    fn island(loads: &[(&str, usize, f64, f64)]) -> IslandData {
        IslandData {
            island: 0,
            s_base_kva: 3.0,
            weights: vec![],
            reference: 0,
            v0: [num_complex::Complex64::new(1.0, 0.0); 3],
            buses: vec![],
            lines: vec![],
            loads: loads
                .iter()
                .map(|&(id, level, weight, kw)| LoadData {
                    id: id.into(),
                    bus: 0,
                    demand: vec![],
                    weight,
                    level,
                    kw,
                })
                .collect(),
            sources: vec![],
        }
    }

    fn thirteen() -> (IslandData, WeightScheme) {
        let d = island(&[
            ("632", 3, 0.2, 100.0),
            ("634", 2, 10.0, 400.0),
            ("671", 3, 0.2, 1425.0),
            ("675", 1, 100.0, 843.0),
            ("645", 1, 100.0, 170.0),
            ("646", 2, 10.0, 230.0),
            ("611", 3, 0.2, 170.0),
        ]);
        (d, WeightScheme::new(vec![100.0, 10.0, 0.2]).unwrap())
    }

    #[test]
    fn first_pass_drops_the_unaffordable_level() {
        let (d, ws) = thirteen();
        let gamma = [0.0, 0.486, 0.0, 1.0, 1.0, 1.0, 0.0];
        let s = add_constraints(&d, &ws, &gamma, &Fixes::new(), &[false; 7], 1e-4).unwrap();
        assert_eq!(s.k_star, 3);
        assert_eq!(s.batch.branch, Branch::Step3);
        assert_eq!(s.batch.ones, vec![3, 4, 5]);
        assert_eq!(s.batch.zeros, vec![1]);
    }

    #[test]
    fn second_pass_uses_the_virtual_level() {
        let (d, ws) = thirteen();
        let gamma = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.5615];
        let mut fixes = Fixes::new();
        fixes.extend([(1, false), (3, true), (4, true), (5, true)]);
        let s = add_constraints(&d, &ws, &gamma, &fixes, &[false; 7], 1e-4).unwrap();
        assert_eq!(s.k_star, 4);
        assert_eq!(s.batch.branch, Branch::Step3);
        assert_eq!(s.c1, vec![6]);
        assert_eq!(s.batch.ones, vec![0, 3, 4, 5]);
    }

    #[test]
    fn binding_load_takes_step_four() {
        let d = island(&[("a", 1, 10.0, 5.0), ("b", 2, 1.0, 5.0), ("c", 2, 1.0, 6.0)]);
        let ws = WeightScheme::new(vec![10.0, 1.0]).unwrap();
        // gap 1.3 puts K* at level 2
        let gamma = [1.0, 0.6, 0.7];
        let s = add_constraints(&d, &ws, &gamma, &Fixes::new(), &[false, true, true], 1e-4).unwrap();
        assert_eq!(s.k_star, 2);
        assert_eq!(s.batch.branch, Branch::Step4);
        assert_eq!(s.c2, vec![1, 2]);
        assert_eq!(s.batch.zeros, vec![1]);
    }

    #[test]
    fn symmetric_pair_keeps_one() {
        let d = island(&[("x", 1, 1.0, 10.0), ("y", 1, 1.0, 10.0)]);
        let ws = WeightScheme::new(vec![1.0]).unwrap();
        let s = add_constraints(&d, &ws, &[0.5, 0.5], &Fixes::new(), &[false; 2], 1e-4).unwrap();
        assert_eq!(s.batch.branch, Branch::Step5);
        assert_eq!(s.n_re, 1);
        assert_eq!(s.c3, vec![0]);
        assert_eq!(s.batch.zeros, vec![0]);
    }

    #[test]
    fn step_five_adds_zero_loads_of_the_level() {
        let d = island(&[("x", 1, 1.0, 10.0), ("y", 1, 1.0, 20.0), ("z", 1, 1.0, 30.0), ("u", 1, 1.0, 5.0)]);
        let ws = WeightScheme::new(vec![1.0]).unwrap();
        let gamma = [1.0, 0.6, 0.5, 0.0];
        let s = add_constraints(&d, &ws, &gamma, &Fixes::new(), &[false; 4], 1e-4).unwrap();
        assert_eq!(s.n_re, 1);
        assert_eq!(s.c3, vec![2]);
        assert_eq!(s.c4, vec![3]);
        assert_eq!(s.batch.zeros, vec![2, 3]);
    }

    #[test]
    fn drop_order_breaks_ties_by_demand_then_id() {
        let d = island(&[("b", 1, 1.0, 10.0), ("a", 1, 1.0, 10.0), ("c", 1, 1.0, 12.0)]);
        let gamma = [0.5, 0.5, 0.5];
        let mut idx = vec![0, 1, 2];
        idx.sort_by(|&a, &b| drop_order(&d, &gamma, a, b));
        assert_eq!(idx, vec![2, 1, 0]);
    }

    #[test]
    fn classify_uses_the_guard_band() {
        let (d, _) = thirteen();
        let c = classify(&d, &[0.99995, 0.00005, 0.5, 1.0, 1.0, 1.0, 0.0], 1e-4);
        assert_eq!(c.ones, vec![0, 3, 4, 5]);
        assert_eq!(c.ni, vec![2]);
        assert!((c.w_int - 210.2).abs() < 1e-12);
    }
}
