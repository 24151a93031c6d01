use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::clarabel_backend::solve_relaxed;
use super::{ConicError, ConicProgram, ConicSolution, SolveStats, SolveStatus, SolverSettings};
use crate::scalar::ConicScalar;

struct Node<T> {
    bound: f64,
    id: usize,
    fixes: Vec<(usize, T)>,
    x: Vec<T>,
}

impl<T> PartialEq for Node<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T> Eq for Node<T> {}

impl<T> PartialOrd for Node<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Node<T> {
    // max-heap: larger bound first, then older node
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

/// Best-first branch-and-bound over the binary variables of `p`.
///
/// Each node solves the continuous relaxation with binaries boxed in
/// `[0, 1]`. Branching picks the most fractional binary, lowest index first.
pub fn solve_mip<T: ConicScalar>(
    p: &ConicProgram<T>,
    s: &SolverSettings<T>,
) -> Result<ConicSolution<T>, ConicError> {
    p.check()?;
    let mut base = p.clone();
    base.binaries.clear();
    for &b in &p.binaries {
        base.bounds(b, T::zero(), T::one());
    }

    let mut stats = SolveStats::default();
    let solve = |fixes: &[(usize, T)], stats: &mut SolveStats| -> Result<ConicSolution<T>, ConicError> {
        let mut q = base.clone();
        for &(i, v) in fixes {
            q.fix(i, v);
        }
        let sol = solve_relaxed(&q, s)?;
        stats.iterations += sol.stats.iterations;
        stats.solve_time += sol.stats.solve_time;
        stats.reduced_accuracy |= sol.stats.reduced_accuracy;
        stats.nodes += 1;
        Ok(sol)
    };

    let root = solve(&[], &mut stats)?;
    if !root.is_optimal() {
        return Ok(ConicSolution::failed(root.status, stats));
    }
    let mut heap = BinaryHeap::new();
    let mut next_id = 0;
    heap.push(Node {
        bound: root.objective.unwrap().as_f64(),
        id: next_id,
        fixes: Vec::new(),
        x: root.x.unwrap(),
    });
    next_id += 1;

    let int_tol = s.int_tol;
    let mut incumbent: Option<(f64, Vec<T>)> = None;
    let gap = |v: f64| s.tol.as_f64().sqrt() * v.abs().max(1.0);

    while let Some(node) = heap.pop() {
        if let Some((best, _)) = &incumbent {
            if node.bound <= *best + gap(*best) {
                break;
            }
        }
        let mut branch: Option<(usize, T)> = None;
        for &b in &p.binaries {
            let v = node.x[b];
            let frac = (v - v.round()).abs();
            if frac > int_tol && branch.is_none_or(|(_, f)| frac > f) {
                branch = Some((b, frac));
            }
        }
        let Some((b, _)) = branch else {
            if incumbent.as_ref().is_none_or(|(best, _)| node.bound > *best) {
                let mut x = node.x;
                for &i in &p.binaries {
                    x[i] = x[i].round();
                }
                incumbent = Some((node.bound, x));
            }
            continue;
        };
        for v in [T::zero(), T::one()] {
            if stats.nodes >= s.node_limit {
                return Err(ConicError::NodeLimit(s.node_limit));
            }
            let mut fixes = node.fixes.clone();
            fixes.push((b, v));
            let sol = solve(&fixes, &mut stats)?;
            match sol.status {
                SolveStatus::Optimal => {
                    heap.push(Node {
                        bound: sol.objective.unwrap().as_f64(),
                        id: next_id,
                        fixes,
                        x: sol.x.unwrap(),
                    });
                    next_id += 1;
                }
                SolveStatus::NumericalLimit => {
                    log::warn!("branch-and-bound node dropped after numerical trouble");
                }
                _ => {}
            }
        }
    }

    Ok(match incumbent {
        Some((_, x)) => ConicSolution {
            status: SolveStatus::Optimal,
            objective: Some(p.objective.eval(&x)),
            x: Some(x),
            stats,
        },
        None => ConicSolution::failed(SolveStatus::Infeasible, stats),
    })
}

#[cfg(test)]
mod tests {
    use super::super::*;

    #[test]
    fn half_cap_rounds_down() {
        let mut p = ConicProgram::<f64>::new();
        let x = p.add_binary("x");
        p.objective = Affine::var(x);
        p.le(&Affine::var(x), &Affine::constant(0.5));
        let s = solve_mip(&p, &SolverSettings::default()).unwrap();
        assert!(s.is_optimal());
        assert!(s.objective.unwrap().abs() < 1e-6);
        assert_eq!(s.value(x), Some(0.0));
    }

    #[test]
    fn two_binaries_capped() {
        let mut p = ConicProgram::<f64>::new();
        let a = p.add_binary("a");
        let b = p.add_binary("b");
        let sum = Affine { terms: vec![(a, 1.0), (b, 1.0)], constant: 0.0 };
        p.objective = sum.clone();
        p.le(&sum, &Affine::constant(1.5));
        let s = solve_mip(&p, &SolverSettings::default()).unwrap();
        assert!((s.objective.unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn contradictory_fixings() {
        let mut p = ConicProgram::<f64>::new();
        let a = p.add_binary("a");
        p.objective = Affine::var(a);
        p.fix(a, 1.0);
        p.le(&Affine::var(a), &Affine::constant(0.5));
        let s = solve_mip(&p, &SolverSettings::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
    }
}
