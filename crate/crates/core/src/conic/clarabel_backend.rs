use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::{Affine, ConicError, ConicProgram, ConicSolution, SolveStats, SolveStatus, SolverSettings};
use crate::scalar::ConicScalar;

/// Solves a continuous program with the interior-point backend.
///
/// Rows map to `A x + s = b, s ∈ K`; an affine expression `e = a'x + c`
/// in a cone becomes the row `(-a, c)`.
pub fn solve_conic<T: ConicScalar>(
    p: &ConicProgram<T>,
    s: &SolverSettings<T>,
) -> Result<ConicSolution<T>, ConicError> {
    if !p.binaries.is_empty() {
        return Err(ConicError::HasBinaries);
    }
    solve_relaxed(p, s)
}

pub(super) fn solve_relaxed<T: ConicScalar>(
    p: &ConicProgram<T>,
    s: &SolverSettings<T>,
) -> Result<ConicSolution<T>, ConicError> {
    p.check()?;
    s.validate()?;
    let n = p.len();

    let mut rows = Rows::default();
    let mut cones: Vec<SupportedConeT<T>> = Vec::new();
    if !p.eqs.is_empty() {
        p.eqs.iter().for_each(|e| rows.push(e, T::one()));
        cones.push(SupportedConeT::ZeroConeT(p.eqs.len()));
    }
    if !p.nonneg.is_empty() {
        p.nonneg.iter().for_each(|e| rows.push(e, T::one()));
        cones.push(SupportedConeT::NonnegativeConeT(p.nonneg.len()));
    }
    for c in &p.socs {
        c.iter().for_each(|e| rows.push(e, T::one()));
        cones.push(SupportedConeT::SecondOrderConeT(c.len()));
    }
    let sqrt2 = T::lit(2f64.sqrt());
    for b in &p.psd {
        for j in 0..b.dim {
            for i in 0..=j {
                let scale = if i == j { T::one() } else { sqrt2 };
                rows.push(b.entry(i, j), scale);
            }
        }
        cones.push(SupportedConeT::PSDTriangleConeT(b.dim));
    }

    let m = rows.b.len();
    let a = CscMatrix::new_from_triplets(m, n, rows.i, rows.j, rows.v);
    let pmat = CscMatrix::<T>::zeros((n, n));
    let mut q = vec![T::zero(); n];
    for &(i, c) in &p.objective.terms {
        q[i] -= c;
    }

    let mut builder = DefaultSettingsBuilder::default();
    builder
        .verbose(s.verbose)
        .max_iter(s.max_iter)
        .tol_gap_abs(s.tol)
        .tol_gap_rel(s.tol)
        .tol_feas(s.tol);
    if s.deterministic {
        builder.max_threads(1);
    }
    let settings = builder
        .build()
        .map_err(|e| ConicError::Backend(e.to_string()))?;
    let mut solver = DefaultSolver::new(&pmat, &q, &a, &rows.b, &cones, settings)
        .map_err(|e| ConicError::Backend(format!("{e:?}")))?;
    solver.solve();

    let sol = &solver.solution;
    let mut stats = SolveStats {
        iterations: sol.iterations,
        solve_time: sol.solve_time,
        primal_residual: sol.r_prim.as_f64(),
        dual_residual: sol.r_dual.as_f64(),
        reduced_accuracy: false,
        nodes: 0,
    };
    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved => {
            stats.reduced_accuracy = true;
            SolveStatus::Optimal
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::NumericalLimit,
    };
    if status != SolveStatus::Optimal {
        return Ok(ConicSolution::failed(status, stats));
    }
    let x = sol.x.clone();
    let objective = p.objective.eval(&x);
    Ok(ConicSolution {
        status,
        x: Some(x),
        objective: Some(objective),
        stats,
    })
}

#[derive(Default)]
struct Rows<T> {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<T>,
    b: Vec<T>,
}

impl<T: ConicScalar> Rows<T> {
    fn push(&mut self, e: &Affine<T>, scale: T) {
        let r = self.b.len();
        for &(k, c) in &e.terms {
            if c != T::zero() {
                self.i.push(r);
                self.j.push(k);
                self.v.push(-c * scale);
            }
        }
        self.b.push(e.constant * scale);
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;

    #[test]
    fn psd_two_by_two() {
        // maximize -x s.t. [[x, 1], [1, x]] ⪰ 0
        let mut p = ConicProgram::<f64>::new();
        let x = p.add_var("x");
        p.objective = Affine::term(x, -1.0);
        let mut b = PsdBlock::new(2);
        *b.entry_mut(0, 0) = Affine::var(x);
        *b.entry_mut(1, 1) = Affine::var(x);
        *b.entry_mut(0, 1) = Affine::constant(1.0);
        p.psd_block(b);
        let s = solve_conic(&p, &SolverSettings::default()).unwrap();
        assert!(s.is_optimal());
        assert!((s.objective.unwrap() + 1.0).abs() < 1e-6);
        assert!((s.value(x).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn bounded_lp() {
        let mut p = ConicProgram::<f64>::new();
        let x = p.add_var("x");
        p.objective = Affine::var(x);
        p.bounds(x, 0.0, 3.0);
        let s = solve_conic(&p, &SolverSettings::default()).unwrap();
        assert!((s.objective.unwrap() - 3.0).abs() < 1e-6);
    }

    #[test]
    fn contradictory_bounds_infeasible() {
        let mut p = ConicProgram::<f64>::new();
        let x = p.add_var("x");
        p.objective = Affine::var(x);
        p.bounds(x, 1.0, 0.0);
        let s = solve_conic(&p, &SolverSettings::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert!(s.x.is_none());
    }

    #[test]
    fn unbounded_detected() {
        let mut p = ConicProgram::<f64>::new();
        let x = p.add_var("x");
        p.objective = Affine::var(x);
        p.ge0(Affine::var(x));
        let s = solve_conic(&p, &SolverSettings::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Unbounded);
    }

    #[test]
    fn second_order_cone() {
        // maximize x + y s.t. ||(x, y)|| <= 1
        let mut p = ConicProgram::<f64>::new();
        let x = p.add_var("x");
        let y = p.add_var("y");
        p.objective = Affine { terms: vec![(x, 1.0), (y, 1.0)], constant: 0.0 };
        p.soc(vec![Affine::constant(1.0), Affine::var(x), Affine::var(y)]);
        let s = solve_conic(&p, &SolverSettings::default()).unwrap();
        assert!((s.objective.unwrap() - 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn single_precision() {
        let mut p = ConicProgram::<f32>::new();
        let x = p.add_var("x");
        p.objective = Affine::var(x);
        p.bounds(x, 0.0, 3.0);
        let settings = SolverSettings { tol: 1e-5, ..Default::default() };
        let s = solve_conic(&p, &settings).unwrap();
        assert!((s.objective.unwrap() - 3.0).abs() < 1e-3);
    }
}
