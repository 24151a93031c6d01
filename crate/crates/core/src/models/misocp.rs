use num_complex::Complex64;

use super::{Fixes, IslandData, ModelError};
use crate::conic::{solve_conic, Affine, ConicProgram, ConicSolution, SolverSettings};

#[derive(Debug, Clone, PartialEq)]
pub struct SocpMap {
    pub gamma: Vec<usize>,
    pub gen_p: Vec<usize>,
    pub gen_q: Vec<usize>,
    /// Squared voltage magnitude per bus; constant at the reference.
    pub v: Vec<Affine<f64>>,
    /// Per line: sending-end flow and squared current magnitude.
    pub p: Vec<usize>,
    pub q: Vec<usize>,
    pub l: Vec<usize>,
    /// Sending bus of each line.
    pub parent: Vec<usize>,
}

impl SocpMap {
    pub fn gamma_values(&self, sol: &ConicSolution<f64>) -> Option<Vec<f64>> {
        let x = sol.x.as_ref()?;
        Some(self.gamma.iter().map(|&k| x[k]).collect())
    }
}

/// Second-order cone restoration model for single-phase islands.
///
/// With `binary` the statuses are binaries for [`crate::conic::solve_mip`];
/// otherwise they are relaxed to `[0, 1]`. `w0` weighs network losses and
/// defaults to `1e-3 * w^n`.
pub fn build_clr_misocp(
    d: &IslandData,
    w0: Option<f64>,
    fixes: &Fixes,
    binary: bool,
) -> Result<(ConicProgram<f64>, SocpMap), ModelError> {
    if !d.single_phase() {
        return Err(ModelError::Unbalanced(format!("island {}", d.island)));
    }
    let w0 = w0.unwrap_or(1e-3 * d.weights.last().copied().unwrap_or(0.0));
    let mut p = ConicProgram::new();

    let gamma: Vec<usize> = d
        .loads
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let name = format!("gamma[{}]", l.id);
            let g = if binary { p.add_binary(name) } else { p.add_var(name) };
            match fixes.get(&k) {
                Some(&on) => p.fix(g, if on { 1.0 } else { 0.0 }),
                None if !binary => p.bounds(g, 0.0, 1.0),
                None => {}
            }
            g
        })
        .collect();

    let mut gen_p = Vec::new();
    let mut gen_q = Vec::new();
    for s in &d.sources {
        let gp = p.add_var(format!("p[{}]", s.id));
        let gq = p.add_var(format!("q[{}]", s.id));
        if s.fixed_p {
            p.fix(gp, s.p_rate);
        } else {
            p.bounds(gp, 0.0, s.p_rate);
        }
        p.bounds(gq, 0.0, s.q_rate);
        gen_p.push(gp);
        gen_q.push(gq);
    }

    let v: Vec<Affine<f64>> = d
        .buses
        .iter()
        .enumerate()
        .map(|(b, bus)| {
            if b == d.reference {
                Affine::constant(1.0)
            } else {
                let k = p.add_var(format!("v[{}]", bus.id));
                p.bounds(k, bus.vmin2[0], bus.vmax2[0]);
                Affine::var(k)
            }
        })
        .collect();

    let mut fp = Vec::new();
    let mut fq = Vec::new();
    let mut fl = Vec::new();
    for l in &d.lines {
        let kp = p.add_var(format!("P[{}]", l.id));
        let kq = p.add_var(format!("Q[{}]", l.id));
        let kl = p.add_var(format!("l[{}]", l.id));
        if l.imax2[0].is_finite() {
            p.le(&Affine::var(kl), &Affine::constant(l.imax2[0]));
        }
        fp.push(kp);
        fq.push(kq);
        fl.push(kl);
    }

    let mut bal_p: Vec<Affine<f64>> = vec![Affine::zero(); d.buses.len()];
    let mut bal_q: Vec<Affine<f64>> = vec![Affine::zero(); d.buses.len()];
    for (k, l) in d.lines.iter().enumerate() {
        let z = l.z[(0, 0)];
        bal_p[l.parent].add_term(fp[k], -1.0);
        bal_q[l.parent].add_term(fq[k], -1.0);
        bal_p[l.child].add_term(fp[k], 1.0).add_term(fl[k], -z.re);
        bal_q[l.child].add_term(fq[k], 1.0).add_term(fl[k], -z.im);

        // v_j = v_i - 2 Re(z* S) + |z|^2 l
        let mut drop = v[l.child].clone();
        drop.add(&v[l.parent], -1.0);
        drop.add_term(fp[k], 2.0 * z.re)
            .add_term(fq[k], 2.0 * z.im)
            .add_term(fl[k], -z.norm_sqr());
        p.eq0(drop.compact());

        // l v_i >= P^2 + Q^2 as ||(2P, 2Q, l - v_i)|| <= l + v_i
        let mut top = Affine::var(fl[k]);
        top.add(&v[l.parent], 1.0);
        let mut diff = Affine::var(fl[k]);
        diff.add(&v[l.parent], -1.0);
        p.soc(vec![top, Affine::term(fp[k], 2.0), Affine::term(fq[k], 2.0), diff]);
    }
    for (s, src) in d.sources.iter().enumerate() {
        bal_p[src.bus].add_term(gen_p[s], 1.0);
        bal_q[src.bus].add_term(gen_q[s], 1.0);
    }
    for (i, ld) in d.loads.iter().enumerate() {
        let dem: Complex64 = ld.demand.iter().sum();
        bal_p[ld.bus].add_term(gamma[i], -dem.re);
        bal_q[ld.bus].add_term(gamma[i], -dem.im);
    }
    for e in bal_p.into_iter().chain(bal_q) {
        p.eq0(e.compact());
    }

    // Σ w γ − w0 Σ Re(s_i), where Σ Re(s_i) = generation − served demand
    let mut obj = Affine::zero();
    for (i, ld) in d.loads.iter().enumerate() {
        let kw: f64 = ld.demand.iter().map(|s| s.re).sum();
        obj.add_term(gamma[i], ld.weight + w0 * kw);
    }
    for &g in &gen_p {
        obj.add_term(g, -w0);
    }
    p.objective = obj.compact();

    Ok((
        p,
        SocpMap {
            gamma,
            gen_p,
            gen_q,
            v,
            p: fp,
            q: fq,
            l: fl,
            parent: d.lines.iter().map(|l| l.parent).collect(),
        },
    ))
}

/// Power flow of the cone model for fixed load statuses.
///
/// With every status fixed the objective is the losses alone, so the loss
/// weight is raised to one. The optimum is the same and the cone residual
/// comes out far smaller than under the restoration weights.
pub fn misocp_flows(
    d: &IslandData,
    on: &[bool],
    settings: &SolverSettings<f64>,
) -> Result<(ConicSolution<f64>, SocpMap), ModelError> {
    let fixes: Fixes = on.iter().copied().enumerate().collect();
    let (p, map) = build_clr_misocp(d, Some(1.0), &fixes, false)?;
    let sol = solve_conic(&p, settings)?;
    if !sol.is_optimal() {
        return Err(ModelError::NotSolved(sol.status));
    }
    Ok((sol, map))
}
