use num_complex::Complex64;

use super::cmat::CAff;
use super::{Fixes, IslandData};
use crate::conic::{Affine, ConicProgram, ConicSolution};

#[derive(Debug, Clone, PartialEq)]
pub struct MilpMap {
    pub gamma: Vec<usize>,
    /// Per source, per phase of its bus.
    pub gen_p: Vec<Vec<usize>>,
    pub gen_q: Vec<Vec<usize>>,
    /// Squared magnitude per bus phase; constant at the reference.
    pub v: Vec<Vec<Affine<f64>>>,
    /// Per line, per line phase: real and reactive flow.
    pub p: Vec<Vec<usize>>,
    pub q: Vec<Vec<usize>>,
}

impl MilpMap {
    pub fn gamma_values(&self, sol: &ConicSolution<f64>) -> Option<Vec<f64>> {
        let x = sol.x.as_ref()?;
        Some(self.gamma.iter().map(|&k| x[k]).collect())
    }
}

/// Lossless linear three-phase model with binary load statuses.
///
/// The sending-end power matrix is approximated as `δ · DIAG(Λ)` with
/// `δ[φ][ψ] = v0_φ / v0_ψ` from the nominal reference phasors, so only the
/// per-phase flows `Λ` remain as variables.
pub fn build_clr_milp(d: &IslandData, fixes: &Fixes) -> (ConicProgram<f64>, MilpMap) {
    let mut p = ConicProgram::new();

    let gamma: Vec<usize> = d
        .loads
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let g = p.add_binary(format!("gamma[{}]", l.id));
            if let Some(&on) = fixes.get(&k) {
                p.fix(g, if on { 1.0 } else { 0.0 });
            }
            g
        })
        .collect();

    let mut gen_p = Vec::new();
    let mut gen_q = Vec::new();
    for s in &d.sources {
        let phases = d.buses[s.bus].phases;
        let ps: Vec<usize> = phases
            .iter()
            .map(|ph| p.add_var(format!("p[{}].{}", s.id, ph.label())))
            .collect();
        let qs: Vec<usize> = phases
            .iter()
            .map(|ph| p.add_var(format!("q[{}].{}", s.id, ph.label())))
            .collect();
        let sum = |ks: &[usize]| Affine {
            terms: ks.iter().map(|&k| (k, 1.0)).collect(),
            constant: 0.0,
        };
        if s.fixed_p {
            p.eq2(&sum(&ps), &Affine::constant(s.p_rate));
        } else {
            p.ge0(sum(&ps));
            p.le(&sum(&ps), &Affine::constant(s.p_rate));
        }
        p.ge0(sum(&qs));
        p.le(&sum(&qs), &Affine::constant(s.q_rate));
        gen_p.push(ps);
        gen_q.push(qs);
    }

    let v: Vec<Vec<Affine<f64>>> = d
        .buses
        .iter()
        .enumerate()
        .map(|(b, bus)| {
            (0..bus.phases.len())
                .map(|a| {
                    if b == d.reference {
                        Affine::constant(1.0)
                    } else {
                        let k = p.add_var(format!("v[{}].{a}", bus.id));
                        p.bounds(k, bus.vmin2[a], bus.vmax2[a]);
                        Affine::var(k)
                    }
                })
                .collect()
        })
        .collect();

    let mut fp = Vec::new();
    let mut fq = Vec::new();
    for l in &d.lines {
        let mut lp = Vec::new();
        let mut lq = Vec::new();
        for (a, ph) in l.phases.iter().enumerate() {
            let kp = p.add_var(format!("P[{}].{}", l.id, ph.label()));
            let kq = p.add_var(format!("Q[{}].{}", l.id, ph.label()));
            if l.smax[a].is_finite() {
                p.bounds(kp, -l.smax[a], l.smax[a]);
                p.bounds(kq, -l.smax[a], l.smax[a]);
            }
            lp.push(kp);
            lq.push(kq);
        }
        fp.push(lp);
        fq.push(lq);
    }

    let mut bal: Vec<Vec<CAff>> = d
        .buses
        .iter()
        .map(|b| vec![CAff::zero(); b.phases.len()])
        .collect();
    for (k, l) in d.lines.iter().enumerate() {
        let pp = d.positions(l.parent, l.phases);
        let pc = d.positions(l.child, l.phases);
        let phases: Vec<_> = l.phases.iter().collect();
        for a in 0..phases.len() {
            bal[l.parent][pp[a]].re.add_term(fp[k][a], -1.0);
            bal[l.parent][pp[a]].im.add_term(fq[k][a], -1.0);
            bal[l.child][pc[a]].re.add_term(fp[k][a], 1.0);
            bal[l.child][pc[a]].im.add_term(fq[k][a], 1.0);
        }
        // v_j = v_i - 2 Re Σ_ψ δ[φ][ψ] Λ_ψ conj(Z[φ][ψ])
        for a in 0..phases.len() {
            let mut e = v[l.child][pc[a]].clone();
            e.add(&v[l.parent][pp[a]], -1.0);
            for b in 0..phases.len() {
                let delta = d.v0[phases[a].index()] * d.v0[phases[b].index()].conj();
                let c: Complex64 = delta * l.z[(a, b)].conj();
                // Re(c (P + jQ)) = c.re P - c.im Q
                e.add_term(fp[k][b], 2.0 * c.re).add_term(fq[k][b], -2.0 * c.im);
            }
            p.eq0(e.compact());
        }
    }
    for (s, src) in d.sources.iter().enumerate() {
        for a in 0..gen_p[s].len() {
            bal[src.bus][a].re.add_term(gen_p[s][a], 1.0);
            bal[src.bus][a].im.add_term(gen_q[s][a], 1.0);
        }
    }
    for (i, ld) in d.loads.iter().enumerate() {
        for (a, dem) in ld.demand.iter().enumerate() {
            if *dem != Complex64::new(0.0, 0.0) {
                bal[ld.bus][a].re.add_term(gamma[i], -dem.re);
                bal[ld.bus][a].im.add_term(gamma[i], -dem.im);
            }
        }
    }
    for row in bal {
        for c in row {
            p.eq0(c.re.compact());
            p.eq0(c.im.compact());
        }
    }

    p.objective = Affine {
        terms: d
            .loads
            .iter()
            .enumerate()
            .map(|(i, l)| (gamma[i], l.weight))
            .collect(),
        constant: 0.0,
    };

    (
        p,
        MilpMap {
            gamma,
            gen_p,
            gen_q,
            v,
            p: fp,
            q: fq,
        },
    )
}
