use nalgebra::DMatrix;
use num_complex::Complex64;

use super::cmat::{CAff, CMat};
use super::{rank1_ratio, Fixes, IslandData, ModelError};
use crate::conic::{solve_conic, Affine, ConicProgram, ConicSolution, HermExpr, SolverSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpObjective {
    /// Weighted restored load with light loss and current penalties.
    Restoration,
    /// Weighted restored load alone.
    Served,
    /// Least total generation for fixed load statuses.
    MinGeneration,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpOptions {
    pub objective: SdpObjective,
    /// Penalty per unit of total losses (sum over phases, per-phase p.u.).
    /// Defaults to `1e-3 * w^1`.
    pub loss_weight: Option<f64>,
    /// Penalty on the trace of every line current matrix. Lines without
    /// impedance always get a stronger fixed penalty.
    pub current_weight: Option<f64>,
    /// Lower bound on the weighted restored load.
    pub served_floor: Option<f64>,
    /// Upper bound on total active generation (per-phase p.u.).
    pub generation_cap: Option<f64>,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            objective: SdpObjective::Restoration,
            loss_weight: None,
            current_weight: None,
            served_floor: None,
            generation_cap: None,
        }
    }
}

impl SdpOptions {
    pub fn dispatch() -> Self {
        SdpOptions {
            objective: SdpObjective::MinGeneration,
            ..Default::default()
        }
    }
}

/// Program indices of every model symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpMap {
    /// Per island load.
    pub gamma: Vec<usize>,
    /// Per source, per phase of its bus.
    pub gen_p: Vec<Vec<usize>>,
    pub gen_q: Vec<Vec<usize>>,
    /// Per bus.
    pub v: Vec<HermExpr<f64>>,
    /// Per line, row-major `(re, im)` indices of the full matrix.
    pub s: Vec<Vec<(usize, usize)>>,
    pub i: Vec<HermExpr<f64>>,
    /// Complex line blocks `[[V_i, S], [S^H, I]]`.
    pub blocks: Vec<HermExpr<f64>>,
}

impl SdpMap {
    pub fn block_value(&self, sol: &ConicSolution<f64>, line: usize) -> Option<DMatrix<Complex64>> {
        sol.x.as_ref().map(|x| self.blocks[line].eval(x))
    }

    pub fn gamma_values(&self, sol: &ConicSolution<f64>) -> Option<Vec<f64>> {
        let x = sol.x.as_ref()?;
        Some(self.gamma.iter().map(|&k| x[k]).collect())
    }

    pub fn v_value(&self, sol: &ConicSolution<f64>, bus: usize) -> Option<DMatrix<Complex64>> {
        sol.x.as_ref().map(|x| self.v[bus].eval(x))
    }

    pub fn i_value(&self, sol: &ConicSolution<f64>, line: usize) -> Option<DMatrix<Complex64>> {
        sol.x.as_ref().map(|x| self.i[line].eval(x))
    }

    pub fn s_value(&self, sol: &ConicSolution<f64>, line: usize) -> Option<DMatrix<Complex64>> {
        let x = sol.x.as_ref()?;
        let m = (self.s[line].len() as f64).sqrt() as usize;
        Some(DMatrix::from_fn(m, m, |a, b| {
            let (r, i) = self.s[line][a * m + b];
            Complex64::new(x[r], x[i])
        }))
    }

    /// Source output `(p, q)` summed over phases, per-phase p.u.
    pub fn gen_value(&self, sol: &ConicSolution<f64>, source: usize) -> Option<(f64, f64)> {
        let x = sol.x.as_ref()?;
        Some((
            self.gen_p[source].iter().map(|&k| x[k]).sum(),
            self.gen_q[source].iter().map(|&k| x[k]).sum(),
        ))
    }
}

fn hermitian_vars(p: &mut ConicProgram<f64>, name: &str, m: usize) -> HermExpr<f64> {
    let mut h = HermExpr::zeros(m);
    for b in 0..m {
        for a in 0..=b {
            if a == b {
                let k = p.add_var(format!("{name}[{a}{a}]"));
                h.set(a, a, Affine::var(k), Affine::zero());
            } else {
                let r = p.add_var(format!("{name}[{a}{b}].re"));
                let i = p.add_var(format!("{name}[{a}{b}].im"));
                h.set(a, b, Affine::var(r), Affine::var(i));
            }
        }
    }
    h
}

fn sub_block(h: &HermExpr<f64>, pos: &[usize]) -> HermExpr<f64> {
    let mut out = HermExpr::zeros(pos.len());
    for b in 0..pos.len() {
        for a in 0..=b {
            let (re, im) = h.get(pos[a], pos[b]);
            out.set(a, b, re, im);
        }
    }
    out
}

/// Semidefinite relaxation of the restoration problem on a radial island.
///
/// Load statuses are continuous in `[0, 1]` and the rank-one condition on
/// each line block is dropped. Entries of `fixes` are added as equalities.
pub fn build_clr_sdp(d: &IslandData, fixes: &Fixes, opts: &SdpOptions) -> (ConicProgram<f64>, SdpMap) {
    let mut p = ConicProgram::new();
    let w_top = d.weights.iter().copied().fold(0.0, f64::max);
    let rho = opts
        .loss_weight
        .unwrap_or(if w_top > 0.0 { 1e-3 * w_top } else { 1e-3 });
    let kappa = opts.current_weight.unwrap_or(match opts.objective {
        SdpObjective::Restoration => 0.15 * rho,
        SdpObjective::Served => 0.0,
        SdpObjective::MinGeneration => 1e-6,
    });
    // without impedance nothing else pins the current matrix of a line
    let kappa_ideal = match opts.objective {
        SdpObjective::Restoration => rho,
        SdpObjective::Served => 0.0,
        SdpObjective::MinGeneration => 1e-2,
    };

    let gamma: Vec<usize> = d
        .loads
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let g = p.add_var(format!("gamma[{}]", l.id));
            match fixes.get(&k) {
                Some(&on) => p.fix(g, if on { 1.0 } else { 0.0 }),
                None => p.bounds(g, 0.0, 1.0),
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
        let sum_p = Affine {
            terms: ps.iter().map(|&k| (k, 1.0)).collect(),
            constant: 0.0,
        };
        let sum_q = Affine {
            terms: qs.iter().map(|&k| (k, 1.0)).collect(),
            constant: 0.0,
        };
        if s.fixed_p {
            p.eq2(&sum_p, &Affine::constant(s.p_rate));
        } else {
            p.ge0(sum_p.clone());
            p.le(&sum_p, &Affine::constant(s.p_rate));
        }
        p.ge0(sum_q.clone());
        p.le(&sum_q, &Affine::constant(s.q_rate));
        gen_p.push(ps);
        gen_q.push(qs);
    }

    let v: Vec<HermExpr<f64>> = d
        .buses
        .iter()
        .enumerate()
        .map(|(b, bus)| {
            if b == d.reference {
                let ph: Vec<Complex64> = bus.phases.iter().map(|x| d.v0[x.index()]).collect();
                let mut h = HermExpr::zeros(ph.len());
                for c in 0..ph.len() {
                    for a in 0..=c {
                        let z = ph[a] * ph[c].conj();
                        h.set(a, c, Affine::constant(z.re), Affine::constant(z.im));
                    }
                }
                h
            } else {
                let h = hermitian_vars(&mut p, &format!("V[{}]", bus.id), bus.phases.len());
                for a in 0..bus.phases.len() {
                    let diag = h.get(a, a).0;
                    p.le(&Affine::constant(bus.vmin2[a]), &diag);
                    p.le(&diag, &Affine::constant(bus.vmax2[a]));
                }
                h
            }
        })
        .collect();

    let mut s_idx = Vec::new();
    let mut i_vars = Vec::new();
    for l in &d.lines {
        let m = l.phases.len();
        let mut cells = Vec::with_capacity(m * m);
        for a in 0..m {
            for b in 0..m {
                let r = p.add_var(format!("S[{}][{a}{b}].re", l.id));
                let i = p.add_var(format!("S[{}][{a}{b}].im", l.id));
                cells.push((r, i));
            }
        }
        s_idx.push(cells);
        let ih = hermitian_vars(&mut p, &format!("I[{}]", l.id), m);
        for a in (0..m).filter(|&a| l.imax2[a].is_finite()) {
            p.le(&ih.get(a, a).0, &Affine::constant(l.imax2[a]));
        }
        i_vars.push(ih);
    }

    let s_mat = |k: usize| -> CMat {
        let m = d.lines[k].phases.len();
        let mut c = CMat::zeros(m, m);
        for a in 0..m {
            for b in 0..m {
                let (r, i) = s_idx[k][a * m + b];
                *c.at_mut(a, b) = CAff::new(Affine::var(r), Affine::var(i));
            }
        }
        c
    };

    // Power balance per bus and phase.
    let mut balance: Vec<Vec<CAff>> = d
        .buses
        .iter()
        .map(|b| vec![CAff::zero(); b.phases.len()])
        .collect();
    for (k, l) in d.lines.iter().enumerate() {
        let s = s_mat(k);
        let zi = CMat::from_herm(&i_vars[k]).mul_left(&l.z);
        let pos_parent = d.positions(l.parent, l.phases);
        let pos_child = d.positions(l.child, l.phases);
        for a in 0..l.phases.len() {
            let one = Complex64::new(1.0, 0.0);
            balance[l.parent][pos_parent[a]].add_scaled(s.at(a, a), -one);
            balance[l.child][pos_child[a]].add_scaled(s.at(a, a), one);
            balance[l.child][pos_child[a]].add_scaled(zi.at(a, a), -one);
        }
    }
    for (si, s) in d.sources.iter().enumerate() {
        for a in 0..gen_p[si].len() {
            balance[s.bus][a].re.add_term(gen_p[si][a], 1.0);
            balance[s.bus][a].im.add_term(gen_q[si][a], 1.0);
        }
    }
    for (li, ld) in d.loads.iter().enumerate() {
        for (a, dem) in ld.demand.iter().enumerate() {
            if *dem != Complex64::new(0.0, 0.0) {
                balance[ld.bus][a].re.add_term(gamma[li], -dem.re);
                balance[ld.bus][a].im.add_term(gamma[li], -dem.im);
            }
        }
    }
    for row in balance {
        for c in row {
            p.eq0(c.re.compact());
            p.eq0(c.im.compact());
        }
    }

    // Ohm's law and the line blocks.
    let mut blocks = Vec::new();
    for (k, l) in d.lines.iter().enumerate() {
        let m = l.phases.len();
        let vi = sub_block(&v[l.parent], &d.positions(l.parent, l.phases));
        let vj = sub_block(&v[l.child], &d.positions(l.child, l.phases));
        let s = s_mat(k);
        let t = s.mul_right(&l.z.adjoint());
        let zizh = CMat::from_herm(&i_vars[k]).mul_left(&l.z).mul_right(&l.z.adjoint());
        let mut rhs = CMat::from_herm(&vi);
        rhs.add(&t, -1.0);
        rhs.add(&t.adjoint(), -1.0);
        rhs.add(&zizh, 1.0);
        for b in 0..m {
            for a in 0..=b {
                let (lre, lim) = vj.get(a, b);
                let r = rhs.at(a, b);
                let mut re = lre;
                re.add(&r.re, -1.0);
                p.eq0(re.compact());
                if a < b {
                    let mut im = lim;
                    im.add(&r.im, -1.0);
                    p.eq0(im.compact());
                }
            }
        }

        let mut h = HermExpr::zeros(2 * m);
        for b in 0..m {
            for a in 0..=b {
                let (re, im) = vi.get(a, b);
                h.set(a, b, re, im);
                let (re, im) = i_vars[k].get(a, b);
                h.set(m + a, m + b, re, im);
            }
        }
        for a in 0..m {
            for b in 0..m {
                let c = s.at(a, b);
                h.set(a, m + b, c.re.clone(), c.im.clone());
            }
        }
        p.hermitian_psd(&h);
        blocks.push(h);

        // a child with phases beyond the line keeps its own PSD voltage
        if d.buses[l.child].phases.len() > m && l.child != d.reference {
            p.hermitian_psd(&v[l.child]);
        }
    }

    let mut obj = Affine::zero();
    let trace_terms: Vec<(usize, f64)> = i_vars
        .iter()
        .zip(&d.lines)
        .flat_map(|(h, l)| {
            let k = if l.z.iter().all(|z| z.norm() == 0.0) { kappa_ideal } else { kappa };
            (0..h.dim).flat_map(move |a| h.get(a, a).0.terms.into_iter().map(move |(i, c)| (i, c * k)))
        })
        .collect();
    if let Some(cap) = opts.generation_cap {
        let mut slack = Affine::constant(cap);
        for &k in gen_p.iter().flatten() {
            slack.add_term(k, -1.0);
        }
        p.ge0(slack);
    }
    if let Some(floor) = opts.served_floor {
        let mut served = Affine::constant(-floor);
        for (li, ld) in d.loads.iter().enumerate() {
            served.add_term(gamma[li], ld.weight);
        }
        p.ge0(served);
    }
    match opts.objective {
        SdpObjective::Served => {
            for (li, ld) in d.loads.iter().enumerate() {
                obj.add_term(gamma[li], ld.weight);
            }
        }
        SdpObjective::Restoration => {
            for (li, ld) in d.loads.iter().enumerate() {
                obj.add_term(gamma[li], ld.weight);
                // losses = generation - served demand
                let kw: f64 = ld.demand.iter().map(|s| s.re).sum();
                obj.add_term(gamma[li], rho * kw);
            }
            for ps in &gen_p {
                for &k in ps {
                    obj.add_term(k, -rho);
                }
            }
        }
        SdpObjective::MinGeneration => {
            for ps in &gen_p {
                for &k in ps {
                    obj.add_term(k, -1.0);
                }
            }
        }
    }
    for (k, c) in trace_terms {
        obj.add_term(k, -c);
    }
    p.objective = obj.compact();

    (
        p,
        SdpMap {
            gamma,
            gen_p,
            gen_q,
            v,
            s: s_idx,
            i: i_vars,
            blocks,
        },
    )
}

const DISPATCH_SLACK: f64 = 1e-6;
const DISPATCH_RETRY_CURRENT_WEIGHT: f64 = 1e-3;

/// Fixed-status dispatch relaxation.
///
/// When the first solve is not rank one within `threshold`, a second one
/// holds total generation at the first optimum and weighs line currents
/// harder. The solution with the smaller rank ratio is returned.
pub fn solve_dispatch(
    d: &IslandData,
    on: &[bool],
    opts: &SdpOptions,
    solver: &SolverSettings<f64>,
    threshold: f64,
) -> Result<(ConicSolution<f64>, SdpMap), ModelError> {
    let fixes: Fixes = on.iter().copied().enumerate().collect();
    let solve = |opts: &SdpOptions| -> Result<(ConicSolution<f64>, SdpMap, f64), ModelError> {
        let (p, map) = build_clr_sdp(d, &fixes, opts);
        let sol = solve_conic(&p, solver)?;
        if !sol.is_optimal() {
            return Err(ModelError::NotSolved(sol.status));
        }
        let ratio = rank1_ratio(&sol, &map).ok_or(ModelError::NoSolution)?;
        Ok((sol, map, ratio))
    };
    let (sol, map, ratio) = solve(opts)?;
    if ratio <= threshold {
        return Ok((sol, map));
    }
    let total: f64 = (0..map.gen_p.len()).filter_map(|k| map.gen_value(&sol, k)).map(|g| g.0).sum();
    let retry = SdpOptions {
        generation_cap: Some(total + DISPATCH_SLACK * total.abs().max(1e-3)),
        current_weight: Some(DISPATCH_RETRY_CURRENT_WEIGHT),
        ..*opts
    };
    match solve(&retry) {
        Ok((s2, m2, r2)) if r2 < ratio => Ok((s2, m2)),
        _ => Ok((sol, map)),
    }
}
