use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use super::{IslandData, ModelError, SdpMap, SocpMap};
use crate::conic::ConicSolution;
use crate::netmodel::Phase;

/// Largest rank ratio at which phasors are still recovered.
pub const EXACTNESS_THRESHOLD: f64 = 1e-4;

/// `|λ2| / |λ1|` of a Hermitian matrix; 0 for a zero matrix.
pub fn block_rank_ratio(m: &DMatrix<Complex64>) -> f64 {
    let (l1, l2, _) = leading(m);
    if l1.abs() <= f64::MIN_POSITIVE {
        return 0.0;
    }
    l2.abs() / l1.abs()
}

/// Two eigenvalues of largest magnitude and the eigenvector of the first.
fn leading(m: &DMatrix<Complex64>) -> (f64, f64, DVector<Complex64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()));
    let l1 = eig.eigenvalues[order[0]];
    let l2 = order.get(1).map_or(0.0, |&k| eig.eigenvalues[k]);
    (l1, l2, eig.eigenvectors.column(order[0]).into_owned())
}

/// Values of every line block `[[V_i, S], [S^H, I]]` in tree order.
pub fn line_block_values(sol: &ConicSolution<f64>, map: &SdpMap) -> Option<Vec<DMatrix<Complex64>>> {
    let x = sol.x.as_ref()?;
    Some(map.blocks.iter().map(|h| h.eval(x)).collect())
}

/// Worst rank ratio over all line blocks; 0 for an island without lines.
pub fn rank1_ratio(sol: &ConicSolution<f64>, map: &SdpMap) -> Option<f64> {
    let blocks = line_block_values(sol, map)?;
    Some(blocks.iter().map(block_rank_ratio).fold(0.0, f64::max))
}

/// Worst relative residual of `l v = P^2 + Q^2` over the lines.
pub fn socp_exactness(sol: &ConicSolution<f64>, map: &SocpMap) -> Option<f64> {
    let x = sol.x.as_ref()?;
    let mut worst: f64 = 0.0;
    for (k, &l) in map.l.iter().enumerate() {
        let s2 = x[map.p[k]].powi(2) + x[map.q[k]].powi(2);
        let v = map.v[map.parent[k]].eval(x);
        worst = worst.max((x[l] * v - s2).abs() / s2.max(1.0));
    }
    Some(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BusPhasors {
    pub bus: String,
    pub phases: Vec<Phase>,
    /// Per-unit line-to-neutral phasor per phase.
    #[serde(skip)]
    pub v: Vec<Complex64>,
    pub magnitude: Vec<f64>,
    pub angle_deg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceOutput {
    pub id: String,
    pub p_kw: f64,
    pub q_kvar: f64,
}

/// Phasor solution recovered from an exact relaxation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasorProfile {
    pub buses: Vec<BusPhasors>,
    pub sources: Vec<SourceOutput>,
    /// Per line in tree order, per line phase, per unit.
    #[serde(skip)]
    pub currents: Vec<Vec<Complex64>>,
    pub gamma: Vec<f64>,
    /// Per source, per bus phase, per unit.
    #[serde(skip)]
    pub injections: Vec<Vec<Complex64>>,
    pub generation_kw: f64,
    pub served_kw: f64,
    pub losses_kw: f64,
    pub rank_ratio: f64,
}

impl PhasorProfile {
    pub fn bus(&self, id: &str) -> Option<&BusPhasors> {
        self.buses.iter().find(|b| b.bus == id)
    }
}

/// Unit rotation that best maps `x` onto `target`.
fn rotation(x: &[Complex64], target: &[Complex64]) -> Complex64 {
    let dot: Complex64 = x.iter().zip(target).map(|(a, b)| a.conj() * b).sum();
    if dot.norm() > 0.0 {
        dot / dot.norm()
    } else {
        Complex64::new(1.0, 0.0)
    }
}

fn scaled_leading(m: &DMatrix<Complex64>) -> Vec<Complex64> {
    let (l1, _, u) = leading(m);
    let s = l1.max(0.0).sqrt();
    u.iter().map(|c| c * s).collect()
}

/// Recovers bus voltages and line currents by walking the tree from the
/// reference, taking the leading eigenvector of every line block.
///
/// Refuses with [`ModelError::NotExact`] when the worst rank ratio exceeds
/// `threshold`.
pub fn recover_phasors(
    d: &IslandData,
    sol: &ConicSolution<f64>,
    map: &SdpMap,
    threshold: f64,
) -> Result<PhasorProfile, ModelError> {
    let x = sol.x.as_ref().ok_or(ModelError::NoSolution)?;
    let ratio = rank1_ratio(sol, map).ok_or(ModelError::NoSolution)?;
    if ratio > threshold {
        return Err(ModelError::NotExact(ratio));
    }

    let mut v: Vec<Option<Vec<Complex64>>> = vec![None; d.buses.len()];
    v[d.reference] = Some(
        d.buses[d.reference]
            .phases
            .iter()
            .map(|p| d.v0[p.index()])
            .collect(),
    );
    let mut currents = Vec::with_capacity(d.lines.len());
    for (k, l) in d.lines.iter().enumerate() {
        let m = l.phases.len();
        let vi_all = v[l.parent].clone().expect("tree order");
        let pp = d.positions(l.parent, l.phases);
        let vi: Vec<Complex64> = pp.iter().map(|&a| vi_all[a]).collect();
        let mut u = scaled_leading(&map.blocks[k].eval(x));
        let rot = rotation(&u[..m], &vi);
        u.iter_mut().for_each(|c| *c *= rot);
        let cur: Vec<Complex64> = u[m..].to_vec();
        let vj: Vec<Complex64> = (0..m)
            .map(|a| vi[a] - (0..m).map(|b| l.z[(a, b)] * cur[b]).sum::<Complex64>())
            .collect();

        let child = &d.buses[l.child];
        let pc = d.positions(l.child, l.phases);
        let mut full = if child.phases.len() > m {
            // phases not on the line come from the child's own matrix
            let mut w = scaled_leading(&map.v[l.child].eval(x));
            let known: Vec<Complex64> = pc.iter().map(|&a| w[a]).collect();
            let r = rotation(&known, &vj);
            w.iter_mut().for_each(|c| *c *= r);
            w
        } else {
            vec![Complex64::new(0.0, 0.0); child.phases.len()]
        };
        for (a, &pos) in pc.iter().enumerate() {
            full[pos] = vj[a];
        }
        v[l.child] = Some(full);
        currents.push(cur);
    }

    let s_ph = d.s_phase();
    let gamma = map.gamma_values(sol).ok_or(ModelError::NoSolution)?;
    let injections: Vec<Vec<Complex64>> = (0..d.sources.len())
        .map(|s| {
            map.gen_p[s]
                .iter()
                .zip(&map.gen_q[s])
                .map(|(&p, &q)| Complex64::new(x[p], x[q]))
                .collect()
        })
        .collect();
    let sources: Vec<SourceOutput> = (0..d.sources.len())
        .map(|s| {
            let (p, q) = map.gen_value(sol, s).expect("solution values");
            SourceOutput {
                id: d.sources[s].id.clone(),
                p_kw: p * s_ph,
                q_kvar: q * s_ph,
            }
        })
        .collect();
    let generation_kw: f64 = sources.iter().map(|s| s.p_kw).sum();
    let served_kw: f64 = d
        .loads
        .iter()
        .zip(&gamma)
        .map(|(l, g)| g * l.demand.iter().map(|c| c.re).sum::<f64>() * s_ph)
        .sum();

    let buses = d
        .buses
        .iter()
        .zip(v)
        .map(|(b, vb)| {
            let vb = vb.expect("every island bus is reached by the tree");
            BusPhasors {
                bus: b.id.clone(),
                phases: b.phases.iter().collect(),
                magnitude: vb.iter().map(|c| c.norm()).collect(),
                angle_deg: vb.iter().map(|c| c.arg().to_degrees()).collect(),
                v: vb,
            }
        })
        .collect();

    Ok(PhasorProfile {
        buses,
        sources,
        currents,
        gamma,
        injections,
        generation_kw,
        served_kw,
        losses_kw: generation_kw - served_kw,
        rank_ratio: ratio,
    })
}

/// Worst per-unit power balance mismatch of a recovered profile, per bus
/// and phase.
pub fn balance_mismatch(d: &IslandData, profile: &PhasorProfile) -> f64 {
    let mut net: Vec<Vec<Complex64>> = d
        .buses
        .iter()
        .map(|b| vec![Complex64::new(0.0, 0.0); b.phases.len()])
        .collect();
    for (k, l) in d.lines.iter().enumerate() {
        let cur = &profile.currents[k];
        for (a, (&pp, &pc)) in d
            .positions(l.parent, l.phases)
            .iter()
            .zip(&d.positions(l.child, l.phases))
            .enumerate()
        {
            net[l.parent][pp] -= profile.buses[l.parent].v[pp] * cur[a].conj();
            net[l.child][pc] += profile.buses[l.child].v[pc] * cur[a].conj();
        }
    }
    for (i, ld) in d.loads.iter().enumerate() {
        for (a, dem) in ld.demand.iter().enumerate() {
            net[ld.bus][a] -= dem * profile.gamma[i];
        }
    }
    for (s, src) in d.sources.iter().enumerate() {
        for (a, g) in profile.injections[s].iter().enumerate() {
            net[src.bus][a] += g;
        }
    }
    net.iter()
        .flatten()
        .fold(0.0, |w: f64, c| w.max(c.norm()))
}
