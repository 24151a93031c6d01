//! Random test networks: single-phase radial feeders and weighted graphs.

use std::fmt::Write;

use rand::Rng;
use restoration::IslandGraph;

/// Shape of a random single-phase radial feeder.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialSpec {
    pub buses: usize,
    /// Level weights; load `k` (1-based over non-root buses) gets level
    /// `(k - 1) % levels + 1`.
    pub weights: Vec<f64>,
    pub zero_impedance: bool,
    /// Source rating as a fraction of total demand, drawn uniformly.
    pub capacity: (f64, f64),
}

impl Default for RadialSpec {
    fn default() -> Self {
        RadialSpec {
            buses: 6,
            weights: vec![16.0, 8.0, 4.0, 2.0, 1.0],
            zero_impedance: false,
            capacity: (0.3, 0.9),
        }
    }
}

/// Feeder document of a random tree rooted at `b0`, with one diesel source
/// at the root and one load on every other bus.
pub fn radial_feeder(rng: &mut impl Rng, spec: &RadialSpec) -> String {
    assert!(spec.buses >= 2, "a feeder needs two buses");
    let mut t = String::new();
    let weights: Vec<String> = spec.weights.iter().map(|w| format!("{w:?}")).collect();
    writeln!(t, "format = \"restoration-feeder\"\nversion = 1\nname = \"radial-{}\"", spec.buses).unwrap();
    writeln!(t, "s_base_kva = 1000.0\n\n[levels]\nweights = [{}]\n", weights.join(", ")).unwrap();
    writeln!(t, "[defaults]\nkv = 4.16\nvmin = 0.95\nvmax = 1.05\n").unwrap();
    for b in 0..spec.buses {
        writeln!(t, "[[buses]]\nid = \"b{b}\"\nphases = \"a\"\n").unwrap();
    }
    for b in 1..spec.buses {
        let parent = rng.random_range(0..b);
        writeln!(t, "[[lines]]\nfrom = \"b{parent}\"\nto = \"b{b}\"\nphases = \"a\"\nampacity = [400.0]").unwrap();
        if !spec.zero_impedance {
            let r: f64 = rng.random_range(0.05..0.4);
            let x: f64 = rng.random_range(0.05..0.4);
            writeln!(t, "r = [[{r:.4}]]\nx = [[{x:.4}]]").unwrap();
        }
        t.push('\n');
    }
    let mut total = 0.0;
    for b in 1..spec.buses {
        let kw: f64 = rng.random_range(20.0..200.0_f64).round();
        let kvar = (kw * rng.random_range(0.2..0.6_f64)).round();
        total += kw;
        let level = (b - 1) % spec.weights.len() + 1;
        writeln!(
            t,
            "[[loads]]\nbus = \"b{b}\"\nlevel = {level}\nkw = [{kw:?}, 0.0, 0.0]\nkvar = [{kvar:?}, 0.0, 0.0]\n"
        )
        .unwrap();
    }
    let p = (total * rng.random_range(spec.capacity.0..spec.capacity.1)).round();
    writeln!(t, "[[sources]]\nid = \"G\"\nbus = \"b0\"\nkind = \"diesel\"\np_kw = {p:?}\nq_kvar = {p:?}").unwrap();
    t
}

/// Random connected graph: a random spanning tree plus `extra` distinct
/// chords, with integer edge lengths in `1..=9`.
pub fn random_graph(rng: &mut impl Rng, n: usize, extra: usize) -> IslandGraph {
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let len = |rng: &mut dyn rand::RngCore| f64::from(rng.random_range(1..=9u32));
    for v in 1..n {
        let u = rng.random_range(0..v);
        edges.push((u, v, len(rng)));
    }
    let max_extra = n * (n - 1) / 2 - (n - 1);
    let mut added = 0;
    while added < extra.min(max_extra) {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u == v || edges.iter().any(|&(a, b, _)| (a, b) == (u, v) || (a, b) == (v, u)) {
            continue;
        }
        edges.push((u.min(v), u.max(v), len(rng)));
        added += 1;
    }
    IslandGraph::from_edges(n, &edges)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use restoration::netmodel::{parse_feeder, validate_network};

    use super::*;

    #[test]
    fn radial_feeders_parse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for zero in [false, true] {
            let spec = RadialSpec {
                zero_impedance: zero,
                ..RadialSpec::default()
            };
            let net = parse_feeder(&radial_feeder(&mut rng, &spec)).unwrap();
            assert!(validate_network(&net).is_valid());
            assert_eq!(net.loads.len(), 5);
            assert_eq!(net.lines.iter().all(|l| l.z.iter().all(|z| z.norm() == 0.0)), zero);
        }
    }

    #[test]
    fn graphs_have_requested_chords() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_graph(&mut rng, 7, 4);
        assert_eq!(g.edges.len(), 6 + 4);
        assert_eq!(g.cyclomatic(), 4);
        // K3 takes at most one chord
        assert_eq!(random_graph(&mut rng, 3, 5).edges.len(), 3);
    }
}
