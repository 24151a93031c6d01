use std::fmt::Write;

use proptest::prelude::*;
use restoration::engine::{plan_island, EngineConfig};
use restoration::models::prepare_island;
use restoration::netmodel::{apply_event, parse_feeder, EventSpec};
use restoration::oracle::brute_force_mdst;
use restoration::topology::{find_target_islands, minimum_diameter_spanning_tree, validate_radial, IslandGraph};

/// Random tree (parent of vertex `v` drawn below `v`) plus chords.
fn graph() -> impl Strategy<Value = (usize, Vec<(usize, usize, u8)>)> {
    (2usize..9).prop_flat_map(|n| {
        let tree = (1..n).map(|v| (0..v, 1u8..10)).collect::<Vec<_>>();
        let chords = prop::collection::vec((0..n, 0..n, 1u8..10), 0..=8);
        (Just(n), tree, chords).prop_map(|(n, tree, chords)| {
            let mut edges: Vec<(usize, usize, u8)> = tree.into_iter().enumerate().map(|(k, (u, w))| (u, k + 1, w)).collect();
            for (u, v, w) in chords {
                let (a, b) = (u.min(v), u.max(v));
                if a != b && !edges.iter().any(|&(x, y, _)| (x.min(y), x.max(y)) == (a, b)) {
                    edges.push((a, b, w));
                }
            }
            (n, edges)
        })
    })
}

proptest! {
    #[test]
    fn mdst_matches_enumeration((n, edges) in graph()) {
        let g = IslandGraph::<f64>::from_edges(n, &edges.iter().map(|&(u, v, w)| (u, v, f64::from(w))).collect::<Vec<_>>());
        let t = minimum_diameter_spanning_tree(&g).unwrap();
        prop_assert!(validate_radial(&g, &t.edges));
        prop_assert_eq!(t.diameter, brute_force_mdst(&g, 8).unwrap());
    }

    #[test]
    fn mdst_matches_enumeration_in_single_precision((n, edges) in graph()) {
        let g = IslandGraph::<f32>::from_edges(n, &edges.iter().map(|&(u, v, w)| (u, v, f32::from(w))).collect::<Vec<_>>());
        let t = minimum_diameter_spanning_tree(&g).unwrap();
        prop_assert!(validate_radial(&g, &t.edges));
        prop_assert_eq!(t.diameter, brute_force_mdst(&g, 8).unwrap());
    }
}

#[derive(Debug, Clone)]
struct Radial {
    parents: Vec<usize>,
    z: Vec<(f64, f64)>,
    loads: Vec<(f64, f64)>,
    capacity: f64,
}

fn radial() -> impl Strategy<Value = Radial> {
    (3usize..7).prop_flat_map(|n| {
        let parents = (1..n).map(|b| 0..b).collect::<Vec<_>>();
        let z = prop::collection::vec((0.05..0.4f64, 0.05..0.4f64), n - 1);
        let loads = prop::collection::vec((20.0..200.0f64, 0.2..0.6f64), n - 1);
        (parents, z, loads, 0.3..0.9f64).prop_map(|(parents, z, loads, capacity)| Radial {
            parents,
            z,
            loads,
            capacity,
        })
    })
}

fn feeder(r: &Radial) -> String {
    let mut t = String::from(
        "format = \"restoration-feeder\"\nversion = 1\nname = \"prop\"\ns_base_kva = 1000.0\n\n\
         [levels]\nweights = [16.0, 8.0, 4.0, 2.0, 1.0]\n\n[defaults]\nkv = 4.16\nvmin = 0.95\nvmax = 1.05\n\n",
    );
    for b in 0..=r.parents.len() {
        writeln!(t, "[[buses]]\nid = \"b{b}\"\nphases = \"a\"\n").unwrap();
    }
    for (k, (&p, &(re, im))) in r.parents.iter().zip(&r.z).enumerate() {
        writeln!(
            t,
            "[[lines]]\nfrom = \"b{p}\"\nto = \"b{}\"\nphases = \"a\"\nampacity = [400.0]\nr = [[{re:.4}]]\nx = [[{im:.4}]]\n",
            k + 1
        )
        .unwrap();
    }
    let mut total = 0.0;
    for (k, &(kw, pf)) in r.loads.iter().enumerate() {
        let kw = kw.round();
        total += kw;
        writeln!(
            t,
            "[[loads]]\nbus = \"b{}\"\nlevel = {}\nkw = [{kw:?}, 0.0, 0.0]\nkvar = [{:?}, 0.0, 0.0]\n",
            k + 1,
            k % 5 + 1,
            (kw * pf).round()
        )
        .unwrap();
    }
    let p = (total * r.capacity).round();
    writeln!(t, "[[sources]]\nid = \"G\"\nbus = \"b0\"\nkind = \"diesel\"\np_kw = {p:?}\nq_kvar = {p:?}").unwrap();
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn relaxation_brackets_and_tightens(r in radial()) {
        let net = parse_feeder(&feeder(&r)).unwrap();
        let post = apply_event(&net, &EventSpec::default()).unwrap();
        let g = find_target_islands::<f64>(&post).into_iter().find(|g| g.restorable()).unwrap();
        let t = minimum_diameter_spanning_tree(&g).unwrap();
        let d = prepare_island(&post.net, &g, &t, None).unwrap();
        let core = plan_island(&d, &EngineConfig::default()).unwrap();
        let states = &core.trace.states;
        let objective: f64 = d.loads.iter().zip(&core.restored).filter(|(_, &on)| on).map(|(l, _)| l.weight).sum();
        let tol = |w: f64| 1e-6 * w.abs().max(1.0);
        prop_assert!(states[0].w_sdp >= objective - tol(objective));
        prop_assert!(objective >= states[0].w_int - tol(objective));
        for pair in states.windows(2) {
            prop_assert!(pair[1].w_sdp <= pair[0].w_sdp + tol(pair[0].w_sdp));
        }
    }
}
