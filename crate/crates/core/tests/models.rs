use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use restoration::conic::solve_mip;
use restoration::engine::{plan_island, EngineConfig};
use restoration::models::{
    balance_mismatch, block_rank_ratio, build_clr_milp, build_clr_misocp, misocp_flows, prepare_island, socp_exactness, Fixes, IslandData,
};
use restoration::netmodel::{apply_event, parse_feeder, EventSpec, Network};
use restoration::topology::{find_target_islands, minimum_diameter_spanning_tree};

fn data_dir() -> String {
    concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/").to_string()
}

fn island(net: &Network, ev: &EventSpec) -> IslandData {
    let post = apply_event(net, ev).unwrap();
    let g = find_target_islands::<f64>(&post).into_iter().find(|g| g.restorable()).unwrap();
    let t = minimum_diameter_spanning_tree(&g).unwrap();
    prepare_island(&post.net, &g, &t, None).unwrap()
}

/// Three single-phase buses in a row with a diesel at the head.
fn chain(zero_impedance: bool, source_kw: f64) -> Network {
    let z = if zero_impedance { "" } else { "r = [[0.2]]\nx = [[0.3]]\n" };
    let text = format!(
        r#"format = "restoration-feeder"
version = 1
name = "chain"
s_base_kva = 1000.0

[levels]
weights = [10.0, 1.0]

[defaults]
kv = 4.16
vmin = 0.95
vmax = 1.05

[[buses]]
id = "a"
phases = "a"

[[buses]]
id = "b"
phases = "a"

[[buses]]
id = "c"
phases = "a"

[[lines]]
from = "a"
to = "b"
phases = "a"
ampacity = [400.0]
{z}
[[lines]]
from = "b"
to = "c"
phases = "a"
ampacity = [400.0]
{z}
[[loads]]
bus = "b"
level = 1
kw = [120.0, 0.0, 0.0]
kvar = [40.0, 0.0, 0.0]

[[loads]]
bus = "c"
level = 2
kw = [90.0, 0.0, 0.0]
kvar = [30.0, 0.0, 0.0]

[[sources]]
id = "G"
bus = "a"
kind = "diesel"
p_kw = {source_kw:?}
q_kvar = {source_kw:?}
"#
    );
    parse_feeder(&text).unwrap()
}

fn case_one() -> IslandData {
    let dir = data_dir();
    let net = parse_feeder(&std::fs::read_to_string(format!("{dir}ieee13.feeder.toml")).unwrap()).unwrap();
    let ev = EventSpec::from_json(&std::fs::read_to_string(format!("{dir}case1.event.json")).unwrap()).unwrap();
    island(&net, &ev)
}

#[test]
fn rank_ratio_of_outer_product_and_identity() {
    let v = DVector::from_vec(vec![Complex64::new(1.0, 0.5), Complex64::new(-0.3, 0.2), Complex64::new(0.0, 2.0)]);
    let m = &v * v.adjoint();
    assert!(block_rank_ratio(&m) < 1e-12);
    assert!((block_rank_ratio(&DMatrix::<Complex64>::identity(4, 4)) - 1.0).abs() < 1e-12);
    assert_eq!(block_rank_ratio(&DMatrix::<Complex64>::zeros(2, 2)), 0.0);
}

#[test]
fn dispatch_balances_power() {
    let d = case_one();
    let core = plan_island(&d, &EngineConfig::default()).unwrap();
    assert!(balance_mismatch(&d, &core.dispatch) <= 1e-6);
}

#[test]
fn cone_model_is_tight_on_a_lossy_chain() {
    let d = island(&chain(false, 500.0), &EventSpec::default());
    let (p, map) = build_clr_misocp(&d, None, &Fixes::new(), true).unwrap();
    let sol = solve_mip(&p, &EngineConfig::default().solver).unwrap();
    assert!(sol.is_optimal());
    let on: Vec<bool> = map.gamma_values(&sol).unwrap().iter().map(|&x| x > 0.5).collect();
    assert!(on.iter().all(|&x| x));
    let (sol, map) = misocp_flows(&d, &on, &EngineConfig::default().solver).unwrap();
    assert!(socp_exactness(&sol, &map).unwrap() <= 1e-6);
}

#[test]
fn formulations_agree_without_impedance() {
    // room for the level-1 load only
    let d = island(&chain(true, 150.0), &EventSpec::default());
    let cfg = EngineConfig::default();
    let engine = plan_island(&d, &cfg).unwrap().restored;

    let (p, map) = build_clr_milp(&d, &Fixes::new());
    let sol = solve_mip(&p, &cfg.solver).unwrap();
    let milp: Vec<bool> = map.gamma_values(&sol).unwrap().iter().map(|&x| x > 0.5).collect();

    let (p, map) = build_clr_misocp(&d, None, &Fixes::new(), true).unwrap();
    let sol = solve_mip(&p, &cfg.solver).unwrap();
    let cone: Vec<bool> = map.gamma_values(&sol).unwrap().iter().map(|&x| x > 0.5).collect();

    let ids: Vec<&str> = d.loads.iter().map(|l| l.id.as_str()).collect();
    let level_one = ids.iter().position(|&i| d.loads.iter().any(|l| l.id == i && l.level == 1)).unwrap();
    let expected: Vec<bool> = (0..ids.len()).map(|k| k == level_one).collect();
    assert_eq!(engine, expected);
    assert_eq!(milp, expected);
    assert_eq!(cone, expected);
}
