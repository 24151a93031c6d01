//! Feeder document reader and canonical writer.
//!
//! A feeder document is a TOML file. Lines may carry their impedance as a
//! reference to a per-mile line code, as explicit ohmic matrices, or as a
//! percent impedance on a kVA rating (transformers). Delta loads are split
//! onto their two phases at read time. The writer always emits the
//! canonical form: explicit ohmic matrices and per-phase wye demands.

use std::collections::{HashMap, HashSet};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{
    zero_demand, Bus, Line, LineKind, LineState, Load, NetError, Network, Phase, PhaseSequence,
    PhaseSet, Source, SourceKind,
};

pub const FEEDER_FORMAT: &str = "restoration-feeder";
pub const FEEDER_VERSION: u32 = 1;

const FEET_PER_MILE: f64 = 5280.0;

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct FeederDoc {
    format: String,
    version: u32,
    name: String,
    s_base_kva: f64,
    #[serde(default)]
    phase_sequence: PhaseSequence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    utility_bus: Option<String>,
    levels: LevelsDoc,
    #[serde(default)]
    defaults: DefaultsDoc,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    codes: Vec<CodeDoc>,
    buses: Vec<BusDoc>,
    #[serde(default)]
    lines: Vec<LineDoc>,
    #[serde(default)]
    loads: Vec<LoadDoc>,
    #[serde(default)]
    sources: Vec<SourceDoc>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct LevelsDoc {
    weights: Vec<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct DefaultsDoc {
    #[serde(default = "default_vmin")]
    vmin: f64,
    #[serde(default = "default_vmax")]
    vmax: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kv: Option<f64>,
}

impl Default for DefaultsDoc {
    fn default() -> Self {
        DefaultsDoc {
            vmin: default_vmin(),
            vmax: default_vmax(),
            kv: None,
        }
    }
}

fn default_vmin() -> f64 {
    0.95
}

fn default_vmax() -> f64 {
    1.05
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct CodeDoc {
    name: String,
    phases: PhaseSet,
    /// Ohm per mile.
    r: Vec<Vec<f64>>,
    x: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ampacity: Option<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct BusDoc {
    id: String,
    phases: PhaseSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kv: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vmin: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vmax: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "is_false")]
    reference: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct LineDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    from: String,
    to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phases: Option<PhaseSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length_ft: Option<f64>,
    /// Explicit ohmic matrices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<Vec<Vec<f64>>>,
    /// Percent resistance and reactance on `rating_kva`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    z_pct: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rating_kva: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ampacity: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    flow_limit: Option<Vec<f64>>,
    #[serde(default = "default_kind")]
    kind: LineKind,
    #[serde(default = "default_state")]
    state: LineState,
}

fn default_kind() -> LineKind {
    LineKind::Fixed
}

fn default_state() -> LineState {
    LineState::Closed
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum Connection {
    Wye,
    Delta,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct LoadDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    bus: String,
    level: usize,
    #[serde(default = "default_connection")]
    connection: Connection,
    /// Per phase (wye) or per phase pair ab, bc, ca (delta).
    kw: [f64; 3],
    kvar: [f64; 3],
}

fn default_connection() -> Connection {
    Connection::Wye
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct SourceDoc {
    id: String,
    bus: String,
    kind: SourceKind,
    p_kw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q_kvar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    microgrid: Option<String>,
}

/// Parses a feeder document into a cross-referenced [`Network`].
pub fn parse_feeder(text: &str) -> Result<Network, NetError> {
    let doc: FeederDoc = toml::from_str(text).map_err(|e| syntax_error(text, &e))?;
    build(doc)
}

fn syntax_error(text: &str, e: &toml::de::Error) -> NetError {
    let offset = e.span().map(|s| s.start).unwrap_or(0).min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
    NetError::Syntax {
        line,
        column,
        message: e.message().to_string(),
    }
}

fn build(doc: FeederDoc) -> Result<Network, NetError> {
    if doc.format != FEEDER_FORMAT {
        return Err(NetError::Invalid(format!(
            "unsupported document format \"{}\"",
            doc.format
        )));
    }
    if doc.version != FEEDER_VERSION {
        return Err(NetError::Invalid(format!(
            "unsupported feeder version {}",
            doc.version
        )));
    }
    if !(doc.s_base_kva > 0.0) {
        return Err(NetError::Invalid("s_base_kva must be positive".into()));
    }
    let weights = doc.levels.weights;
    if weights.is_empty()
        || weights.windows(2).any(|w| !(w[0] > w[1]))
        || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite())
    {
        return Err(NetError::Weights(weights));
    }

    let mut buses = Vec::with_capacity(doc.buses.len());
    let mut seen = HashSet::new();
    for b in doc.buses {
        if !seen.insert(b.id.clone()) {
            return Err(NetError::Duplicate { kind: "bus", id: b.id });
        }
        let kv = b.kv.or(doc.defaults.kv).ok_or_else(|| {
            NetError::Invalid(format!("bus \"{}\" has no kv and no default", b.id))
        })?;
        let bounds = |v: Option<Vec<f64>>, dflt: f64| -> Result<[f64; 3], NetError> {
            match v {
                None => Ok([dflt; 3]),
                Some(v) if v.len() == 1 => Ok([v[0]; 3]),
                Some(v) if v.len() == 3 => Ok([v[0], v[1], v[2]]),
                Some(_) => Err(NetError::Invalid(format!(
                    "bus \"{}\": voltage bounds need 1 or 3 entries",
                    b.id
                ))),
            }
        };
        buses.push(Bus {
            vmin: bounds(b.vmin, doc.defaults.vmin)?,
            vmax: bounds(b.vmax, doc.defaults.vmax)?,
            id: b.id,
            phases: b.phases,
            kv_base: kv,
            is_reference: b.reference,
        });
    }
    let kv_of: HashMap<String, f64> = buses.iter().map(|b| (b.id.clone(), b.kv_base)).collect();

    let mut codes = HashMap::new();
    for c in doc.codes {
        let r = square(&c.r, c.phases.len(), &c.name)?;
        let x = square(&c.x, c.phases.len(), &c.name)?;
        if codes.insert(c.name.clone(), (c.phases, r, x, c.ampacity)).is_some() {
            return Err(NetError::Duplicate { kind: "line code", id: c.name });
        }
    }

    let mut lines = Vec::with_capacity(doc.lines.len());
    let mut line_ids = HashSet::new();
    let mut endpoints = HashSet::new();
    for l in doc.lines {
        let id = l.id.clone().unwrap_or_else(|| format!("{}-{}", l.from, l.to));
        for end in [&l.from, &l.to] {
            if !kv_of.contains_key(end) {
                return Err(NetError::Dangling {
                    kind: "line",
                    id,
                    target: "bus",
                    reference: end.clone(),
                });
            }
        }
        if !line_ids.insert(id.clone()) {
            return Err(NetError::Duplicate { kind: "line", id });
        }
        let key = if l.from < l.to {
            (l.from.clone(), l.to.clone())
        } else {
            (l.to.clone(), l.from.clone())
        };
        if !endpoints.insert(key) {
            return Err(NetError::Duplicate { kind: "line", id });
        }
        lines.push(build_line(id, l, &codes, &kv_of)?);
    }

    let mut loads = Vec::with_capacity(doc.loads.len());
    let mut load_ids = HashSet::new();
    let mut load_buses = HashSet::new();
    for l in doc.loads {
        let id = l.id.clone().unwrap_or_else(|| l.bus.clone());
        if !kv_of.contains_key(&l.bus) {
            return Err(NetError::Dangling {
                kind: "load",
                id,
                target: "bus",
                reference: l.bus,
            });
        }
        if !load_ids.insert(id.clone()) || !load_buses.insert(l.bus.clone()) {
            return Err(NetError::Duplicate { kind: "load", id });
        }
        let demand = wye_demand(l.connection, l.kw, l.kvar);
        let phases = PhaseSet::new(
            Phase::ALL
                .into_iter()
                .filter(|p| demand[p.index()] != Complex64::new(0.0, 0.0)),
        )
        .map_err(|_| NetError::Invalid(format!("load \"{id}\" has zero demand")))?;
        let weight = l
            .level
            .checked_sub(1)
            .and_then(|k| weights.get(k))
            .copied()
            .ok_or_else(|| {
                NetError::Invalid(format!(
                    "load \"{id}\" level {} outside 1..={}",
                    l.level,
                    weights.len()
                ))
            })?;
        loads.push(Load {
            id,
            bus: l.bus,
            phases,
            demand,
            level: l.level,
            weight,
        });
    }

    let mut sources = Vec::with_capacity(doc.sources.len());
    let mut source_ids = HashSet::new();
    for s in doc.sources {
        if !kv_of.contains_key(&s.bus) {
            return Err(NetError::Dangling {
                kind: "source",
                id: s.id,
                target: "bus",
                reference: s.bus,
            });
        }
        if !source_ids.insert(s.id.clone()) {
            return Err(NetError::Duplicate { kind: "source", id: s.id });
        }
        sources.push(Source {
            q_rate_kvar: s.q_kvar.unwrap_or(if s.kind == SourceKind::Pv { 0.0 } else { s.p_kw }),
            id: s.id,
            bus: s.bus,
            kind: s.kind,
            p_rate_kw: s.p_kw,
            microgrid: s.microgrid,
        });
    }

    if let Some(u) = &doc.utility_bus {
        if !kv_of.contains_key(u) {
            return Err(NetError::Dangling {
                kind: "feeder",
                id: doc.name,
                target: "utility bus",
                reference: u.clone(),
            });
        }
    }

    Ok(Network {
        name: doc.name,
        s_base_kva: doc.s_base_kva,
        sequence: doc.phase_sequence,
        utility_bus: doc.utility_bus,
        weights,
        buses,
        lines,
        loads,
        sources,
    })
}

fn square(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>, NetError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(NetError::Invalid(format!(
            "\"{what}\": impedance matrix must be {n}x{n}"
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

type Code = (PhaseSet, DMatrix<f64>, DMatrix<f64>, Option<f64>);

fn build_line(
    id: String,
    l: LineDoc,
    codes: &HashMap<String, Code>,
    kv_of: &HashMap<String, f64>,
) -> Result<Line, NetError> {
    let (phases, z, code_amp) = if let Some(code) = &l.code {
        let (cphases, r, x, amp) = codes.get(code).ok_or_else(|| NetError::Dangling {
            kind: "line",
            id: id.clone(),
            target: "line code",
            reference: code.clone(),
        })?;
        let length = l
            .length_ft
            .ok_or_else(|| NetError::Invalid(format!("line \"{id}\" with a code needs length_ft")))?;
        if let Some(p) = l.phases {
            if p != *cphases {
                return Err(NetError::Invalid(format!(
                    "line \"{id}\" phases {p} differ from code \"{code}\" phases {cphases}"
                )));
            }
        }
        let miles = length / FEET_PER_MILE;
        let z = DMatrix::from_fn(r.nrows(), r.ncols(), |i, j| {
            Complex64::new(r[(i, j)], x[(i, j)]) * miles
        });
        (*cphases, z, *amp)
    } else {
        let phases = l
            .phases
            .ok_or_else(|| NetError::Invalid(format!("line \"{id}\" needs phases or a code")))?;
        let n = phases.len();
        let z = match (&l.r, &l.x, l.z_pct) {
            (Some(r), Some(x), None) => {
                let r = square(r, n, &id)?;
                let x = square(x, n, &id)?;
                DMatrix::from_fn(n, n, |i, j| Complex64::new(r[(i, j)], x[(i, j)]))
            }
            (None, None, Some([rp, xp])) => {
                let rating = l.rating_kva.ok_or_else(|| {
                    NetError::Invalid(format!("line \"{id}\": z_pct needs rating_kva"))
                })?;
                let kv = kv_of[&l.from];
                let zb = kv * kv * 1000.0 / rating;
                DMatrix::from_fn(n, n, |i, j| {
                    if i == j {
                        Complex64::new(rp, xp) * (zb / 100.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
            }
            (None, None, None) => DMatrix::from_element(n, n, Complex64::new(0.0, 0.0)),
            _ => {
                return Err(NetError::Invalid(format!(
                    "line \"{id}\": give either r and x, or z_pct"
                )))
            }
        };
        (phases, z, None)
    };

    let per_phase = |v: &Option<Vec<f64>>, fallback: Option<f64>| -> Result<[f64; 3], NetError> {
        match v {
            Some(v) if v.len() == 1 => Ok([v[0]; 3]),
            Some(v) if v.len() == 3 => Ok([v[0], v[1], v[2]]),
            Some(_) => Err(NetError::Invalid(format!(
                "line \"{id}\": per-phase limits need 1 or 3 entries"
            ))),
            None => Ok([fallback.unwrap_or(f64::INFINITY); 3]),
        }
    };
    let ampacity = per_phase(&l.ampacity, code_amp)?;
    let kv = kv_of[&l.from];
    let derived_flow = ampacity.map(|a| a * kv / 3f64.sqrt());
    let flow_limit = match &l.flow_limit {
        Some(_) => per_phase(&l.flow_limit, None)?,
        None => derived_flow,
    };

    Ok(Line {
        id,
        from: l.from,
        to: l.to,
        phases,
        z,
        ampacity,
        flow_limit,
        kind: l.kind,
        state: l.state,
    })
}

/// Converts per-phase or per-phase-pair demands to per-phase wye demands.
/// A delta branch load is split evenly onto its two phases.
fn wye_demand(conn: Connection, kw: [f64; 3], kvar: [f64; 3]) -> [Complex64; 3] {
    let mut d = zero_demand();
    match conn {
        Connection::Wye => {
            for k in 0..3 {
                d[k] = Complex64::new(kw[k], kvar[k]);
            }
        }
        Connection::Delta => {
            // branch k joins phases k and k+1 (ab, bc, ca)
            for k in 0..3 {
                let half = Complex64::new(kw[k], kvar[k]) * 0.5;
                d[k] += half;
                d[(k + 1) % 3] += half;
            }
        }
    }
    d
}

/// Writes the canonical feeder document for `net`.
pub fn serialize_feeder(net: &Network) -> String {
    let doc = FeederDoc {
        format: FEEDER_FORMAT.to_string(),
        version: FEEDER_VERSION,
        name: net.name.clone(),
        s_base_kva: net.s_base_kva,
        phase_sequence: net.sequence,
        utility_bus: net.utility_bus.clone(),
        levels: LevelsDoc {
            weights: net.weights.clone(),
        },
        defaults: DefaultsDoc::default(),
        codes: Vec::new(),
        buses: net
            .buses
            .iter()
            .map(|b| BusDoc {
                id: b.id.clone(),
                phases: b.phases,
                kv: Some(b.kv_base),
                vmin: Some(b.vmin.to_vec()),
                vmax: Some(b.vmax.to_vec()),
                reference: b.is_reference,
            })
            .collect(),
        lines: net
            .lines
            .iter()
            .map(|l| {
                let n = l.phases.len();
                let rows = |f: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
                    (0..n)
                        .map(|i| (0..n).map(|j| f(&l.z[(i, j)])).collect())
                        .collect()
                };
                LineDoc {
                    id: Some(l.id.clone()),
                    from: l.from.clone(),
                    to: l.to.clone(),
                    phases: Some(l.phases),
                    code: None,
                    length_ft: None,
                    r: Some(rows(|z| z.re)),
                    x: Some(rows(|z| z.im)),
                    z_pct: None,
                    rating_kva: None,
                    ampacity: Some(l.ampacity.to_vec()),
                    flow_limit: Some(l.flow_limit.to_vec()),
                    kind: l.kind,
                    state: l.state,
                }
            })
            .collect(),
        loads: net
            .loads
            .iter()
            .map(|l| LoadDoc {
                id: Some(l.id.clone()),
                bus: l.bus.clone(),
                level: l.level,
                connection: Connection::Wye,
                kw: l.demand.map(|s| s.re),
                kvar: l.demand.map(|s| s.im),
            })
            .collect(),
        sources: net
            .sources
            .iter()
            .map(|s| SourceDoc {
                id: s.id.clone(),
                bus: s.bus.clone(),
                kind: s.kind,
                p_kw: s.p_rate_kw,
                q_kvar: Some(s.q_rate_kvar),
                microgrid: s.microgrid.clone(),
            })
            .collect(),
    };
    toml::to_string(&doc).expect("feeder document serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = r#"
format = "restoration-feeder"
version = 1
name = "two-bus"
s_base_kva = 100.0

[levels]
weights = [1.0]

[[buses]]
id = "1"
phases = "a"
kv = 4.16
reference = true

[[buses]]
id = "2"
phases = "a"
kv = 4.16

[[lines]]
from = "1"
to = "2"
phases = "a"
r = [[0.1]]
x = [[0.2]]
ampacity = [200.0]

[[loads]]
bus = "2"
level = 1
kw = [10.0, 0.0, 0.0]
kvar = [5.0, 0.0, 0.0]

[[sources]]
id = "G"
bus = "1"
kind = "diesel"
p_kw = 50.0
"#;

    #[test]
    fn minimal_two_bus() {
        let net = parse_feeder(TWO_BUS).unwrap();
        assert_eq!(net.buses.len(), 2);
        assert_eq!(net.lines.len(), 1);
        assert_eq!(net.lines[0].id, "1-2");
        assert_eq!(net.loads[0].weight, 1.0);
        assert_eq!(net.sources[0].q_rate_kvar, 50.0);
        assert!(net.buses[0].is_reference);
    }

    #[test]
    fn dangling_bus_reference() {
        let text = TWO_BUS.replace("to = \"2\"", "to = \"999\"");
        match parse_feeder(&text) {
            Err(NetError::Dangling { reference, .. }) => assert_eq!(reference, "999"),
            other => panic!("expected dangling reference, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_bus() {
        let text = TWO_BUS.replace("id = \"2\"", "id = \"1\"");
        assert!(matches!(
            parse_feeder(&text),
            Err(NetError::Duplicate { kind: "bus", .. })
        ));
    }

    #[test]
    fn ascending_weights_rejected() {
        let text = TWO_BUS.replace("weights = [1.0]", "weights = [10.0, 100.0]");
        assert!(matches!(parse_feeder(&text), Err(NetError::Weights(_))));
    }

    #[test]
    fn syntax_error_position() {
        let text = TWO_BUS.replace("kv = 4.16\nreference", "kv = = 4.16\nreference");
        match parse_feeder(&text) {
            Err(NetError::Syntax { line, column, .. }) => {
                assert_eq!(line, 13);
                assert!(column >= 5, "column {column}");
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn delta_split() {
        let d = wye_demand(Connection::Delta, [0.0, 230.0, 0.0], [0.0, 132.0, 0.0]);
        assert_eq!(d[0], Complex64::new(0.0, 0.0));
        assert_eq!(d[1], Complex64::new(115.0, 66.0));
        assert_eq!(d[2], Complex64::new(115.0, 66.0));
    }

    #[test]
    fn canonical_round_trip() {
        let net = parse_feeder(TWO_BUS).unwrap();
        let again = parse_feeder(&serialize_feeder(&net)).unwrap();
        assert_eq!(net, again);
    }

    #[test]
    fn transformer_percent_impedance() {
        let text = TWO_BUS.replace(
            "r = [[0.1]]\nx = [[0.2]]",
            "z_pct = [1.0, 2.0]\nrating_kva = 500.0",
        );
        let net = parse_feeder(&text).unwrap();
        let zb = 4.16 * 4.16 * 1000.0 / 500.0;
        let z = net.lines[0].z[(0, 0)];
        assert!((z.re - 0.01 * zb).abs() < 1e-12);
        assert!((z.im - 0.02 * zb).abs() < 1e-12);
    }
}
