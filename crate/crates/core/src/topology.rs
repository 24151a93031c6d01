//! Target islands and the minimum-diameter spanning tree.
//!
//! The tree is the shortest-path tree rooted at the absolute 1-center of the
//! island graph. The center is found exactly: on each edge the eccentricity
//! is a piecewise-linear function of the position, and its local minima sit
//! where an ascending distance line meets the descending envelope.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::netmodel::{Line, LineState, PostEventNetwork};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("island graph is disconnected")]
    Disconnected,
    #[error("empty graph")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IslandEdge<T> {
    /// Line id in the network.
    pub line: String,
    pub u: usize,
    pub v: usize,
    pub length: T,
    pub switchable: bool,
    /// Closed before restoration.
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IslandGraph<T> {
    pub id: usize,
    /// Bus ids.
    pub vertices: Vec<String>,
    /// Sorted by line id.
    pub edges: Vec<IslandEdge<T>>,
    /// Source ids located in the island.
    pub sources: Vec<String>,
}

impl<T: Scalar> IslandGraph<T> {
    /// Builds a graph from bare edge lists, mainly for tests and oracles.
    pub fn from_edges(n: usize, edges: &[(usize, usize, T)]) -> Self {
        let width = edges.len().to_string().len();
        IslandGraph {
            id: 0,
            vertices: (0..n).map(|i| i.to_string()).collect(),
            edges: edges
                .iter()
                .enumerate()
                .map(|(k, &(u, v, length))| IslandEdge {
                    line: format!("e{k:0width$}"),
                    u,
                    v,
                    length,
                    switchable: false,
                    closed: true,
                })
                .collect(),
            sources: Vec::new(),
        }
    }

    pub fn restorable(&self) -> bool {
        !self.sources.is_empty()
    }

    pub fn vertex(&self, bus: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v == bus)
    }

    pub fn contains_bus(&self, bus: &str) -> bool {
        self.vertex(bus).is_some()
    }

    /// Number of independent cycles.
    pub fn cyclomatic(&self) -> usize {
        (self.edges.len() + 1).saturating_sub(self.vertices.len())
    }

    fn adjacency(&self, subset: impl Iterator<Item = usize>) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for k in subset {
            let e = &self.edges[k];
            adj[e.u].push((e.v, k));
            adj[e.v].push((e.u, k));
        }
        adj
    }
}

/// Point on an edge at distance `offset` from its `u` end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Center<T> {
    pub edge: usize,
    pub offset: T,
    pub radius: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTree<T> {
    pub island: usize,
    /// Indices into the island's edge list, ascending.
    pub edges: Vec<usize>,
    /// Switchable lines that must be closed.
    pub close: Vec<String>,
    /// Switchable lines left open.
    pub open: Vec<String>,
    pub diameter: T,
    pub center: Option<Center<T>>,
}

impl<T: Scalar> SpanningTree<T> {
    pub fn line_ids<'a>(&'a self, g: &'a IslandGraph<T>) -> impl Iterator<Item = &'a str> + 'a {
        self.edges.iter().map(move |&k| g.edges[k].line.as_str())
    }

    pub fn contains_line(&self, g: &IslandGraph<T>, line: &str) -> bool {
        self.line_ids(g).any(|l| l == line)
    }
}

/// Tree edge oriented away from a root.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Directed {
    pub edge: usize,
    pub parent: usize,
    pub child: usize,
}

/// Mean magnitude of the self impedances of a line, in ohms.
pub fn electrical_distance<T: Scalar>(line: &Line) -> T {
    let n = line.z.nrows().min(line.z.ncols());
    if n == 0 {
        return T::zero();
    }
    let sum: f64 = (0..n).map(|i| line.z[(i, i)].norm()).sum();
    T::lit(sum / n as f64)
}

/// Connected components over the lines that can carry power after the event.
///
/// The substation bus is dead after islanding and belongs to no island.
/// Islands come back in order of their first bus in the network.
pub fn find_target_islands<T: Scalar>(post: &PostEventNetwork) -> Vec<IslandGraph<T>> {
    let net = &post.net;
    let dead = post.dead_bus();
    let index = net.bus_index();
    let alive: Vec<bool> = net.buses.iter().map(|b| Some(b.id.as_str()) != dead).collect();

    let usable: Vec<&Line> = net
        .lines
        .iter()
        .filter(|l| l.state != LineState::Faulted)
        .filter(|l| alive[index[l.from.as_str()]] && alive[index[l.to.as_str()]])
        .collect();

    let mut parent: Vec<usize> = (0..net.buses.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for l in &usable {
        let a = find(&mut parent, index[l.from.as_str()]);
        let b = find(&mut parent, index[l.to.as_str()]);
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }

    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut slot = HashMap::new();
    for i in 0..net.buses.len() {
        if !alive[i] {
            continue;
        }
        let r = find(&mut parent, i);
        let g = *slot.entry(r).or_insert_with(|| {
            groups.push((r, Vec::new()));
            groups.len() - 1
        });
        groups[g].1.push(i);
    }

    groups
        .into_iter()
        .enumerate()
        .map(|(id, (_, members))| {
            let local: HashMap<usize, usize> =
                members.iter().enumerate().map(|(k, &b)| (b, k)).collect();
            let mut edges: Vec<IslandEdge<T>> = usable
                .iter()
                .filter_map(|l| {
                    let u = *local.get(&index[l.from.as_str()])?;
                    let v = *local.get(&index[l.to.as_str()])?;
                    Some(IslandEdge {
                        line: l.id.clone(),
                        u,
                        v,
                        length: electrical_distance(l),
                        switchable: l.is_switchable(),
                        closed: l.state == LineState::Closed,
                    })
                })
                .collect();
            edges.sort_by(|a, b| a.line.cmp(&b.line));
            let vertices: Vec<String> = members.iter().map(|&b| net.buses[b].id.clone()).collect();
            let sources = net
                .sources
                .iter()
                .filter(|s| vertices.contains(&s.bus))
                .map(|s| s.id.clone())
                .collect();
            IslandGraph {
                id,
                vertices,
                edges,
                sources,
            }
        })
        .collect()
}

fn tie_eps<T: Scalar>(scale: T) -> T {
    T::epsilon() * T::lit(64.0) * T::one().max(scale.abs())
}

/// Single-source shortest paths restricted to `subset`; `None` for unreachable.
fn dijkstra<T: Scalar>(
    adj: &[Vec<(usize, usize)>],
    g: &IslandGraph<T>,
    starts: &[(usize, T)],
) -> (Vec<Option<T>>, Vec<Option<usize>>) {
    let n = adj.len();
    let mut dist: Vec<Option<T>> = vec![None; n];
    let mut via: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    for &(s, d) in starts {
        if dist[s].is_none_or(|x| d < x) {
            dist[s] = Some(d);
        }
    }
    // O(n^2) scan keeps the settle order fully deterministic.
    loop {
        let mut pick: Option<(usize, T)> = None;
        for i in 0..n {
            if let (false, Some(d)) = (done[i], dist[i]) {
                if pick.is_none_or(|(_, pd)| d < pd) {
                    pick = Some((i, d));
                }
            }
        }
        let Some((i, di)) = pick else { break };
        done[i] = true;
        for &(j, k) in &adj[i] {
            if done[j] {
                continue;
            }
            let nd = di + g.edges[k].length;
            let better = match dist[j] {
                None => true,
                Some(dj) => {
                    let eps = tie_eps(dj);
                    nd < dj - eps || ((nd - dj).abs() <= eps && via[j].is_some_and(|p| k < p))
                }
            };
            if better {
                dist[j] = Some(nd);
                via[j] = Some(k);
            }
        }
    }
    (dist, via)
}

fn all_pairs<T: Scalar>(
    g: &IslandGraph<T>,
    subset: impl Iterator<Item = usize> + Clone,
) -> Result<Vec<Vec<T>>, TopologyError> {
    let adj = g.adjacency(subset);
    (0..g.vertices.len())
        .map(|s| {
            let (dist, _) = dijkstra(&adj, g, &[(s, T::zero())]);
            dist.into_iter()
                .map(|d| d.ok_or(TopologyError::Disconnected))
                .collect()
        })
        .collect()
}

/// Longest shortest-path distance between two vertices.
pub fn graph_diameter<T: Scalar>(g: &IslandGraph<T>) -> Result<T, TopologyError> {
    tree_diameter(g, &(0..g.edges.len()).collect::<Vec<_>>())
}

/// Diameter of the subgraph formed by `edges`, which must span `g`.
pub fn tree_diameter<T: Scalar>(g: &IslandGraph<T>, edges: &[usize]) -> Result<T, TopologyError> {
    if g.vertices.is_empty() {
        return Err(TopologyError::Empty);
    }
    let d = all_pairs(g, edges.iter().copied())?;
    Ok(d.iter()
        .flat_map(|row| row.iter().copied())
        .fold(T::zero(), T::max))
}

/// Whether `edges` form a spanning tree of `g`.
pub fn validate_radial<T: Scalar>(g: &IslandGraph<T>, edges: &[usize]) -> bool {
    let n = g.vertices.len();
    if n == 0 || edges.len() != n - 1 {
        return false;
    }
    let unique: BTreeSet<usize> = edges.iter().copied().collect();
    if unique.len() != edges.len() || unique.iter().any(|&k| k >= g.edges.len()) {
        return false;
    }
    let adj = g.adjacency(edges.iter().copied());
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for &(j, _) in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                count += 1;
                queue.push_back(j);
            }
        }
    }
    count == n
}

/// Orients tree edges away from `root` in breadth-first order.
pub fn orient<T: Scalar>(g: &IslandGraph<T>, edges: &[usize], root: usize) -> Option<Vec<Directed>> {
    if !validate_radial(g, edges) || root >= g.vertices.len() {
        return None;
    }
    let adj = g.adjacency(edges.iter().copied());
    let mut out = Vec::with_capacity(edges.len());
    let mut seen = vec![false; g.vertices.len()];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(i) = queue.pop_front() {
        let mut next: Vec<(usize, usize)> = adj[i].iter().copied().filter(|(j, _)| !seen[*j]).collect();
        next.sort_by_key(|&(_, k)| k);
        for (j, k) in next {
            seen[j] = true;
            out.push(Directed {
                edge: k,
                parent: i,
                child: j,
            });
            queue.push_back(j);
        }
    }
    Some(out)
}

/// Exact absolute 1-center: the point of the graph minimizing the distance
/// to the farthest vertex.
pub fn absolute_center<T: Scalar>(g: &IslandGraph<T>) -> Result<Center<T>, TopologyError> {
    let n = g.vertices.len();
    if n == 0 {
        return Err(TopologyError::Empty);
    }
    let d = all_pairs(g, 0..g.edges.len())?;
    let ecc_at = |e: &IslandEdge<T>, t: T| -> T {
        let l = e.length;
        (0..n)
            .map(|w| (d[e.u][w] + t).min(d[e.v][w] + l - t))
            .fold(T::zero(), T::max)
    };

    // Vertex centers first so a graph without edges still has one.
    let mut best: Option<(T, usize, T)> = None;
    let consider = |ecc: T, edge: usize, t: T, best: &mut Option<(T, usize, T)>| {
        let improves = match *best {
            None => true,
            Some((b, _, _)) => ecc < b - tie_eps(b),
        };
        if improves {
            *best = Some((ecc, edge, t));
        }
    };
    if g.edges.is_empty() {
        return Ok(Center {
            edge: usize::MAX,
            offset: T::zero(),
            radius: T::zero(),
        });
    }

    for (k, e) in g.edges.iter().enumerate() {
        let l = e.length;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| d[e.u][b].partial_cmp(&d[e.u][a]).unwrap());
        let mut cands = vec![T::zero(), l];
        let two = T::lit(2.0);
        let mut i = 0;
        let mut prefix = T::neg_infinity();
        while i < n {
            // the rising line of this group meets the falling envelope of
            // every vertex farther from u
            let t = (l + prefix - d[e.u][order[i]]) / two;
            if t > T::zero() && t < l {
                cands.push(t);
            }
            let mut j = i;
            while j < n && d[e.u][order[j]] == d[e.u][order[i]] {
                prefix = prefix.max(d[e.v][order[j]]);
                j += 1;
            }
            i = j;
        }
        cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for t in cands {
            consider(ecc_at(e, t), k, t, &mut best);
        }
    }
    let (radius, edge, offset) = best.expect("at least one candidate");
    Ok(Center {
        edge,
        offset,
        radius,
    })
}

/// Minimum-diameter spanning tree: shortest-path tree from the absolute center.
pub fn minimum_diameter_spanning_tree<T: Scalar>(
    g: &IslandGraph<T>,
) -> Result<SpanningTree<T>, TopologyError> {
    let center = absolute_center(g)?;
    let n = g.vertices.len();
    let edges: Vec<usize> = if g.edges.is_empty() {
        if n != 1 {
            return Err(TopologyError::Disconnected);
        }
        Vec::new()
    } else {
        let ce = &g.edges[center.edge];
        let adj = g.adjacency(0..g.edges.len());
        let starts = [(ce.u, center.offset), (ce.v, ce.length - center.offset)];
        let (dist, via) = dijkstra(&adj, g, &starts);
        if dist.iter().any(Option::is_none) {
            return Err(TopologyError::Disconnected);
        }
        let mut picked: BTreeSet<usize> = via.iter().flatten().copied().collect();
        if via[ce.u].is_none() && via[ce.v].is_none() {
            picked.insert(center.edge);
        }
        picked.into_iter().collect()
    };
    debug_assert!(validate_radial(g, &edges));
    let diameter = tree_diameter(g, &edges)?;
    Ok(tree_from_edges(g, edges, diameter, Some(center)))
}

/// Wraps an edge list with its switch actions.
pub fn tree_from_edges<T: Scalar>(
    g: &IslandGraph<T>,
    edges: Vec<usize>,
    diameter: T,
    center: Option<Center<T>>,
) -> SpanningTree<T> {
    let chosen: HashSet<usize> = edges.iter().copied().collect();
    let mut close = Vec::new();
    let mut open = Vec::new();
    for (k, e) in g.edges.iter().enumerate() {
        if !e.switchable {
            continue;
        }
        if chosen.contains(&k) {
            close.push(e.line.clone());
        } else {
            open.push(e.line.clone());
        }
    }
    SpanningTree {
        island: g.id,
        edges,
        close,
        open,
        diameter,
        center,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_with_chord() -> IslandGraph<f64> {
        // 4-cycle 1-2-3-4 plus chord (2,4); vertices shifted to 0-based
        IslandGraph::from_edges(
            4,
            &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0), (1, 3, 1.0)],
        )
    }

    #[test]
    fn chord_gives_diameter_two() {
        let g = square_with_chord();
        let t = minimum_diameter_spanning_tree(&g).unwrap();
        assert_eq!(t.diameter, 2.0);
        assert!(t.edges.contains(&4));
        assert!(validate_radial(&g, &t.edges));
    }

    #[test]
    fn path_diameters() {
        let g = IslandGraph::<f64>::from_edges(1, &[]);
        assert_eq!(graph_diameter(&g).unwrap(), 0.0);
        let star = IslandGraph::from_edges(5, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (0, 4, 1.0)]);
        assert_eq!(graph_diameter(&star).unwrap(), 2.0);
    }

    #[test]
    fn radial_checks() {
        let g = square_with_chord();
        assert!(validate_radial(&g, &[0, 1, 2]));
        assert!(validate_radial(&g, &[0, 1, 4]));
        assert!(!validate_radial(&g, &[0, 3, 4]));
        assert!(!validate_radial(&g, &[0, 2]));
        assert!(!validate_radial(&g, &[0, 1, 2, 3]));
    }

    #[test]
    fn disconnected_rejected() {
        let g = IslandGraph::from_edges(3, &[(0, 1, 1.0)]);
        assert_eq!(
            minimum_diameter_spanning_tree(&g).unwrap_err(),
            TopologyError::Disconnected
        );
    }

    #[test]
    fn works_in_single_precision() {
        let g = IslandGraph::<f32>::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]);
        let t = minimum_diameter_spanning_tree(&g).unwrap();
        assert_eq!(t.diameter, 2.0f32);
    }
}
