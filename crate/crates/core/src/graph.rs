//! Undirected simple graphs with dense node/edge indices.
//!
//! A [`Graph`] is immutable once built. Edges are stored with canonical
//! orientation `u < v` in insertion order, so `EdgeId`s are stable and can be
//! used directly as matrix indices by the forecaster.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("graph needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("edge-to-node ratio {ratio} gives {edges} edges, fewer than the {needed} a spanning tree needs")]
    RatioTooSmall { ratio: f64, edges: usize, needed: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    NodeOutOfRange(usize, usize, usize),
    #[error("graph is disconnected: node {0} unreachable from node 0")]
    Disconnected(usize),
    #[error("malformed graph document: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(NodeId, NodeId)>,
    /// Sorted by neighbor index; each entry carries the connecting edge.
    node_adjacency: Vec<Vec<(NodeId, EdgeId)>>,
    /// Edges sharing an endpoint, sorted ascending, excluding the edge itself.
    edge_adjacency: Vec<Vec<EdgeId>>,
}

impl Graph {
    /// Builds a graph, checking that it is simple and connected.
    pub fn new(node_count: usize, edge_list: &[(usize, usize)]) -> Result<Self, GraphError> {
        let graph = Self::build_simple(node_count, edge_list)?;
        if let Some(unreached) = graph.first_unreachable() {
            return Err(GraphError::Disconnected(unreached));
        }
        Ok(graph)
    }

    /// Simple but possibly disconnected; only for exercising edge cases.
    #[cfg(test)]
    pub(crate) fn new_disconnected(node_count: usize, edge_list: &[(usize, usize)]) -> Self {
        Self::build_simple(node_count, edge_list).unwrap()
    }

    fn build_simple(node_count: usize, edge_list: &[(usize, usize)]) -> Result<Self, GraphError> {
        if node_count == 0 {
            return Err(GraphError::TooFewNodes(0));
        }
        let mut seen = HashSet::new();
        let mut edges = Vec::with_capacity(edge_list.len());
        for &(a, b) in edge_list {
            if a >= node_count || b >= node_count {
                return Err(GraphError::NodeOutOfRange(a, b, node_count));
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            let (u, v) = if a < b { (a, b) } else { (b, a) };
            if !seen.insert((u, v)) {
                return Err(GraphError::DuplicateEdge(u, v));
            }
            edges.push((NodeId(u), NodeId(v)));
        }

        let mut node_adjacency = vec![Vec::new(); node_count];
        for (i, &(u, v)) in edges.iter().enumerate() {
            node_adjacency[u.0].push((v, EdgeId(i)));
            node_adjacency[v.0].push((u, EdgeId(i)));
        }
        for adj in &mut node_adjacency {
            adj.sort();
        }

        let edge_adjacency = edges
            .iter()
            .enumerate()
            .map(|(i, &(u, v))| {
                let mut adj: Vec<EdgeId> = node_adjacency[u.0]
                    .iter()
                    .chain(node_adjacency[v.0].iter())
                    .map(|&(_, e)| e)
                    .filter(|&e| e.0 != i)
                    .collect();
                adj.sort();
                adj.dedup();
                adj
            })
            .collect();

        Ok(Graph { node_count, edges, node_adjacency, edge_adjacency })
    }

    fn first_unreachable(&self) -> Option<usize> {
        let dist = self.bfs_distances(NodeId(0));
        dist.iter().position(|d| d.is_none())
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.node_count).map(NodeId)
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = EdgeId> {
        (0..self.edges.len()).map(EdgeId)
    }

    /// Canonical endpoints `(u, v)` with `u < v`.
    pub fn endpoints(&self, e: EdgeId) -> (NodeId, NodeId) {
        self.edges[e.0]
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn neighbors(&self, u: NodeId) -> &[(NodeId, EdgeId)] {
        &self.node_adjacency[u.0]
    }

    pub fn adjacent_edges(&self, e: EdgeId) -> &[EdgeId] {
        &self.edge_adjacency[e.0]
    }

    pub fn edge_between(&self, a: NodeId, b: NodeId) -> Option<EdgeId> {
        self.node_adjacency[a.0].binary_search_by_key(&b, |&(n, _)| n).ok().map(|i| self.node_adjacency[a.0][i].1)
    }

    pub fn contains_node(&self, u: NodeId) -> bool {
        u.0 < self.node_count
    }

    fn bfs_distances(&self, source: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.node_count];
        dist[source.0] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u.0].unwrap();
            for &(w, _) in &self.node_adjacency[u.0] {
                if dist[w.0].is_none() {
                    dist[w.0] = Some(du + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Unweighted shortest-path length.
    pub fn hop_distance(&self, u: NodeId, v: NodeId) -> usize {
        self.bfs_distances(u)[v.0].expect("graph is connected")
    }

    /// All-pairs hop distances, `table[u][v]`.
    pub fn distance_table(&self) -> DistanceTable {
        DistanceTable {
            rows: self
                .nodes()
                .map(|u| self.bfs_distances(u).into_iter().map(|d| d.expect("graph is connected")).collect())
                .collect(),
        }
    }

    /// A hop-shortest path from `s` to `t`. Among equal-length paths the one
    /// found by breadth-first search with ascending neighbor order wins.
    pub fn canonical_shortest_path(&self, s: NodeId, t: NodeId) -> Vec<NodeId> {
        let mut parent: Vec<Option<NodeId>> = vec![None; self.node_count];
        let mut visited = vec![false; self.node_count];
        visited[s.0] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            if u == t {
                break;
            }
            for &(w, _) in &self.node_adjacency[u.0] {
                if !visited[w.0] {
                    visited[w.0] = true;
                    parent[w.0] = Some(u);
                    queue.push_back(w);
                }
            }
        }
        let mut path = vec![t];
        let mut cur = t;
        while let Some(p) = parent[cur.0] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument { nodes: self.node_count, edges: self.edges.iter().map(|&(u, v)| [u.0, v.0]).collect() }
    }

    pub fn from_document(doc: &GraphDocument) -> Result<Self, GraphError> {
        let pairs: Vec<(usize, usize)> = doc.edges.iter().map(|e| (e[0], e[1])).collect();
        Graph::new(doc.nodes, &pairs)
    }
}

#[derive(Debug, Clone)]
pub struct DistanceTable {
    rows: Vec<Vec<usize>>,
}

impl DistanceTable {
    pub fn get(&self, u: NodeId, v: NodeId) -> usize {
        self.rows[u.0][v.0]
    }

    /// `min(d(x,u), d(x,v))` for edge endpoints `(u, v)`.
    pub fn to_edge(&self, x: NodeId, (u, v): (NodeId, NodeId)) -> usize {
        self.get(x, u).min(self.get(x, v))
    }
}

/// On-disk form: `{"nodes": n, "edges": [[u, v], ...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    pub nodes: usize,
    pub edges: Vec<[usize; 2]>,
}

pub fn parse_graph(text: &str) -> Result<Graph, GraphError> {
    let doc: GraphDocument = serde_json::from_str(text).map_err(|e| GraphError::Malformed(e.to_string()))?;
    Graph::from_document(&doc)
}

pub fn serialize_graph(g: &Graph) -> String {
    serde_json::to_string(&g.to_document()).expect("graph document serializes")
}

/// Number of edges the generator targets for `n` nodes at `ratio`.
pub fn target_edge_count(n: usize, ratio: f64) -> usize {
    // ratio * n is computed in floating point; 1.4 * 10 is 14.000000000000002.
    let raw = (ratio * n as f64 - 1e-9).ceil().max(0.0) as usize;
    raw.min(n * (n - 1) / 2)
}

/// Random connected simple graph: a random spanning tree (random permutation
/// with random attachment) plus distinct non-tree edges drawn uniformly.
pub fn generate_random_graph(n: usize, ratio: f64, seed: u64) -> Result<Graph, GraphError> {
    if n < 2 {
        return Err(GraphError::TooFewNodes(n));
    }
    let target = target_edge_count(n, ratio);
    if target < n - 1 {
        return Err(GraphError::RatioTooSmall { ratio, edges: target, needed: n - 1 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut edges = Vec::with_capacity(target);
    let mut present = HashSet::new();
    for i in 1..n {
        let parent = order[rng.gen_range(0..i)];
        let child = order[i];
        let key = (parent.min(child), parent.max(child));
        present.insert(key);
        edges.push(key);
    }

    let mut extra: Vec<(usize, usize)> =
        (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).filter(|k| !present.contains(k)).collect();
    let needed = target - edges.len();
    let (chosen, _) = extra.partial_shuffle(&mut rng, needed);
    edges.extend_from_slice(chosen);

    Graph::new(n, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Graph {
        Graph::new(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn generator_examples() {
        let g = generate_random_graph(5, 1.2, 7).unwrap();
        assert_eq!(g.edge_count(), 6);

        let g = generate_random_graph(2, 0.5, 0).unwrap();
        assert_eq!(g.edges(), &[(NodeId(0), NodeId(1))]);

        let a = generate_random_graph(4, 1.5, 3).unwrap();
        let b = generate_random_graph(4, 1.5, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generator_rejects_bad_args() {
        assert_eq!(generate_random_graph(1, 2.0, 0), Err(GraphError::TooFewNodes(1)));
        assert!(matches!(generate_random_graph(6, 0.5, 0), Err(GraphError::RatioTooSmall { .. })));
    }

    #[test]
    fn edge_count_caps_at_complete_graph() {
        let g = generate_random_graph(4, 5.0, 1).unwrap();
        assert_eq!(g.edge_count(), 6);
        assert_eq!(target_edge_count(10, 1.4), 14);
        assert_eq!(target_edge_count(10, 1.6), 16);
    }

    #[test]
    fn hop_distance_examples() {
        let g = path3();
        assert_eq!(g.hop_distance(NodeId(0), NodeId(2)), 2);
        assert_eq!(g.hop_distance(NodeId(1), NodeId(1)), 0);
        let k4 = Graph::new(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        for u in k4.nodes() {
            for v in k4.nodes() {
                assert_eq!(k4.hop_distance(u, v), usize::from(u != v));
            }
        }
    }

    #[test]
    fn shortest_path_examples() {
        let g = path3();
        assert_eq!(g.canonical_shortest_path(NodeId(0), NodeId(2)), vec![NodeId(0), NodeId(1), NodeId(2)]);
        assert_eq!(g.canonical_shortest_path(NodeId(1), NodeId(1)), vec![NodeId(1)]);
    }

    #[test]
    fn shortest_path_tie_prefers_lower_neighbor() {
        let cycle = Graph::new(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        // Enumerate every simple 0 -> 2 path of length 2 to confirm the tie exists.
        let shortest: Vec<Vec<usize>> = (0..4)
            .filter(|&m| cycle.edge_between(NodeId(0), NodeId(m)).is_some())
            .filter(|&m| cycle.edge_between(NodeId(m), NodeId(2)).is_some())
            .map(|m| vec![0, m, 2])
            .collect();
        assert_eq!(shortest, vec![vec![0, 1, 2], vec![0, 3, 2]]);
        assert_eq!(cycle.canonical_shortest_path(NodeId(0), NodeId(2)), vec![NodeId(0), NodeId(1), NodeId(2)]);
    }

    #[test]
    fn edges_are_canonical_and_adjacency_is_symmetric() {
        let g = Graph::new(4, &[(1, 0), (2, 1), (3, 1)]).unwrap();
        assert_eq!(g.endpoints(EdgeId(0)), (NodeId(0), NodeId(1)));
        for e in g.edge_ids() {
            assert!(!g.adjacent_edges(e).contains(&e));
            for &f in g.adjacent_edges(e) {
                assert!(g.adjacent_edges(f).contains(&e));
            }
        }
        assert_eq!(g.adjacent_edges(EdgeId(1)), &[EdgeId(0), EdgeId(2)]);
    }

    #[test]
    fn serialize_and_parse() {
        let g = Graph::new(2, &[(0, 1)]).unwrap();
        assert_eq!(serialize_graph(&g), r#"{"nodes":2,"edges":[[0,1]]}"#);
        assert_eq!(parse_graph(&serialize_graph(&g)).unwrap(), g);
    }

    #[test]
    fn parse_rejects_invalid_documents() {
        assert_eq!(parse_graph(r#"{"nodes":2,"edges":[[0,0]]}"#), Err(GraphError::SelfLoop(0)));
        assert_eq!(parse_graph(r#"{"nodes":4,"edges":[[0,1],[2,3]]}"#), Err(GraphError::Disconnected(2)));
        assert_eq!(parse_graph(r#"{"nodes":3,"edges":[[0,1],[1,2],[1,0]]}"#), Err(GraphError::DuplicateEdge(0, 1)));
        assert!(matches!(parse_graph(r#"{"nodes":3}"#), Err(GraphError::Malformed(_))));
        assert!(matches!(parse_graph(r#"{"nodes":2,"edges":[[0,1]],"x":1}"#), Err(GraphError::Malformed(_))));
        assert!(matches!(parse_graph(r#"{"nodes":2,"edges":[[0,5]]}"#), Err(GraphError::NodeOutOfRange(0, 5, 2))));
    }
}
