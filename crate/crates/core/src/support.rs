//! Allocation of support nodes to edges that become risky over the horizon.
//!
//! Every node may host support. A node `x` covers the edges whose nearer
//! endpoint lies within `coverage_radius` hops of `x`; candidates for an edge
//! must additionally be within `k` hops of it. Candidates are ranked by a
//! score mixing robot traffic (path overlap) with a softmax-normalized,
//! distance-discounted cumulative risk, and the top `s` are kept.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::RiskForecast;
use crate::graph::{DistanceTable, EdgeId, Graph, NodeId};
use crate::planner::Task;
use crate::seed::rng_from;

/// Forecasted risk above this counts as nonzero.
pub const RISK_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SupportError {
    #[error("support config: {0}")]
    InvalidConfig(String),
    #[error("unknown scoring variant `{0}`")]
    UnknownVariant(String),
    #[error("node {node} cannot support edge {edge}: {reason}")]
    InvalidAssignment { edge: usize, node: usize, reason: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringVariant {
    RiskPath,
    RiskOnly,
    PathOnly,
    DetourOnly,
}

impl ScoringVariant {
    pub const ALL: [ScoringVariant; 4] =
        [ScoringVariant::RiskPath, ScoringVariant::RiskOnly, ScoringVariant::PathOnly, ScoringVariant::DetourOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoringVariant::RiskPath => "risk_path",
            ScoringVariant::RiskOnly => "risk_only",
            ScoringVariant::PathOnly => "path_only",
            ScoringVariant::DetourOnly => "detour_only",
        }
    }
}

impl fmt::Display for ScoringVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoringVariant {
    type Err = SupportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScoringVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| SupportError::UnknownVariant(s.to_string()))
    }
}

/// Omitted fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupportConfig {
    pub k: usize,
    pub s: usize,
    pub alpha: f64,
    pub beta: f64,
    pub variant: ScoringVariant,
    /// Hop radius defining which edges a node covers; `None` means `k`.
    pub coverage_radius: Option<usize>,
}

impl Default for SupportConfig {
    fn default() -> Self {
        SupportConfig { k: 2, s: 1, alpha: 1.0, beta: 1.0, variant: ScoringVariant::RiskPath, coverage_radius: None }
    }
}

impl SupportConfig {
    pub fn validate(&self) -> Result<(), SupportError> {
        if self.s < 1 {
            return Err(SupportError::InvalidConfig("s must be at least 1".into()));
        }
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(SupportError::InvalidConfig(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(SupportError::InvalidConfig(format!("beta must be non-negative, got {}", self.beta)));
        }
        Ok(())
    }

    pub fn coverage_radius(&self) -> usize {
        self.coverage_radius.unwrap_or(self.k)
    }
}

/// Γ: risky edge → allocated support nodes, plus the coverage sets 𝒮(x).
#[derive(Debug, Clone, PartialEq)]
pub struct SupportMap {
    assignments: BTreeMap<EdgeId, Vec<NodeId>>,
    scores: BTreeMap<EdgeId, Vec<f64>>,
    coverage_radius: usize,
    /// 𝒮(x) for every node, ascending.
    coverage: Vec<Vec<EdgeId>>,
    /// Edges `e` with `x ∈ Γ[e]`, ascending, per node.
    by_node: Vec<Vec<EdgeId>>,
}

impl SupportMap {
    pub fn empty(g: &Graph, coverage_radius: usize) -> Self {
        Self::assemble(g, &g.distance_table(), coverage_radius, BTreeMap::new(), BTreeMap::new())
    }

    /// Builds Γ from explicit assignments, rejecting nodes that cannot cover
    /// their edge.
    pub fn from_assignments(
        g: &Graph,
        coverage_radius: usize,
        assignments: BTreeMap<EdgeId, Vec<NodeId>>,
    ) -> Result<Self, SupportError> {
        let dist = g.distance_table();
        for (&e, nodes) in &assignments {
            for &x in nodes {
                if e.0 >= g.edge_count() || !g.contains_node(x) {
                    return Err(SupportError::InvalidAssignment { edge: e.0, node: x.0, reason: "not in graph" });
                }
                if dist.to_edge(x, g.endpoints(e)) > coverage_radius {
                    return Err(SupportError::InvalidAssignment { edge: e.0, node: x.0, reason: "outside coverage" });
                }
            }
        }
        Ok(Self::assemble(g, &dist, coverage_radius, assignments, BTreeMap::new()))
    }

    fn assemble(
        g: &Graph,
        dist: &DistanceTable,
        coverage_radius: usize,
        mut assignments: BTreeMap<EdgeId, Vec<NodeId>>,
        scores: BTreeMap<EdgeId, Vec<f64>>,
    ) -> Self {
        assignments.retain(|_, nodes| !nodes.is_empty());
        let coverage = g
            .nodes()
            .map(|x| g.edge_ids().filter(|&e| dist.to_edge(x, g.endpoints(e)) <= coverage_radius).collect())
            .collect();
        let mut by_node = vec![Vec::new(); g.node_count()];
        for (&e, nodes) in &assignments {
            for &x in nodes {
                by_node[x.0].push(e);
            }
        }
        for edges in &mut by_node {
            edges.sort();
            edges.dedup();
        }
        SupportMap { assignments, scores, coverage_radius, coverage, by_node }
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn assignments(&self) -> &BTreeMap<EdgeId, Vec<NodeId>> {
        &self.assignments
    }

    pub fn nodes_for(&self, e: EdgeId) -> &[NodeId] {
        self.assignments.get(&e).map_or(&[], Vec::as_slice)
    }

    /// Scores of the allocated nodes, parallel to [`Self::nodes_for`]; empty
    /// for allocators that do not score.
    pub fn scores_for(&self, e: EdgeId) -> &[f64] {
        self.scores.get(&e).map_or(&[], Vec::as_slice)
    }

    /// Edges this node was allocated to support.
    pub fn edges_supported_from(&self, x: NodeId) -> &[EdgeId] {
        &self.by_node[x.0]
    }

    /// 𝒮(x)
    pub fn coverage(&self, x: NodeId) -> &[EdgeId] {
        &self.coverage[x.0]
    }

    pub fn covers(&self, x: NodeId, e: EdgeId) -> bool {
        self.coverage[x.0].binary_search(&e).is_ok()
    }

    pub fn coverage_radius(&self) -> usize {
        self.coverage_radius
    }

    /// Whether `x` may support `e`: allocated in Γ and `e ∈ 𝒮(x)`.
    pub fn allows(&self, x: NodeId, e: EdgeId) -> bool {
        self.nodes_for(e).contains(&x) && self.covers(x, e)
    }

    pub fn is_subset_of(&self, other: &SupportMap) -> bool {
        self.assignments.iter().all(|(e, nodes)| nodes.iter().all(|x| other.nodes_for(*e).contains(x)))
    }
}

/// E_diff: edges whose risk exceeds `epsilon` at some `t ≤ T`.
pub fn risky_edge_set(forecast: &RiskForecast, epsilon: f64) -> Vec<EdgeId> {
    (0..forecast.edge_count())
        .map(EdgeId)
        .filter(|&e| (0..=forecast.horizon()).any(|t| forecast.risk(t, e) > epsilon))
        .collect()
}

/// Edges risky in the initial snapshot only.
pub fn initially_risky_edges(forecast: &RiskForecast, epsilon: f64) -> Vec<EdgeId> {
    (0..forecast.edge_count()).map(EdgeId).filter(|&e| forecast.risk(0, e) > epsilon).collect()
}

/// C_uv: nodes covering `edge` within `k` hops of its nearer endpoint.
pub fn candidate_nodes(g: &Graph, dist: &DistanceTable, edge: EdgeId, config: &SupportConfig) -> Vec<NodeId> {
    let ends = g.endpoints(edge);
    g.nodes()
        .filter(|&x| {
            let d = dist.to_edge(x, ends);
            d <= config.coverage_radius() && d <= config.k
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathOverlap {
    pub raw: Vec<usize>,
    pub normalized: Vec<f64>,
}

/// Counts, per node, how many robots' canonical shortest paths visit it.
pub fn path_overlap(g: &Graph, tasks: &[Task]) -> PathOverlap {
    let mut raw = vec![0usize; g.node_count()];
    for task in tasks {
        for x in g.canonical_shortest_path(task.start, task.goal) {
            raw[x.0] += 1;
        }
    }
    let max = raw.iter().copied().max().unwrap_or(0);
    let normalized = raw.iter().map(|&p| if max == 0 { 0.0 } else { p as f64 / max as f64 }).collect();
    PathOverlap { raw, normalized }
}

/// Cumulative risk on `edge` over `t = 1..=T`, discounted by the hop
/// distance from `x` to the nearer endpoint.
pub fn risk_potential(forecast: &RiskForecast, dist: &DistanceTable, g: &Graph, edge: EdgeId, x: NodeId) -> f64 {
    forecast.cumulative_risk(edge) / (1.0 + dist.to_edge(x, g.endpoints(edge)) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBreakdown {
    pub node: NodeId,
    pub p_hat: f64,
    pub r_hat: f64,
    pub r_raw: f64,
    pub score: f64,
}

pub fn score_candidates(
    g: &Graph,
    dist: &DistanceTable,
    edge: EdgeId,
    candidates: &[NodeId],
    overlap: &PathOverlap,
    forecast: &RiskForecast,
    config: &SupportConfig,
) -> Vec<ScoreBreakdown> {
    let r_raw: Vec<f64> = candidates.iter().map(|&x| risk_potential(forecast, dist, g, edge, x)).collect();
    let peak = r_raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = r_raw.iter().map(|r| (r - peak).exp()).collect();
    let total: f64 = exp.iter().sum();
    let ends = g.endpoints(edge);

    candidates
        .iter()
        .zip(r_raw.iter().zip(&exp))
        .map(|(&x, (&raw, &e))| {
            let p_hat = overlap.normalized[x.0];
            let r_hat = e / total;
            let score = match config.variant {
                ScoringVariant::RiskPath => config.alpha * p_hat * (1.0 + config.beta * r_hat),
                ScoringVariant::RiskOnly => r_hat,
                ScoringVariant::PathOnly => p_hat,
                ScoringVariant::DetourOnly => 1.0 / (1.0 + dist.to_edge(x, ends) as f64),
            };
            ScoreBreakdown { node: x, p_hat, r_hat, r_raw: raw, score }
        })
        .collect()
}

/// Top `s` by score descending, then node id ascending.
pub fn select_top(scored: &[ScoreBreakdown], s: usize) -> Vec<&ScoreBreakdown> {
    let mut ranked: Vec<&ScoreBreakdown> = scored.iter().collect();
    ranked.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal).then(a.node.cmp(&b.node)));
    ranked.truncate(s);
    ranked
}

fn allocate_over(
    g: &Graph,
    forecast: &RiskForecast,
    tasks: &[Task],
    config: &SupportConfig,
    edges: &[EdgeId],
) -> SupportMap {
    let dist = g.distance_table();
    let overlap = path_overlap(g, tasks);
    let mut assignments = BTreeMap::new();
    let mut scores = BTreeMap::new();
    for &e in edges {
        let cands = candidate_nodes(g, &dist, e, config);
        if cands.is_empty() {
            continue;
        }
        let scored = score_candidates(g, &dist, e, &cands, &overlap, forecast, config);
        let top = select_top(&scored, config.s);
        assignments.insert(e, top.iter().map(|b| b.node).collect());
        scores.insert(e, top.iter().map(|b| b.score).collect());
    }
    SupportMap::assemble(g, &dist, config.coverage_radius(), assignments, scores)
}

/// Forecast-aware allocation over every edge in E_diff.
pub fn allocate(g: &Graph, forecast: &RiskForecast, tasks: &[Task], config: &SupportConfig) -> SupportMap {
    allocate_over(g, forecast, tasks, config, &risky_edge_set(forecast, RISK_EPSILON))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineAllocator {
    /// `s` candidates drawn uniformly per risky edge.
    Random {
        seed: u64,
    },
    /// Forecast-aware scoring restricted to edges risky at `t = 0`.
    Tcgre,
    None,
}

pub fn allocate_baseline(
    g: &Graph,
    forecast: &RiskForecast,
    tasks: &[Task],
    config: &SupportConfig,
    kind: BaselineAllocator,
) -> SupportMap {
    match kind {
        BaselineAllocator::None => SupportMap::empty(g, config.coverage_radius()),
        BaselineAllocator::Tcgre => {
            allocate_over(g, forecast, tasks, config, &initially_risky_edges(forecast, RISK_EPSILON))
        }
        BaselineAllocator::Random { seed } => {
            let dist = g.distance_table();
            let mut rng = rng_from(seed);
            let mut assignments = BTreeMap::new();
            for e in risky_edge_set(forecast, RISK_EPSILON) {
                let cands = candidate_nodes(g, &dist, e, config);
                if cands.is_empty() {
                    continue;
                }
                let mut picked: Vec<NodeId> = cands.choose_multiple(&mut rng, config.s).copied().collect();
                picked.sort();
                assignments.insert(e, picked);
            }
            SupportMap::assemble(g, &dist, config.coverage_radius(), assignments, BTreeMap::new())
        }
    }
}
