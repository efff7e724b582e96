//! Adversary stay–move dynamics on edges and the resulting edge-risk forecast.
//!
//! Each adversary is an independent Markov chain over edges: it stays with
//! probability `stay` or moves uniformly to an edge sharing an endpoint. The
//! per-adversary occupancy marginals are propagated with a dense
//! column-stochastic matrix and combined into the probability that at least
//! one adversary occupies an edge.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeId, Graph};
use crate::seed::rng_from;

#[derive(Debug, Error, PartialEq)]
pub enum ForecastError {
    #[error("stay probability {0} outside [0, 1]")]
    InvalidStay(f64),
    #[error("adversary {0} starts on edge {1} which is not in the graph")]
    UnknownEdge(usize, usize),
    #[error("adversaries {0} and {1} start on the same edge")]
    SharedInitialEdge(usize, usize),
    #[error("brute-force enumeration would visit {0} paths, above the limit of {1}")]
    EnumerationTooLarge(u128, u128),
    #[error("brute-force marginal is defined for a single adversary, got {0}")]
    NotSingleAdversary(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryModel {
    stay: f64,
    initial_edges: Vec<EdgeId>,
}

impl AdversaryModel {
    pub fn new(g: &Graph, stay: f64, initial_edges: Vec<EdgeId>) -> Result<Self, ForecastError> {
        if !(0.0..=1.0).contains(&stay) {
            return Err(ForecastError::InvalidStay(stay));
        }
        for (j, e) in initial_edges.iter().enumerate() {
            if e.0 >= g.edge_count() {
                return Err(ForecastError::UnknownEdge(j, e.0));
            }
            if let Some(i) = initial_edges[..j].iter().position(|f| f == e) {
                return Err(ForecastError::SharedInitialEdge(i, j));
            }
        }
        Ok(AdversaryModel { stay, initial_edges })
    }

    pub fn count(&self) -> usize {
        self.initial_edges.len()
    }

    pub fn stay(&self) -> f64 {
        self.stay
    }

    pub fn initial_edges(&self) -> &[EdgeId] {
        &self.initial_edges
    }
}

/// `entry(to, from) = Pr[next = to | current = from]`, dense `|E| x |E|`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    size: usize,
    entries: Vec<f64>,
    /// Nonzero-capable rows per column (the edge itself, then its neighbors).
    support: Vec<Vec<EdgeId>>,
}

impl TransitionMatrix {
    pub fn build(g: &Graph, stay: f64) -> Result<Self, ForecastError> {
        if !(0.0..=1.0).contains(&stay) {
            return Err(ForecastError::InvalidStay(stay));
        }
        let size = g.edge_count();
        let mut entries = vec![0.0; size * size];
        let mut support = Vec::with_capacity(size);
        for e in g.edge_ids() {
            let adj = g.adjacent_edges(e);
            let mut col = vec![e];
            if adj.is_empty() {
                // Isolated edge: nowhere to go.
                entries[e.0 * size + e.0] = 1.0;
            } else {
                entries[e.0 * size + e.0] = stay;
                let share = (1.0 - stay) / adj.len() as f64;
                for &f in adj {
                    entries[f.0 * size + e.0] = share;
                    col.push(f);
                }
            }
            support.push(col);
        }
        Ok(TransitionMatrix { size, entries, support })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn entry(&self, to: EdgeId, from: EdgeId) -> f64 {
        self.entries[to.0 * self.size + from.0]
    }

    pub fn column_sum(&self, from: EdgeId) -> f64 {
        (0..self.size).map(|to| self.entries[to * self.size + from.0]).sum()
    }

    /// One step `Θ q`.
    pub fn apply(&self, q: &[f64]) -> Vec<f64> {
        assert_eq!(q.len(), self.size);
        (0..self.size)
            .map(|to| {
                let row = &self.entries[to * self.size..(to + 1) * self.size];
                row.iter().zip(q).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// Draws the next edge given the current one and a uniform `u` in [0, 1).
    fn step(&self, from: EdgeId, u: f64) -> EdgeId {
        let col = &self.support[from.0];
        let mut acc = 0.0;
        for &to in col {
            acc += self.entry(to, from);
            if u < acc {
                return to;
            }
        }
        // Rounding left `acc` a hair under 1; take the last positive entry.
        *col.iter().rev().find(|&&to| self.entry(to, from) > 0.0).unwrap_or(&from)
    }
}

/// `Θ^τ q0` by repeated matrix-vector products.
pub fn propagate_marginal(theta: &TransitionMatrix, q0: &[f64], steps: usize) -> Vec<f64> {
    let mut q = q0.to_vec();
    for _ in 0..steps {
        q = theta.apply(&q);
    }
    q
}

/// Probability that at least one independent adversary occupies each edge.
pub fn combine_union(marginals: &[&[f64]], edge_count: usize) -> Vec<f64> {
    if let [only] = marginals {
        return only.to_vec();
    }
    let mut free = vec![1.0; edge_count];
    for q in marginals {
        for (f, p) in free.iter_mut().zip(q.iter()) {
            *f *= 1.0 - p;
        }
    }
    free.into_iter().map(|f| 1.0 - f).collect()
}

fn delta(size: usize, e: EdgeId) -> Vec<f64> {
    let mut q = vec![0.0; size];
    q[e.0] = 1.0;
    q
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskForecast {
    horizon: usize,
    edge_count: usize,
    /// `marginals[j][t][e]`
    marginals: Vec<Vec<Vec<f64>>>,
    /// `risk[t][e]`
    risk: Vec<Vec<f64>>,
}

impl RiskForecast {
    /// Forecast with `risk == 0` everywhere and no adversaries.
    pub fn zero(g: &Graph, horizon: usize) -> Self {
        RiskForecast {
            horizon,
            edge_count: g.edge_count(),
            marginals: Vec::new(),
            risk: vec![vec![0.0; g.edge_count()]; horizon + 1],
        }
    }

    /// Builds a forecast from an explicit risk table, `risk[t][e]` for
    /// `t = 0..=horizon`. No per-adversary marginals are attached.
    pub fn from_risk_table(risk: Vec<Vec<f64>>) -> Self {
        let horizon = risk.len().saturating_sub(1);
        let edge_count = risk.first().map_or(0, |r| r.len());
        RiskForecast { horizon, edge_count, marginals: Vec::new(), risk }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn adversary_count(&self) -> usize {
        self.marginals.len()
    }

    pub fn risk(&self, t: usize, e: EdgeId) -> f64 {
        self.risk[t][e.0]
    }

    pub fn risk_at(&self, t: usize) -> &[f64] {
        &self.risk[t]
    }

    pub fn marginal(&self, j: usize, t: usize) -> &[f64] {
        &self.marginals[j][t]
    }

    /// `Σ_{t=1..T} ρ[t][e]`
    pub fn cumulative_risk(&self, e: EdgeId) -> f64 {
        (1..=self.horizon).map(|t| self.risk[t][e.0]).sum()
    }
}

/// Propagates every adversary's marginal over `0..=horizon` and combines
/// them into per-edge risk.
pub fn forecast(g: &Graph, model: &AdversaryModel, horizon: usize) -> RiskForecast {
    let theta = TransitionMatrix::build(g, model.stay()).expect("model stay already validated");
    forecast_with(&theta, model, horizon)
}

pub fn forecast_with(theta: &TransitionMatrix, model: &AdversaryModel, horizon: usize) -> RiskForecast {
    let size = theta.size();
    let marginals: Vec<Vec<Vec<f64>>> = model
        .initial_edges()
        .iter()
        .map(|&e0| {
            let mut series = Vec::with_capacity(horizon + 1);
            series.push(delta(size, e0));
            for t in 0..horizon {
                let next = theta.apply(&series[t]);
                series.push(next);
            }
            series
        })
        .collect();
    let risk = (0..=horizon)
        .map(|t| {
            let at_t: Vec<&[f64]> = marginals.iter().map(|m| m[t].as_slice()).collect();
            combine_union(&at_t, size)
        })
        .collect();
    RiskForecast { horizon, edge_count: size, marginals, risk }
}

/// `edges[j][t]` for `t = 0..=horizon`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdversaryTrajectory {
    pub edges: Vec<Vec<EdgeId>>,
}

impl AdversaryTrajectory {
    pub fn occupied(&self, t: usize, e: EdgeId) -> bool {
        self.edges.iter().any(|path| path[t] == e)
    }
}

pub fn sample_trajectories(
    model: &AdversaryModel,
    theta: &TransitionMatrix,
    horizon: usize,
    seed: u64,
) -> AdversaryTrajectory {
    let mut rng = rng_from(seed);
    let edges = model
        .initial_edges()
        .iter()
        .map(|&e0| {
            let mut path = Vec::with_capacity(horizon + 1);
            path.push(e0);
            let mut cur = e0;
            for _ in 0..horizon {
                cur = theta.step(cur, rng.gen::<f64>());
                path.push(cur);
            }
            path
        })
        .collect();
    AdversaryTrajectory { edges }
}

pub const BRUTE_FORCE_PATH_LIMIT: u128 = 1_000_000;

/// Exact single-adversary marginal after `steps` transitions, obtained by
/// enumerating every edge sequence and summing path probabilities. Transition
/// probabilities are derived from the graph directly, not from a matrix.
pub fn brute_force_marginal(g: &Graph, model: &AdversaryModel, steps: usize) -> Result<Vec<f64>, ForecastError> {
    if model.count() != 1 {
        return Err(ForecastError::NotSingleAdversary(model.count()));
    }
    let branching = g.edge_ids().map(|e| g.adjacent_edges(e).len() + 1).max().unwrap_or(1) as u128;
    let paths = branching.checked_pow(steps as u32).unwrap_or(u128::MAX);
    if paths > BRUTE_FORCE_PATH_LIMIT {
        return Err(ForecastError::EnumerationTooLarge(paths, BRUTE_FORCE_PATH_LIMIT));
    }

    fn walk(g: &Graph, stay: f64, e: EdgeId, prob: f64, remaining: usize, out: &mut [f64]) {
        if remaining == 0 {
            out[e.0] += prob;
            return;
        }
        let adj = g.adjacent_edges(e);
        if adj.is_empty() {
            walk(g, stay, e, prob, remaining - 1, out);
            return;
        }
        walk(g, stay, e, prob * stay, remaining - 1, out);
        let move_prob = (1.0 - stay) / adj.len() as f64;
        for &f in adj {
            walk(g, stay, f, prob * move_prob, remaining - 1, out);
        }
    }

    let mut out = vec![0.0; g.edge_count()];
    walk(g, model.stay(), model.initial_edges()[0], 1.0, steps, &mut out);
    Ok(out)
}

/// Set of edges reachable from `start` through edge adjacency.
pub fn edge_component(g: &Graph, start: EdgeId) -> HashSet<EdgeId> {
    let mut seen = HashSet::from([start]);
    let mut stack = vec![start];
    while let Some(e) = stack.pop() {
        for &f in g.adjacent_edges(e) {
            if seen.insert(f) {
                stack.push(f);
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Graph {
        Graph::new(3, &[(0, 1), (1, 2)]).unwrap()
    }

    fn star3() -> Graph {
        Graph::new(4, &[(0, 1), (0, 2), (0, 3)]).unwrap()
    }

    #[test]
    fn transition_matrix_on_path() {
        let theta = TransitionMatrix::build(&path3(), 0.8).unwrap();
        assert_eq!(theta.entry(EdgeId(0), EdgeId(0)), 0.8);
        assert!((theta.entry(EdgeId(1), EdgeId(0)) - 0.2).abs() < 1e-15);
        assert_eq!(theta.entry(EdgeId(1), EdgeId(1)), 0.8);
        assert!((theta.entry(EdgeId(0), EdgeId(1)) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn full_stay_gives_identity() {
        let g = crate::graph::generate_random_graph(6, 1.5, 4).unwrap();
        let theta = TransitionMatrix::build(&g, 1.0).unwrap();
        for a in g.edge_ids() {
            for b in g.edge_ids() {
                assert_eq!(theta.entry(a, b), if a == b { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn star_entries_and_column_sums() {
        let g = star3();
        let theta = TransitionMatrix::build(&g, 0.2).unwrap();
        for a in g.edge_ids() {
            for b in g.edge_ids() {
                let want = if a == b { 0.2 } else { 0.4 };
                assert!((theta.entry(a, b) - want).abs() < 1e-15);
            }
            let direct = theta.entry(EdgeId(0), a) + theta.entry(EdgeId(1), a) + theta.entry(EdgeId(2), a);
            assert!((direct - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_edge_graph_stays_put() {
        let g = Graph::new(2, &[(0, 1)]).unwrap();
        let theta = TransitionMatrix::build(&g, 0.3).unwrap();
        assert_eq!(theta.entry(EdgeId(0), EdgeId(0)), 1.0);
    }

    #[test]
    fn rejects_invalid_stay() {
        assert_eq!(TransitionMatrix::build(&path3(), 1.5), Err(ForecastError::InvalidStay(1.5)));
        assert!(AdversaryModel::new(&path3(), -0.1, vec![]).is_err());
    }

    #[test]
    fn rejects_shared_or_unknown_initial_edges() {
        let g = path3();
        assert_eq!(
            AdversaryModel::new(&g, 0.5, vec![EdgeId(1), EdgeId(1)]),
            Err(ForecastError::SharedInitialEdge(0, 1))
        );
        assert_eq!(AdversaryModel::new(&g, 0.5, vec![EdgeId(2)]), Err(ForecastError::UnknownEdge(0, 2)));
    }

    #[test]
    fn propagate_examples() {
        let theta = TransitionMatrix::build(&path3(), 0.8).unwrap();
        let q0 = [1.0, 0.0];
        assert_eq!(propagate_marginal(&theta, &q0, 0), q0.to_vec());
        let q1 = propagate_marginal(&theta, &q0, 1);
        assert!((q1[0] - 0.8).abs() < 1e-15 && (q1[1] - 0.2).abs() < 1e-15);
        let q2 = propagate_marginal(&theta, &q0, 2);
        assert!((q2[0] - 0.68).abs() < 1e-15 && (q2[1] - 0.32).abs() < 1e-15);
    }

    #[test]
    fn union_examples() {
        let q = [0.3, 0.7];
        assert_eq!(combine_union(&[&q], 2), vec![0.3, 0.7]);
        let half = [0.5];
        assert_eq!(combine_union(&[&half, &half], 1), vec![0.75]);
        let r = combine_union(&[&[0.2], &[0.3]], 1);
        assert!((r[0] - 0.44).abs() < 1e-15);
        assert_eq!(combine_union(&[], 3), vec![0.0; 3]);
    }

    #[test]
    fn static_adversaries_keep_risk_constant() {
        let g = crate::graph::generate_random_graph(8, 1.4, 2).unwrap();
        let model = AdversaryModel::new(&g, 1.0, vec![EdgeId(0), EdgeId(3)]).unwrap();
        let f = forecast(&g, &model, 10);
        for t in 0..=10 {
            assert_eq!(f.risk_at(t), f.risk_at(0));
        }
    }

    #[test]
    fn forecast_composes_propagation() {
        let g = path3();
        let model = AdversaryModel::new(&g, 0.8, vec![EdgeId(0)]).unwrap();
        let f = forecast(&g, &model, 3);
        let theta = TransitionMatrix::build(&g, 0.8).unwrap();
        assert_eq!(f.risk_at(1), propagate_marginal(&theta, &[1.0, 0.0], 1).as_slice());
        assert_eq!(f.horizon(), 3);
    }

    #[test]
    fn mass_stays_in_its_component() {
        let g = Graph::new_disconnected(7, &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 6), (6, 3)]);
        let model = AdversaryModel::new(&g, 0.5, vec![EdgeId(1), EdgeId(4)]).unwrap();
        let f = forecast(&g, &model, 12);
        for j in 0..2 {
            let comp = edge_component(&g, model.initial_edges()[j]);
            assert!(comp.len() < g.edge_count());
            for t in 0..=12 {
                let outside: f64 = g.edge_ids().filter(|e| !comp.contains(e)).map(|e| f.marginal(j, t)[e.0]).sum();
                assert_eq!(outside, 0.0);
                let total: f64 = f.marginal(j, t).iter().sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampling_examples() {
        let g = path3();
        let theta = TransitionMatrix::build(&g, 1.0).unwrap();
        let model = AdversaryModel::new(&g, 1.0, vec![EdgeId(1)]).unwrap();
        let traj = sample_trajectories(&model, &theta, 6, 9);
        assert!(traj.edges[0].iter().all(|&e| e == EdgeId(1)));

        let theta = TransitionMatrix::build(&g, 0.8).unwrap();
        let model = AdversaryModel::new(&g, 0.8, vec![EdgeId(0)]).unwrap();
        let a = sample_trajectories(&model, &theta, 6, 42);
        let b = sample_trajectories(&model, &theta, 6, 42);
        assert_eq!(a, b);

        let stays =
            (0..10_000u64).filter(|&i| sample_trajectories(&model, &theta, 1, i).edges[0][1] == EdgeId(0)).count();
        let freq = stays as f64 / 10_000.0;
        assert!((0.79..=0.81).contains(&freq), "stay frequency {freq}");
    }

    #[test]
    fn trajectories_follow_adjacency() {
        let g = crate::graph::generate_random_graph(10, 1.6, 5).unwrap();
        let theta = TransitionMatrix::build(&g, 0.2).unwrap();
        let model = AdversaryModel::new(&g, 0.2, vec![EdgeId(0), EdgeId(5), EdgeId(9)]).unwrap();
        let traj = sample_trajectories(&model, &theta, 30, 1);
        for (j, path) in traj.edges.iter().enumerate() {
            assert_eq!(path[0], model.initial_edges()[j]);
            for w in path.windows(2) {
                assert!(w[0] == w[1] || g.adjacent_edges(w[0]).contains(&w[1]));
            }
        }
    }

    #[test]
    fn brute_force_examples() {
        let g = path3();
        let model = AdversaryModel::new(&g, 0.8, vec![EdgeId(0)]).unwrap();
        assert_eq!(brute_force_marginal(&g, &model, 0).unwrap(), vec![1.0, 0.0]);
        let q = brute_force_marginal(&g, &model, 2).unwrap();
        assert!((q[0] - 0.68).abs() < 1e-15 && (q[1] - 0.32).abs() < 1e-15);

        let g = star3();
        let model = AdversaryModel::new(&g, 0.5, vec![EdgeId(1)]).unwrap();
        let theta = TransitionMatrix::build(&g, 0.5).unwrap();
        let oracle = brute_force_marginal(&g, &model, 3).unwrap();
        let fast = propagate_marginal(&theta, &delta(3, EdgeId(1)), 3);
        for (a, b) in oracle.iter().zip(&fast) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn brute_force_guards_size() {
        let g = crate::graph::generate_random_graph(12, 3.0, 1).unwrap();
        let model = AdversaryModel::new(&g, 0.5, vec![EdgeId(0)]).unwrap();
        assert!(matches!(brute_force_marginal(&g, &model, 12), Err(ForecastError::EnumerationTooLarge(..))));
        let two = AdversaryModel::new(&g, 0.5, vec![EdgeId(0), EdgeId(1)]).unwrap();
        assert_eq!(brute_force_marginal(&g, &two, 1), Err(ForecastError::NotSingleAdversary(2)));
    }
}
