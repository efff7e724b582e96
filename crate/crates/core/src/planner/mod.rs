//! Joint multi-robot planning on the time-expanded graph.
//!
//! All robots advance one synchronized step per transition. A robot waits,
//! moves to a neighbor, or supports an edge it was allocated to in Γ; a
//! support is only legal while some other robot crosses that edge in the
//! same step, and it cancels the risk penalty on that crossing. Robots stay
//! at their goal once they reach it: they emit `Done` at no cost or, when
//! `goal_support` is set, support an allocated edge from the goal at the
//! usual support cost. They never move or wait again.
//!
//! Move costs use the forecast surrogate `r_a + r_p·ρ[t][e]·(1 − supported)`.

mod astar;
mod document;
mod exhaustive;
mod validate;

use std::collections::BTreeSet;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::RiskForecast;
use crate::graph::{DistanceTable, EdgeId, Graph, NodeId};
use crate::support::SupportMap;

pub use astar::{plan_lazy_astar, SearchStats};
pub use document::{ActionDocument, PlanDocument, RobotDocument, SupportDocument};
pub use exhaustive::{exhaustive_plan, ExhaustiveSolution, EXHAUSTIVE_STATE_LIMIT};
pub use validate::{expected_plan_cost, validate_plan, PlanViolation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Task {
    pub start: NodeId,
    pub goal: NodeId,
}

/// Omitted fields take their defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    pub r_a: f64,
    pub r_p: f64,
    pub w: f64,
    pub s_cost: f64,
    /// Whether a robot that has reached its goal may still take support
    /// actions from there.
    pub goal_support: bool,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams { r_a: 1.0, r_p: 10.0, w: 0.1, s_cost: 0.1, goal_support: true }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<(), PlanError> {
        for (name, v) in [("r_a", self.r_a), ("r_p", self.r_p), ("w", self.w), ("s_cost", self.s_cost)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(PlanError::InvalidParams(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("invalid cost parameters: {0}")]
    InvalidParams(String),
    #[error("task {0} references a node outside the graph")]
    UnknownNode(usize),
    #[error("forecast covers t = 0..={forecast} but the planning horizon is {horizon}")]
    ForecastTooShort { forecast: usize, horizon: usize },
    #[error("forecast has {forecast} edges, graph has {graph}")]
    ForecastMismatch { forecast: usize, graph: usize },
    #[error("instance too large for the planner: {0}")]
    TooLarge(String),
}

/// Per-robot action. The derived order (`Wait < Move < Support < Done`, then
/// by payload) is the lexicographic order used for tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RobotAction {
    Wait,
    Move(NodeId),
    Support(EdgeId),
    Done,
}

impl fmt::Display for RobotAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RobotAction::Wait => write!(f, "wait"),
            RobotAction::Move(n) => write!(f, "move {n}"),
            RobotAction::Support(e) => write!(f, "support {e}"),
            RobotAction::Done => write!(f, "done"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JointState {
    pub t: usize,
    pub positions: Vec<NodeId>,
    pub done: Vec<bool>,
}

impl JointState {
    pub fn all_done(&self) -> bool {
        self.done.iter().all(|&d| d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    /// `actions[i][t]`, every row `makespan` long.
    pub actions: Vec<Vec<RobotAction>>,
    pub makespan: usize,
    pub j_exp: f64,
    pub per_step_costs: Vec<f64>,
    pub support_activations: BTreeSet<(EdgeId, usize)>,
}

impl Plan {
    pub fn empty(robots: usize) -> Self {
        Plan {
            actions: vec![Vec::new(); robots],
            makespan: 0,
            j_exp: 0.0,
            per_step_costs: Vec::new(),
            support_activations: BTreeSet::new(),
        }
    }

    pub fn count_actions(&self, pred: impl Fn(&RobotAction) -> bool) -> usize {
        self.actions.iter().flatten().filter(|a| pred(a)).count()
    }

    fn from_steps(robots: usize, steps: Vec<(Vec<RobotAction>, f64)>) -> Self {
        let mut plan = Plan::empty(robots);
        for (t, (joint, cost)) in steps.into_iter().enumerate() {
            for (i, a) in joint.into_iter().enumerate() {
                if let RobotAction::Support(e) = a {
                    plan.support_activations.insert((e, t));
                }
                plan.actions[i].push(a);
            }
            plan.per_step_costs.push(cost);
        }
        plan.makespan = plan.per_step_costs.len();
        plan.j_exp = plan.per_step_costs.iter().sum();
        plan
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanOutcome {
    Solved(Plan),
    Infeasible,
    Timeout(Duration),
}

impl PlanOutcome {
    pub fn plan(&self) -> Option<&Plan> {
        match self {
            PlanOutcome::Solved(p) => Some(p),
            _ => None,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            PlanOutcome::Solved(_) => "solved",
            PlanOutcome::Infeasible => "infeasible",
            PlanOutcome::Timeout(_) => "timeout",
        }
    }
}

/// `r_a + r_p·ρ·(1 − supported)`
pub fn expected_move_cost(
    forecast: &RiskForecast,
    edge: EdgeId,
    t: usize,
    supported: bool,
    params: &CostParams,
) -> f64 {
    move_cost(params, forecast.risk(t, edge), supported)
}

fn move_cost(params: &CostParams, risk: f64, supported: bool) -> f64 {
    if supported {
        params.r_a
    } else {
        params.r_a + params.r_p * risk
    }
}

/// Source of per-edge move costs during successor generation.
pub(crate) trait MoveCosts {
    fn cost(&self, t: usize, edge: EdgeId, supported: bool) -> f64;
}

/// Looks risk up in the forecast only when an edge is generated.
struct LazyRisk<'a> {
    forecast: &'a RiskForecast,
    params: CostParams,
}

impl MoveCosts for LazyRisk<'_> {
    fn cost(&self, t: usize, edge: EdgeId, supported: bool) -> f64 {
        move_cost(&self.params, self.forecast.risk(t, edge), supported)
    }
}

const DONE_CODE: u8 = u8::MAX;
const MAX_ROBOTS: usize = 14;

/// Packs `(t, per-robot position or done)` into a single key.
type StateKey = u128;

fn pack_state(s: &JointState) -> StateKey {
    let mut key = s.t as u128;
    for (i, (&p, &d)) in s.positions.iter().zip(&s.done).enumerate() {
        let code = if d { DONE_CODE } else { p.0 as u8 };
        key |= (code as u128) << (16 + 8 * i);
    }
    key
}

/// A planning instance: graph, forecast, Γ, tasks, costs and horizon.
pub struct Problem<'a> {
    pub graph: &'a Graph,
    pub forecast: &'a RiskForecast,
    pub support: &'a SupportMap,
    pub tasks: &'a [Task],
    pub params: CostParams,
    pub horizon: usize,
    dist: DistanceTable,
}

/// One joint transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Successor {
    pub actions: Vec<RobotAction>,
    pub next: JointState,
    pub cost: f64,
}

#[derive(Clone, Copy)]
struct Choice {
    action: RobotAction,
    /// Edge crossed by a move, or the edge covered by a support.
    edge: Option<EdgeId>,
}

impl<'a> Problem<'a> {
    pub fn new(
        graph: &'a Graph,
        forecast: &'a RiskForecast,
        support: &'a SupportMap,
        tasks: &'a [Task],
        params: CostParams,
        horizon: usize,
    ) -> Result<Self, PlanError> {
        params.validate()?;
        for t in tasks {
            for n in [t.start, t.goal] {
                if !graph.contains_node(n) {
                    return Err(PlanError::UnknownNode(n.0));
                }
            }
        }
        if forecast.edge_count() != graph.edge_count() {
            return Err(PlanError::ForecastMismatch { forecast: forecast.edge_count(), graph: graph.edge_count() });
        }
        if forecast.horizon() < horizon {
            return Err(PlanError::ForecastTooShort { forecast: forecast.horizon(), horizon });
        }
        if tasks.len() > MAX_ROBOTS {
            return Err(PlanError::TooLarge(format!("{} robots, at most {MAX_ROBOTS} supported", tasks.len())));
        }
        if graph.node_count() >= DONE_CODE as usize {
            return Err(PlanError::TooLarge(format!("{} nodes, at most {} supported", graph.node_count(), DONE_CODE)));
        }
        if horizon > u16::MAX as usize {
            return Err(PlanError::TooLarge(format!("horizon {horizon}")));
        }
        Ok(Problem { graph, forecast, support, tasks, params, horizon, dist: graph.distance_table() })
    }

    pub fn robots(&self) -> usize {
        self.tasks.len()
    }

    pub fn initial_state(&self) -> JointState {
        JointState {
            t: 0,
            positions: self.tasks.iter().map(|t| t.start).collect(),
            done: self.tasks.iter().map(|t| t.start == t.goal).collect(),
        }
    }

    fn pack(&self, s: &JointState) -> StateKey {
        pack_state(s)
    }

    fn unpack(&self, key: StateKey) -> JointState {
        let t = (key & 0xFFFF) as usize;
        let mut positions = Vec::with_capacity(self.robots());
        let mut done = Vec::with_capacity(self.robots());
        for (i, task) in self.tasks.iter().enumerate() {
            let code = ((key >> (16 + 8 * i)) & 0xFF) as u8;
            if code == DONE_CODE {
                positions.push(task.goal);
                done.push(true);
            } else {
                positions.push(NodeId(code as usize));
                done.push(false);
            }
        }
        JointState { t, positions, done }
    }

    /// Risk-blind lower bound: remaining hops times `r_a`.
    pub fn heuristic(&self, s: &JointState) -> f64 {
        let hops: usize = s
            .positions
            .iter()
            .zip(&s.done)
            .zip(self.tasks)
            .filter(|((_, &d), _)| !d)
            .map(|((&p, _), task)| self.dist.get(p, task.goal))
            .sum();
        hops as f64 * self.params.r_a
    }

    /// Whether every robot can still reach its goal by the horizon.
    fn can_finish(&self, s: &JointState) -> bool {
        s.positions
            .iter()
            .zip(&s.done)
            .zip(self.tasks)
            .all(|((&p, &d), task)| d || s.t + self.dist.get(p, task.goal) <= self.horizon)
    }

    fn options_for(&self, s: &JointState, i: usize) -> Vec<Choice> {
        let x = s.positions[i];
        let mut opts = Vec::new();
        if s.done[i] {
            opts.push(Choice { action: RobotAction::Done, edge: None });
            if !self.params.goal_support {
                return opts;
            }
        } else {
            opts.push(Choice { action: RobotAction::Wait, edge: None });
            opts.extend(
                self.graph.neighbors(x).iter().map(|&(n, e)| Choice { action: RobotAction::Move(n), edge: Some(e) }),
            );
        }
        opts.extend(
            self.support
                .edges_supported_from(x)
                .iter()
                .filter(|&&e| self.support.covers(x, e))
                .map(|&e| Choice { action: RobotAction::Support(e), edge: Some(e) }),
        );
        opts
    }

    /// Enumerates joint transitions out of `s` in lexicographic joint-action
    /// order, calling `visit(actions, next, cost)` for each.
    pub(crate) fn for_each_successor(
        &self,
        s: &JointState,
        costs: &impl MoveCosts,
        mut visit: impl FnMut(&[RobotAction], &JointState, f64),
    ) {
        if s.t >= self.horizon || s.all_done() {
            return;
        }
        let n = self.robots();
        let options: Vec<Vec<Choice>> = (0..n).map(|i| self.options_for(s, i)).collect();
        let mut idx = vec![0usize; n];
        let mut actions = vec![RobotAction::Wait; n];
        let mut crossing: Vec<Option<EdgeId>> = vec![None; n];
        let mut next = JointState { t: s.t + 1, positions: s.positions.clone(), done: s.done.clone() };

        loop {
            for i in 0..n {
                let o = options[i][idx[i]];
                actions[i] = o.action;
                crossing[i] = match o.action {
                    RobotAction::Move(_) => o.edge,
                    _ => None,
                };
            }
            // Supports need a teammate crossing the covered edge this step.
            let valid = actions.iter().enumerate().all(|(i, a)| match a {
                RobotAction::Support(e) => crossing.iter().enumerate().any(|(j, c)| j != i && *c == Some(*e)),
                _ => true,
            });
            if valid {
                let mut cost = 0.0;
                for i in 0..n {
                    match actions[i] {
                        RobotAction::Wait => cost += self.params.w,
                        RobotAction::Support(_) => cost += self.params.s_cost,
                        RobotAction::Done => {}
                        RobotAction::Move(to) => {
                            let e = crossing[i].expect("moves cross an edge");
                            let supported = actions.contains(&RobotAction::Support(e));
                            cost += costs.cost(s.t, e, supported);
                            next.positions[i] = to;
                            next.done[i] = to == self.tasks[i].goal;
                        }
                    }
                }
                visit(&actions, &next, cost);
                for i in 0..n {
                    next.positions[i] = s.positions[i];
                    next.done[i] = s.done[i];
                }
            }

            // Odometer, last robot fastest so output is lexicographic.
            let mut i = n;
            loop {
                if i == 0 {
                    return;
                }
                i -= 1;
                idx[i] += 1;
                if idx[i] < options[i].len() {
                    break;
                }
                idx[i] = 0;
            }
        }
    }

    /// All joint transitions out of `s` under the forecast surrogate costs.
    pub fn joint_successors(&self, s: &JointState) -> Vec<Successor> {
        let costs = LazyRisk { forecast: self.forecast, params: self.params };
        let mut out = Vec::new();
        self.for_each_successor(s, &costs, |actions, next, cost| {
            out.push(Successor { actions: actions.to_vec(), next: next.clone(), cost });
        });
        out
    }
}

#[cfg(test)]
mod tests;
