use serde::{Deserialize, Serialize};

use super::{Plan, PlanOutcome, RobotAction};
use crate::graph::{Graph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ActionDocument {
    Wait,
    Move { to: usize },
    Support { edge: [usize; 2] },
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotDocument {
    pub actions: Vec<ActionDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportDocument {
    pub edge: [usize; 2],
    pub t: usize,
}

/// On-disk plan. `j_exp` and `makespan` are null unless the status is solved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDocument {
    pub status: String,
    pub j_exp: Option<f64>,
    pub makespan: Option<usize>,
    pub robots: Vec<RobotDocument>,
    pub supports: Vec<SupportDocument>,
}

impl PlanDocument {
    pub fn from_outcome(outcome: &PlanOutcome, g: &Graph) -> Self {
        let pair = |e| {
            let (u, v): (NodeId, NodeId) = g.endpoints(e);
            [u.0, v.0]
        };
        match outcome.plan() {
            None => PlanDocument {
                status: outcome.status().to_string(),
                j_exp: None,
                makespan: None,
                robots: Vec::new(),
                supports: Vec::new(),
            },
            Some(plan) => PlanDocument {
                status: outcome.status().to_string(),
                j_exp: Some(plan.j_exp),
                makespan: Some(plan.makespan),
                robots: plan
                    .actions
                    .iter()
                    .map(|row| RobotDocument {
                        actions: row
                            .iter()
                            .map(|a| match *a {
                                RobotAction::Wait => ActionDocument::Wait,
                                RobotAction::Move(n) => ActionDocument::Move { to: n.0 },
                                RobotAction::Support(e) => ActionDocument::Support { edge: pair(e) },
                                RobotAction::Done => ActionDocument::Done,
                            })
                            .collect(),
                    })
                    .collect(),
                supports: plan.support_activations.iter().map(|&(e, t)| SupportDocument { edge: pair(e), t }).collect(),
            },
        }
    }

    /// Rebuilds the plan of a solved document. Per-step costs are not stored
    /// and come back empty; recompute them with `expected_plan_cost`.
    pub fn to_plan(&self, g: &Graph) -> Result<Option<Plan>, String> {
        if self.status != "solved" {
            return Ok(None);
        }
        let edge = |[u, v]: [usize; 2]| {
            (u < g.node_count() && v < g.node_count())
                .then(|| g.edge_between(NodeId(u), NodeId(v)))
                .flatten()
                .ok_or_else(|| format!("[{u}, {v}] is not an edge"))
        };
        let mut plan = Plan::empty(self.robots.len());
        plan.makespan = self.makespan.ok_or("solved plan without makespan")?;
        plan.j_exp = self.j_exp.ok_or("solved plan without j_exp")?;
        for (i, r) in self.robots.iter().enumerate() {
            for a in &r.actions {
                plan.actions[i].push(match *a {
                    ActionDocument::Wait => RobotAction::Wait,
                    ActionDocument::Done => RobotAction::Done,
                    ActionDocument::Move { to } => RobotAction::Move(NodeId(to)),
                    ActionDocument::Support { edge: pair } => RobotAction::Support(edge(pair)?),
                });
            }
        }
        for s in &self.supports {
            plan.support_activations.insert((edge(s.edge)?, s.t));
        }
        Ok(Some(plan))
    }
}
