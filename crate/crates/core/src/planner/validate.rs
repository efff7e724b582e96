use std::collections::BTreeSet;

use thiserror::Error;

use super::{CostParams, Plan, RobotAction, Task};
use crate::forecast::RiskForecast;
use crate::graph::{EdgeId, Graph, NodeId};
use crate::support::SupportMap;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanViolation {
    #[error("plan lists {plan} robots but there are {tasks} tasks")]
    RobotCount { plan: usize, tasks: usize },
    #[error("robot {robot} has {len} actions, makespan is {makespan}")]
    RaggedActions { robot: usize, len: usize, makespan: usize },
    #[error("makespan {makespan} exceeds horizon {horizon}")]
    MakespanExceedsHorizon { makespan: usize, horizon: usize },
    #[error("robot {robot} at t={t} moves {from} -> {to}, which are not adjacent")]
    NotAdjacent { robot: usize, t: usize, from: NodeId, to: NodeId },
    #[error("robot {robot} at t={t} supports {edge} from node {node}, which is not allocated to it")]
    SupportNotAllocated { robot: usize, t: usize, node: NodeId, edge: EdgeId },
    #[error("robot {robot} at t={t} supports {edge} from node {node}, outside its coverage")]
    SupportOutsideCoverage { robot: usize, t: usize, node: NodeId, edge: EdgeId },
    #[error("robot {robot} at t={t} supports {edge} but no teammate crosses it")]
    SupportWithoutTraversal { robot: usize, t: usize, edge: EdgeId },
    #[error("robot {robot} moves or waits at t={t} after reaching its goal")]
    ActsAfterGoal { robot: usize, t: usize },
    #[error("robot {robot} declares done at t={t} away from its goal")]
    DoneBeforeGoal { robot: usize, t: usize },
    #[error("robot {robot} ends at {at}, goal is {goal}")]
    GoalNotReached { robot: usize, at: NodeId, goal: NodeId },
    #[error("recorded support activations do not match the support actions")]
    ActivationMismatch,
}

/// Replays `plan` from the task starts and reports the first violated
/// feasibility constraint. `goal_support` permits supports from a reached goal.
pub fn validate_plan(
    plan: &Plan,
    g: &Graph,
    support: &SupportMap,
    tasks: &[Task],
    horizon: usize,
    goal_support: bool,
) -> Result<(), PlanViolation> {
    if plan.actions.len() != tasks.len() {
        return Err(PlanViolation::RobotCount { plan: plan.actions.len(), tasks: tasks.len() });
    }
    for (robot, row) in plan.actions.iter().enumerate() {
        if row.len() != plan.makespan {
            return Err(PlanViolation::RaggedActions { robot, len: row.len(), makespan: plan.makespan });
        }
    }
    if plan.makespan > horizon {
        return Err(PlanViolation::MakespanExceedsHorizon { makespan: plan.makespan, horizon });
    }

    let mut pos: Vec<NodeId> = tasks.iter().map(|t| t.start).collect();
    let mut done: Vec<bool> = tasks.iter().map(|t| t.start == t.goal).collect();
    let mut activations = BTreeSet::new();

    for t in 0..plan.makespan {
        let crossing: Vec<Option<EdgeId>> = (0..tasks.len())
            .map(|i| match plan.actions[i][t] {
                RobotAction::Move(to) if !done[i] => g.edge_between(pos[i], to),
                _ => None,
            })
            .collect();

        for (i, action) in plan.actions.iter().map(|row| row[t]).enumerate() {
            if done[i] {
                match action {
                    RobotAction::Done => continue,
                    RobotAction::Support(_) if goal_support => {}
                    _ => return Err(PlanViolation::ActsAfterGoal { robot: i, t }),
                }
            }
            match action {
                RobotAction::Wait => {}
                RobotAction::Done => return Err(PlanViolation::DoneBeforeGoal { robot: i, t }),
                RobotAction::Move(to) => {
                    if crossing[i].is_none() {
                        return Err(PlanViolation::NotAdjacent { robot: i, t, from: pos[i], to });
                    }
                }
                RobotAction::Support(edge) => {
                    let node = pos[i];
                    if !support.nodes_for(edge).contains(&node) {
                        return Err(PlanViolation::SupportNotAllocated { robot: i, t, node, edge });
                    }
                    if !support.covers(node, edge) {
                        return Err(PlanViolation::SupportOutsideCoverage { robot: i, t, node, edge });
                    }
                    let teammate_crosses = crossing.iter().enumerate().any(|(j, c)| j != i && *c == Some(edge));
                    if !teammate_crosses {
                        return Err(PlanViolation::SupportWithoutTraversal { robot: i, t, edge });
                    }
                    activations.insert((edge, t));
                }
            }
        }

        for i in 0..tasks.len() {
            if let RobotAction::Move(to) = plan.actions[i][t] {
                pos[i] = to;
            }
            if pos[i] == tasks[i].goal {
                done[i] = true;
            }
        }
    }

    for (robot, task) in tasks.iter().enumerate() {
        if pos[robot] != task.goal {
            return Err(PlanViolation::GoalNotReached { robot, at: pos[robot], goal: task.goal });
        }
    }
    if activations != plan.support_activations {
        return Err(PlanViolation::ActivationMismatch);
    }
    Ok(())
}

/// Recomputes `Σ_t Σ_i c̄` for a plan directly from its action rows.
pub fn expected_plan_cost(plan: &Plan, g: &Graph, tasks: &[Task], forecast: &RiskForecast, params: &CostParams) -> f64 {
    let mut pos: Vec<NodeId> = tasks.iter().map(|t| t.start).collect();
    let mut total = 0.0;
    for t in 0..plan.makespan {
        let supported: BTreeSet<EdgeId> = plan
            .actions
            .iter()
            .filter_map(|row| match row[t] {
                RobotAction::Support(e) => Some(e),
                _ => None,
            })
            .collect();
        for (i, row) in plan.actions.iter().enumerate() {
            total += match row[t] {
                RobotAction::Wait => params.w,
                RobotAction::Support(_) => params.s_cost,
                RobotAction::Done => 0.0,
                RobotAction::Move(to) => {
                    let e = g.edge_between(pos[i], to).expect("validated plan");
                    pos[i] = to;
                    let gamma_s = if supported.contains(&e) { 1.0 } else { 0.0 };
                    params.r_a + params.r_p * forecast.risk(t, e) * (1.0 - gamma_s)
                }
            };
        }
    }
    total
}
