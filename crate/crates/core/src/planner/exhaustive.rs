//! Optimality oracle: backward induction over the fully expanded joint
//! time-expanded graph. Move costs are tabulated for every `(t, e)` up front;
//! there is no heuristic and no pruning of dead-end states.

use std::collections::{HashMap, HashSet};

use super::{pack_state, JointState, MoveCosts, Plan, PlanError, PlanOutcome, Problem, RobotAction, StateKey};
use crate::graph::EdgeId;

/// Upper bound on `(|V| + 1)^N · (T + 1)` accepted by [`exhaustive_plan`].
pub const EXHAUSTIVE_STATE_LIMIT: u128 = 10_000_000;

struct CostTable {
    edges: usize,
    /// `[unsupported, supported]` per `(t, e)`.
    table: Vec<[f64; 2]>,
}

impl MoveCosts for CostTable {
    fn cost(&self, t: usize, edge: EdgeId, supported: bool) -> f64 {
        self.table[t * self.edges + edge.0][supported as usize]
    }
}

pub struct ExhaustiveSolution {
    pub outcome: PlanOutcome,
    /// Optimal cost-to-go per reachable state; infinite where no completion exists.
    values: HashMap<StateKey, f64>,
}

impl ExhaustiveSolution {
    /// Optimal remaining cost from `state`, or `None` if the state is not
    /// reachable from the start.
    pub fn cost_to_go(&self, state: &JointState) -> Option<f64> {
        self.values.get(&pack_state(state)).copied()
    }

    pub fn reachable_states(&self) -> usize {
        self.values.len()
    }
}

pub fn exhaustive_plan(problem: &Problem) -> Result<ExhaustiveSolution, PlanError> {
    let robots = problem.robots();
    let bound = (problem.graph.node_count() as u128 + 1)
        .checked_pow(robots as u32)
        .and_then(|b| b.checked_mul(problem.horizon as u128 + 1))
        .unwrap_or(u128::MAX);
    if bound > EXHAUSTIVE_STATE_LIMIT {
        return Err(PlanError::TooLarge(format!("exhaustive search bound {bound} exceeds {EXHAUSTIVE_STATE_LIMIT}")));
    }

    let edges = problem.graph.edge_count();
    let mut table = Vec::with_capacity(problem.horizon * edges);
    for t in 0..problem.horizon {
        for e in problem.graph.edge_ids() {
            let rho = problem.forecast.risk(t, e);
            table.push([problem.params.r_a + problem.params.r_p * rho, problem.params.r_a]);
        }
    }
    let costs = CostTable { edges, table };

    // Forward pass: every state reachable at each time step.
    let start = problem.initial_state();
    let mut layers: Vec<Vec<StateKey>> = vec![vec![problem.pack(&start)]];
    for t in 0..problem.horizon {
        let mut seen: HashSet<StateKey> = HashSet::new();
        let mut next_layer = Vec::new();
        for &key in &layers[t] {
            let s = problem.unpack(key);
            problem.for_each_successor(&s, &costs, |_, next, _| {
                let k = problem.pack(next);
                if seen.insert(k) {
                    next_layer.push(k);
                }
            });
        }
        layers.push(next_layer);
    }

    // Backward pass.
    let mut values: HashMap<StateKey, f64> = HashMap::new();
    let mut policy: HashMap<StateKey, (Vec<RobotAction>, f64, StateKey)> = HashMap::new();
    for t in (0..=problem.horizon).rev() {
        for &key in &layers[t] {
            let s = problem.unpack(key);
            if s.all_done() {
                values.insert(key, 0.0);
                continue;
            }
            let mut best = f64::INFINITY;
            let mut choice = None;
            problem.for_each_successor(&s, &costs, |actions, next, step| {
                let k = problem.pack(next);
                let total = step + values[&k];
                if total < best {
                    best = total;
                    choice = Some((actions.to_vec(), step, k));
                }
            });
            values.insert(key, best);
            if let Some(c) = choice {
                policy.insert(key, c);
            }
        }
    }

    let start_key = problem.pack(&start);
    let outcome = if values[&start_key].is_finite() {
        let mut steps = Vec::new();
        let mut key = start_key;
        while let Some((actions, step, next)) = policy.get(&key) {
            steps.push((actions.clone(), *step));
            key = *next;
        }
        PlanOutcome::Solved(Plan::from_steps(robots, steps))
    } else {
        PlanOutcome::Infeasible
    };

    Ok(ExhaustiveSolution { outcome, values })
}
