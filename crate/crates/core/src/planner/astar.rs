use std::cmp::Ordering;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::time::{Duration, Instant};

use super::{JointState, LazyRisk, Plan, PlanOutcome, Problem, RobotAction, StateKey};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchStats {
    pub expanded: usize,
    pub generated: usize,
    pub elapsed: Duration,
    /// Populated only when recording is requested.
    pub expanded_states: Vec<JointState>,
}

struct Node {
    key: StateKey,
    parent: u32,
    g: f64,
    step_cost: f64,
    /// Offset into the action arena; `robots` entries.
    actions: u32,
}

struct Open {
    f: f64,
    g: f64,
    rank: u128,
    seq: u64,
    node: u32,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Open {}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Open {
    // BinaryHeap pops the greatest: lower f, then higher g, then the
    // lexicographically smaller joint action, then earlier insertion.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(self.g.total_cmp(&other.g))
            .then(other.rank.cmp(&self.rank))
            .then(other.seq.cmp(&self.seq))
    }
}

fn action_code(a: &RobotAction) -> u16 {
    match *a {
        RobotAction::Wait => 0,
        RobotAction::Move(n) => 1 + n.0 as u16,
        RobotAction::Support(e) => 0x100 + e.0.min(0xFEFE) as u16,
        RobotAction::Done => u16::MAX,
    }
}

/// Order-preserving key over the first eight robots' actions.
fn joint_rank(actions: &[RobotAction]) -> u128 {
    actions.iter().take(8).enumerate().fold(0u128, |acc, (i, a)| acc | (action_code(a) as u128) << (112 - 16 * i))
}

/// A* over the joint time-expanded graph with the risk-blind heuristic.
/// Risk is read from the forecast only when a transition is generated.
/// With `timeout = None` the search runs to completion.
pub fn plan_lazy_astar(
    problem: &Problem,
    timeout: Option<Duration>,
    record_expanded: bool,
) -> (PlanOutcome, SearchStats) {
    let started = Instant::now();
    let mut stats = SearchStats::default();
    let robots = problem.robots();
    let costs = LazyRisk { forecast: problem.forecast, params: problem.params };

    let start = problem.initial_state();
    if !problem.can_finish(&start) {
        stats.elapsed = started.elapsed();
        return (PlanOutcome::Infeasible, stats);
    }

    let mut nodes: Vec<Node> = Vec::new();
    let mut arena: Vec<RobotAction> = Vec::new();
    let mut best_g: HashMap<StateKey, f64> = HashMap::new();
    let mut closed: HashSet<StateKey> = HashSet::new();
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;

    let start_key = problem.pack(&start);
    nodes.push(Node { key: start_key, parent: u32::MAX, g: 0.0, step_cost: 0.0, actions: 0 });
    best_g.insert(start_key, 0.0);
    open.push(Open { f: problem.heuristic(&start), g: 0.0, rank: 0, seq, node: 0 });

    while let Some(entry) = open.pop() {
        if let Some(budget) = timeout {
            let elapsed = started.elapsed();
            if elapsed > budget {
                stats.elapsed = elapsed;
                return (PlanOutcome::Timeout(elapsed), stats);
            }
        }
        let node_idx = entry.node as usize;
        let (key, g) = (nodes[node_idx].key, nodes[node_idx].g);
        if g > best_g[&key] || !closed.insert(key) {
            continue;
        }
        let state = problem.unpack(key);
        stats.expanded += 1;
        if record_expanded {
            stats.expanded_states.push(state.clone());
        }

        if state.all_done() {
            let plan = reconstruct(&nodes, &arena, robots, node_idx);
            stats.elapsed = started.elapsed();
            return (PlanOutcome::Solved(plan), stats);
        }

        problem.for_each_successor(&state, &costs, |actions, next, step| {
            stats.generated += 1;
            if !problem.can_finish(next) {
                return;
            }
            let next_key = problem.pack(next);
            if closed.contains(&next_key) {
                return;
            }
            let next_g = g + step;
            match best_g.entry(next_key) {
                Entry::Occupied(mut o) => {
                    if *o.get() <= next_g {
                        return;
                    }
                    o.insert(next_g);
                }
                Entry::Vacant(v) => {
                    v.insert(next_g);
                }
            }
            let offset = arena.len() as u32;
            arena.extend_from_slice(actions);
            nodes.push(Node { key: next_key, parent: node_idx as u32, g: next_g, step_cost: step, actions: offset });
            seq += 1;
            open.push(Open {
                f: next_g + problem.heuristic(next),
                g: next_g,
                rank: joint_rank(actions),
                seq,
                node: (nodes.len() - 1) as u32,
            });
        });
    }

    stats.elapsed = started.elapsed();
    (PlanOutcome::Infeasible, stats)
}

fn reconstruct(nodes: &[Node], arena: &[RobotAction], robots: usize, mut idx: usize) -> Plan {
    let mut steps = Vec::new();
    while nodes[idx].parent != u32::MAX {
        let n = &nodes[idx];
        let a = n.actions as usize;
        steps.push((arena[a..a + robots].to_vec(), n.step_cost));
        idx = n.parent as usize;
    }
    steps.reverse();
    Plan::from_steps(robots, steps)
}
