use std::collections::BTreeMap;
use std::time::Duration;

use super::*;
use crate::forecast::{forecast, AdversaryModel};
use crate::graph::generate_random_graph;

fn path(n: usize) -> Graph {
    let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    Graph::new(n, &edges).unwrap()
}

fn task(s: usize, g: usize) -> Task {
    Task { start: NodeId(s), goal: NodeId(g) }
}

fn solved(outcome: &PlanOutcome) -> &Plan {
    outcome.plan().expect("expected a solved plan")
}

#[test]
fn move_cost_examples() {
    let p = CostParams::default();
    let f = RiskForecast::from_risk_table(vec![vec![0.0, 1.0, 0.5]]);
    assert_eq!(expected_move_cost(&f, EdgeId(0), 0, false, &p), 1.0);
    assert_eq!(expected_move_cost(&f, EdgeId(1), 0, false, &p), 11.0);
    assert_eq!(expected_move_cost(&f, EdgeId(2), 0, true, &p), 1.0);
}

#[test]
fn params_must_be_positive() {
    assert!(CostParams::default().validate().is_ok());
    assert!(CostParams { w: 0.0, ..Default::default() }.validate().is_err());
    assert!(CostParams { r_p: f64::NAN, ..Default::default() }.validate().is_err());
}

#[test]
fn terminal_state_has_no_successors() {
    let g = path(3);
    let f = RiskForecast::zero(&g, 4);
    let gamma = SupportMap::empty(&g, 2);
    let tasks = [task(0, 0), task(2, 2)];
    let p = Problem::new(&g, &f, &gamma, &tasks, CostParams::default(), 4).unwrap();
    let s = p.initial_state();
    assert!(s.all_done());
    assert!(p.joint_successors(&s).is_empty());
}

#[test]
fn single_robot_branching() {
    let g = path(3);
    let f = RiskForecast::zero(&g, 4);
    let gamma = SupportMap::empty(&g, 2);
    let tasks = [task(1, 0)];
    let p = Problem::new(&g, &f, &gamma, &tasks, CostParams::default(), 4).unwrap();
    let succ = p.joint_successors(&p.initial_state());
    assert_eq!(succ.len(), 3);
    assert_eq!(succ[0].actions, vec![RobotAction::Wait]);
    assert_eq!(succ[1].actions, vec![RobotAction::Move(NodeId(0))]);
    assert!(succ[1].next.done[0]);
    assert_eq!(succ[2].actions, vec![RobotAction::Move(NodeId(2))]);
}

#[test]
fn support_branch_costs() {
    // Robot 0 sits at node 0, allocated to support e1 = (1,2); robot 1 crosses e1.
    let g = path(3);
    let rho = 0.5;
    let f = RiskForecast::from_risk_table(vec![vec![0.0, rho]; 4]);
    let gamma = SupportMap::from_assignments(&g, 2, BTreeMap::from([(EdgeId(1), vec![NodeId(0)])])).unwrap();
    let tasks = [task(0, 1), task(1, 2)];
    let params = CostParams::default();
    let p = Problem::new(&g, &f, &gamma, &tasks, params, 3).unwrap();
    let succ = p.joint_successors(&p.initial_state());

    let find = |a: RobotAction, b: RobotAction| succ.iter().find(|s| s.actions == vec![a, b]).unwrap().cost;
    let supported = find(RobotAction::Support(EdgeId(1)), RobotAction::Move(NodeId(2)));
    let waiting = find(RobotAction::Wait, RobotAction::Move(NodeId(2)));
    assert!((supported - (params.s_cost + params.r_a)).abs() < 1e-12);
    assert!((waiting - (params.w + params.r_a + params.r_p * rho)).abs() < 1e-12);
    assert!(supported < waiting);

    // Support is offered only alongside a teammate crossing the edge.
    for s in &succ {
        if s.actions[0] == RobotAction::Support(EdgeId(1)) {
            assert_eq!(s.actions[1], RobotAction::Move(NodeId(2)));
        }
    }
}

#[test]
fn heuristic_examples() {
    let g = path(5);
    let f = RiskForecast::zero(&g, 8);
    let gamma = SupportMap::empty(&g, 2);
    let tasks = [task(0, 3)];
    let p = Problem::new(&g, &f, &gamma, &tasks, CostParams::default(), 8).unwrap();
    assert_eq!(p.heuristic(&p.initial_state()), 3.0);
    let done = JointState { t: 2, positions: vec![NodeId(3)], done: vec![true] };
    assert_eq!(p.heuristic(&done), 0.0);
}

#[test]
fn lazy_astar_on_risk_free_path() {
    let g = path(3);
    let f = RiskForecast::zero(&g, 5);
    let gamma = SupportMap::empty(&g, 2);
    let tasks = [task(0, 2)];
    let p = Problem::new(&g, &f, &gamma, &tasks, CostParams::default(), 5).unwrap();
    let (outcome, stats) = plan_lazy_astar(&p, None, false);
    let plan = solved(&outcome);
    assert_eq!(plan.j_exp, 2.0);
    assert_eq!(plan.actions[0], vec![RobotAction::Move(NodeId(1)), RobotAction::Move(NodeId(2))]);
    assert_eq!(plan.makespan, 2);
    assert!(stats.expanded >= 3);
}

/// Every single-robot action sequence of length `horizon`, truncated when
/// the robot first reaches its goal.
fn enumerate_single_robot(g: &Graph, f: &RiskForecast, params: &CostParams, t: Task, horizon: usize) -> f64 {
    fn go(g: &Graph, f: &RiskForecast, p: &CostParams, at: NodeId, goal: NodeId, step: usize, horizon: usize) -> f64 {
        if at == goal {
            return 0.0;
        }
        if step == horizon {
            return f64::INFINITY;
        }
        let mut best = p.w + go(g, f, p, at, goal, step + 1, horizon);
        for &(n, e) in g.neighbors(at) {
            let c = p.r_a + p.r_p * f.risk(step, e) + go(g, f, p, n, goal, step + 1, horizon);
            best = best.min(c);
        }
        best
    }
    go(g, f, params, t.start, t.goal, 0, horizon)
}

#[test]
fn static_adversary_forces_one_penalty() {
    let g = path(3);
    let model = AdversaryModel::new(&g, 1.0, vec![EdgeId(1)]).unwrap();
    let f = forecast(&g, &model, 6);
    let gamma = SupportMap::empty(&g, 2);
    let tasks = [task(0, 2)];
    let params = CostParams::default();
    let p = Problem::new(&g, &f, &gamma, &tasks, params, 6).unwrap();
    let oracle = enumerate_single_robot(&g, &f, &params, tasks[0], 6);
    assert_eq!(oracle, 12.0);
    let (outcome, _) = plan_lazy_astar(&p, None, false);
    assert_eq!(solved(&outcome).j_exp, oracle);
    assert_eq!(solved(&outcome).count_actions(|a| *a == RobotAction::Wait), 0);
}

#[test]
fn waiting_pays_off_when_risk_drains() {
    let g = path(3);
    let mut table = vec![vec![0.0, 1.0]; 2];
    table.extend(vec![vec![0.0, 0.0]; 4]);
    let f = RiskForecast::from_risk_table(table);
    let gamma = SupportMap::empty(&g, 2);
    let tasks = [task(0, 2)];
    let params = CostParams::default();
    let p = Problem::new(&g, &f, &gamma, &tasks, params, 5).unwrap();
    let (outcome, _) = plan_lazy_astar(&p, None, false);
    let oracle = enumerate_single_robot(&g, &f, &params, tasks[0], 5);
    assert!((solved(&outcome).j_exp - oracle).abs() < 1e-12);
    assert!((oracle - 2.1).abs() < 1e-12);
}

#[test]
fn exhaustive_examples() {
    let g = path(4);
    let f = RiskForecast::zero(&g, 6);
    let gamma = SupportMap::empty(&g, 2);
    let tasks = [task(0, 3)];
    let p = Problem::new(&g, &f, &gamma, &tasks, CostParams::default(), 6).unwrap();
    let sol = exhaustive_plan(&p).unwrap();
    assert_eq!(solved(&sol.outcome).j_exp, 3.0);

    let empty: [Task; 0] = [];
    let p = Problem::new(&g, &f, &gamma, &empty, CostParams::default(), 6).unwrap();
    let sol = exhaustive_plan(&p).unwrap();
    assert_eq!(sol.outcome, PlanOutcome::Solved(Plan::empty(0)));
    let (lazy, _) = plan_lazy_astar(&p, None, false);
    assert_eq!(lazy, PlanOutcome::Solved(Plan::empty(0)));
}

#[test]
fn exhaustive_guards_size() {
    let g = generate_random_graph(20, 1.5, 1).unwrap();
    let f = RiskForecast::zero(&g, 40);
    let gamma = SupportMap::empty(&g, 2);
    let tasks = [task(0, 1), task(2, 3), task(4, 5), task(6, 7), task(8, 9)];
    let p = Problem::new(&g, &f, &gamma, &tasks, CostParams::default(), 40).unwrap();
    assert!(matches!(exhaustive_plan(&p), Err(PlanError::TooLarge(_))));
}

#[test]
fn infeasible_when_horizon_too_short() {
    let g = path(5);
    let f = RiskForecast::zero(&g, 3);
    let gamma = SupportMap::empty(&g, 2);
    let tasks = [task(0, 4)];
    let p = Problem::new(&g, &f, &gamma, &tasks, CostParams::default(), 3).unwrap();
    assert_eq!(plan_lazy_astar(&p, None, false).0, PlanOutcome::Infeasible);
    assert_eq!(exhaustive_plan(&p).unwrap().outcome, PlanOutcome::Infeasible);
}

#[test]
fn problem_rejects_bad_inputs() {
    let g = path(3);
    let f = RiskForecast::zero(&g, 2);
    let gamma = SupportMap::empty(&g, 2);
    let bad = [task(0, 9)];
    assert_eq!(Problem::new(&g, &f, &gamma, &bad, CostParams::default(), 2).err(), Some(PlanError::UnknownNode(9)));
    let ok = [task(0, 2)];
    assert!(matches!(
        Problem::new(&g, &f, &gamma, &ok, CostParams::default(), 5).err(),
        Some(PlanError::ForecastTooShort { .. })
    ));
}

#[test]
fn timeout_is_reported() {
    let g = generate_random_graph(20, 1.8, 5).unwrap();
    let model = AdversaryModel::new(&g, 0.2, vec![EdgeId(0), EdgeId(5), EdgeId(10), EdgeId(15)]).unwrap();
    let f = forecast(&g, &model, 40);
    let tasks = [task(0, 19), task(1, 18), task(2, 17), task(3, 16)];
    let gamma = crate::support::allocate(&g, &f, &tasks, &crate::support::SupportConfig::default());
    let p = Problem::new(&g, &f, &gamma, &tasks, CostParams::default(), 40).unwrap();
    let budget = Duration::from_millis(1);
    let started = std::time::Instant::now();
    let (outcome, _) = plan_lazy_astar(&p, Some(budget), false);
    assert!(matches!(outcome, PlanOutcome::Timeout(_)));
    assert!(started.elapsed() < budget + Duration::from_secs(1));
}

fn two_robot_instance() -> (Graph, RiskForecast, SupportMap, Vec<Task>) {
    let g = Graph::new(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 2), (2, 4)]).unwrap();
    let model = AdversaryModel::new(&g, 0.8, vec![EdgeId(1), EdgeId(3)]).unwrap();
    let f = forecast(&g, &model, 6);
    let tasks = vec![task(0, 4), task(4, 0)];
    let gamma = crate::support::allocate(&g, &f, &tasks, &crate::support::SupportConfig::default());
    (g, f, gamma, tasks)
}

#[test]
fn solved_plans_validate_and_cost_matches() {
    let (g, f, gamma, tasks) = two_robot_instance();
    let params = CostParams::default();
    let p = Problem::new(&g, &f, &gamma, &tasks, params, 6).unwrap();
    let (outcome, _) = plan_lazy_astar(&p, None, false);
    let plan = solved(&outcome);
    assert_eq!(validate_plan(plan, &g, &gamma, &tasks, 6, true), Ok(()));
    assert!((expected_plan_cost(plan, &g, &tasks, &f, &params) - plan.j_exp).abs() < 1e-9);
    let oracle = exhaustive_plan(&p).unwrap();
    assert!((solved(&oracle.outcome).j_exp - plan.j_exp).abs() < 1e-9);
}

#[test]
fn post_goal_steps_cost_nothing() {
    let (g, f, gamma, tasks) = two_robot_instance();
    let params = CostParams::default();
    let p = Problem::new(&g, &f, &gamma, &tasks, params, 6).unwrap();
    let (outcome, _) = plan_lazy_astar(&p, None, false);
    let mut padded = solved(&outcome).clone();
    for row in &mut padded.actions {
        row.push(RobotAction::Done);
    }
    padded.makespan += 1;
    assert_eq!(validate_plan(&padded, &g, &gamma, &tasks, 6, true), Ok(()));
    assert_eq!(
        expected_plan_cost(&padded, &g, &tasks, &f, &params),
        expected_plan_cost(solved(&outcome), &g, &tasks, &f, &params)
    );
}

#[test]
fn validation_catches_violations() {
    let g = path(4);
    let gamma = SupportMap::from_assignments(&g, 2, BTreeMap::from([(EdgeId(1), vec![NodeId(0)])])).unwrap();
    let tasks = [task(0, 1), task(1, 3)];

    let mut plan = Plan::empty(2);
    plan.makespan = 2;
    plan.actions = vec![
        vec![RobotAction::Support(EdgeId(1)), RobotAction::Move(NodeId(1))],
        vec![RobotAction::Wait, RobotAction::Move(NodeId(3))],
    ];
    assert_eq!(
        validate_plan(&plan, &g, &gamma, &tasks, 5, true),
        Err(PlanViolation::SupportWithoutTraversal { robot: 0, t: 0, edge: EdgeId(1) })
    );

    plan.actions[0][0] = RobotAction::Wait;
    assert_eq!(
        validate_plan(&plan, &g, &gamma, &tasks, 5, true),
        Err(PlanViolation::NotAdjacent { robot: 1, t: 1, from: NodeId(1), to: NodeId(3) })
    );

    plan.actions[1] = vec![RobotAction::Move(NodeId(2)), RobotAction::Move(NodeId(3))];
    plan.actions[0] = vec![RobotAction::Support(EdgeId(1)), RobotAction::Move(NodeId(1))];
    plan.support_activations.insert((EdgeId(1), 0));
    assert_eq!(validate_plan(&plan, &g, &gamma, &tasks, 5, true), Ok(()));
    assert_eq!(
        validate_plan(&plan, &g, &gamma, &tasks, 1, true),
        Err(PlanViolation::MakespanExceedsHorizon { makespan: 2, horizon: 1 })
    );

    let unallocated = SupportMap::empty(&g, 2);
    assert!(matches!(
        validate_plan(&plan, &g, &unallocated, &tasks, 5, true),
        Err(PlanViolation::SupportNotAllocated { .. })
    ));

    plan.actions[0] = vec![RobotAction::Support(EdgeId(1)), RobotAction::Wait];
    assert_eq!(
        validate_plan(&plan, &g, &gamma, &tasks, 5, true),
        Err(PlanViolation::GoalNotReached { robot: 0, at: NodeId(0), goal: NodeId(1) })
    );
}

#[test]
fn extra_support_options_never_hurt() {
    let (g, f, gamma, tasks) = two_robot_instance();
    let params = CostParams::default();
    let none = SupportMap::empty(&g, 2);
    let with = Problem::new(&g, &f, &gamma, &tasks, params, 6).unwrap();
    let without = Problem::new(&g, &f, &none, &tasks, params, 6).unwrap();
    let a = plan_lazy_astar(&with, None, false).0;
    let b = plan_lazy_astar(&without, None, false).0;
    assert!(solved(&a).j_exp <= solved(&b).j_exp + 1e-12);
}

#[test]
fn robot_at_goal_can_support() {
    let g = path(3);
    let f = RiskForecast::from_risk_table(vec![vec![0.0, 1.0]; 5]);
    let gamma = SupportMap::from_assignments(&g, 1, BTreeMap::from([(EdgeId(1), vec![NodeId(1)])])).unwrap();
    let tasks = [task(1, 1), task(0, 2)];

    let params = CostParams::default();
    let p = Problem::new(&g, &f, &gamma, &tasks, params, 4).unwrap();
    let plan = solved(&plan_lazy_astar(&p, None, false).0).clone();
    assert!((plan.j_exp - 2.1).abs() < 1e-12);
    assert_eq!(plan.actions[0][1], RobotAction::Support(EdgeId(1)));
    assert_eq!(validate_plan(&plan, &g, &gamma, &tasks, 4, true), Ok(()));
    assert_eq!(
        validate_plan(&plan, &g, &gamma, &tasks, 4, false),
        Err(PlanViolation::ActsAfterGoal { robot: 0, t: 1 })
    );
    let oracle = exhaustive_plan(&p).unwrap();
    assert!((solved(&oracle.outcome).j_exp - 2.1).abs() < 1e-12);

    let strict = CostParams { goal_support: false, ..params };
    let p = Problem::new(&g, &f, &gamma, &tasks, strict, 4).unwrap();
    let plan = solved(&plan_lazy_astar(&p, None, false).0).clone();
    assert!((plan.j_exp - 12.0).abs() < 1e-12);
    assert!(plan.support_activations.is_empty());
}
