//! Problem instances: graph, adversaries, tasks and parameters, plus the JSON
//! scenario file format and the seeded instance generator used by suites.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::{AdversaryModel, ForecastError};
use crate::graph::{generate_random_graph, EdgeId, Graph, GraphDocument, GraphError, NodeId};
use crate::planner::{CostParams, PlanError, Task};
use crate::seed::{derive_seed, rng_from};
use crate::support::{SupportConfig, SupportError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("adversaries: {0}")]
    Forecast(#[from] ForecastError),
    #[error("parameters: {0}")]
    Plan(#[from] PlanError),
    #[error("support: {0}")]
    Support(#[from] SupportError),
    #[error("tasks: {0}")]
    Tasks(String),
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed scenario: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TaskMode {
    /// Distinct starts and distinct goals.
    #[default]
    Dsdg,
    /// One shared start and one shared goal.
    Sssg,
}

impl TaskMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskMode::Dsdg => "dsdg",
            TaskMode::Sssg => "sssg",
        }
    }
}

impl fmt::Display for TaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskMode {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dsdg" => Ok(TaskMode::Dsdg),
            "sssg" => Ok(TaskMode::Sssg),
            _ => Err(ScenarioError::Invalid(format!("unknown task mode {s:?}"))),
        }
    }
}

/// Checks the task-mode invariants and `start != goal`.
pub fn check_tasks(tasks: &[Task], mode: TaskMode) -> Result<(), ScenarioError> {
    for (i, t) in tasks.iter().enumerate() {
        if t.start == t.goal {
            return Err(ScenarioError::Tasks(format!("robot {i} starts at its goal {}", t.goal)));
        }
    }
    match mode {
        TaskMode::Dsdg => {
            for i in 0..tasks.len() {
                for j in 0..i {
                    if tasks[i].start == tasks[j].start {
                        return Err(ScenarioError::Tasks(format!("robots {j} and {i} share start {}", tasks[i].start)));
                    }
                    if tasks[i].goal == tasks[j].goal {
                        return Err(ScenarioError::Tasks(format!("robots {j} and {i} share goal {}", tasks[i].goal)));
                    }
                }
            }
        }
        TaskMode::Sssg => {
            if let Some(first) = tasks.first() {
                if tasks.iter().any(|t| t.start != first.start || t.goal != first.goal) {
                    return Err(ScenarioError::Tasks("sssg requires one shared start and one shared goal".into()));
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub graph: Graph,
    pub adversaries: AdversaryModel,
    pub tasks: Vec<Task>,
    pub task_mode: TaskMode,
    pub params: CostParams,
    pub support: SupportConfig,
    pub horizon: usize,
    pub seed: u64,
}

pub fn default_horizon(g: &Graph) -> usize {
    2 * g.node_count()
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.params.validate()?;
        self.support.validate()?;
        // Re-run the model constructor: a deserialized model skips its checks.
        AdversaryModel::new(&self.graph, self.adversaries.stay(), self.adversaries.initial_edges().to_vec())?;
        for (i, t) in self.tasks.iter().enumerate() {
            for n in [t.start, t.goal] {
                if !self.graph.contains_node(n) {
                    return Err(ScenarioError::Tasks(format!("robot {i} references node {n} outside the graph")));
                }
            }
        }
        check_tasks(&self.tasks, self.task_mode)?;
        if self.horizon == 0 {
            return Err(ScenarioError::Invalid("horizon must be at least 1".into()));
        }
        Ok(())
    }
}

/// Samples `robots` tasks on `g` for the given mode.
pub fn generate_tasks(g: &Graph, robots: usize, mode: TaskMode, seed: u64) -> Result<Vec<Task>, ScenarioError> {
    let n = g.node_count();
    let mut rng = rng_from(seed);
    match mode {
        TaskMode::Sssg => {
            let start = rng.gen_range(0..n);
            let mut goal = rng.gen_range(0..n - 1);
            if goal >= start {
                goal += 1;
            }
            Ok(vec![Task { start: NodeId(start), goal: NodeId(goal) }; robots])
        }
        TaskMode::Dsdg => {
            if robots > n || (robots == n && n < 2) {
                return Err(ScenarioError::Tasks(format!("{robots} robots need distinct starts on {n} nodes")));
            }
            let nodes: Vec<usize> = (0..n).collect();
            let starts: Vec<usize> = nodes.choose_multiple(&mut rng, robots).copied().collect();
            for _ in 0..10_000 {
                let goals: Vec<usize> = nodes.choose_multiple(&mut rng, robots).copied().collect();
                if starts.iter().zip(&goals).all(|(s, g)| s != g) {
                    return Ok(starts
                        .iter()
                        .zip(goals)
                        .map(|(&s, g)| Task { start: NodeId(s), goal: NodeId(g) })
                        .collect());
                }
            }
            Err(ScenarioError::Tasks("no goal assignment avoids every start".into()))
        }
    }
}

/// Distinct initial adversary edges drawn uniformly.
pub fn generate_adversary_edges(g: &Graph, count: usize, seed: u64) -> Result<Vec<EdgeId>, ScenarioError> {
    if count > g.edge_count() {
        return Err(ScenarioError::Invalid(format!("{count} adversaries but only {} edges", g.edge_count())));
    }
    let mut rng = rng_from(seed);
    let edges: Vec<EdgeId> = g.edge_ids().collect();
    Ok(edges.choose_multiple(&mut rng, count).copied().collect())
}

/// Coordinates of one generated instance within a suite grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceSpec {
    pub graph_size: usize,
    pub ratio: f64,
    pub robots: usize,
    pub adversaries: usize,
    pub stay: f64,
    pub instance: usize,
    pub seed_index: usize,
    pub task_mode: TaskMode,
}

const GRAPH_STREAM: u64 = 1;
const TASK_STREAM: u64 = 2;
const ADVERSARY_STREAM: u64 = 3;

/// Builds a scenario deterministically from `master` and the instance
/// coordinates. The graph depends on (size, ratio, instance); tasks and
/// adversary starts additionally on (robots, adversaries, seed index). The
/// stay probability does not enter any seed, so instances differing only in
/// stay share graph, tasks and adversary starts.
pub fn generate_scenario(
    master: u64,
    spec: &InstanceSpec,
    params: CostParams,
    support: SupportConfig,
) -> Result<Scenario, ScenarioError> {
    let graph_seed =
        derive_seed(master, &[GRAPH_STREAM, spec.graph_size as u64, spec.ratio.to_bits(), spec.instance as u64]);
    let graph = generate_random_graph(spec.graph_size, spec.ratio, graph_seed)?;
    let run_seed = derive_seed(
        graph_seed,
        &[spec.robots as u64, spec.adversaries as u64, spec.seed_index as u64, spec.task_mode as u64],
    );
    let tasks = generate_tasks(&graph, spec.robots, spec.task_mode, derive_seed(run_seed, &[TASK_STREAM]))?;
    let edges = generate_adversary_edges(&graph, spec.adversaries, derive_seed(run_seed, &[ADVERSARY_STREAM]))?;
    let adversaries = AdversaryModel::new(&graph, spec.stay, edges)?;
    let horizon = default_horizon(&graph);
    let scenario =
        Scenario { graph, adversaries, tasks, task_mode: spec.task_mode, params, support, horizon, seed: run_seed };
    scenario.validate()?;
    Ok(scenario)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryFile {
    pub stay: f64,
    /// Initial edges as endpoint pairs.
    pub initial_edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFile {
    pub start: usize,
    pub goal: usize,
}

/// JSON scenario. Exactly one of `graph` and `graph_path` must be present;
/// a relative `graph_path` resolves against the scenario file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_path: Option<PathBuf>,
    pub adversaries: AdversaryFile,
    pub tasks: Vec<TaskFile>,
    #[serde(default)]
    pub task_mode: TaskMode,
    #[serde(default)]
    pub params: CostParams,
    #[serde(default)]
    pub support: SupportConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioFile {
    pub fn from_scenario(s: &Scenario) -> Self {
        ScenarioFile {
            graph: Some(s.graph.to_document()),
            graph_path: None,
            adversaries: AdversaryFile {
                stay: s.adversaries.stay(),
                initial_edges: s
                    .adversaries
                    .initial_edges()
                    .iter()
                    .map(|&e| {
                        let (u, v) = s.graph.endpoints(e);
                        [u.0, v.0]
                    })
                    .collect(),
            },
            tasks: s.tasks.iter().map(|t| TaskFile { start: t.start.0, goal: t.goal.0 }).collect(),
            task_mode: s.task_mode,
            params: s.params,
            support: s.support.clone(),
            horizon: Some(s.horizon),
            seed: s.seed,
        }
    }

    /// Resolves the graph and validates every invariant.
    pub fn into_scenario(self, base_dir: Option<&Path>) -> Result<Scenario, ScenarioError> {
        let graph = match (self.graph, self.graph_path) {
            (Some(doc), None) => Graph::from_document(&doc)?,
            (None, Some(path)) => {
                let path = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path,
                };
                let text = std::fs::read_to_string(&path).map_err(|source| ScenarioError::Io { path, source })?;
                crate::graph::parse_graph(&text)?
            }
            _ => return Err(ScenarioError::Invalid("exactly one of graph and graph_path is required".into())),
        };
        let mut initial = Vec::with_capacity(self.adversaries.initial_edges.len());
        for [u, v] in self.adversaries.initial_edges {
            let e = (u < graph.node_count() && v < graph.node_count())
                .then(|| graph.edge_between(NodeId(u), NodeId(v)))
                .flatten()
                .ok_or_else(|| ScenarioError::Invalid(format!("adversary edge [{u}, {v}] is not in the graph")))?;
            initial.push(e);
        }
        let adversaries = AdversaryModel::new(&graph, self.adversaries.stay, initial)?;
        let horizon = self.horizon.unwrap_or_else(|| default_horizon(&graph));
        let scenario = Scenario {
            tasks: self.tasks.iter().map(|t| Task { start: NodeId(t.start), goal: NodeId(t.goal) }).collect(),
            graph,
            adversaries,
            task_mode: self.task_mode,
            params: self.params,
            support: self.support,
            horizon,
            seed: self.seed,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

pub fn parse_scenario(text: &str, base_dir: Option<&Path>) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(text)?;
    file.into_scenario(base_dir)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    parse_scenario(&text, path.parent())
}

pub fn serialize_scenario(s: &Scenario) -> String {
    serde_json::to_string_pretty(&ScenarioFile::from_scenario(s)).expect("scenario serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(robots: usize, mode: TaskMode) -> InstanceSpec {
        InstanceSpec {
            graph_size: 10,
            ratio: 1.6,
            robots,
            adversaries: 4,
            stay: 0.5,
            instance: 0,
            seed_index: 0,
            task_mode: mode,
        }
    }

    #[test]
    fn generated_tasks_respect_modes() {
        let g = generate_random_graph(10, 1.6, 3).unwrap();
        for seed in 0..50 {
            let t = generate_tasks(&g, 4, TaskMode::Dsdg, seed).unwrap();
            check_tasks(&t, TaskMode::Dsdg).unwrap();
            let t = generate_tasks(&g, 4, TaskMode::Sssg, seed).unwrap();
            check_tasks(&t, TaskMode::Sssg).unwrap();
        }
        assert!(generate_tasks(&g, 11, TaskMode::Dsdg, 0).is_err());
    }

    #[test]
    fn task_mode_violations() {
        let t = |s, g| Task { start: NodeId(s), goal: NodeId(g) };
        assert!(check_tasks(&[t(0, 1), t(0, 2)], TaskMode::Dsdg).is_err());
        assert!(check_tasks(&[t(0, 1), t(2, 1)], TaskMode::Dsdg).is_err());
        assert!(check_tasks(&[t(0, 1), t(0, 2)], TaskMode::Sssg).is_err());
        assert!(check_tasks(&[t(3, 3)], TaskMode::Sssg).is_err());
        assert!(check_tasks(&[t(0, 1), t(1, 0)], TaskMode::Dsdg).is_ok());
    }

    #[test]
    fn stay_does_not_change_the_instance() {
        let a =
            generate_scenario(7, &spec(3, TaskMode::Dsdg), CostParams::default(), SupportConfig::default()).unwrap();
        let mut other = spec(3, TaskMode::Dsdg);
        other.stay = 1.0;
        let b = generate_scenario(7, &other, CostParams::default(), SupportConfig::default()).unwrap();
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.tasks, b.tasks);
        assert_eq!(a.adversaries.initial_edges(), b.adversaries.initial_edges());
        assert_eq!(a.seed, b.seed);
        assert_eq!(b.adversaries.stay(), 1.0);
        assert_eq!(a.horizon, 20);
    }

    #[test]
    fn scenario_file_round_trip() {
        let s =
            generate_scenario(1, &spec(2, TaskMode::Sssg), CostParams::default(), SupportConfig::default()).unwrap();
        let text = serialize_scenario(&s);
        let back = parse_scenario(&text, None).unwrap();
        assert_eq!(back.graph, s.graph);
        assert_eq!(back.tasks, s.tasks);
        assert_eq!(back.adversaries, s.adversaries);
        assert_eq!(back.horizon, s.horizon);
        assert_eq!(serialize_scenario(&back), text);
    }

    #[test]
    fn scenario_file_rejects_bad_input() {
        let base = r#"{"graph":{"nodes":3,"edges":[[0,1],[1,2]]},"adversaries":{"stay":0.5,"initial_edges":[[1,2]]},"tasks":[{"start":0,"goal":2}]}"#;
        assert!(parse_scenario(base, None).is_ok());
        let unknown = base.replacen("\"tasks\"", "\"colour\":1,\"tasks\"", 1);
        assert!(matches!(parse_scenario(&unknown, None), Err(ScenarioError::Json(_))));
        let bad_edge = base.replace("[[1,2]]}", "[[0,2]]}");
        assert!(parse_scenario(&bad_edge, None).is_err());
        let bad_stay = base.replace("0.5", "1.5");
        assert!(matches!(parse_scenario(&bad_stay, None), Err(ScenarioError::Forecast(_))));
        let same = base.replace("\"goal\":2", "\"goal\":0");
        assert!(matches!(parse_scenario(&same, None), Err(ScenarioError::Tasks(_))));
        let no_graph = base.replace(r#""graph":{"nodes":3,"edges":[[0,1],[1,2]]},"#, "");
        assert!(matches!(parse_scenario(&no_graph, None), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn partial_params_take_defaults() {
        let base = r#"{"graph":{"nodes":3,"edges":[[0,1],[1,2]]},"adversaries":{"stay":0.5,"initial_edges":[[1,2]]},"tasks":[{"start":0,"goal":2}]"#;
        let s = parse_scenario(&format!(r#"{base},"params":{{"r_p":5}},"support":{{"s":2}}}}"#), None).unwrap();
        assert_eq!(s.params, CostParams { r_p: 5.0, ..CostParams::default() });
        assert_eq!(s.support, SupportConfig { s: 2, ..SupportConfig::default() });
        let typo = format!(r#"{base},"support":{{"kk":2}}}}"#);
        assert!(matches!(parse_scenario(&typo, None), Err(ScenarioError::Json(_))));
        let typo = format!(r#"{base},"params":{{"goal_suport":false}}}}"#);
        assert!(matches!(parse_scenario(&typo, None), Err(ScenarioError::Json(_))));
    }

    #[test]
    fn graph_path_resolves_relative_to_scenario() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("g.json"), r#"{"nodes":2,"edges":[[0,1]]}"#).unwrap();
        let text =
            r#"{"graph_path":"g.json","adversaries":{"stay":1.0,"initial_edges":[]},"tasks":[{"start":0,"goal":1}]}"#;
        let p = dir.path().join("s.json");
        std::fs::write(&p, text).unwrap();
        let s = load_scenario(&p).unwrap();
        assert_eq!(s.graph.edge_count(), 1);
        assert_eq!(s.horizon, 4);
    }
}
