//! Monte Carlo evaluation of fixed plans and per-method runs.

mod suite;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::{
    forecast_with, sample_trajectories, AdversaryModel, AdversaryTrajectory, RiskForecast, TransitionMatrix,
};
use crate::graph::Graph;
use crate::planner::{plan_lazy_astar, CostParams, Plan, PlanError, PlanOutcome, Problem, RobotAction, Task};
use crate::scenario::{Scenario, ScenarioError};
use crate::seed::derive_seed;
use crate::support::{allocate, allocate_baseline, BaselineAllocator, ScoringVariant, SupportError, SupportMap};

pub use suite::{
    ablation_scoring, aggregate, calibration_report, plot_data, read_rows, run_suite, sorted_csv, AblationConfig,
    CalibrationRow, CellSummary, PlotData, PlotSeries, RowKey, RunRow, SuiteConfig, SuiteError, SuiteReport,
    CSV_COLUMNS,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Support(#[from] SupportError),
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
}

/// Realized team cost of `plan` against one sampled adversary realization.
/// An edge crossing at step `t` pays the penalty iff an adversary occupies it
/// at `t` and the plan did not record a support activation for it at `t`.
pub fn realized_cost(plan: &Plan, traj: &AdversaryTrajectory, params: &CostParams, g: &Graph, tasks: &[Task]) -> f64 {
    let mut pos: Vec<_> = tasks.iter().map(|t| t.start).collect();
    let mut total = 0.0;
    for t in 0..plan.makespan {
        let mut step = 0.0;
        for (i, row) in plan.actions.iter().enumerate() {
            step += match row[t] {
                RobotAction::Wait => params.w,
                RobotAction::Support(_) => params.s_cost,
                RobotAction::Done => 0.0,
                RobotAction::Move(to) => {
                    let e = g.edge_between(pos[i], to).expect("plan moves along edges");
                    pos[i] = to;
                    let attacked = traj.occupied(t, e) && !plan.support_activations.contains(&(e, t));
                    params.r_a + if attacked { params.r_p } else { 0.0 }
                }
            };
        }
        total += step;
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub mean: f64,
    /// Sample standard deviation over √n; zero for a single trial.
    pub se: f64,
    pub costs: Vec<f64>,
}

impl McSummary {
    pub fn from_costs(costs: Vec<f64>) -> Self {
        let (mean, se) = mean_se(&costs);
        McSummary { mean, se, costs }
    }
}

/// Mean and standard error of `xs` (`se = 0` when fewer than two values).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    // Shifted by the first sample so identical samples give an exact mean.
    let mean = xs[0] + xs.iter().map(|x| x - xs[0]).sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Replays `plan` against `trials` independent adversary realizations; trial
/// `i` is seeded from `(master_seed, i)`.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_eval(
    plan: &Plan,
    g: &Graph,
    tasks: &[Task],
    model: &AdversaryModel,
    theta: &TransitionMatrix,
    params: &CostParams,
    horizon: usize,
    trials: usize,
    master_seed: u64,
) -> McSummary {
    assert!(trials >= 1, "at least one trial");
    let costs: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let traj = sample_trajectories(model, theta, horizon, derive_seed(master_seed, &[i]));
            realized_cost(plan, &traj, params, g, tasks)
        })
        .collect();
    McSummary::from_costs(costs)
}

/// A planning pipeline variant. `ForecastAware(RiskPath)` is the full method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    /// Plans with zero risk and no support; the idealized lower bound.
    NoRisk,
    NoSupport,
    Random,
    Tcgre,
    ForecastAware(ScoringVariant),
}

impl Method {
    pub const BASELINES: [Method; 5] = [
        Method::NoRisk,
        Method::NoSupport,
        Method::Random,
        Method::Tcgre,
        Method::ForecastAware(ScoringVariant::RiskPath),
    ];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::NoRisk => f.write_str("no_risk"),
            Method::NoSupport => f.write_str("no_support"),
            Method::Random => f.write_str("random"),
            Method::Tcgre => f.write_str("tcgre"),
            Method::ForecastAware(ScoringVariant::RiskPath) => f.write_str("forecast_aware"),
            Method::ForecastAware(v) => write!(f, "forecast_aware:{v}"),
        }
    }
}

impl FromStr for Method {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "no_risk" => Method::NoRisk,
            "no_support" | "none" => Method::NoSupport,
            "random" => Method::Random,
            "tcgre" => Method::Tcgre,
            "forecast_aware" => Method::ForecastAware(ScoringVariant::RiskPath),
            other => match other.strip_prefix("forecast_aware:") {
                Some(v) => Method::ForecastAware(v.parse()?),
                None => return Err(EvalError::UnknownMethod(s.to_string())),
            },
        })
    }
}

impl TryFrom<String> for Method {
    type Error = EvalError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// `None` runs the planner to completion.
    pub timeout: Option<Duration>,
    pub trials: usize,
    /// When false, `runtime_ms` is reported as 0 so results are reproducible
    /// byte for byte.
    pub record_runtime: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { timeout: Some(Duration::from_secs(90)), trials: 500, record_runtime: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub method: String,
    pub status: String,
    pub j_exp: Option<f64>,
    pub j_real_mean: Option<f64>,
    pub j_real_se: Option<f64>,
    pub delta: Option<f64>,
    pub runtime_ms: u64,
    pub makespan: Option<usize>,
}

pub struct RunArtifacts {
    pub result: RunResult,
    pub outcome: PlanOutcome,
    pub support: SupportMap,
    /// The forecast the planner saw (all zero for `NoRisk`).
    pub planning_forecast: RiskForecast,
    pub mc: Option<McSummary>,
}

const RANDOM_STREAM: u64 = 0x52;
const MC_STREAM: u64 = 0x4D;

/// Seed of the Monte Carlo trials for a scenario; shared by every method so
/// methods are compared on the same adversary realizations.
pub fn mc_seed(scenario: &Scenario) -> u64 {
    derive_seed(scenario.seed, &[MC_STREAM])
}

/// Forecast, allocate, plan and evaluate one method on one scenario. The
/// reported runtime covers forecast, allocation and planning.
pub fn run_method(scenario: &Scenario, method: Method, opts: &RunOptions) -> Result<RunArtifacts, EvalError> {
    scenario.validate()?;
    let started = Instant::now();
    let g = &scenario.graph;
    let theta = TransitionMatrix::build(g, scenario.adversaries.stay()).map_err(ScenarioError::from)?;
    let forecast = forecast_with(&theta, &scenario.adversaries, scenario.horizon);
    let planning_forecast = match method {
        Method::NoRisk => RiskForecast::zero(g, scenario.horizon),
        _ => forecast,
    };
    let config = match method {
        Method::ForecastAware(v) => crate::support::SupportConfig { variant: v, ..scenario.support.clone() },
        _ => scenario.support.clone(),
    };
    let support = match method {
        Method::NoRisk | Method::NoSupport => {
            allocate_baseline(g, &planning_forecast, &scenario.tasks, &config, BaselineAllocator::None)
        }
        Method::Random => allocate_baseline(
            g,
            &planning_forecast,
            &scenario.tasks,
            &config,
            BaselineAllocator::Random { seed: derive_seed(scenario.seed, &[RANDOM_STREAM]) },
        ),
        Method::Tcgre => allocate_baseline(g, &planning_forecast, &scenario.tasks, &config, BaselineAllocator::Tcgre),
        Method::ForecastAware(_) => allocate(g, &planning_forecast, &scenario.tasks, &config),
    };
    let problem = Problem::new(g, &planning_forecast, &support, &scenario.tasks, scenario.params, scenario.horizon)?;
    let (outcome, _) = plan_lazy_astar(&problem, opts.timeout, false);
    let runtime_ms = if opts.record_runtime { started.elapsed().as_millis() as u64 } else { 0 };

    let mc = outcome.plan().map(|plan| {
        monte_carlo_eval(
            plan,
            g,
            &scenario.tasks,
            &scenario.adversaries,
            &theta,
            &scenario.params,
            scenario.horizon,
            opts.trials,
            mc_seed(scenario),
        )
    });
    let plan = outcome.plan();
    let result = RunResult {
        method: method.to_string(),
        status: outcome.status().to_string(),
        j_exp: plan.map(|p| p.j_exp),
        j_real_mean: mc.as_ref().map(|m| m.mean),
        j_real_se: mc.as_ref().map(|m| m.se),
        delta: plan.zip(mc.as_ref()).map(|(p, m)| m.mean - p.j_exp),
        runtime_ms,
        makespan: plan.map(|p| p.makespan),
    };
    Ok(RunArtifacts { result, outcome, support, planning_forecast, mc })
}
