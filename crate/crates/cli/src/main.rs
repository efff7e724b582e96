//! `riskplan` command line: graph and scenario generation, single runs,
//! suite sweeps, scoring ablations and file validation.
//!
//! Exit codes: 0 solved or complete, 1 usage or validation error,
//! 2 infeasible, 3 timeout.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use riskplan::eval::{
    ablation_scoring, aggregate, plot_data, run_method, run_suite, AblationConfig, Method, RunOptions, SuiteConfig,
    SuiteReport,
};
use riskplan::graph::{generate_random_graph, parse_graph, serialize_graph, Graph, NodeId};
use riskplan::planner::{CostParams, PlanDocument, PlanOutcome};
use riskplan::scenario::{generate_scenario, parse_scenario, serialize_scenario, InstanceSpec, TaskMode};
use riskplan::support::{SupportConfig, SupportMap};

const EXIT_ERROR: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_TIMEOUT: u8 = 3;

#[derive(Parser)]
#[command(name = "riskplan", version, about = "Forecast-aware cooperative multi-robot planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random connected graph, or a full scenario with --robots.
    Gen(GenArgs),
    /// Plan one scenario with one method and evaluate it by Monte Carlo.
    Run(RunArgs),
    /// Run a grid of scenarios and methods into a resumable CSV.
    Suite(SuiteArgs),
    /// Run the scoring-variant ablation, one CSV per task mode.
    Ablate(SuiteArgs),
    /// Check that a scenario, suite, ablation, graph or plan file loads.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    nodes: usize,
    #[arg(long, default_value_t = 1.6)]
    ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Write a scenario with this many robots instead of a bare graph.
    #[arg(long)]
    robots: Option<usize>,
    #[arg(long, default_value_t = 1, requires = "robots")]
    adversaries: usize,
    #[arg(long, default_value_t = 0.5, requires = "robots")]
    stay: f64,
    #[arg(long, default_value_t = 0, requires = "robots")]
    instance: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Dsdg, requires = "robots")]
    task_mode: ModeArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Dsdg,
    Sssg,
}

impl From<ModeArg> for TaskMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Dsdg => TaskMode::Dsdg,
            ModeArg::Sssg => TaskMode::Sssg,
        }
    }
}

#[derive(Args)]
struct Budget {
    /// Planner time limit per run in seconds.
    #[arg(long)]
    timeout_s: Option<f64>,
    /// Monte Carlo trials per solved run.
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed; replaces the seed in the input file.
    #[arg(long)]
    seed: Option<u64>,
    /// Override any field of the input file, e.g. `adversaries.stay=0.8` or
    /// `params.r_p=5`. The value is parsed as JSON, falling back to a string.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    scenario: PathBuf,
    #[arg(long, default_value = "forecast_aware")]
    method: String,
    /// Directory for result.json, plan.json and support.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    budget: Budget,
}

#[derive(Args)]
struct SuiteArgs {
    config: PathBuf,
    /// Output CSV for `suite`; path prefix for `ablate`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    budget: Budget,
}

#[derive(Args)]
struct ValidateArgs {
    file: PathBuf,
    #[arg(long, value_enum, default_value_t = Kind::Auto)]
    kind: Kind,
    /// Scenario whose graph a plan file is checked against.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Kind {
    Auto,
    Scenario,
    Suite,
    Ablation,
    Graph,
    Plan,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Suite(a) => cmd_suite(&a),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::Validate(a) => cmd_validate(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(EXIT_ERROR)
        }
    }
}

/// The error chain joined by ": ", skipping causes whose text the previous
/// message already contains.
fn describe(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    let mut last = out.clone();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !last.contains(&text) {
            out = format!("{out}: {text}");
        }
        last = text;
    }
    out
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn is_connected(g: &Graph) -> bool {
    let d = g.distance_table();
    g.nodes().all(|v| d.get(NodeId(0), v) < g.node_count())
}

fn cmd_gen(a: &GenArgs) -> Result<u8> {
    if a.nodes < 2 {
        bail!("--nodes must be at least 2, got {}", a.nodes);
    }
    let (g, text) = match a.robots {
        None => {
            let g = generate_random_graph(a.nodes, a.ratio, a.seed)?;
            let text = serialize_graph(&g);
            (g, text)
        }
        Some(robots) => {
            let spec = InstanceSpec {
                graph_size: a.nodes,
                ratio: a.ratio,
                robots,
                adversaries: a.adversaries,
                stay: a.stay,
                instance: a.instance,
                seed_index: 0,
                task_mode: a.task_mode.into(),
            };
            let s = generate_scenario(a.seed, &spec, CostParams::default(), SupportConfig::default())?;
            let text = serialize_scenario(&s);
            (s.graph, text)
        }
    };
    write_file(&a.out, &text)?;
    let connected = if is_connected(&g) { "connected" } else { "NOT connected" };
    println!("{}: {} nodes, {} edges, {connected}", a.out.display(), g.node_count(), g.edge_count());
    Ok(0)
}

/// Applies `PATH=VALUE` overrides to a JSON document. Path segments are
/// object keys or array indices; missing object keys are created.
fn apply_sets(doc: &mut Value, sets: &[String]) -> Result<()> {
    for set in sets {
        let (path, raw) = set.split_once('=').with_context(|| format!("--set {set:?} is not PATH=VALUE"))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut cur = &mut *doc;
        for seg in path.split('.') {
            cur = match cur {
                Value::Object(map) => map.entry(seg.to_string()).or_insert(Value::Null),
                Value::Array(items) => {
                    let len = items.len();
                    seg.parse::<usize>()
                        .ok()
                        .and_then(|i| items.get_mut(i))
                        .with_context(|| format!("--set {path}: no index {seg:?} in array of {len}"))?
                }
                Value::Null => {
                    *cur = Value::Object(Default::default());
                    cur.as_object_mut().unwrap().entry(seg.to_string()).or_insert(Value::Null)
                }
                _ => bail!("--set {path}: {seg:?} is inside a scalar"),
            };
        }
        *cur = value;
    }
    Ok(())
}

fn check_budget(b: &Budget) -> Result<()> {
    if let Some(t) = b.timeout_s {
        if !(t > 0.0 && t.is_finite()) {
            bail!("--timeout-s must be positive, got {t}");
        }
    }
    if b.trials == Some(0) {
        bail!("--trials must be at least 1");
    }
    Ok(())
}

fn support_json(gamma: &SupportMap, g: &Graph) -> Value {
    let entries: Vec<Value> = gamma
        .assignments()
        .iter()
        .map(|(&e, nodes)| {
            let (u, v) = g.endpoints(e);
            serde_json::json!({
                "edge": [u.0, v.0],
                "nodes": nodes.iter().map(|n| n.0).collect::<Vec<_>>(),
                "scores": gamma.scores_for(e),
            })
        })
        .collect();
    Value::Array(entries)
}

fn cmd_run(a: &RunArgs) -> Result<u8> {
    check_budget(&a.budget)?;
    let method: Method = a.method.parse()?;
    let mut doc = read_json(&a.scenario)?;
    apply_sets(&mut doc, &a.budget.sets)?;
    if let Some(seed) = a.budget.seed {
        doc["seed"] = seed.into();
    }
    let base = a.scenario.parent();
    let scenario =
        parse_scenario(&doc.to_string(), base).with_context(|| format!("invalid scenario {}", a.scenario.display()))?;
    let opts = RunOptions {
        timeout: Some(Duration::from_secs_f64(a.budget.timeout_s.unwrap_or(90.0))),
        trials: a.budget.trials.unwrap_or(500),
        record_runtime: true,
    };
    let run = run_method(&scenario, method, &opts)?;
    let result = serde_json::to_string_pretty(&run.result)?;
    println!("{result}");
    if let Some(dir) = &a.out {
        let plan = PlanDocument::from_outcome(&run.outcome, &scenario.graph);
        write_file(&dir.join("result.json"), &(result + "\n"))?;
        write_file(&dir.join("plan.json"), &(serde_json::to_string_pretty(&plan)? + "\n"))?;
        let support = support_json(&run.support, &scenario.graph);
        write_file(&dir.join("support.json"), &(serde_json::to_string_pretty(&support)? + "\n"))?;
    }
    Ok(match run.outcome {
        PlanOutcome::Solved(_) => 0,
        PlanOutcome::Infeasible => EXIT_INFEASIBLE,
        PlanOutcome::Timeout(_) => EXIT_TIMEOUT,
    })
}

fn apply_budget(config: &mut SuiteConfig, b: &Budget) {
    if let Some(t) = b.timeout_s {
        config.timeout_s = t;
    }
    if let Some(n) = b.trials {
        config.trials = n;
    }
    if let Some(s) = b.seed {
        config.seed = s;
    }
}

fn workers(w: Option<usize>) -> Result<usize> {
    match w {
        Some(0) => bail!("--workers must be at least 1"),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn load_config<T: serde::de::DeserializeOwned>(path: &Path, sets: &[String]) -> Result<T> {
    let mut doc = read_json(path)?;
    apply_sets(&mut doc, sets)?;
    serde_json::from_value(doc).with_context(|| format!("invalid config {}", path.display()))
}

/// `<csv stem>_summary.csv` and `<csv stem>_plot.json` next to the CSV.
fn write_summaries(csv_path: &Path, report: &SuiteReport) -> Result<(PathBuf, PathBuf)> {
    let stem = csv_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let summary_path = csv_path.with_file_name(format!("{stem}_summary.csv"));
    let plot_path = csv_path.with_file_name(format!("{stem}_plot.json"));
    let summary = aggregate(&report.rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    for cell in &summary {
        w.serialize(cell)?;
    }
    write_file(&summary_path, &String::from_utf8(w.into_inner()?)?)?;
    write_file(&plot_path, &(serde_json::to_string_pretty(&plot_data(&summary))? + "\n"))?;
    Ok((summary_path, plot_path))
}

fn report_suite(csv_path: &Path, report: &SuiteReport) -> Result<()> {
    let failed = report.rows.iter().filter(|r| !r.solved()).count();
    let (summary, plot) = write_summaries(csv_path, report)?;
    println!(
        "{}: {} rows ({} run, {} already present, {} not solved); summary {}, plot data {}",
        csv_path.display(),
        report.rows.len(),
        report.executed,
        report.skipped,
        failed,
        summary.display(),
        plot.display()
    );
    Ok(())
}

fn cmd_suite(a: &SuiteArgs) -> Result<u8> {
    check_budget(&a.budget)?;
    let mut config: SuiteConfig = load_config(&a.config, &a.budget.sets)?;
    apply_budget(&mut config, &a.budget);
    ensure_parent(&a.out)?;
    let report = run_suite(&config, &a.out, workers(a.workers)?)?;
    report_suite(&a.out, &report)?;
    Ok(0)
}

fn cmd_ablate(a: &SuiteArgs) -> Result<u8> {
    check_budget(&a.budget)?;
    let mut config: AblationConfig = load_config(&a.config, &a.budget.sets)?;
    apply_budget(&mut config.grid, &a.budget);
    ensure_parent(&a.out)?;
    for (_, path, report) in ablation_scoring(&config, &a.out, workers(a.workers)?)? {
        report_suite(&path, &report)?;
    }
    Ok(0)
}

fn detect_kind(doc: &Value) -> Result<Kind> {
    let has = |k: &str| doc.get(k).is_some();
    Ok(if has("grid") {
        Kind::Ablation
    } else if has("sizes") {
        Kind::Suite
    } else if has("adversaries") {
        Kind::Scenario
    } else if has("robots") && has("status") {
        Kind::Plan
    } else if has("nodes") && has("edges") {
        Kind::Graph
    } else {
        bail!("cannot tell what kind of file this is; pass --kind")
    })
}

fn cmd_validate(a: &ValidateArgs) -> Result<u8> {
    let doc = read_json(&a.file)?;
    let kind = if a.kind == Kind::Auto { detect_kind(&doc)? } else { a.kind };
    let text = doc.to_string();
    let what = match kind {
        Kind::Scenario => {
            let s = parse_scenario(&text, a.file.parent())?;
            format!(
                "scenario: {} nodes, {} robots, {} adversaries, horizon {}",
                s.graph.node_count(),
                s.tasks.len(),
                s.adversaries.count(),
                s.horizon
            )
        }
        Kind::Suite => {
            let c: SuiteConfig = serde_json::from_value(doc)?;
            c.validate()?;
            format!("suite config: {} methods", c.methods.len())
        }
        Kind::Ablation => {
            let c: AblationConfig = serde_json::from_value(doc)?;
            c.validate()?;
            format!("ablation config: {} variants, {} task modes", c.variants.len(), c.task_modes.len())
        }
        Kind::Graph => {
            let g = parse_graph(&text)?;
            format!("graph: {} nodes, {} edges", g.node_count(), g.edge_count())
        }
        Kind::Plan => {
            let p: PlanDocument = serde_json::from_value(doc)?;
            if let Some(path) = &a.scenario {
                let s = parse_scenario(&fs::read_to_string(path)?, path.parent())?;
                p.to_plan(&s.graph).map_err(anyhow::Error::msg)?;
            }
            format!("plan: status {}, {} robots", p.status, p.robots.len())
        }
        Kind::Auto => unreachable!(),
    };
    println!("{}: valid {what}", a.file.display());
    Ok(0)
}
