//! Experiment grids: streaming, resumable CSV output and per-cell statistics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{mean_se, run_method, Method, RunOptions};
use crate::planner::CostParams;
use crate::scenario::{generate_scenario, InstanceSpec, TaskMode};
use crate::support::{ScoringVariant, SupportConfig};

pub const CSV_COLUMNS: [&str; 15] = [
    "method",
    "graph_size",
    "ratio",
    "n_robots",
    "n_adversaries",
    "stay",
    "instance",
    "seed",
    "status",
    "j_exp",
    "j_real_mean",
    "j_real_se",
    "delta",
    "runtime_ms",
    "makespan",
];

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("invalid suite config: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: existing file has header {found:?}, expected the results columns")]
    Header { path: PathBuf, found: Vec<String> },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

fn default_ratios() -> Vec<f64> {
    vec![1.6]
}

fn default_methods() -> Vec<Method> {
    Method::BASELINES.to_vec()
}

fn default_trials() -> usize {
    500
}

fn default_timeout() -> f64 {
    90.0
}

fn default_true() -> bool {
    true
}

/// Grid definition. Every combination of size × ratio × config × stay is a
/// cell; each cell runs `instances × seeds` scenarios under every method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub sizes: Vec<usize>,
    #[serde(default = "default_ratios")]
    pub ratios: Vec<f64>,
    /// `[robots, adversaries]` pairs.
    pub configs: Vec<[usize; 2]>,
    pub stays: Vec<f64>,
    pub instances: usize,
    pub seeds: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub task_mode: TaskMode,
    #[serde(default)]
    pub params: CostParams,
    #[serde(default)]
    pub support: SupportConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_true")]
    pub record_runtime: bool,
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<(), SuiteError> {
        let bad = |m: String| Err(SuiteError::Invalid(m));
        if self.sizes.is_empty() || self.ratios.is_empty() || self.configs.is_empty() || self.stays.is_empty() {
            return bad("sizes, ratios, configs and stays must be nonempty".into());
        }
        if self.instances == 0 || self.seeds == 0 {
            return bad("instances and seeds must be at least 1".into());
        }
        if let Some(&n) = self.sizes.iter().find(|&&n| n < 2) {
            return bad(format!("graph size {n} is below 2"));
        }
        if let Some(s) = self.stays.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return bad(format!("stay {s} is outside [0, 1]"));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return bad(format!("ratio {r} must be positive"));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return bad(format!("timeout_s must be positive, got {}", self.timeout_s));
        }
        self.params.validate().map_err(|e| SuiteError::Invalid(e.to_string()))?;
        self.support.validate().map_err(|e| SuiteError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            timeout: Some(Duration::from_secs_f64(self.timeout_s)),
            trials: self.trials,
            record_runtime: self.record_runtime,
        }
    }

    fn jobs(&self) -> Vec<InstanceSpec> {
        let mut jobs = Vec::new();
        for &graph_size in &self.sizes {
            for &ratio in &self.ratios {
                for &[robots, adversaries] in &self.configs {
                    for &stay in &self.stays {
                        for instance in 0..self.instances {
                            for seed_index in 0..self.seeds {
                                jobs.push(InstanceSpec {
                                    graph_size,
                                    ratio,
                                    robots,
                                    adversaries,
                                    stay,
                                    instance,
                                    seed_index,
                                    task_mode: self.task_mode,
                                });
                            }
                        }
                    }
                }
            }
        }
        jobs
    }
}

/// One results row, in CSV column order. Result fields are empty unless the
/// run solved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub method: String,
    pub graph_size: usize,
    pub ratio: f64,
    pub n_robots: usize,
    pub n_adversaries: usize,
    pub stay: f64,
    pub instance: usize,
    pub seed: usize,
    pub status: String,
    pub j_exp: Option<f64>,
    pub j_real_mean: Option<f64>,
    pub j_real_se: Option<f64>,
    pub delta: Option<f64>,
    pub runtime_ms: u64,
    pub makespan: Option<usize>,
}

/// Coordinate columns identifying a row; floats compared by bit pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowKey {
    pub method: String,
    pub graph_size: usize,
    pub ratio: u64,
    pub n_robots: usize,
    pub n_adversaries: usize,
    pub stay: u64,
    pub instance: usize,
    pub seed: usize,
}

/// Ordered cell coordinates (method, size, ratio, robots, adversaries, stay).
type CellKey = (String, usize, u64, usize, usize, u64);

impl RunRow {
    pub fn key(&self) -> RowKey {
        RowKey {
            method: self.method.clone(),
            graph_size: self.graph_size,
            ratio: self.ratio.to_bits(),
            n_robots: self.n_robots,
            n_adversaries: self.n_adversaries,
            stay: self.stay.to_bits(),
            instance: self.instance,
            seed: self.seed,
        }
    }

    fn cell(&self) -> CellKey {
        (
            self.method.clone(),
            self.graph_size,
            self.ratio.to_bits(),
            self.n_robots,
            self.n_adversaries,
            self.stay.to_bits(),
        )
    }

    fn sort_key(&self) -> (String, usize, OrdF64, usize, usize, OrdF64, usize, usize) {
        (
            self.method.clone(),
            self.graph_size,
            OrdF64(self.ratio),
            self.n_robots,
            self.n_adversaries,
            OrdF64(self.stay),
            self.instance,
            self.seed,
        )
    }

    fn skeleton(spec: &InstanceSpec, method: &str, status: &str) -> RunRow {
        RunRow {
            method: method.to_string(),
            graph_size: spec.graph_size,
            ratio: spec.ratio,
            n_robots: spec.robots,
            n_adversaries: spec.adversaries,
            stay: spec.stay,
            instance: spec.instance,
            seed: spec.seed_index,
            status: status.to_string(),
            j_exp: None,
            j_real_mean: None,
            j_real_se: None,
            delta: None,
            runtime_ms: 0,
            makespan: None,
        }
    }

    pub fn solved(&self) -> bool {
        self.status == "solved"
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SuiteError + '_ {
    move |source| SuiteError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> SuiteError + '_ {
    move |source| SuiteError::Csv { path: path.to_path_buf(), source }
}

/// Reads a results CSV. A trailing partial line (from an interrupted write)
/// is ignored.
pub fn read_rows(path: &Path) -> Result<Vec<RunRow>, SuiteError> {
    let mut text = String::new();
    File::open(path).and_then(|mut f| f.read_to_string(&mut text)).map_err(io_err(path))?;
    parse_rows(&text[..complete_prefix(&text)], path)
}

fn complete_prefix(text: &str) -> usize {
    text.rfind('\n').map_or(0, |i| i + 1)
}

fn parse_rows(text: &str, path: &Path) -> Result<Vec<RunRow>, SuiteError> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(csv_err(path))?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(SuiteError::Header { path: path.to_path_buf(), found: header });
    }
    reader.deserialize().collect::<Result<Vec<RunRow>, _>>().map_err(csv_err(path))
}

/// Rows sorted by their coordinate columns, rendered as CSV with header.
pub fn sorted_csv(rows: &[RunRow]) -> String {
    let mut rows = rows.to_vec();
    rows.sort_by_key(RunRow::sort_key);
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("in-memory write");
    for r in &rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    /// Every row in the output file, previously present or new, sorted by
    /// coordinates.
    pub rows: Vec<RunRow>,
    pub executed: usize,
    pub skipped: usize,
}

/// Runs every (cell × instance × seed × method) job not already present in
/// `out`, appending one CSV row per finished run. Runs execute on a pool of
/// `workers` threads; the CSV writer is the single serialization point.
pub fn run_suite(config: &SuiteConfig, out: &Path, workers: usize) -> Result<SuiteReport, SuiteError> {
    config.validate()?;
    let mut existing = Vec::new();
    let file = if out.exists() {
        let mut text = String::new();
        File::open(out).and_then(|mut f| f.read_to_string(&mut text)).map_err(io_err(out))?;
        let keep = complete_prefix(&text);
        existing = parse_rows(&text[..keep], out)?;
        let mut f = OpenOptions::new().read(true).write(true).open(out).map_err(io_err(out))?;
        f.set_len(keep as u64).map_err(io_err(out))?;
        f.seek(SeekFrom::End(0)).map_err(io_err(out))?;
        if keep == 0 {
            write_header(&mut f, out)?;
        }
        f
    } else {
        let mut f = File::create(out).map_err(io_err(out))?;
        write_header(&mut f, out)?;
        f
    };

    let done: HashSet<RowKey> = existing.iter().map(RunRow::key).collect();
    let methods: Vec<String> = config.methods.iter().map(Method::to_string).collect();
    let jobs: Vec<(InstanceSpec, Vec<usize>)> = config
        .jobs()
        .into_iter()
        .filter_map(|spec| {
            let pending: Vec<usize> = (0..methods.len())
                .filter(|&m| !done.contains(&RunRow::skeleton(&spec, &methods[m], "").key()))
                .collect();
            (!pending.is_empty()).then_some((spec, pending))
        })
        .collect();
    let total_pending: usize = jobs.iter().map(|(_, p)| p.len()).sum();
    let skipped = config.jobs().len() * methods.len() - total_pending;

    let writer = Mutex::new(csv::WriterBuilder::new().has_headers(false).from_writer(file));
    let fresh = Mutex::new(Vec::with_capacity(total_pending));
    let write_failure: Mutex<Option<SuiteError>> = Mutex::new(None);
    let opts = config.run_options();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SuiteError::Pool(e.to_string()))?;
    pool.install(|| {
        jobs.par_iter().for_each(|(spec, pending)| {
            let scenario = generate_scenario(config.seed, spec, config.params, config.support.clone());
            for &m in pending {
                let row = match &scenario {
                    Err(_) => RunRow::skeleton(spec, &methods[m], "error"),
                    Ok(s) => match run_method(s, config.methods[m], &opts) {
                        Err(_) => RunRow::skeleton(spec, &methods[m], "error"),
                        Ok(a) => RunRow {
                            status: a.result.status,
                            j_exp: a.result.j_exp,
                            j_real_mean: a.result.j_real_mean,
                            j_real_se: a.result.j_real_se,
                            delta: a.result.delta,
                            runtime_ms: a.result.runtime_ms,
                            makespan: a.result.makespan,
                            ..RunRow::skeleton(spec, &methods[m], "")
                        },
                    },
                };
                let mut w = writer.lock().expect("writer lock");
                if let Err(e) = w.serialize(&row).and_then(|_| w.flush().map_err(csv::Error::from)) {
                    write_failure
                        .lock()
                        .expect("failure lock")
                        .get_or_insert(SuiteError::Csv { path: out.to_path_buf(), source: e });
                }
                drop(w);
                fresh.lock().expect("rows lock").push(row);
            }
        });
    });
    if let Some(e) = write_failure.into_inner().expect("failure lock") {
        return Err(e);
    }

    let mut rows = existing;
    rows.extend(fresh.into_inner().expect("rows lock"));
    rows.sort_by_key(RunRow::sort_key);
    Ok(SuiteReport { rows, executed: total_pending, skipped })
}

fn write_header(f: &mut File, path: &Path) -> Result<(), SuiteError> {
    writeln!(f, "{}", CSV_COLUMNS.join(",")).map_err(io_err(path))
}

/// Per-cell statistics over the runs of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: String,
    pub graph_size: usize,
    pub ratio: f64,
    pub n_robots: usize,
    pub n_adversaries: usize,
    pub stay: f64,
    pub runs: usize,
    pub solved: usize,
    pub failure_rate: f64,
    pub j_exp_mean: Option<f64>,
    pub j_exp_se: Option<f64>,
    pub j_real_mean: Option<f64>,
    pub delta_mean: Option<f64>,
    pub runtime_ms_mean: f64,
    pub runtime_ms_se: f64,
}

/// Groups rows by cell. Failed runs count toward `failure_rate` only; runtime
/// statistics cover every run.
pub fn aggregate(rows: &[RunRow]) -> Vec<CellSummary> {
    let mut cells: BTreeMap<CellKey, Vec<&RunRow>> = BTreeMap::new();
    for r in rows {
        cells.entry(r.cell()).or_default().push(r);
    }
    let mut out: Vec<CellSummary> = cells
        .into_values()
        .map(|runs| {
            let first = runs[0];
            let solved: Vec<&RunRow> = runs.iter().copied().filter(|r| r.solved()).collect();
            let opt = |xs: Vec<f64>| (!xs.is_empty()).then(|| mean_se(&xs));
            let j_exp = opt(solved.iter().filter_map(|r| r.j_exp).collect());
            let j_real = opt(solved.iter().filter_map(|r| r.j_real_mean).collect());
            let delta = opt(solved.iter().filter_map(|r| r.delta).collect());
            let runtimes: Vec<f64> = runs.iter().map(|r| r.runtime_ms as f64).collect();
            let (rt_mean, rt_se) = mean_se(&runtimes);
            CellSummary {
                method: first.method.clone(),
                graph_size: first.graph_size,
                ratio: first.ratio,
                n_robots: first.n_robots,
                n_adversaries: first.n_adversaries,
                stay: first.stay,
                runs: runs.len(),
                solved: solved.len(),
                failure_rate: 1.0 - solved.len() as f64 / runs.len() as f64,
                j_exp_mean: j_exp.map(|v| v.0),
                j_exp_se: j_exp.map(|v| v.1),
                j_real_mean: j_real.map(|v| v.0),
                delta_mean: delta.map(|v| v.0),
                runtime_ms_mean: rt_mean,
                runtime_ms_se: rt_se,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        (&a.method, a.graph_size, OrdF64(a.ratio), a.n_robots, a.n_adversaries, OrdF64(a.stay)).cmp(&(
            &b.method,
            b.graph_size,
            OrdF64(b.ratio),
            b.n_robots,
            b.n_adversaries,
            OrdF64(b.stay),
        ))
    });
    out
}

/// One curve: a statistic against stay probability for a fixed method,
/// graph size, ratio and team configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub method: String,
    pub graph_size: usize,
    pub ratio: f64,
    pub n_robots: usize,
    pub n_adversaries: usize,
    pub x: Vec<f64>,
    pub y: Vec<Option<f64>>,
    pub yerr: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    /// Mean expected team cost against stay probability.
    pub cost_vs_stay: Vec<PlotSeries>,
    /// Mean runtime (ms) against stay probability.
    pub runtime_vs_stay: Vec<PlotSeries>,
}

pub fn plot_data(summary: &[CellSummary]) -> PlotData {
    let mut groups: BTreeMap<(String, usize, u64, usize, usize), Vec<&CellSummary>> = BTreeMap::new();
    for c in summary {
        groups
            .entry((c.method.clone(), c.graph_size, c.ratio.to_bits(), c.n_robots, c.n_adversaries))
            .or_default()
            .push(c);
    }
    let mut cost = Vec::new();
    let mut runtime = Vec::new();
    for cells in groups.into_values() {
        let mut cells = cells;
        cells.sort_by(|a, b| a.stay.total_cmp(&b.stay));
        let c0 = cells[0];
        let series = |y: Vec<Option<f64>>, yerr: Vec<Option<f64>>| PlotSeries {
            method: c0.method.clone(),
            graph_size: c0.graph_size,
            ratio: c0.ratio,
            n_robots: c0.n_robots,
            n_adversaries: c0.n_adversaries,
            x: cells.iter().map(|c| c.stay).collect(),
            y,
            yerr,
        };
        cost.push(series(cells.iter().map(|c| c.j_exp_mean).collect(), cells.iter().map(|c| c.j_exp_se).collect()));
        runtime.push(series(
            cells.iter().map(|c| Some(c.runtime_ms_mean)).collect(),
            cells.iter().map(|c| Some(c.runtime_ms_se)).collect(),
        ));
    }
    PlotData { cost_vs_stay: cost, runtime_vs_stay: runtime }
}

/// Expected vs realized cost per cell for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub method: String,
    pub graph_size: usize,
    pub n_robots: usize,
    pub n_adversaries: usize,
    pub stay: f64,
    pub runs: usize,
    pub j_exp: f64,
    pub j_real_mean: f64,
    pub delta: f64,
    /// Standard error of the cell's mean Δ, combining per-run Monte Carlo errors.
    pub delta_se: f64,
    /// `|Δ|` above the absolute bound.
    pub exceeds_abs: bool,
    /// `|Δ|` above three standard errors.
    pub exceeds_stat: bool,
}

pub fn calibration_report(rows: &[RunRow], method: &str, abs_bound: f64) -> Vec<CalibrationRow> {
    let mut cells: BTreeMap<CellKey, Vec<&RunRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.method == method && r.solved()) {
        cells.entry(r.cell()).or_default().push(r);
    }
    cells
        .into_values()
        .map(|runs| {
            let n = runs.len() as f64;
            let j_exp = runs.iter().filter_map(|r| r.j_exp).sum::<f64>() / n;
            let j_real_mean = runs.iter().filter_map(|r| r.j_real_mean).sum::<f64>() / n;
            let delta = runs.iter().filter_map(|r| r.delta).sum::<f64>() / n;
            let delta_se = runs.iter().filter_map(|r| r.j_real_se).map(|s| s * s).sum::<f64>().sqrt() / n;
            CalibrationRow {
                method: method.to_string(),
                graph_size: runs[0].graph_size,
                n_robots: runs[0].n_robots,
                n_adversaries: runs[0].n_adversaries,
                stay: runs[0].stay,
                runs: runs.len(),
                j_exp,
                j_real_mean,
                delta,
                delta_se,
                exceeds_abs: delta.abs() > abs_bound,
                exceeds_stat: delta.abs() > 3.0 * delta_se,
            }
        })
        .collect()
}

/// Scoring-variant ablation: the grid run once per task mode with one
/// forecast-aware method per variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    /// Its `methods` and `task_mode` are replaced per run.
    pub grid: SuiteConfig,
    pub variants: Vec<ScoringVariant>,
    pub task_modes: Vec<TaskMode>,
}

impl AblationConfig {
    pub fn validate(&self) -> Result<(), SuiteError> {
        if self.variants.is_empty() || self.task_modes.is_empty() {
            return Err(SuiteError::Invalid("variants and task_modes must be nonempty".into()));
        }
        let distinct: BTreeSet<_> = self.task_modes.iter().collect();
        if distinct.len() != self.task_modes.len() {
            return Err(SuiteError::Invalid("task_modes must be distinct".into()));
        }
        self.grid.validate()
    }

    pub fn suite_for(&self, mode: TaskMode) -> SuiteConfig {
        SuiteConfig {
            methods: self.variants.iter().map(|&v| Method::ForecastAware(v)).collect(),
            task_mode: mode,
            ..self.grid.clone()
        }
    }
}

/// Runs the ablation, writing `<out_prefix>_<mode>.csv` per task mode.
pub fn ablation_scoring(
    config: &AblationConfig,
    out_prefix: &Path,
    workers: usize,
) -> Result<Vec<(TaskMode, PathBuf, SuiteReport)>, SuiteError> {
    config.validate()?;
    config
        .task_modes
        .iter()
        .map(|&mode| {
            let mut name = out_prefix.file_name().map(|n| n.to_os_string()).unwrap_or_default();
            name.push(format!("_{mode}.csv"));
            let path = out_prefix.with_file_name(name);
            let report = run_suite(&config.suite_for(mode), &path, workers)?;
            Ok((mode, path, report))
        })
        .collect()
}
