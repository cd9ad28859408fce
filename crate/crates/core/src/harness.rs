//! Monte Carlo experiments over scenario sweeps.
//!
//! Replication `r` of point `p` draws from the stream `(master, p, r)`, so
//! results do not depend on the worker count, on scheduling or on how many
//! replications are planned. Results are checkpointed to the run directory
//! and a run can be resumed from it.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::config::{to_toml, ExperimentConfig, Sweep};
use crate::dgp::{generate_dataset, Dataset};
use crate::error::{ConfigError, Error, Result};
use crate::evaluation::{aggregate, score, MetricKey, ReplicationMetrics, SummaryRow};
use crate::glmm::{fit_model, ClusteredData, FitOptions, FitResult, FitStatus, ModelForm};
use crate::indicators::{self, HospitalIndicators, ModelFits, RegionIndicators};
use crate::rng::StreamSeed;
use crate::scenario::{Scenario, ScenarioParam};

pub const DEFAULT_REPLICATIONS: u32 = 1000;
pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_CHECKPOINT_EVERY: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub base: Scenario,
    pub sweep: Option<Sweep>,
    pub replications: u32,
    pub master_seed: u64,
    pub workers: usize,
}

impl ExperimentPlan {
    pub fn new(config: ExperimentConfig) -> Self {
        ExperimentPlan {
            base: config.scenario,
            sweep: config.sweep,
            replications: DEFAULT_REPLICATIONS,
            master_seed: DEFAULT_SEED,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }

    pub fn config(&self) -> ExperimentConfig {
        ExperimentConfig { scenario: self.base, sweep: self.sweep.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPoint {
    pub index: u32,
    pub param: Option<ScenarioParam>,
    pub value: Option<f64>,
    pub scenario: Scenario,
}

impl ScenarioPoint {
    pub fn label(&self) -> String {
        self.param.map_or_else(|| "baseline".to_string(), |p| p.key().to_string())
    }
}

/// One scenario per sweep value with everything else at the base scenario,
/// or the base scenario alone without a sweep.
pub fn expand_plan(plan: &ExperimentPlan) -> Result<Vec<ScenarioPoint>> {
    if plan.replications == 0 {
        return Err(ConfigError::Parse("replications must be at least 1".into()).into());
    }
    plan.base.validate()?;
    let Some(sweep) = &plan.sweep else {
        return Ok(vec![ScenarioPoint { index: 0, param: None, value: None, scenario: plan.base }]);
    };
    sweep
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let scenario = plan.base.with(sweep.param, v)?;
            scenario.validate()?;
            Ok(ScenarioPoint { index: i as u32, param: Some(sweep.param), value: Some(v), scenario })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Replication {
    pub dataset: Dataset,
    pub fits: ModelFits,
    pub hospital: HospitalIndicators,
    pub region: RegionIndicators,
    pub metrics: ReplicationMetrics,
}

impl Replication {
    /// Fit status per form; `None` when fitting raised an error.
    pub fn statuses(&self) -> Vec<(ModelForm, Option<FitStatus>)> {
        ModelForm::ALL.iter().map(|&f| (f, self.fits.get(f).map(|fit| fit.status))).collect()
    }
}

fn fit(data: &ClusteredData, form: ModelForm) -> Option<FitResult> {
    fit_model(data, form, &FitOptions::default()).ok()
}

/// Generates one dataset, fits all four model forms, computes every
/// indicator and scores them. A failed fit only removes the indicators that
/// depend on it.
pub fn run_replication(scenario: &Scenario, seed: StreamSeed) -> Result<Replication> {
    let dataset = generate_dataset(scenario, seed)?;
    let data = ClusteredData::from_dataset(&dataset);
    let fits = ModelFits {
        glm: fit(&data, ModelForm::GlmPatient),
        random_intercept: fit(&data, ModelForm::RandomIntercept),
        full: fit(&data, ModelForm::MqiFull),
        no_region: fit(&data, ModelForm::MqiNoRegion),
    };
    let (hospital, region) = indicators::compute(&dataset, &fits)?;
    let metrics = score(&dataset, &hospital, &region, &fits);
    Ok(Replication { dataset, fits, hospital, region, metrics })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub point: u32,
    pub replication: u32,
    pub stream: u64,
    pub statuses: Vec<Option<FitStatus>>,
    pub boundary_ties: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLedger {
    pub rows: Vec<LedgerRow>,
    /// File name of the summary table within the run directory.
    pub summary: String,
}

pub const LEDGER_HEADER: &str =
    "point,replication,stream,glm,random_intercept,mqi_full,mqi_noregion,boundary_ties,wall_ms";

fn status_name(s: Option<FitStatus>) -> &'static str {
    match s {
        Some(FitStatus::Converged) => "converged",
        Some(FitStatus::Boundary) => "boundary",
        Some(FitStatus::NotConverged) => "not_converged",
        Some(FitStatus::Separation) => "separation",
        None => "error",
    }
}

fn parse_status(s: &str) -> Option<Option<FitStatus>> {
    Some(match s {
        "converged" => Some(FitStatus::Converged),
        "boundary" => Some(FitStatus::Boundary),
        "not_converged" => Some(FitStatus::NotConverged),
        "separation" => Some(FitStatus::Separation),
        "error" => None,
        _ => return None,
    })
}

impl LedgerRow {
    fn to_csv(&self) -> String {
        let statuses: Vec<&str> = self.statuses.iter().map(|&s| status_name(s)).collect();
        format!(
            "{},{},{},{},{},{:.3}",
            self.point,
            self.replication,
            self.stream,
            statuses.join(","),
            self.boundary_ties,
            self.wall_ms
        )
    }

    fn from_csv(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return None;
        }
        Some(LedgerRow {
            point: f[0].parse().ok()?,
            replication: f[1].parse().ok()?,
            stream: f[2].parse().ok()?,
            statuses: f[3..7].iter().map(|s| parse_status(s)).collect::<Option<Vec<_>>>()?,
            boundary_ties: f[7].parse().ok()?,
            wall_ms: f[8].parse().ok()?,
        })
    }
}

/// All replication metrics plus the derived summary and ledger.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub points: Vec<ScenarioPoint>,
    /// `metrics[p][r]` for point `p`, replication `r`.
    pub metrics: Vec<Vec<ReplicationMetrics>>,
    pub summary: Vec<SummaryRow>,
    pub ledger: RunLedger,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Write per-replication dataset and indicator tables.
    pub dump_datasets: bool,
    /// Replications between checkpoint flushes; 0 selects the default.
    pub checkpoint_every: usize,
    /// Print a progress counter to stderr.
    pub progress: bool,
}

pub const SUMMARY_FILE: &str = "summary.csv";
pub const LEDGER_FILE: &str = "ledger.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const PLAN_FILE: &str = "plan.toml";

/// Directory name `run-<UTC timestamp>-seed<seed>`.
pub fn run_dir_name(seed: u64) -> String {
    format!("run-{}-seed{}", chrono::Utc::now().format("%Y%m%dT%H%M%SZ"), seed)
}

fn summarize(points: &[ScenarioPoint], metrics: &[Vec<ReplicationMetrics>]) -> Vec<SummaryRow> {
    points
        .iter()
        .zip(metrics)
        .flat_map(|(point, reps)| {
            aggregate(reps).into_iter().map(move |aggregate| SummaryRow {
                scenario_param: point.label(),
                param_value: point.value,
                aggregate,
            })
        })
        .collect()
}

struct Task {
    point: u32,
    replication: u32,
}

struct Done {
    point: u32,
    replication: u32,
    metrics: ReplicationMetrics,
    ledger: LedgerRow,
}

fn execute(points: &[ScenarioPoint], plan: &ExperimentPlan, task: &Task, dumps: Option<&Path>) -> Result<Done> {
    let seed = StreamSeed::new(plan.master_seed, task.point, task.replication);
    let start = Instant::now();
    let rep = run_replication(&points[task.point as usize].scenario, seed)?;
    if let Some(dir) = dumps {
        write_dumps(dir, task, &rep)?;
    }
    let ledger = LedgerRow {
        point: task.point,
        replication: task.replication,
        stream: seed.stream_id(),
        statuses: rep.statuses().into_iter().map(|(_, s)| s).collect(),
        boundary_ties: rep.metrics.boundary_ties.len(),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok(Done { point: task.point, replication: task.replication, metrics: rep.metrics, ledger })
}

fn write_dumps(dir: &Path, task: &Task, rep: &Replication) -> Result<()> {
    let stem = format!("p{:03}_r{:05}", task.point, task.replication);
    let create = |suffix: &str| -> Result<BufWriter<File>> {
        let path = dir.join(format!("{stem}_{suffix}.csv"));
        File::create(&path).map(BufWriter::new).map_err(|e| Error::io(path.display().to_string(), e))
    };
    rep.dataset.write_csv(create("patients")?)?;
    indicators::write_hospital_csv(&rep.dataset, &rep.hospital, create("hospitals")?)?;
    indicators::write_region_csv(&rep.dataset, &rep.region, create("regions")?)?;
    Ok(())
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Format { what: "thread pool", detail: e.to_string() })
}

/// Runs the plan in memory.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentOutput> {
    run(plan, None, &RunOptions::default())
}

/// Runs the plan with results, checkpoints and the summary in `dir`.
/// Replications already recorded in `dir` by an interrupted run of the same
/// plan are not repeated.
pub fn run_experiment_in(plan: &ExperimentPlan, dir: &Path, opts: &RunOptions) -> Result<ExperimentOutput> {
    run(plan, Some(dir), opts)
}

fn run(plan: &ExperimentPlan, dir: Option<&Path>, opts: &RunOptions) -> Result<ExperimentOutput> {
    let points = expand_plan(plan)?;
    let reps = plan.replications;
    let mut done: BTreeMap<(u32, u32), (ReplicationMetrics, LedgerRow)> = BTreeMap::new();
    let mut checkpoint = None;
    let mut dumps = None;
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        done = resume(plan, dir)?;
        checkpoint = Some(Checkpoint::open(dir, done.is_empty())?);
        if opts.dump_datasets {
            let d = dir.join("datasets");
            fs::create_dir_all(&d).map_err(|e| Error::io(d.display().to_string(), e))?;
            dumps = Some(d);
        }
    }

    let tasks: Vec<Task> = points
        .iter()
        .flat_map(|p| (0..reps).map(move |r| Task { point: p.index, replication: r }))
        .filter(|t| !done.contains_key(&(t.point, t.replication)))
        .collect();
    let total = points.len() * reps as usize;
    let chunk = if opts.checkpoint_every == 0 { DEFAULT_CHECKPOINT_EVERY } else { opts.checkpoint_every };
    let pool = pool(plan.workers)?;
    for batch in tasks.chunks(chunk.max(1)) {
        let results: Vec<Result<Done>> =
            pool.install(|| batch.par_iter().map(|t| execute(&points, plan, t, dumps.as_deref())).collect());
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;
        if let Some(cp) = checkpoint.as_mut() {
            cp.append(&results)?;
        }
        for d in results {
            done.insert((d.point, d.replication), (d.metrics, d.ledger));
        }
        if opts.progress {
            eprint!("\r{}/{} replications", done.len(), total);
        }
    }
    if opts.progress {
        eprintln!();
    }

    let mut metrics: Vec<Vec<ReplicationMetrics>> = vec![Vec::with_capacity(reps as usize); points.len()];
    let mut rows = Vec::with_capacity(total);
    for ((p, r), (m, l)) in done {
        if p as usize >= points.len() || r >= reps {
            continue;
        }
        metrics[p as usize].push(m);
        rows.push(l);
    }
    let summary = summarize(&points, &metrics);
    let ledger = RunLedger { rows, summary: SUMMARY_FILE.to_string() };

    if let Some(dir) = dir {
        write_file(&dir.join(SUMMARY_FILE), |w| crate::evaluation::write_summary_csv(&summary, w))?;
        write_file(&dir.join(LEDGER_FILE), |w| {
            let io = |e| Error::io("writing ledger", e);
            writeln!(w, "{LEDGER_HEADER}").map_err(io)?;
            for row in &ledger.rows {
                writeln!(w, "{}", row.to_csv()).map_err(io)?;
            }
            Ok(())
        })?;
    }
    Ok(ExperimentOutput { points, metrics, summary, ledger })
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

/// Append-only record of finished replications: `metrics.csv` with exact
/// metric values and `ledger.partial.csv` with the ledger rows.
struct Checkpoint {
    metrics: BufWriter<File>,
    ledger: BufWriter<File>,
}

const PARTIAL_LEDGER: &str = "ledger.partial.csv";

fn metrics_header() -> String {
    let keys: Vec<String> =
        MetricKey::all().iter().map(|k| format!("{}:{}", k.indicator.name(), k.metric.name())).collect();
    format!("point,replication,failed_models,boundary_ties,{}", keys.join(","))
}

impl Checkpoint {
    fn open(dir: &Path, fresh: bool) -> Result<Self> {
        let open = |name: &str, header: &str| -> Result<BufWriter<File>> {
            let path = dir.join(name);
            let file = if fresh {
                let mut f = File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
                writeln!(f, "{header}").map_err(|e| Error::io(path.display().to_string(), e))?;
                f
            } else {
                let torn =
                    fs::read(&path).map_err(|e| Error::io(path.display().to_string(), e))?.last() != Some(&b'\n');
                let mut f = OpenOptions::new()
                    .append(true)
                    .open(&path)
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
                if torn {
                    writeln!(f).map_err(|e| Error::io(path.display().to_string(), e))?;
                }
                f
            };
            Ok(BufWriter::new(file))
        };
        Ok(Checkpoint { metrics: open(METRICS_FILE, &metrics_header())?, ledger: open(PARTIAL_LEDGER, LEDGER_HEADER)? })
    }

    fn append(&mut self, results: &[Done]) -> Result<()> {
        let io = |e| Error::io("writing checkpoint", e);
        for d in results {
            let failed: Vec<&str> = d.metrics.failed_models.iter().map(|&f| f.name()).collect();
            let ties: Vec<String> =
                d.metrics.boundary_ties.iter().map(|k| format!("{}:{}", k.indicator.name(), k.metric.name())).collect();
            let values: Vec<String> = MetricKey::all()
                .iter()
                .map(|k| match d.metrics.values.get(k).copied().flatten() {
                    Some(v) => format!("{v:?}"),
                    None => "NA".to_string(),
                })
                .collect();
            writeln!(
                self.metrics,
                "{},{},{},{},{}",
                d.point,
                d.replication,
                failed.join(";"),
                ties.join(";"),
                values.join(",")
            )
            .map_err(io)?;
            writeln!(self.ledger, "{}", d.ledger.to_csv()).map_err(io)?;
        }
        self.metrics.flush().map_err(io)?;
        self.ledger.flush().map_err(io)
    }
}

fn corrupt(detail: String) -> Error {
    Error::Format { what: "checkpoint", detail }
}

fn parse_key(s: &str) -> Option<MetricKey> {
    MetricKey::all().into_iter().find(|k| format!("{}:{}", k.indicator.name(), k.metric.name()) == s)
}

fn parse_form(s: &str) -> Option<ModelForm> {
    ModelForm::ALL.into_iter().find(|f| f.name() == s)
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(';').filter(|x| !x.is_empty())
}

/// Reads finished replications of an interrupted run. The plan file written
/// on first start must match the current plan.
fn resume(plan: &ExperimentPlan, dir: &Path) -> Result<BTreeMap<(u32, u32), (ReplicationMetrics, LedgerRow)>> {
    let plan_path = dir.join(PLAN_FILE);
    let plan_text = plan_file(plan);
    let metrics_path = dir.join(METRICS_FILE);
    let ledger_path = dir.join(PARTIAL_LEDGER);
    if !plan_path.exists() || !metrics_path.exists() || !ledger_path.exists() {
        fs::write(&plan_path, &plan_text).map_err(|e| Error::io(plan_path.display().to_string(), e))?;
        return Ok(BTreeMap::new());
    }
    let previous = fs::read_to_string(&plan_path).map_err(|e| Error::io(plan_path.display().to_string(), e))?;
    if previous != plan_text {
        return Err(ConfigError::Parse(format!("{} belongs to a different plan", dir.display())).into());
    }

    let mut ledger = BTreeMap::new();
    let file = File::open(&ledger_path).map_err(|e| Error::io(ledger_path.display().to_string(), e))?;
    for line in BufReader::new(file).lines().skip(1) {
        let line = line.map_err(|e| Error::io(ledger_path.display().to_string(), e))?;
        if let Some(row) = LedgerRow::from_csv(&line) {
            ledger.insert((row.point, row.replication), row);
        }
    }

    let keys = MetricKey::all();
    let mut done = BTreeMap::new();
    let file = File::open(&metrics_path).map_err(|e| Error::io(metrics_path.display().to_string(), e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().transpose().map_err(|e| Error::io(metrics_path.display().to_string(), e))?;
    if header.as_deref() != Some(metrics_header().as_str()) {
        return Err(corrupt("metrics header does not match".into()));
    }
    for line in lines {
        let line = line.map_err(|e| Error::io(metrics_path.display().to_string(), e))?;
        let f: Vec<&str> = line.split(',').collect();
        // A torn final line from an interrupted write is skipped.
        if f.len() != 4 + keys.len() {
            continue;
        }
        let (Ok(point), Ok(replication)) = (f[0].parse::<u32>(), f[1].parse::<u32>()) else {
            continue;
        };
        let Some(row) = ledger.remove(&(point, replication)) else {
            continue;
        };
        let failed_models = split_list(f[2])
            .map(|s| parse_form(s).ok_or_else(|| corrupt(format!("model `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        let boundary_ties = split_list(f[3])
            .map(|s| parse_key(s).ok_or_else(|| corrupt(format!("metric `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        let mut values = BTreeMap::new();
        for (k, text) in keys.iter().zip(&f[4..]) {
            let v = if *text == "NA" {
                None
            } else {
                Some(text.parse::<f64>().map_err(|_| corrupt(format!("value `{text}`")))?)
            };
            values.insert(*k, v);
        }
        done.insert((point, replication), (ReplicationMetrics { values, failed_models, boundary_ties }, row));
    }
    Ok(done)
}

fn plan_file(plan: &ExperimentPlan) -> String {
    format!("# replications = {}\n# master_seed = {}\n{}", plan.replications, plan.master_seed, to_toml(&plan.config()))
}

/// Creates a fresh run directory under `base`.
pub fn create_run_dir(base: &Path, seed: u64) -> Result<PathBuf> {
    let dir = base.join(run_dir_name(seed));
    fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    Ok(dir)
}
