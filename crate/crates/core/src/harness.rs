//! Closed-loop trials, sweeps, metrics tables, and subproblem replay.
//!
//! # Metrics table
//!
//! [`write_trial_csv`] writes one row per (config, trial) with this header:
//!
//! | column | meaning |
//! |---|---|
//! | `method` | coordination method string (`sequential`, `rsp:4`, `rrsp:4:20:12`, `myopic`, `random`) |
//! | `n_r`, `n_targets` | team size and number of targets |
//! | `n_d` | round count for RSP/RRSP, empty otherwise |
//! | `trial`, `trial_seed` | trial index and its derived seed |
//! | `steps`, `burn_in` | simulation length and excluded prefix |
//! | `mean_entropy` | mean target entropy (bits) over steps `burn_in+1..=steps` |
//! | `final_entropy` | mean target entropy after the last step |
//! | `mean_objective` | mean sampled objective of the chosen joint action per epoch |
//! | `objective_per_robot` | `mean_objective / n_r` |
//! | `redundancy_per_robot` | mean over measured epochs of the all-pairs weight sum over `n_r`; `NaN` when never measured |
//! | `redundancy_epochs` | number of epochs the redundancy was measured on |
//! | `sequential_steps` | largest per-epoch round count |
//! | `messages_per_epoch` | mean decision messages per epoch |
//! | `wall_per_epoch` | mean planning wall time per epoch (seconds; not reproducible) |
//! | `fallbacks` | robot-epochs where the planner failed and `Stay` was used |
//! | `degenerate_updates` | filter updates skipped for vanishing posterior mass |
//! | `status` | `ok`, or the error that ended the trial (metrics are then `NaN`) |
//!
//! [`write_epoch_csv`] writes one row per (config, trial, epoch) with
//! `method, n_r, trial, epoch, mean_entropy, objective, redundancy_per_robot,
//! sequential_steps, messages, wall_seconds, fallbacks`. `mean_entropy` there
//! is measured after the epoch's step is executed.
//!
//! # Subproblem records
//!
//! One JSON file per logged epoch, named
//! `{method}_nr{n_r}_trial{trial_seed as hex}_epoch{epoch}.json` with `:` replaced
//! by `-`.
//! The fields are those of [`SubproblemRecord`]; floats are written at full
//! precision and `version` is [`crate::bounds::RECORD_VERSION`].
//!
//! # Config file
//!
//! Plain `key = value` lines (TOML). Every key is optional:
//!
//! ```text
//! n_robots = 8            # team size
//! n_targets = 8           # defaults to n_robots
//! method = "rsp:4"        # see the method column above
//! horizon = 2
//! steps = 100
//! burn_in = 20
//! trials = 20
//! mcts_iterations = 1000
//! mcts_millis = 50        # optional wall-time budget instead of iterations
//! samples = 32            # objective samples behind each planner
//! seed = 1                # master seed
//! redraw_rounds = true    # false keeps one RSP assignment per trial
//! record_every = 0        # log a subproblem every k epochs (0 = off)
//! reference_samples = 256
//! redundancy_every = 0    # measure redundancy every k epochs from burn_in on (0 = off)
//! capacity_samples = 64
//! output = "metrics.csv"
//! epoch_output = "epochs.csv"
//! records_dir = "records"
//! ```
//!
//! A sweep file adds `n_robots_list = [8, 16]` and `methods = ["sequential", "rsp:4"]`
//! to the same keys.

use crate::bounds::{total_redundancy, weight_hat, SubproblemRecord};
use crate::coordination::{
    plan_epoch_with_rounds, CoordinationMethod, MethodTag, Planner, PlannerConfig, DEFAULT_TARGET_RANGE,
};
use crate::mcts::Budget;
use crate::objective::{
    ObjectiveContext, ObjectiveSettings, Sensor, CAPACITY_SAMPLES, DEFAULT_SAMPLES, REFERENCE_SAMPLES,
};
use crate::seeds::{self, purpose};
use crate::sensing::{RangeSensorModel, SPARSE_THRESHOLD};
use crate::submodular::Selection;
use crate::world::{Grid, WorldState};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

/// Teams at least this large use sparse filters.
pub const SPARSE_TEAM_SIZE: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_robots: usize,
    pub n_targets: Option<usize>,
    pub method: MethodTag,
    pub horizon: usize,
    pub steps: usize,
    pub burn_in: usize,
    pub trials: usize,
    pub mcts_iterations: u64,
    pub mcts_millis: Option<u64>,
    pub samples: usize,
    pub seed: u64,
    pub redraw_rounds: bool,
    pub record_every: usize,
    pub reference_samples: usize,
    pub redundancy_every: usize,
    pub capacity_samples: usize,
    pub output: Option<PathBuf>,
    pub epoch_output: Option<PathBuf>,
    pub records_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_robots: 8,
            n_targets: None,
            method: MethodTag(CoordinationMethod::Rsp { n_d: 4 }),
            horizon: 2,
            steps: 100,
            burn_in: 20,
            trials: 20,
            mcts_iterations: 1000,
            mcts_millis: None,
            samples: DEFAULT_SAMPLES,
            seed: 1,
            redraw_rounds: true,
            record_every: 0,
            reference_samples: REFERENCE_SAMPLES,
            redundancy_every: 0,
            capacity_samples: CAPACITY_SAMPLES,
            output: None,
            epoch_output: None,
            records_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn method(&self) -> &CoordinationMethod {
        &self.method.0
    }

    pub fn num_targets(&self) -> usize {
        self.n_targets.unwrap_or(self.n_robots)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.n_robots == 0 {
            return bad("n_robots must be at least 1");
        }
        if self.num_targets() == 0 {
            return bad("n_targets must be at least 1");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if self.steps <= self.burn_in {
            return bad("steps must exceed burn_in");
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.samples == 0 || self.reference_samples == 0 || self.capacity_samples == 0 {
            return bad("sample counts must be at least 1");
        }
        self.method().validate()
    }

    pub fn planner(&self) -> PlannerConfig {
        let budget = match self.mcts_millis {
            Some(ms) => Budget::wall_time(Duration::from_millis(ms)),
            None => Budget::iterations(self.mcts_iterations),
        };
        PlannerConfig {
            planner: Planner::Mcts(budget),
            samples: self.samples,
        }
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        seeds::derive(self.seed, &[purpose::TRIAL, trial as u64])
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Cartesian sweep over team sizes and methods sharing one base config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(flatten)]
    pub base: ExperimentConfig,
    pub n_robots_list: Vec<usize>,
    pub methods: Vec<MethodTag>,
    /// Method whose epochs are written as subproblem records.
    #[serde(default = "default_log_method")]
    pub log_method: Option<MethodTag>,
}

fn default_log_method() -> Option<MethodTag> {
    Some(MethodTag(CoordinationMethod::Rsp { n_d: 4 }))
}

impl SweepConfig {
    pub fn configs(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &n in &self.n_robots_list {
            for m in &self.methods {
                let mut c = self.base.clone();
                c.n_robots = n;
                c.method = *m;
                if self.log_method.as_ref() != Some(m) {
                    c.record_every = 0;
                }
                out.push(c);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_robots_list.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidArgument("sweep needs team sizes and methods".into()));
        }
        self.configs().iter().try_for_each(ExperimentConfig::validate)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(text).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Everything measured during one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub trial: usize,
    pub trial_seed: u64,
    /// `entropies[t][k]`: entropy of target `k` after step `t + 1`.
    pub entropies: Vec<Vec<f64>>,
    pub mean_entropy: f64,
    /// Per epoch.
    pub objective: Vec<f64>,
    pub redundancy_per_robot: Vec<Option<f64>>,
    pub sequential_steps: Vec<usize>,
    pub messages: Vec<usize>,
    pub wall_seconds: Vec<f64>,
    pub fallbacks: Vec<usize>,
    pub degenerate_updates: u64,
}

impl TrialMetrics {
    pub fn step_entropy(&self, step: usize) -> f64 {
        mean(&self.entropies[step])
    }
}

/// Trial metrics plus the subproblems it logged.
#[derive(Clone, Debug)]
pub struct TrialOutput {
    pub metrics: TrialMetrics,
    pub records: Vec<SubproblemRecord>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Mean over steps `burn_in + 1 ..= steps` of the per-step mean target entropy.
pub fn post_burn_in_mean(entropies: &[Vec<f64>], burn_in: usize) -> f64 {
    let tail: Vec<f64> = entropies.iter().skip(burn_in).map(|e| mean(e)).collect();
    mean(&tail)
}

pub fn epoch_seed(trial_seed: u64, epoch: u64) -> u64 {
    seeds::derive(trial_seed, &[purpose::OBJECTIVE, epoch])
}

/// Runs one closed-loop trial.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<TrialOutput> {
    cfg.validate()?;
    let trial_seed = cfg.trial_seed(trial);
    let grid = Grid::for_team(cfg.n_robots)?;
    let sparse = if cfg.n_robots >= SPARSE_TEAM_SIZE {
        SPARSE_THRESHOLD
    } else {
        0.0
    };
    let mut world = WorldState::initialize(grid, cfg.n_robots, cfg.num_targets(), sparse, trial_seed);
    let sensor = Arc::new(Sensor::range(&grid, RangeSensorModel::default()));
    let settings = ObjectiveSettings {
        horizon: cfg.horizon,
        ..ObjectiveSettings::default()
    };
    let planner = cfg.planner();
    let round_seed = seeds::derive(trial_seed, &[purpose::ROUNDS]);
    let mut m = TrialMetrics {
        trial,
        trial_seed,
        entropies: Vec::with_capacity(cfg.steps),
        mean_entropy: f64::NAN,
        objective: Vec::with_capacity(cfg.steps),
        redundancy_per_robot: Vec::with_capacity(cfg.steps),
        sequential_steps: Vec::with_capacity(cfg.steps),
        messages: Vec::with_capacity(cfg.steps),
        wall_seconds: Vec::with_capacity(cfg.steps),
        fallbacks: Vec::with_capacity(cfg.steps),
        degenerate_updates: 0,
    };
    let mut records = Vec::new();
    for epoch in 0..cfg.steps as u64 {
        let snap = world.snapshot();
        let ctx = ObjectiveContext::new(&snap, Arc::clone(&sensor), settings)?;
        let es = epoch_seed(trial_seed, epoch);
        let rs = if cfg.redraw_rounds { es } else { round_seed };
        let start = Instant::now();
        let plan = plan_epoch_with_rounds(&ctx, cfg.method(), &planner, epoch, es, rs)?;
        m.wall_seconds.push(start.elapsed().as_secs_f64());

        let metric_seed = seeds::derive(es, &[purpose::METRIC]);
        m.objective.push(
            ctx.estimator(cfg.samples, metric_seed, None)?
                .estimate(&plan.selection)?
                .mean,
        );
        let measure = |every: usize| every > 0 && epoch % every as u64 == 0;
        let settled =
            epoch >= cfg.burn_in as u64 && (epoch - cfg.burn_in as u64) % cfg.redundancy_every.max(1) as u64 == 0;
        m.redundancy_per_robot.push(if cfg.redundancy_every > 0 && settled {
            let scopes: Vec<Vec<usize>> = (0..cfg.n_robots)
                .map(|i| ctx.target_scope(i, DEFAULT_TARGET_RANGE))
                .collect();
            let caps = ctx.capacity_matrix(cfg.capacity_samples, metric_seed, Some(&scopes))?;
            Some(total_redundancy(&weight_hat(&caps), &plan.graph)?.per_robot)
        } else {
            None
        });
        m.sequential_steps.push(plan.sequential_steps());
        m.messages.push(plan.messages.len());
        m.fallbacks.push(plan.fallbacks.len());

        let controls: Vec<_> = (0..cfg.n_robots).map(|i| plan.controls(i)[0]).collect();
        if measure(cfg.record_every) {
            records.push(SubproblemRecord::new(
                cfg.method,
                trial_seed,
                epoch,
                es,
                settings,
                snap,
                plan.graph,
                plan.scopes,
                &plan.selection,
                cfg.reference_samples,
                seeds::derive(es, &[purpose::REFERENCE]),
            )?);
        }
        world.advance(&controls)?;
        m.entropies.push(world.filters.iter().map(|f| f.entropy()).collect());
    }
    m.degenerate_updates = world.degenerate_updates();
    m.mean_entropy = post_burn_in_mean(&m.entropies, cfg.burn_in);
    Ok(TrialOutput { metrics: m, records })
}

/// One row of the metrics table. See the module docs for the schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub method: String,
    pub n_r: usize,
    pub n_targets: usize,
    pub n_d: Option<usize>,
    pub trial: usize,
    pub trial_seed: u64,
    pub steps: usize,
    pub burn_in: usize,
    pub mean_entropy: f64,
    pub final_entropy: f64,
    pub mean_objective: f64,
    pub objective_per_robot: f64,
    pub redundancy_per_robot: f64,
    pub redundancy_epochs: usize,
    pub sequential_steps: usize,
    pub messages_per_epoch: f64,
    pub wall_per_epoch: f64,
    pub fallbacks: usize,
    pub degenerate_updates: u64,
    pub status: String,
}

fn n_d_of(m: &CoordinationMethod) -> Option<usize> {
    match *m {
        CoordinationMethod::Rsp { n_d } | CoordinationMethod::Rrsp { n_d, .. } => Some(n_d),
        _ => None,
    }
}

impl TrialRow {
    fn base(cfg: &ExperimentConfig, trial: usize, status: String) -> Self {
        TrialRow {
            method: cfg.method().to_string(),
            n_r: cfg.n_robots,
            n_targets: cfg.num_targets(),
            n_d: n_d_of(cfg.method()),
            trial,
            trial_seed: cfg.trial_seed(trial),
            steps: cfg.steps,
            burn_in: cfg.burn_in,
            mean_entropy: f64::NAN,
            final_entropy: f64::NAN,
            mean_objective: f64::NAN,
            objective_per_robot: f64::NAN,
            redundancy_per_robot: f64::NAN,
            redundancy_epochs: 0,
            sequential_steps: 0,
            messages_per_epoch: f64::NAN,
            wall_per_epoch: f64::NAN,
            fallbacks: 0,
            degenerate_updates: 0,
            status,
        }
    }

    pub fn from_metrics(cfg: &ExperimentConfig, m: &TrialMetrics) -> Self {
        let red: Vec<f64> = m.redundancy_per_robot.iter().flatten().copied().collect();
        let objective = mean(&m.objective);
        TrialRow {
            mean_entropy: m.mean_entropy,
            final_entropy: m.entropies.last().map_or(f64::NAN, |e| mean(e)),
            mean_objective: objective,
            objective_per_robot: objective / cfg.n_robots as f64,
            redundancy_per_robot: mean(&red),
            redundancy_epochs: red.len(),
            sequential_steps: m.sequential_steps.iter().copied().max().unwrap_or(0),
            messages_per_epoch: mean(&m.messages.iter().map(|&x| x as f64).collect::<Vec<_>>()),
            wall_per_epoch: mean(&m.wall_seconds),
            fallbacks: m.fallbacks.iter().sum(),
            degenerate_updates: m.degenerate_updates,
            ..Self::base(cfg, m.trial, "ok".into())
        }
    }

    pub fn failed(cfg: &ExperimentConfig, trial: usize, err: &Error) -> Self {
        Self::base(cfg, trial, err.to_string())
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// One row of the per-epoch table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub method: String,
    pub n_r: usize,
    pub trial: usize,
    pub epoch: usize,
    pub mean_entropy: f64,
    pub objective: f64,
    pub redundancy_per_robot: f64,
    pub sequential_steps: usize,
    pub messages: usize,
    pub wall_seconds: f64,
    pub fallbacks: usize,
}

pub fn epoch_rows(cfg: &ExperimentConfig, m: &TrialMetrics) -> Vec<EpochRow> {
    (0..m.objective.len())
        .map(|e| EpochRow {
            method: cfg.method().to_string(),
            n_r: cfg.n_robots,
            trial: m.trial,
            epoch: e,
            mean_entropy: m.step_entropy(e),
            objective: m.objective[e],
            redundancy_per_robot: m.redundancy_per_robot[e].unwrap_or(f64::NAN),
            sequential_steps: m.sequential_steps[e],
            messages: m.messages[e],
            wall_seconds: m.wall_seconds[e],
            fallbacks: m.fallbacks[e],
        })
        .collect()
}

/// Output of a set of trials.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub rows: Vec<TrialRow>,
    pub epochs: Vec<EpochRow>,
    pub records: Vec<SubproblemRecord>,
}

impl Dataset {
    fn extend(&mut self, other: Dataset) {
        self.rows.extend(other.rows);
        self.epochs.extend(other.epochs);
        self.records.extend(other.records);
    }

    /// Mean of `f` over successful rows matching `method` and `n_r`.
    pub fn mean_of(&self, method: &str, n_r: usize, f: impl Fn(&TrialRow) -> f64) -> f64 {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.is_ok() && r.method == method && r.n_r == n_r)
            .map(f)
            .collect();
        mean(&v)
    }
}

/// Runs every trial of one config; failed trials become flagged rows.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Dataset> {
    cfg.validate()?;
    let outputs: Vec<(usize, Result<TrialOutput>)> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| (t, run_trial(cfg, t)))
        .collect();
    let mut data = Dataset::default();
    for (t, out) in outputs {
        match out {
            Ok(o) => {
                data.rows.push(TrialRow::from_metrics(cfg, &o.metrics));
                data.epochs.extend(epoch_rows(cfg, &o.metrics));
                data.records.extend(o.records);
            }
            Err(e) => data.rows.push(TrialRow::failed(cfg, t, &e)),
        }
    }
    Ok(data)
}

pub fn run_sweep(sweep: &SweepConfig) -> Result<Dataset> {
    sweep.validate()?;
    let mut data = Dataset::default();
    for cfg in sweep.configs() {
        data.extend(run_experiment(&cfg)?);
    }
    Ok(data)
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    for r in rows {
        w.serialize(r).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(io_err)?;
    r.deserialize().map(|row| row.map_err(io_err)).collect()
}

pub fn write_trial_csv(path: &Path, rows: &[TrialRow]) -> Result<()> {
    write_csv(path, rows)
}

pub fn read_trial_csv(path: &Path) -> Result<Vec<TrialRow>> {
    read_csv(path)
}

pub fn write_epoch_csv(path: &Path, rows: &[EpochRow]) -> Result<()> {
    write_csv(path, rows)
}

pub fn read_epoch_csv(path: &Path) -> Result<Vec<EpochRow>> {
    read_csv(path)
}

pub fn record_file_name(rec: &SubproblemRecord) -> String {
    format!(
        "{}_nr{}_trial{:x}_epoch{}.json",
        rec.method.0.to_string().replace(':', "-"),
        rec.graph.num_robots(),
        rec.trial_seed,
        rec.epoch
    )
}

/// Writes each record to its own file; returns the paths written.
pub fn write_records(dir: &Path, records: &[SubproblemRecord]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    records
        .iter()
        .map(|r| {
            let p = dir.join(record_file_name(r));
            r.save(&p)?;
            Ok(p)
        })
        .collect()
}

/// Loads every `.json` record in `dir`, sorted by file name.
pub fn read_records(dir: &Path) -> Result<Vec<SubproblemRecord>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| SubproblemRecord::load(p)).collect()
}

/// Writes the dataset to the paths named in `cfg`.
pub fn write_outputs(cfg: &ExperimentConfig, data: &Dataset) -> Result<()> {
    if let Some(p) = &cfg.output {
        write_trial_csv(p, &data.rows)?;
    }
    if let Some(p) = &cfg.epoch_output {
        write_epoch_csv(p, &data.epochs)?;
    }
    if let Some(d) = &cfg.records_dir {
        write_records(d, &data.records)?;
    }
    Ok(())
}

/// Objective of each solver on one frozen subproblem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayRow {
    pub trial_seed: u64,
    pub epoch: u64,
    pub values: Vec<f64>,
    /// `values` divided by their maximum.
    pub normalized: Vec<f64>,
    /// Set when the record failed its integrity check or a solver failed.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayTable {
    pub methods: Vec<String>,
    pub rows: Vec<ReplayRow>,
}

impl ReplayTable {
    pub fn valid_rows(&self) -> impl Iterator<Item = &ReplayRow> {
        self.rows.iter().filter(|r| r.error.is_none())
    }

    /// Mean normalized value per method over valid rows.
    pub fn mean_normalized(&self) -> Vec<f64> {
        (0..self.methods.len())
            .map(|k| mean(&self.valid_rows().map(|r| r.normalized[k]).collect::<Vec<_>>()))
            .collect()
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.methods.len())
            .map(|k| {
                let v: Vec<f64> = self.valid_rows().map(|r| r.normalized[k]).collect();
                crate::objective::Estimate::from_samples(&v).se
            })
            .collect()
    }
}

/// Re-plans a frozen subproblem with `method` under the record's seeds.
pub fn replay_selection(
    rec: &SubproblemRecord,
    method: &CoordinationMethod,
    planner: &PlannerConfig,
) -> Result<Selection> {
    let ctx = rec.context()?;
    Ok(plan_epoch_with_rounds(&ctx, method, planner, rec.epoch, rec.epoch_seed, rec.epoch_seed)?.selection)
}

fn replay_one(rec: &SubproblemRecord, methods: &[CoordinationMethod], planner: &PlannerConfig) -> Result<Vec<f64>> {
    rec.check_integrity()?;
    let ctx = rec.context()?;
    let reference = ctx.estimator(rec.reference_samples, rec.reference_seed, None)?;
    methods
        .iter()
        .map(|m| {
            let plan = plan_epoch_with_rounds(&ctx, m, planner, rec.epoch, rec.epoch_seed, rec.epoch_seed)?;
            Ok(reference.estimate(&plan.selection)?.mean)
        })
        .collect()
}

/// Solves every record with every method and normalizes each record's values
/// by their maximum. Records that fail are kept with `error` set.
pub fn replay_subproblems(
    records: &[SubproblemRecord],
    methods: &[CoordinationMethod],
    planner: &PlannerConfig,
) -> Result<ReplayTable> {
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods to replay".into()));
    }
    methods.iter().try_for_each(CoordinationMethod::validate)?;
    let rows = records
        .par_iter()
        .map(|rec| {
            let nan = vec![f64::NAN; methods.len()];
            match replay_one(rec, methods, planner) {
                Ok(values) => {
                    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let (normalized, error) = if max > 0.0 {
                        (values.iter().map(|v| v / max).collect(), None)
                    } else {
                        (nan, Some("no method gained information".into()))
                    };
                    ReplayRow {
                        trial_seed: rec.trial_seed,
                        epoch: rec.epoch,
                        values,
                        normalized,
                        error,
                    }
                }
                Err(e) => ReplayRow {
                    trial_seed: rec.trial_seed,
                    epoch: rec.epoch,
                    values: nan.clone(),
                    normalized: nan,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(ReplayTable {
        methods: methods.iter().map(ToString::to_string).collect(),
        rows,
    })
}

/// Writes the replay table as CSV: `trial_seed, epoch, error`, then
/// `value_{method}` and `normalized_{method}` for each method.
pub fn write_replay_csv(path: &Path, table: &ReplayTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    let mut header = vec!["trial_seed".to_string(), "epoch".into(), "error".into()];
    header.extend(table.methods.iter().map(|m| format!("value_{m}")));
    header.extend(table.methods.iter().map(|m| format!("normalized_{m}")));
    w.write_record(&header).map_err(io_err)?;
    for r in &table.rows {
        let mut rec = vec![
            r.trial_seed.to_string(),
            r.epoch.to_string(),
            r.error.clone().unwrap_or_default(),
        ];
        rec.extend(r.values.iter().map(f64::to_string));
        rec.extend(r.normalized.iter().map(f64::to_string));
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}
