//! Mutual-information objective.
//!
//! The simulation objective is the sum over horizon steps `k = 1..l` of the
//! information that observations up to `t + k` carry about the target states
//! at `t + k`. It is estimated by rollouts: each rollout samples target
//! trajectories from the current filters, generates observations for the
//! selected actions, runs the filters forward, and records
//! `H(prior predictive at k) - H(posterior at k)`. The prior predictive term
//! does not depend on the selection, so the empty selection is worth exactly
//! zero and marginal gains reduce to posterior-entropy differences under
//! shared randomness.
//!
//! Random streams are keyed by `(seed, target, sample)` for target motion
//! and `(seed, target, sample, robot)` for observation noise, so every
//! selection evaluated under one seed sees the same world.

pub mod exact;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::seeds::{self, purpose};
use crate::sensing::{HistogramFilter, LikelihoodTable, RangeSensorModel};
use crate::submodular::{Selection, SetFunction};
use crate::world::{enumerate_trajectories, robot_path, Cell, Control, Grid, MotionKernel, WorldSnapshot};

pub use exact::{ExactDiscreteSensor, ExactInstance};

/// Planner-internal sample count.
pub const DEFAULT_SAMPLES: usize = 32;
/// Sample count for reference evaluations (exhaustive planning, cost analysis).
pub const REFERENCE_SAMPLES: usize = 256;
/// Sample count for channel capacities.
pub const CAPACITY_SAMPLES: usize = 64;
/// Filter cells below this mass are dropped when setting up rollouts.
pub const DEFAULT_PLANNING_FLOOR: f64 = 1e-6;
/// Range used by the local objective of range-limited planners.
pub const DEFAULT_TARGET_RANGE: f64 = 12.0;

/// One draw of observation noise; each sensor consumes the component it needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Noise {
    pub normal: f64,
    pub uniform: f64,
}

impl Noise {
    fn draw(rng: &mut ChaCha8Rng) -> Noise {
        Noise {
            normal: StandardNormal.sample(rng),
            uniform: rng.gen::<f64>(),
        }
    }
}

/// Observation model used inside rollouts.
#[derive(Clone, Debug)]
pub enum Sensor {
    Range {
        model: RangeSensorModel,
        table: LikelihoodTable,
    },
    Discrete(ExactDiscreteSensor),
}

impl Sensor {
    pub fn range(grid: &Grid, model: RangeSensorModel) -> Sensor {
        Sensor::Range {
            model,
            table: LikelihoodTable::new(grid, &model),
        }
    }

    #[inline]
    pub fn sample(&self, robot: Cell, target: Cell, noise: Noise) -> f64 {
        match self {
            Sensor::Range { table, .. } => table.observe(robot, target, noise.normal),
            Sensor::Discrete(d) => d.sample(robot, target, noise.uniform) as f64,
        }
    }

    #[inline]
    pub fn log_likelihood(&self, y: f64, robot: Cell, cell: Cell) -> f64 {
        match self {
            Sensor::Range { table, .. } => table.log_likelihood(y, robot, cell),
            Sensor::Discrete(d) => d.probability(y as usize, robot, cell).ln(),
        }
    }
}

/// Mean of per-sample values with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Estimate {
        Estimate { mean: value, se: 0.0 }
    }

    pub fn from_samples(values: &[f64]) -> Estimate {
        let n = values.len();
        if n == 0 {
            return Estimate::exact(0.0);
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n < 2 {
            f64::INFINITY
        } else {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Estimate { mean, se }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSettings {
    pub horizon: usize,
    pub planning_floor: f64,
}

impl Default for ObjectiveSettings {
    fn default() -> Self {
        ObjectiveSettings {
            horizon: 2,
            planning_floor: DEFAULT_PLANNING_FLOOR,
        }
    }
}

/// Reachable cells of one target over the horizon, with the transition
/// structure between consecutive steps and the prior predictive entropies.
#[derive(Clone, Debug)]
struct TargetPatch {
    /// `cells[k]` for `k = 0..=l`; `cells[0]` is the (floored) filter support.
    cells: Vec<Vec<Cell>>,
    init: Vec<f64>,
    /// `trans[k - 1]` maps step `k - 1` indices to step `k` indices.
    trans: Vec<Vec<(u32, u32, f64)>>,
    prior_entropy: Vec<f64>,
    first_pred: Vec<f64>,
    ln_first_pred: Vec<f64>,
    /// Cumulative distribution over `cells[0]` for sampling initial states.
    init_cdf: Vec<f64>,
}

impl TargetPatch {
    fn build(filter: &HistogramFilter, horizon: usize, floor: f64) -> TargetPatch {
        let grid = *filter.grid();
        let peak = filter.max_probability();
        let kept: Vec<(Cell, f64)> = filter.entries().filter(|&(_, p)| p >= floor || p == peak).collect();
        let total: f64 = kept.iter().map(|&(_, p)| p).sum();
        let mut cells = vec![kept.iter().map(|&(c, _)| c).collect::<Vec<_>>()];
        let init: Vec<f64> = kept.iter().map(|&(_, p)| p / total).collect();
        let mut trans = Vec::with_capacity(horizon);
        let mut prior_entropy = Vec::with_capacity(horizon);
        let mut slot = vec![u32::MAX; grid.num_cells()];
        let mut prior = init.clone();
        for k in 1..=horizon {
            let mut next_cells: Vec<Cell> = Vec::new();
            let mut edges = Vec::new();
            for (from, &c) in cells[k - 1].iter().enumerate() {
                for (n, w) in MotionKernel.row(&grid, c) {
                    let gi = grid.index(n);
                    if slot[gi] == u32::MAX {
                        slot[gi] = next_cells.len() as u32;
                        next_cells.push(n);
                    }
                    edges.push((from as u32, slot[gi], w));
                }
            }
            for c in &next_cells {
                slot[grid.index(*c)] = u32::MAX;
            }
            let mut next = vec![0.0; next_cells.len()];
            for &(f, t, w) in &edges {
                next[t as usize] += prior[f as usize] * w;
            }
            prior_entropy.push(crate::sensing::entropy_bits(next.iter().copied()));
            prior = next;
            cells.push(next_cells);
            trans.push(edges);
        }
        let first_pred = {
            let mut u = vec![0.0; cells[1].len()];
            for &(f, t, w) in &trans[0] {
                u[t as usize] += init[f as usize] * w;
            }
            u
        };
        let ln_first_pred = first_pred.iter().map(|p| p.ln()).collect();
        let mut acc = 0.0;
        let init_cdf = init
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        TargetPatch {
            cells,
            init,
            trans,
            prior_entropy,
            first_pred,
            ln_first_pred,
            init_cdf,
        }
    }

    fn horizon(&self) -> usize {
        self.trans.len()
    }

    fn sample_truth(&self, grid: &Grid, rng: &mut ChaCha8Rng) -> Vec<Cell> {
        let u: f64 = rng.gen::<f64>() * self.init_cdf.last().copied().unwrap_or(1.0);
        let idx = self.init_cdf.partition_point(|&c| c <= u).min(self.init.len() - 1);
        let mut c = self.cells[0][idx];
        (0..self.horizon())
            .map(|_| {
                c = MotionKernel.sample(grid, c, rng);
                c
            })
            .collect()
    }

    /// Runs the filter chain with per-step log-likelihood sums and returns
    /// the posterior entropy (bits) at each step.
    ///
    /// `loglik(k, i, c)` is the log-likelihood at step `k` (1-based) of patch
    /// cell `i` located at `c`.
    fn posterior_entropies<F>(&self, mut loglik: F, scratch: &mut ChainScratch) -> EntropyTrace
    where
        F: FnMut(usize, usize, Cell) -> f64,
    {
        let mut trace = EntropyTrace::default();
        for k in 1..=self.horizon() {
            let cells = &self.cells[k];
            let n = cells.len();
            scratch.log_w.clear();
            let mut shift = f64::NEG_INFINITY;
            for (i, &c) in cells.iter().enumerate() {
                let s = loglik(k, i, c);
                shift = shift.max(s);
                scratch.log_w.push(s);
            }
            if k == 1 {
                scratch.pred.clear();
                scratch.pred.extend_from_slice(&self.first_pred);
                scratch.ln_pred.clear();
                scratch.ln_pred.extend_from_slice(&self.ln_first_pred);
            } else {
                scratch.pred.clear();
                scratch.pred.resize(n, 0.0);
                for &(f, t, w) in &self.trans[k - 1] {
                    scratch.pred[t as usize] += scratch.post[f as usize] * w;
                }
                scratch.ln_pred.clear();
                scratch.ln_pred.extend(scratch.pred.iter().map(|p| p.ln()));
            }
            if !shift.is_finite() {
                // no observation information at this step beyond the prior
                shift = 0.0;
            }
            let mut z = 0.0;
            let mut wlnw = 0.0;
            scratch.post.clear();
            for i in 0..n {
                let p = scratch.pred[i];
                let s = scratch.log_w[i] - shift;
                let w = if p > 0.0 { p * s.exp() } else { 0.0 };
                if w > 0.0 {
                    z += w;
                    wlnw += w * (scratch.ln_pred[i] + s);
                }
                scratch.post.push(w);
            }
            let h = (z.ln() - wlnw / z) / std::f64::consts::LN_2;
            for v in scratch.post.iter_mut() {
                *v /= z;
            }
            trace.push(h.max(0.0));
        }
        trace
    }
}

/// Posterior entropies per horizon step (small fixed capacity).
#[derive(Clone, Copy, Debug, Default)]
struct EntropyTrace {
    len: usize,
    values: [f64; 8],
}

impl EntropyTrace {
    fn push(&mut self, v: f64) {
        self.values[self.len] = v;
        self.len += 1;
    }

    fn as_slice(&self) -> &[f64] {
        &self.values[..self.len]
    }

    fn sum(&self) -> f64 {
        self.as_slice().iter().sum()
    }
}

#[derive(Default)]
struct ChainScratch {
    log_w: Vec<f64>,
    pred: Vec<f64>,
    ln_pred: Vec<f64>,
    post: Vec<f64>,
}

/// An observer in a rollout: a robot path plus its noise stream key.
struct Observer {
    path: Vec<Cell>,
    robot: usize,
    occurrence: u64,
}

/// Objective evaluation context for one planning snapshot.
#[derive(Clone, Debug)]
pub struct ObjectiveContext {
    grid: Grid,
    sensor: Arc<Sensor>,
    robots: Vec<Cell>,
    patches: Vec<TargetPatch>,
    target_means: Vec<(f64, f64)>,
    settings: ObjectiveSettings,
}

impl ObjectiveContext {
    pub fn new(snapshot: &WorldSnapshot, sensor: Arc<Sensor>, settings: ObjectiveSettings) -> Result<Self> {
        if settings.horizon == 0 || settings.horizon > 8 {
            return Err(Error::InvalidArgument(format!(
                "horizon {} out of range",
                settings.horizon
            )));
        }
        let patches = snapshot
            .filters
            .iter()
            .map(|f| TargetPatch::build(f, settings.horizon, settings.planning_floor))
            .collect();
        Ok(ObjectiveContext {
            grid: snapshot.grid,
            sensor,
            robots: snapshot.robots.clone(),
            patches,
            target_means: snapshot.filters.iter().map(|f| f.mean()).collect(),
            settings,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn horizon(&self) -> usize {
        self.settings.horizon
    }

    pub fn num_robots(&self) -> usize {
        self.robots.len()
    }

    pub fn num_targets(&self) -> usize {
        self.patches.len()
    }

    pub fn robots(&self) -> &[Cell] {
        &self.robots
    }

    pub fn target_means(&self) -> &[(f64, f64)] {
        &self.target_means
    }

    pub fn sensor(&self) -> &Sensor {
        &self.sensor
    }

    /// Targets whose filter mean lies within `range` of the robot.
    pub fn target_scope(&self, robot: usize, range: f64) -> Vec<usize> {
        let r = self.robots[robot];
        self.target_means
            .iter()
            .enumerate()
            .filter(|(_, &(mx, my))| (mx - f64::from(r.x)).hypot(my - f64::from(r.y)) <= range)
            .map(|(j, _)| j)
            .collect()
    }

    fn scope_or_all(&self, scope: Option<&[usize]>) -> Result<Vec<usize>> {
        match scope {
            None => Ok((0..self.num_targets()).collect()),
            Some(s) => {
                if let Some(&bad) = s.iter().find(|&&j| j >= self.num_targets()) {
                    return Err(Error::InvalidArgument(format!("target {bad} not in snapshot")));
                }
                let mut v = s.to_vec();
                v.sort_unstable();
                v.dedup();
                Ok(v)
            }
        }
    }

    fn truths(&self, target: usize, samples: usize, seed: u64) -> Vec<Vec<Cell>> {
        (0..samples)
            .map(|s| {
                let mut rng = seeds::rng(seed, &[purpose::SCENARIO, target as u64, s as u64]);
                self.patches[target].sample_truth(&self.grid, &mut rng)
            })
            .collect()
    }

    fn noise(&self, seed: u64, target: usize, sample: usize, robot: usize, occurrence: u64) -> Vec<Noise> {
        let mut rng = seeds::rng(
            seed,
            &[
                purpose::OBSERVATION,
                target as u64,
                sample as u64,
                robot as u64,
                occurrence,
            ],
        );
        (0..self.horizon()).map(|_| Noise::draw(&mut rng)).collect()
    }

    fn observers(&self, set: &Selection) -> Result<Vec<Observer>> {
        let mut out: Vec<Observer> = Vec::with_capacity(set.len());
        for a in set {
            if a.robot >= self.robots.len() {
                return Err(Error::InvalidArgument(format!("{a} refers to unknown robot")));
            }
            if a.horizon() != self.horizon() {
                return Err(Error::InvalidArgument(format!(
                    "{a} has horizon {}, context uses {}",
                    a.horizon(),
                    self.horizon()
                )));
            }
            let occurrence = out.iter().filter(|o| o.robot == a.robot).count() as u64;
            out.push(Observer {
                path: robot_path(&self.grid, self.robots[a.robot], &a.controls),
                robot: a.robot,
                occurrence,
            });
        }
        Ok(out)
    }

    /// Sampled estimator over `samples` rollouts for the given target scope.
    pub fn estimator(&self, samples: usize, seed: u64, scope: Option<&[usize]>) -> Result<Estimator<'_>> {
        if samples == 0 {
            return Err(Error::InvalidArgument("sample count must be at least 1".into()));
        }
        let scope = self.scope_or_all(scope)?;
        let truths = scope.iter().map(|&j| self.truths(j, samples, seed)).collect();
        Ok(Estimator {
            ctx: self,
            samples,
            seed,
            scope,
            truths,
        })
    }

    /// Conditional gain model for `robot` given prior decisions.
    pub fn conditional(
        &self,
        robot: usize,
        prior: &Selection,
        samples: usize,
        seed: u64,
        scope: Option<&[usize]>,
    ) -> Result<ConditionalGain<'_>> {
        let est = self.estimator(samples, seed, scope)?;
        ConditionalGain::new(est, robot, prior)
    }

    /// Largest single-action information robot `i` can gain about target `j`.
    pub fn channel_capacity(&self, robot: usize, target: usize, samples: usize, seed: u64) -> Result<f64> {
        let cap_seed = seeds::derive(seed, &[purpose::CAPACITY, robot as u64, target as u64]);
        let model = self.conditional(robot, &Selection::new(), samples, cap_seed, Some(&[target]))?;
        let best = enumerate_trajectories(self.horizon())?
            .iter()
            .map(|c| model.gain(c))
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(best.max(0.0))
    }

    /// Capacities for every robot-target pair. Pairs outside a robot's scope
    /// (when scopes are given) are zero.
    pub fn capacity_matrix(&self, samples: usize, seed: u64, scopes: Option<&[Vec<usize>]>) -> Result<CapacityMatrix> {
        let mut values = vec![vec![0.0; self.num_targets()]; self.num_robots()];
        for (i, row) in values.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let in_scope = scopes.map_or(true, |s| s[i].contains(&j));
                if in_scope {
                    *v = self.channel_capacity(i, j, samples, seed)?;
                }
            }
        }
        Ok(CapacityMatrix { values })
    }
}

/// Robot-by-target channel capacities (bits).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityMatrix {
    pub values: Vec<Vec<f64>>,
}

impl CapacityMatrix {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        if values.iter().flatten().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "capacities must be finite and nonnegative".into(),
            ));
        }
        Ok(CapacityMatrix { values })
    }

    pub fn num_robots(&self) -> usize {
        self.values.len()
    }

    pub fn num_targets(&self) -> usize {
        self.values.first().map_or(0, |r| r.len())
    }

    pub fn get(&self, robot: usize, target: usize) -> f64 {
        self.values[robot][target]
    }
}

/// Rollout estimator with frozen target trajectories.
pub struct Estimator<'a> {
    ctx: &'a ObjectiveContext,
    samples: usize,
    seed: u64,
    scope: Vec<usize>,
    truths: Vec<Vec<Vec<Cell>>>,
}

impl<'a> Estimator<'a> {
    pub fn context(&self) -> &'a ObjectiveContext {
        self.ctx
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    /// Per-sample information for one scoped target (index into `scope`).
    fn target_samples(&self, slot: usize, observers: &[Observer]) -> Vec<f64> {
        let j = self.scope[slot];
        let patch = &self.ctx.patches[j];
        if observers.is_empty() {
            return vec![0.0; self.samples];
        }
        let sensor = &*self.ctx.sensor;
        let mut scratch = ChainScratch::default();
        (0..self.samples)
            .map(|s| {
                let truth = &self.truths[slot][s];
                let obs: Vec<Vec<(Cell, f64)>> = observers
                    .iter()
                    .map(|o| {
                        let noise = self.ctx.noise(self.seed, j, s, o.robot, o.occurrence);
                        (0..patch.horizon())
                            .map(|k| (o.path[k], sensor.sample(o.path[k], truth[k], noise[k])))
                            .collect()
                    })
                    .collect();
                let trace = patch.posterior_entropies(
                    |k, _, c| {
                        obs.iter()
                            .map(|o| {
                                let (r, y) = o[k - 1];
                                sensor.log_likelihood(y, r, c)
                            })
                            .sum()
                    },
                    &mut scratch,
                );
                patch
                    .prior_entropy
                    .iter()
                    .zip(trace.as_slice())
                    .map(|(p, h)| p - h)
                    .sum()
            })
            .collect()
    }

    /// Per-target per-sample contributions for `set`: `[slot][sample]`.
    pub fn contributions(&self, set: &Selection) -> Result<Vec<Vec<f64>>> {
        let observers = self.ctx.observers(set)?;
        Ok((0..self.scope.len())
            .map(|slot| self.target_samples(slot, &observers))
            .collect())
    }

    /// Estimate of the objective (summed over scoped targets).
    pub fn estimate(&self, set: &Selection) -> Result<Estimate> {
        if set.is_empty() {
            return Ok(Estimate::exact(0.0));
        }
        let per = self.contributions(set)?;
        let totals: Vec<f64> = (0..self.samples).map(|s| per.iter().map(|t| t[s]).sum()).collect();
        Ok(Estimate::from_samples(&totals))
    }

    /// Mean contribution of each scoped target; sums to `estimate(set).mean`
    /// up to floating-point reassociation.
    pub fn per_target(&self, set: &Selection) -> Result<Vec<(usize, f64)>> {
        let per = self.contributions(set)?;
        Ok(self
            .scope
            .iter()
            .zip(per)
            .map(|(&j, v)| (j, v.iter().sum::<f64>() / self.samples as f64))
            .collect())
    }
}

impl SetFunction for Estimator<'_> {
    fn evaluate(&self, set: &Selection) -> f64 {
        self.estimate(set).expect("selection incompatible with estimator").mean
    }
}

/// Monte Carlo estimate of the objective for a selection.
pub fn estimate_objective(
    set: &Selection,
    ctx: &ObjectiveContext,
    samples: usize,
    seed: u64,
    scope: Option<&[usize]>,
) -> Result<Estimate> {
    ctx.estimator(samples, seed, scope)?.estimate(set)
}

/// Contribution of target `j` under the shared-sample contract.
pub fn per_target_objective(
    set: &Selection,
    target: usize,
    ctx: &ObjectiveContext,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let est = ctx.estimator(samples, seed, None)?;
    let per = est.per_target(set)?;
    Ok(per[target].1)
}

/// Conditional marginal-gain oracle for one robot's actions, used by the
/// single-robot planners.
pub trait GainModel {
    fn robot(&self) -> usize;
    fn horizon(&self) -> usize;
    /// Number of independent samples behind [`GainModel::gain`].
    fn num_samples(&self) -> usize;
    /// Gain of `controls` on one sample.
    fn sample_gain(&self, controls: &[Control], sample: usize) -> f64;

    fn gain_estimate(&self, controls: &[Control]) -> Estimate {
        if self.num_samples() == 1 {
            return Estimate::exact(self.sample_gain(controls, 0));
        }
        let v: Vec<f64> = (0..self.num_samples()).map(|s| self.sample_gain(controls, s)).collect();
        Estimate::from_samples(&v)
    }

    fn gain(&self, controls: &[Control]) -> f64 {
        self.gain_estimate(controls).mean
    }
}

/// Per-(target, sample) state with the prior decisions already applied.
struct PreparedSample {
    /// Log-likelihood sums of prior observations per step, per patch cell.
    prior_loglik: Vec<Vec<f64>>,
    prior_entropy: EntropyTrace,
    truth: Vec<Cell>,
    noise: Vec<Noise>,
}

/// Sampled conditional gain `g(x | prior)` of one robot's trajectories,
/// with common random numbers across candidates.
pub struct ConditionalGain<'a> {
    est: Estimator<'a>,
    robot: usize,
    start: Cell,
    prepared: Vec<Vec<PreparedSample>>,
    scratch: std::cell::RefCell<ChainScratch>,
}

impl<'a> ConditionalGain<'a> {
    fn new(est: Estimator<'a>, robot: usize, prior: &Selection) -> Result<Self> {
        let ctx = est.ctx;
        if robot >= ctx.num_robots() {
            return Err(Error::InvalidArgument(format!("robot {robot} not in snapshot")));
        }
        let observers = ctx.observers(prior)?;
        let occurrence = observers.iter().filter(|o| o.robot == robot).count() as u64;
        let sensor = &*ctx.sensor;
        let mut scratch = ChainScratch::default();
        let prepared = est
            .scope
            .iter()
            .enumerate()
            .map(|(slot, &j)| {
                let patch = &ctx.patches[j];
                (0..est.samples)
                    .map(|s| {
                        let truth = est.truths[slot][s].clone();
                        let mut prior_loglik: Vec<Vec<f64>> =
                            (1..=patch.horizon()).map(|k| vec![0.0; patch.cells[k].len()]).collect();
                        for o in &observers {
                            let noise = ctx.noise(est.seed, j, s, o.robot, o.occurrence);
                            for k in 1..=patch.horizon() {
                                let r = o.path[k - 1];
                                let y = sensor.sample(r, truth[k - 1], noise[k - 1]);
                                for (acc, &c) in prior_loglik[k - 1].iter_mut().zip(&patch.cells[k]) {
                                    *acc += sensor.log_likelihood(y, r, c);
                                }
                            }
                        }
                        let prior_entropy = patch.posterior_entropies(|k, i, _| prior_loglik[k - 1][i], &mut scratch);
                        PreparedSample {
                            prior_loglik,
                            prior_entropy,
                            truth,
                            noise: ctx.noise(est.seed, j, s, robot, occurrence),
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(ConditionalGain {
            start: ctx.robots[robot],
            est,
            robot,
            prepared,
            scratch: std::cell::RefCell::new(scratch),
        })
    }

    pub fn scope(&self) -> &[usize] {
        &self.est.scope
    }
}

impl GainModel for ConditionalGain<'_> {
    fn robot(&self) -> usize {
        self.robot
    }

    fn horizon(&self) -> usize {
        self.est.ctx.horizon()
    }

    fn num_samples(&self) -> usize {
        self.est.samples
    }

    fn sample_gain(&self, controls: &[Control], sample: usize) -> f64 {
        let ctx = self.est.ctx;
        let sensor = &*ctx.sensor;
        let path = robot_path(&ctx.grid, self.start, controls);
        let mut scratch = self.scratch.borrow_mut();
        let mut total = 0.0;
        for (slot, &j) in self.est.scope.iter().enumerate() {
            let patch = &ctx.patches[j];
            let prep = &self.prepared[slot][sample];
            let ys: Vec<f64> = (0..patch.horizon())
                .map(|k| sensor.sample(path[k], prep.truth[k], prep.noise[k]))
                .collect();
            let trace = patch.posterior_entropies(
                |k, i, c| prep.prior_loglik[k - 1][i] + sensor.log_likelihood(ys[k - 1], path[k - 1], c),
                &mut scratch,
            );
            total += prep.prior_entropy.sum() - trace.sum();
        }
        total
    }
}
