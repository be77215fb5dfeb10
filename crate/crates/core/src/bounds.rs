//! Redundancy weights, planning cost breakdowns, and numerical checks of the
//! suboptimality bounds on logged subproblems and exact tiny instances.

use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

use crate::coordination::{MethodTag, PlannerGraph};
use crate::error::{Error, Result};
use crate::objective::{
    CapacityMatrix, Estimate, ExactInstance, GainModel, ObjectiveContext, ObjectiveSettings, Sensor,
};
use crate::sensing::RangeSensorModel;
use crate::submodular::{Action, Selection};
use crate::world::{enumerate_trajectories, Control, WorldSnapshot};

pub const RECORD_VERSION: u32 = 1;
/// Tolerance for inequalities checked with exact oracles.
pub const EXACT_TOLERANCE: f64 = 1e-9;
/// Standard errors allowed for inequalities checked with sampled oracles.
pub const SAMPLED_SIGMAS: f64 = 3.0;

/// Symmetric pairwise redundancy weights with zero diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    pub values: Vec<Vec<f64>>,
}

impl WeightMatrix {
    pub fn num_robots(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }
}

/// `Ŵ(i, j) = Σ_k min(C_ik, C_jk)` for `i != j`.
pub fn weight_hat(caps: &CapacityMatrix) -> WeightMatrix {
    let n = caps.num_robots();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let w: f64 = caps.values[i].iter().zip(&caps.values[j]).map(|(a, b)| a.min(*b)).sum();
            values[i][j] = w;
            values[j][i] = w;
        }
    }
    WeightMatrix { values }
}

/// `Σ_k min(ĝ_k(A), ĝ_k(B))` on an exact instance.
pub fn decomposed_min(inst: &ExactInstance, a: &Selection, b: &Selection) -> Result<f64> {
    (0..inst.num_targets())
        .map(|k| Ok(inst.target_information(a, k)?.min(inst.target_information(b, k)?)))
        .sum()
}

/// `W(i, j)`: the largest decomposed overlap over the product of the two
/// robots' action sets.
pub fn weight_exact(inst: &ExactInstance, i: usize, j: usize) -> Result<f64> {
    let mut best = 0.0f64;
    for ui in Control::ALL {
        let xi = Selection::singleton(Action::new(i, vec![ui])?);
        for uj in Control::ALL {
            let xj = Selection::singleton(Action::new(j, vec![uj])?);
            best = best.max(decomposed_min(inst, &xi, &xj)?);
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RedundancyTotals {
    /// `Σ_i Σ_{j ∈ N̂_i} Ŵ(i, j)`, the weight term of the main bound.
    pub ignored: f64,
    /// Sum over all ordered pairs `i != j`.
    pub pairwise: f64,
    /// `pairwise / n_r`.
    pub per_robot: f64,
}

pub fn total_redundancy(w: &WeightMatrix, graph: &PlannerGraph) -> Result<RedundancyTotals> {
    let n = w.num_robots();
    if graph.num_robots() != n {
        return Err(Error::InvalidArgument("weight matrix and graph sizes differ".into()));
    }
    let ignored = (0..n)
        .map(|i| graph.ignored(i).iter().map(|&j| w.get(i, j)).sum::<f64>())
        .sum();
    let pairwise: f64 = w.values.iter().flatten().sum();
    Ok(RedundancyTotals {
        ignored,
        pairwise,
        per_robot: pairwise / n as f64,
    })
}

/// One planning epoch frozen for replay and analysis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubproblemRecord {
    pub version: u32,
    pub method: MethodTag,
    pub trial_seed: u64,
    pub epoch: u64,
    pub epoch_seed: u64,
    pub settings: ObjectiveSettings,
    pub snapshot: WorldSnapshot,
    pub graph: PlannerGraph,
    pub scopes: Option<Vec<Vec<usize>>>,
    /// Chosen control sequence of each robot.
    pub decisions: Vec<Vec<Control>>,
    pub received: Vec<Vec<usize>>,
    pub ignored: Vec<Vec<usize>>,
    pub reference_samples: usize,
    pub reference_seed: u64,
    /// Reference evaluation of the joint decision at logging time.
    pub logged_objective: Estimate,
}

impl SubproblemRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        method: MethodTag,
        trial_seed: u64,
        epoch: u64,
        epoch_seed: u64,
        settings: ObjectiveSettings,
        snapshot: WorldSnapshot,
        graph: PlannerGraph,
        scopes: Option<Vec<Vec<usize>>>,
        selection: &Selection,
        reference_samples: usize,
        reference_seed: u64,
    ) -> Result<Self> {
        let n = graph.num_robots();
        let decisions = (0..n)
            .map(|i| {
                selection
                    .action_of(i)
                    .map(|a| a.controls.clone())
                    .ok_or_else(|| Error::InvalidArgument(format!("robot {i} has no decision")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rec = SubproblemRecord {
            version: RECORD_VERSION,
            method,
            trial_seed,
            epoch,
            epoch_seed,
            settings,
            snapshot,
            received: (0..n)
                .map(|i| graph.in_neighbors(i).iter().copied().collect())
                .collect(),
            ignored: (0..n).map(|i| graph.ignored(i).into_iter().collect()).collect(),
            graph,
            scopes,
            decisions,
            reference_samples,
            reference_seed,
            logged_objective: Estimate::exact(0.0),
        };
        rec.logged_objective = rec.evaluate_reference()?;
        Ok(rec)
    }

    pub fn context(&self) -> Result<ObjectiveContext> {
        let sensor = Sensor::range(&self.snapshot.grid, RangeSensorModel::default());
        ObjectiveContext::new(&self.snapshot, Arc::new(sensor), self.settings)
    }

    pub fn selection(&self) -> Result<Selection> {
        self.decisions
            .iter()
            .enumerate()
            .map(|(i, c)| Action::new(i, c.clone()))
            .collect()
    }

    /// Decisions of the given robots.
    pub fn decisions_of<'a, I: IntoIterator<Item = &'a usize>>(&self, robots: I) -> Result<Selection> {
        robots
            .into_iter()
            .map(|&i| Action::new(i, self.decisions[i].clone()))
            .collect()
    }

    pub fn evaluate_reference(&self) -> Result<Estimate> {
        let ctx = self.context()?;
        ctx.estimator(self.reference_samples, self.reference_seed, None)?
            .estimate(&self.selection()?)
    }

    /// Structural consistency and reproduction of the logged objective.
    pub fn check_integrity(&self) -> Result<()> {
        if self.version != RECORD_VERSION {
            return Err(Error::Integrity(format!("record version {} unsupported", self.version)));
        }
        let n = self.graph.num_robots();
        if self.decisions.len() != n || self.snapshot.robots.len() != n {
            return Err(Error::Integrity("team size mismatch".into()));
        }
        if self.decisions.iter().any(|c| c.len() != self.settings.horizon) {
            return Err(Error::Integrity("decision horizon mismatch".into()));
        }
        for i in 0..n {
            let recv: Vec<usize> = self.graph.in_neighbors(i).iter().copied().collect();
            let ign: Vec<usize> = self.graph.ignored(i).into_iter().collect();
            if recv != self.received[i] || ign != self.ignored[i] {
                return Err(Error::Integrity(format!(
                    "neighbour sets of robot {i} inconsistent with graph"
                )));
            }
        }
        let replayed = self.evaluate_reference()?;
        let tol = 1e-9 * (1.0 + self.logged_objective.mean.abs());
        if (replayed.mean - self.logged_objective.mean).abs() > tol {
            return Err(Error::Integrity(format!(
                "replayed objective {} differs from logged {}",
                replayed.mean, self.logged_objective.mean
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: SubproblemRecord = serde_json::from_str(s)?;
        if rec.version != RECORD_VERSION {
            return Err(Error::Integrity(format!("record version {} unsupported", rec.version)));
        }
        Ok(rec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Per-robot costs. `obj` is only available with an exact oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotCosts {
    pub robot: usize,
    pub dist: Estimate,
    pub plan: Estimate,
    pub obj: Option<f64>,
    /// General cost w.r.t. all predecessors (exact oracle only).
    pub gen: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub robots: Vec<RobotCosts>,
    pub total_dist: f64,
    pub total_plan: f64,
    pub total_obj: Option<f64>,
    pub total_gen: Option<f64>,
    /// Combined standard errors of the dist and plan totals.
    pub dist_se: f64,
    pub plan_se: f64,
}

impl CostBreakdown {
    fn from_robots(robots: Vec<RobotCosts>) -> Self {
        let total_dist = robots.iter().map(|r| r.dist.mean).sum();
        let total_plan = robots.iter().map(|r| r.plan.mean).sum();
        let total_obj = robots.iter().map(|r| r.obj).sum();
        let total_gen = robots.iter().map(|r| r.gen).sum();
        let dist_se = robots.iter().map(|r| r.dist.se * r.dist.se).sum::<f64>().sqrt();
        let plan_se = robots.iter().map(|r| r.plan.se * r.plan.se).sum::<f64>().sqrt();
        CostBreakdown {
            robots,
            total_dist,
            total_plan,
            total_obj,
            total_gen,
            dist_se,
            plan_se,
        }
    }
}

fn paired<M: GainModel + ?Sized>(a: &M, ca: &[Control], b: &M, cb: &[Control]) -> Estimate {
    let n = a.num_samples().min(b.num_samples());
    if a.num_samples() == 1 && b.num_samples() == 1 {
        return Estimate::exact(a.sample_gain(ca, 0) - b.sample_gain(cb, 0));
    }
    let d: Vec<f64> = (0..n).map(|s| a.sample_gain(ca, s) - b.sample_gain(cb, s)).collect();
    Estimate::from_samples(&d)
}

fn best_controls<M: GainModel + ?Sized>(m: &M) -> Result<Vec<Control>> {
    Ok(crate::mcts::exhaustive_plan(m)?.0)
}

/// Costs of a logged subproblem under the reference evaluation. The planning
/// cost uses the robot's local (scoped) objective; the objective cost needs
/// an exact oracle and is not computed here.
pub fn compute_costs(rec: &SubproblemRecord) -> Result<CostBreakdown> {
    rec.check_integrity()?;
    let ctx = rec.context()?;
    let (m, seed) = (rec.reference_samples, rec.reference_seed);
    let mut robots = Vec::new();
    for i in rec.graph.order() {
        let xi = &rec.decisions[i];
        let received = rec.decisions_of(&rec.received[i])?;
        let preds = rec.decisions_of(rec.graph.predecessors(i).iter())?;
        let on_received = ctx.conditional(i, &received, m, seed, None)?;
        let on_preds = ctx.conditional(i, &preds, m, seed, None)?;
        let dist = paired(&on_received, xi, &on_preds, xi);
        let scope = rec.scopes.as_ref().map(|s| s[i].as_slice());
        let local = ctx.conditional(i, &received, m, seed, scope)?;
        let best = best_controls(&local)?;
        let plan = paired(&local, &best, &local, xi);
        robots.push(RobotCosts {
            robot: i,
            dist,
            plan,
            obj: None,
            gen: None,
        });
    }
    Ok(CostBreakdown::from_robots(robots))
}

/// A decision problem solved on an exact instance.
#[derive(Clone, Debug)]
pub struct ExactSubproblem<'a> {
    pub inst: &'a ExactInstance,
    pub graph: PlannerGraph,
    pub scopes: Option<Vec<Vec<usize>>>,
    pub selection: Selection,
}

impl ExactSubproblem<'_> {
    fn decisions_of<'b, I: IntoIterator<Item = &'b usize>>(&self, robots: I) -> Selection {
        robots
            .into_iter()
            .map(|&i| self.selection.action_of(i).expect("basis").clone())
            .collect()
    }

    fn controls(&self, i: usize) -> &[Control] {
        &self.selection.action_of(i).expect("basis").controls
    }
}

/// Exact costs, including the objective cost of scoped oracles and the
/// general cost relative to all predecessors.
pub fn compute_costs_exact(sub: &ExactSubproblem<'_>) -> Result<CostBreakdown> {
    let inst = sub.inst;
    let mut robots = Vec::new();
    for i in sub.graph.order() {
        let xi = sub.controls(i);
        let received = sub.decisions_of(sub.graph.in_neighbors(i));
        let preds = sub.decisions_of(sub.graph.predecessors(i).iter());
        let g_recv = inst.conditional(i, &received, None)?;
        let g_pred = inst.conditional(i, &preds, None)?;
        let scope = sub.scopes.as_ref().map(|s| s[i].as_slice());
        let local = inst.conditional(i, &received, scope)?;
        let dist = g_recv.sample_gain(xi, 0) - g_pred.sample_gain(xi, 0);
        let plan = local.gain(&best_controls(&local)?) - local.sample_gain(xi, 0);
        let mut over = f64::NEG_INFINITY;
        let mut under = f64::NEG_INFINITY;
        for c in enumerate_trajectories(1)? {
            let d = local.sample_gain(&c, 0) - g_recv.sample_gain(&c, 0);
            over = over.max(d);
            under = under.max(-d);
        }
        let gen = g_pred.gain(&best_controls(&g_pred)?) - g_pred.sample_gain(xi, 0);
        robots.push(RobotCosts {
            robot: i,
            dist: Estimate::exact(dist),
            plan: Estimate::exact(plan),
            obj: Some(over + under),
            gen: Some(gen),
        });
    }
    Ok(CostBreakdown::from_robots(robots))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub holds: bool,
    /// Right-hand side minus left-hand side.
    pub slack: f64,
}

impl BoundCheck {
    fn new(lhs: f64, rhs: f64, tolerance: f64) -> Self {
        BoundCheck {
            holds: lhs <= rhs + tolerance,
            slack: rhs - lhs,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostBoundCheck {
    /// `g(X*) <= 2 g(X^d) + Σ (dist + obj + plan)`.
    pub costs: BoundCheck,
    /// `Σ dist <= Σ_i Σ_{j ∈ N̂_i} Ŵ(i, j)`.
    pub weights: BoundCheck,
}

impl CostBoundCheck {
    pub fn holds(&self) -> bool {
        self.costs.holds && self.weights.holds
    }
}

/// Main bound on an exact instance, given the optimum value. Ŵ uses
/// unscoped exact capacities.
pub fn verify_cost_bound(sub: &ExactSubproblem<'_>, optimum: f64) -> Result<CostBoundCheck> {
    let costs = compute_costs_exact(sub)?;
    let value = sub.inst.objective(&sub.selection)?;
    let rhs = 2.0 * value + costs.total_dist + costs.total_obj.unwrap_or(0.0) + costs.total_plan;
    let w = weight_hat(&sub.inst.capacity_matrix(None)?);
    let red = total_redundancy(&w, &sub.graph)?;
    Ok(CostBoundCheck {
        costs: BoundCheck::new(optimum, rhs, EXACT_TOLERANCE),
        weights: BoundCheck::new(costs.total_dist, red.ignored, EXACT_TOLERANCE),
    })
}

/// General-assignment bound `g(X*) <= 2 g(X^d) + Σ gen` on an exact instance.
pub fn verify_general_bound(sub: &ExactSubproblem<'_>, optimum: f64) -> Result<BoundCheck> {
    let costs = compute_costs_exact(sub)?;
    let value = sub.inst.objective(&sub.selection)?;
    Ok(BoundCheck::new(
        optimum,
        2.0 * value + costs.total_gen.unwrap_or(0.0),
        EXACT_TOLERANCE,
    ))
}

/// Checks on a logged (sampled) subproblem that do not need the optimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordVerification {
    pub costs: CostBreakdown,
    pub redundancy: RedundancyTotals,
    /// Every robot's planning cost is at least -3 SE.
    pub plan_nonnegative: bool,
    /// `Σ dist <= Σ ignored Ŵ + 3 SE`.
    pub weights: BoundCheck,
}

impl RecordVerification {
    pub fn holds(&self) -> bool {
        self.plan_nonnegative && self.weights.holds
    }
}

pub fn verify_record(rec: &SubproblemRecord, capacity_samples: usize) -> Result<RecordVerification> {
    let costs = compute_costs(rec)?;
    let ctx = rec.context()?;
    let caps = ctx.capacity_matrix(capacity_samples, rec.reference_seed, None)?;
    let redundancy = total_redundancy(&weight_hat(&caps), &rec.graph)?;
    let plan_nonnegative = costs
        .robots
        .iter()
        .all(|r| r.plan.mean >= -SAMPLED_SIGMAS * r.plan.se - EXACT_TOLERANCE);
    let weights = BoundCheck::new(costs.total_dist, redundancy.ignored, SAMPLED_SIGMAS * costs.dist_se);
    Ok(RecordVerification {
        costs,
        redundancy,
        plan_nonnegative,
        weights,
    })
}
