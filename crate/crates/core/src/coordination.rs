//! Multi-robot coordination: planner graphs, round assignment, range limits,
//! and the round-synchronous distributed executor.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::mcts::{exhaustive_plan, plan_anytime, Budget};
use crate::objective::{ExactInstance, GainModel, ObjectiveContext};
use crate::seeds::{self, purpose};
use crate::submodular::{Action, Selection};
use crate::world::{Cell, Control};

pub const DEFAULT_ROBOT_RANGE: f64 = 20.0;
pub const DEFAULT_TARGET_RANGE: f64 = crate::objective::DEFAULT_TARGET_RANGE;

/// Decision graph. `rounds[i]` is robot `i`'s 1-based round; in-neighbours
/// always sit in strictly earlier rounds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerGraph {
    rounds: Vec<usize>,
    in_neighbors: Vec<BTreeSet<usize>>,
}

impl PlannerGraph {
    pub fn new(rounds: Vec<usize>, in_neighbors: Vec<BTreeSet<usize>>) -> Result<Self> {
        if rounds.len() != in_neighbors.len() {
            return Err(Error::InvalidArgument(
                "rounds and neighbour lists differ in length".into(),
            ));
        }
        if rounds.contains(&0) {
            return Err(Error::InvalidArgument("rounds are 1-based".into()));
        }
        for (i, nbrs) in in_neighbors.iter().enumerate() {
            for &j in nbrs {
                if j >= rounds.len() || rounds[j] >= rounds[i] {
                    return Err(Error::InvalidArgument(format!(
                        "edge {j} -> {i} does not go from an earlier round"
                    )));
                }
            }
        }
        Ok(PlannerGraph { rounds, in_neighbors })
    }

    /// All robots in earlier rounds are in-neighbours.
    pub fn from_rounds(rounds: Vec<usize>) -> Result<Self> {
        let nbrs = rounds
            .iter()
            .map(|&ri| (0..rounds.len()).filter(|&j| rounds[j] < ri).collect())
            .collect();
        PlannerGraph::new(rounds, nbrs)
    }

    pub fn num_robots(&self) -> usize {
        self.rounds.len()
    }

    pub fn round(&self, robot: usize) -> usize {
        self.rounds[robot]
    }

    pub fn rounds(&self) -> &[usize] {
        &self.rounds
    }

    pub fn in_neighbors(&self, robot: usize) -> &BTreeSet<usize> {
        &self.in_neighbors[robot]
    }

    pub fn edge_count(&self) -> usize {
        self.in_neighbors.iter().map(|n| n.len()).sum()
    }

    /// Edges `(from, to)` in order of the receiving robot, then sender.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.in_neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, n)| n.iter().map(move |&j| (j, i)))
            .collect()
    }

    /// Number of nonempty rounds.
    pub fn sequential_steps(&self) -> usize {
        self.rounds.iter().collect::<BTreeSet<_>>().len()
    }

    /// Robots grouped by round, ascending.
    pub fn round_groups(&self) -> Vec<Vec<usize>> {
        let distinct: BTreeSet<usize> = self.rounds.iter().copied().collect();
        distinct
            .into_iter()
            .map(|r| (0..self.rounds.len()).filter(|&i| self.rounds[i] == r).collect())
            .collect()
    }

    /// Analysis order: robots sorted by (round, index). The set `1:i-1` of
    /// the suboptimality analysis is the prefix before `i` in this order.
    pub fn order(&self) -> Vec<usize> {
        let mut o: Vec<usize> = (0..self.rounds.len()).collect();
        o.sort_by_key(|&i| (self.rounds[i], i));
        o
    }

    pub fn predecessors(&self, robot: usize) -> BTreeSet<usize> {
        self.order().into_iter().take_while(|&j| j != robot).collect()
    }

    /// Predecessors whose decisions robot `i` did not receive.
    pub fn ignored(&self, robot: usize) -> BTreeSet<usize> {
        self.predecessors(robot)
            .difference(&self.in_neighbors[robot])
            .copied()
            .collect()
    }
}

/// Complete DAG: robot `i` in round `i + 1`, receiving every earlier decision.
pub fn build_sequential_graph(n_robots: usize) -> Result<PlannerGraph> {
    if n_robots == 0 {
        return Err(Error::InvalidArgument("team size must be at least 1".into()));
    }
    PlannerGraph::from_rounds((1..=n_robots).collect())
}

/// Every robot in one round with no edges.
pub fn build_parallel_graph(n_robots: usize) -> Result<PlannerGraph> {
    if n_robots == 0 {
        return Err(Error::InvalidArgument("team size must be at least 1".into()));
    }
    PlannerGraph::from_rounds(vec![1; n_robots])
}

/// Randomized sequential partition: independent uniform rounds in `1..=n_d`.
pub fn rsp_assign<R: Rng + ?Sized>(n_robots: usize, n_d: usize, rng: &mut R) -> Result<PlannerGraph> {
    if n_robots == 0 || n_d == 0 {
        return Err(Error::InvalidArgument("need at least one robot and one round".into()));
    }
    PlannerGraph::from_rounds((0..n_robots).map(|_| rng.gen_range(1..=n_d)).collect())
}

/// Drops in-edges from robots farther than `robot_range` and scopes each
/// robot to targets whose filter mean lies within `target_range`.
pub fn apply_range_limits(
    graph: &PlannerGraph,
    robots: &[Cell],
    target_means: &[(f64, f64)],
    robot_range: f64,
    target_range: f64,
) -> Result<(PlannerGraph, Vec<Vec<usize>>)> {
    if robots.len() != graph.num_robots() {
        return Err(Error::InvalidArgument("positions do not match graph".into()));
    }
    let nbrs = (0..graph.num_robots())
        .map(|i| {
            graph.in_neighbors[i]
                .iter()
                .copied()
                .filter(|&j| robots[i].distance(robots[j]) <= robot_range)
                .collect()
        })
        .collect();
    let scopes = robots
        .iter()
        .map(|r| {
            target_means
                .iter()
                .enumerate()
                .filter(|(_, &(x, y))| (x - f64::from(r.x)).hypot(y - f64::from(r.y)) <= target_range)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    Ok((PlannerGraph::new(graph.rounds.clone(), nbrs)?, scopes))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CoordinationMethod {
    Sequential,
    Rsp {
        n_d: usize,
    },
    Rrsp {
        n_d: usize,
        robot_range: f64,
        target_range: f64,
    },
    Myopic,
    Random,
}

impl CoordinationMethod {
    pub fn rrsp(n_d: usize) -> Self {
        CoordinationMethod::Rrsp {
            n_d,
            robot_range: DEFAULT_ROBOT_RANGE,
            target_range: DEFAULT_TARGET_RANGE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CoordinationMethod::Rsp { n_d } | CoordinationMethod::Rrsp { n_d, .. } if n_d == 0 => {
                Err(Error::InvalidArgument("n_d must be at least 1".into()))
            }
            CoordinationMethod::Rrsp {
                robot_range,
                target_range,
                ..
            } if !(robot_range >= 0.0) || !(target_range >= 0.0) => {
                Err(Error::InvalidArgument("ranges must be nonnegative".into()))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for CoordinationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CoordinationMethod::Sequential => write!(f, "sequential"),
            CoordinationMethod::Rsp { n_d } => write!(f, "rsp:{n_d}"),
            CoordinationMethod::Rrsp {
                n_d,
                robot_range,
                target_range,
            } => {
                if robot_range == DEFAULT_ROBOT_RANGE && target_range == DEFAULT_TARGET_RANGE {
                    write!(f, "rrsp:{n_d}")
                } else {
                    write!(f, "rrsp:{n_d}:{robot_range}:{target_range}")
                }
            }
            CoordinationMethod::Myopic => write!(f, "myopic"),
            CoordinationMethod::Random => write!(f, "random"),
        }
    }
}

/// Parses `sequential`, `rsp:N`, `rrsp:N[:robot_range:target_range]`,
/// `myopic`, `random`.
impl FromStr for CoordinationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |p: &str| -> Result<f64> {
            p.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad number {p:?} in method {s:?}")))
        };
        let nd = |p: &str| -> Result<usize> {
            p.parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("bad round count {p:?} in method {s:?}")))
        };
        let m = match parts.as_slice() {
            ["sequential"] => CoordinationMethod::Sequential,
            ["myopic"] => CoordinationMethod::Myopic,
            ["random"] => CoordinationMethod::Random,
            ["rsp", n] => CoordinationMethod::Rsp { n_d: nd(n)? },
            ["rrsp", n] => CoordinationMethod::rrsp(nd(n)?),
            ["rrsp", n, r, t] => CoordinationMethod::Rrsp {
                n_d: nd(n)?,
                robot_range: num(r)?,
                target_range: num(t)?,
            },
            _ => return Err(Error::InvalidArgument(format!("unknown method {s:?}"))),
        };
        m.validate()?;
        Ok(m)
    }
}

impl Serialize for MethodTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

impl<'de> Deserialize<'de> for MethodTag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map(MethodTag).map_err(serde::de::Error::custom)
    }
}

/// A method serialized in its compact string form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MethodTag(pub CoordinationMethod);

/// Decision sent along one graph edge. Encoded size is fixed for a horizon:
/// sender (4 bytes) + epoch (8 bytes) + one byte per control.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionMessage {
    pub sender: u32,
    pub epoch: u64,
    pub controls: Vec<Control>,
}

pub const MESSAGE_HEADER_BYTES: usize = 12;

impl DecisionMessage {
    pub fn encoded_len(horizon: usize) -> usize {
        MESSAGE_HEADER_BYTES + horizon
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::encoded_len(self.controls.len()));
        out.extend_from_slice(&self.sender.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend(self.controls.iter().map(|c| c.index() as u8));
        out
    }

    pub fn decode(bytes: &[u8], horizon: usize) -> Result<Self> {
        if bytes.len() != Self::encoded_len(horizon) {
            return Err(Error::Integrity(format!(
                "message of {} bytes, expected {}",
                bytes.len(),
                Self::encoded_len(horizon)
            )));
        }
        let sender = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes"));
        let epoch = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes"));
        let controls = bytes[12..]
            .iter()
            .map(|&b| {
                Control::ALL
                    .get(b as usize)
                    .copied()
                    .ok_or_else(|| Error::Integrity(format!("bad control byte {b}")))
            })
            .collect::<Result<_>>()?;
        Ok(DecisionMessage {
            sender,
            epoch,
            controls,
        })
    }
}

/// A team planning problem: conditional gain oracles for each robot.
pub trait PlanningProblem: Sync {
    fn num_robots(&self) -> usize;
    fn num_targets(&self) -> usize;
    fn horizon(&self) -> usize;
    fn robot_positions(&self) -> Vec<Cell>;
    fn target_means(&self) -> Vec<(f64, f64)>;
    /// Gain of robot `robot`'s actions given `prior`, restricted to `scope`
    /// targets when given. `samples` is ignored by exact problems.
    fn gain_model<'a>(
        &'a self,
        robot: usize,
        prior: &Selection,
        scope: Option<&[usize]>,
        samples: usize,
        seed: u64,
    ) -> Result<Box<dyn GainModel + 'a>>;
}

impl PlanningProblem for ObjectiveContext {
    fn num_robots(&self) -> usize {
        ObjectiveContext::num_robots(self)
    }
    fn num_targets(&self) -> usize {
        ObjectiveContext::num_targets(self)
    }
    fn horizon(&self) -> usize {
        ObjectiveContext::horizon(self)
    }
    fn robot_positions(&self) -> Vec<Cell> {
        self.robots().to_vec()
    }
    fn target_means(&self) -> Vec<(f64, f64)> {
        ObjectiveContext::target_means(self).to_vec()
    }
    fn gain_model<'a>(
        &'a self,
        robot: usize,
        prior: &Selection,
        scope: Option<&[usize]>,
        samples: usize,
        seed: u64,
    ) -> Result<Box<dyn GainModel + 'a>> {
        Ok(Box::new(self.conditional(robot, prior, samples, seed, scope)?))
    }
}

impl PlanningProblem for ExactInstance {
    fn num_robots(&self) -> usize {
        ExactInstance::num_robots(self)
    }
    fn num_targets(&self) -> usize {
        ExactInstance::num_targets(self)
    }
    fn horizon(&self) -> usize {
        1
    }
    fn robot_positions(&self) -> Vec<Cell> {
        self.robots().to_vec()
    }
    fn target_means(&self) -> Vec<(f64, f64)> {
        ExactInstance::target_means(self)
    }
    fn gain_model<'a>(
        &'a self,
        robot: usize,
        prior: &Selection,
        scope: Option<&[usize]>,
        _samples: usize,
        _seed: u64,
    ) -> Result<Box<dyn GainModel + 'a>> {
        Ok(Box::new(self.conditional(robot, prior, scope)?))
    }
}

/// Single-robot planner used inside coordination.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Planner {
    Mcts(Budget),
    Exhaustive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub planner: Planner,
    /// Objective samples behind each robot's gain model.
    pub samples: usize,
}

impl PlannerConfig {
    pub fn mcts(iterations: u64, samples: usize) -> Self {
        PlannerConfig {
            planner: Planner::Mcts(Budget::iterations(iterations)),
            samples,
        }
    }

    pub fn exhaustive(samples: usize) -> Self {
        PlannerConfig {
            planner: Planner::Exhaustive,
            samples,
        }
    }
}

/// Seed of robot `i`'s gain model and planner in an epoch.
pub fn robot_seed(epoch_seed: u64, robot: usize) -> u64 {
    seeds::derive(epoch_seed, &[purpose::PLANNER, robot as u64])
}

/// Plans one robot's sequence. Empty scopes and planner errors yield the
/// lexicographically first sequence; the boolean reports a fallback.
pub fn plan_robot<P: PlanningProblem + ?Sized>(
    problem: &P,
    robot: usize,
    prior: &Selection,
    scope: Option<&[usize]>,
    cfg: &PlannerConfig,
    epoch_seed: u64,
) -> (Vec<Control>, bool) {
    let l = problem.horizon();
    if scope.is_some_and(|s| s.is_empty()) {
        return (vec![Control::Stay; l], false);
    }
    let seed = robot_seed(epoch_seed, robot);
    let result = problem
        .gain_model(robot, prior, scope, cfg.samples, seed)
        .and_then(|model| match cfg.planner {
            Planner::Exhaustive => exhaustive_plan(model.as_ref()).map(|(c, _)| c),
            Planner::Mcts(budget) => {
                let mut rng = seeds::rng(seed, &[purpose::PLANNER]);
                plan_anytime(model.as_ref(), &budget, &mut rng).map(|o| o.controls)
            }
        });
    match result {
        Ok(c) => (c, false),
        Err(_) => (vec![Control::Stay; l], true),
    }
}

/// Outcome of one planning epoch.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochPlan {
    pub selection: Selection,
    pub graph: PlannerGraph,
    pub scopes: Option<Vec<Vec<usize>>>,
    pub messages: Vec<DecisionMessage>,
    pub fallbacks: Vec<usize>,
    /// Wall time (seconds) spent in each round, in round order.
    pub round_seconds: Vec<f64>,
}

impl EpochPlan {
    pub fn sequential_steps(&self) -> usize {
        self.graph.sequential_steps()
    }

    pub fn controls(&self, robot: usize) -> &[Control] {
        &self
            .selection
            .action_of(robot)
            .expect("every robot has a decision")
            .controls
    }
}

/// Round-synchronous execution of a planner graph. Robots of one round plan
/// concurrently on decisions received from their in-neighbours; one message
/// is accounted per edge.
pub fn run_distributed_plan<P: PlanningProblem + ?Sized>(
    problem: &P,
    graph: &PlannerGraph,
    scopes: Option<&[Vec<usize>]>,
    cfg: &PlannerConfig,
    epoch: u64,
    epoch_seed: u64,
) -> Result<EpochPlan> {
    let n = problem.num_robots();
    if graph.num_robots() != n {
        return Err(Error::InvalidArgument("graph size does not match team".into()));
    }
    if scopes.is_some_and(|s| s.len() != n) {
        return Err(Error::InvalidArgument("one scope per robot required".into()));
    }
    let mut decisions: Vec<Option<Vec<Control>>> = vec![None; n];
    let mut fallbacks = Vec::new();
    let mut round_seconds = Vec::new();
    for group in graph.round_groups() {
        let start = Instant::now();
        let planned: Vec<(usize, Vec<Control>, bool)> = group
            .par_iter()
            .map(|&i| {
                let prior: Selection = graph
                    .in_neighbors(i)
                    .iter()
                    .map(|&j| Action::new(j, decisions[j].clone().expect("earlier round decided")))
                    .collect::<Result<_>>()?;
                let scope = scopes.map(|s| s[i].as_slice());
                let (c, fell_back) = plan_robot(problem, i, &prior, scope, cfg, epoch_seed);
                Ok((i, c, fell_back))
            })
            .collect::<Result<_>>()?;
        for (i, c, fell_back) in planned {
            if fell_back {
                fallbacks.push(i);
            }
            decisions[i] = Some(c);
        }
        round_seconds.push(start.elapsed().as_secs_f64());
    }
    let messages = graph
        .edges()
        .into_iter()
        .map(|(j, _)| DecisionMessage {
            sender: j as u32,
            epoch,
            controls: decisions[j].clone().expect("decided"),
        })
        .collect();
    let selection = decisions
        .into_iter()
        .enumerate()
        .map(|(i, c)| Action::new(i, c.expect("decided")))
        .collect::<Result<_>>()?;
    Ok(EpochPlan {
        selection,
        graph: graph.clone(),
        scopes: scopes.map(|s| s.to_vec()),
        messages,
        fallbacks,
        round_seconds,
    })
}

/// Robots in index order, each conditioning on all earlier decisions.
pub fn run_sequential_greedy<P: PlanningProblem + ?Sized>(
    problem: &P,
    cfg: &PlannerConfig,
    epoch_seed: u64,
) -> Selection {
    let mut chosen = Selection::new();
    for i in 0..problem.num_robots() {
        let (c, _) = plan_robot(problem, i, &chosen, None, cfg, epoch_seed);
        chosen.insert(Action::new(i, c).expect("nonempty"));
    }
    chosen
}

/// Every robot plans alone.
pub fn run_myopic<P: PlanningProblem + ?Sized>(problem: &P, cfg: &PlannerConfig, epoch_seed: u64) -> Selection {
    (0..problem.num_robots())
        .map(|i| {
            let (c, _) = plan_robot(problem, i, &Selection::new(), None, cfg, epoch_seed);
            Action::new(i, c).expect("nonempty")
        })
        .collect()
}

/// Uniformly random sequence per robot.
pub fn run_random(n_robots: usize, horizon: usize, epoch_seed: u64) -> Selection {
    (0..n_robots)
        .map(|i| {
            let mut rng = seeds::rng(epoch_seed, &[purpose::RANDOM_ACTION, i as u64]);
            let c = (0..horizon).map(|_| Control::ALL[rng.gen_range(0..5)]).collect();
            Action::new(i, c).expect("nonempty")
        })
        .collect()
}

/// Plans one epoch with the given method. RSP rounds are redrawn every epoch
/// from the epoch seed.
pub fn plan_epoch<P: PlanningProblem + ?Sized>(
    problem: &P,
    method: &CoordinationMethod,
    cfg: &PlannerConfig,
    epoch: u64,
    epoch_seed: u64,
) -> Result<EpochPlan> {
    plan_epoch_with_rounds(problem, method, cfg, epoch, epoch_seed, epoch_seed)
}

/// As [`plan_epoch`], but round assignments come from `round_seed`. Passing
/// the same `round_seed` every epoch keeps the assignment fixed.
pub fn plan_epoch_with_rounds<P: PlanningProblem + ?Sized>(
    problem: &P,
    method: &CoordinationMethod,
    cfg: &PlannerConfig,
    epoch: u64,
    epoch_seed: u64,
    round_seed: u64,
) -> Result<EpochPlan> {
    method.validate()?;
    let n = problem.num_robots();
    let mut round_rng = seeds::rng(round_seed, &[purpose::ROUNDS]);
    match *method {
        CoordinationMethod::Sequential => {
            run_distributed_plan(problem, &build_sequential_graph(n)?, None, cfg, epoch, epoch_seed)
        }
        CoordinationMethod::Myopic => {
            run_distributed_plan(problem, &build_parallel_graph(n)?, None, cfg, epoch, epoch_seed)
        }
        CoordinationMethod::Rsp { n_d } => {
            let g = rsp_assign(n, n_d, &mut round_rng)?;
            run_distributed_plan(problem, &g, None, cfg, epoch, epoch_seed)
        }
        CoordinationMethod::Rrsp {
            n_d,
            robot_range,
            target_range,
        } => {
            let g = rsp_assign(n, n_d, &mut round_rng)?;
            let (g, scopes) = apply_range_limits(
                &g,
                &problem.robot_positions(),
                &problem.target_means(),
                robot_range,
                target_range,
            )?;
            run_distributed_plan(problem, &g, Some(&scopes), cfg, epoch, epoch_seed)
        }
        CoordinationMethod::Random => {
            let start = Instant::now();
            let selection = run_random(n, problem.horizon(), epoch_seed);
            Ok(EpochPlan {
                selection,
                graph: build_parallel_graph(n)?,
                scopes: None,
                messages: Vec::new(),
                fallbacks: Vec::new(),
                round_seconds: vec![start.elapsed().as_secs_f64()],
            })
        }
    }
}
