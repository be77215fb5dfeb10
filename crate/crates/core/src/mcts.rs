//! Single-robot trajectory search: anytime UCT and exhaustive enumeration.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::objective::GainModel;
use crate::world::{enumerate_trajectories, Control};

pub const DEFAULT_ITERATIONS: u64 = 1000;
pub const DEFAULT_EXPLORATION: f64 = 0.5;
/// Keeps exploration alive while every observed leaf value is zero.
const EXPLORATION_FLOOR: f64 = 1e-9;
/// Largest leaf-by-sample table kept for memoizing leaf values.
const MEMO_LIMIT: usize = 1 << 20;

/// Search limits. With only a wall-time limit the result depends on timing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_iterations: Option<u64>,
    pub max_wall_time: Option<Duration>,
    /// Exploration constant is this multiple of the running mean |leaf value|.
    pub exploration: f64,
}

impl Budget {
    pub fn iterations(n: u64) -> Budget {
        Budget {
            max_iterations: Some(n),
            max_wall_time: None,
            exploration: DEFAULT_EXPLORATION,
        }
    }

    pub fn wall_time(d: Duration) -> Budget {
        Budget {
            max_iterations: None,
            max_wall_time: Some(d),
            exploration: DEFAULT_EXPLORATION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations.is_none() && self.max_wall_time.is_none() {
            return Err(Error::InvalidArgument("budget needs an iteration or time limit".into()));
        }
        if !(self.exploration > 0.0) {
            return Err(Error::InvalidArgument("exploration constant must be positive".into()));
        }
        Ok(())
    }

    fn is_zero(&self) -> bool {
        self.max_iterations == Some(0) || self.max_wall_time == Some(Duration::ZERO)
    }
}

impl Default for Budget {
    fn default() -> Self {
        Budget::iterations(DEFAULT_ITERATIONS)
    }
}

#[derive(Clone, Debug)]
pub struct SearchNode {
    pub visits: u64,
    pub value_sum: f64,
    children: [u32; 5],
}

impl SearchNode {
    fn new() -> SearchNode {
        SearchNode {
            visits: 0,
            value_sum: 0.0,
            children: [u32::MAX; 5],
        }
    }

    pub fn child(&self, u: Control) -> Option<usize> {
        let c = self.children[u.index()];
        (c != u32::MAX).then_some(c as usize)
    }

    pub fn mean(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.value_sum / self.visits as f64
        }
    }
}

/// Search tree in an arena; node 0 is the root.
#[derive(Clone, Debug)]
pub struct SearchTree {
    pub nodes: Vec<SearchNode>,
}

impl SearchTree {
    pub fn root(&self) -> &SearchNode {
        &self.nodes[0]
    }

    /// Visit counts of the root children in control order.
    pub fn root_visits(&self) -> [u64; 5] {
        let mut out = [0; 5];
        for u in Control::ALL {
            if let Some(c) = self.root().child(u) {
                out[u.index()] = self.nodes[c].visits;
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct PlanOutcome {
    pub controls: Vec<Control>,
    pub iterations: u64,
    pub tree: SearchTree,
}

fn leaf_code(path: &[Control]) -> usize {
    path.iter().fold(0, |acc, u| acc * 5 + u.index())
}

/// Anytime UCT over the robot's control sequences. Each iteration evaluates
/// one sample of the gain of a complete sequence (tree path plus uniform
/// random completion). The returned sequence follows the most visited child
/// at every level, ties to the first control in lexicographic order.
pub fn plan_anytime<M, R>(model: &M, budget: &Budget, rng: &mut R) -> Result<PlanOutcome>
where
    M: GainModel + ?Sized,
    R: Rng + ?Sized,
{
    budget.validate()?;
    let l = model.horizon();
    let mut tree = SearchTree {
        nodes: vec![SearchNode::new()],
    };
    if budget.is_zero() {
        return Ok(PlanOutcome {
            controls: vec![Control::Stay; l],
            iterations: 0,
            tree,
        });
    }
    let samples = model.num_samples().max(1);
    let leaves = 5usize.pow(l as u32);
    let mut memo = (leaves.saturating_mul(samples) <= MEMO_LIMIT).then(|| vec![f64::NAN; leaves * samples]);
    let start = Instant::now();
    let mut abs_sum = 0.0;
    let mut iterations = 0u64;
    let mut visited: Vec<usize> = Vec::with_capacity(l + 1);
    let mut path: Vec<Control> = Vec::with_capacity(l);
    loop {
        if budget.max_iterations.is_some_and(|n| iterations >= n) {
            break;
        }
        if budget.max_wall_time.is_some_and(|t| start.elapsed() >= t) && iterations > 0 {
            break;
        }
        let c = (budget.exploration * abs_sum / iterations.max(1) as f64).max(EXPLORATION_FLOOR);
        visited.clear();
        path.clear();
        let mut node = 0usize;
        visited.push(node);
        while path.len() < l {
            let parent = &tree.nodes[node];
            // expand the first unvisited child in control order
            if let Some(u) = Control::ALL.into_iter().find(|&u| parent.child(u).is_none()) {
                let id = tree.nodes.len();
                tree.nodes[node].children[u.index()] = id as u32;
                tree.nodes.push(SearchNode::new());
                path.push(u);
                visited.push(id);
                break;
            }
            let ln_n = (parent.visits.max(1) as f64).ln();
            let mut best: Option<(Control, usize, f64)> = None;
            for u in Control::ALL {
                let ch = parent.child(u).expect("fully expanded");
                let n = &tree.nodes[ch];
                let score = n.mean() + c * (ln_n / n.visits.max(1) as f64).sqrt();
                if best.map_or(true, |(_, _, s)| score > s) {
                    best = Some((u, ch, score));
                }
            }
            let (u, ch, _) = best.expect("five children");
            path.push(u);
            node = ch;
            visited.push(node);
        }
        while path.len() < l {
            path.push(Control::ALL[rng.gen_range(0..5)]);
        }
        let s = if samples == 1 { 0 } else { rng.gen_range(0..samples) };
        let value = match memo.as_mut() {
            Some(m) => {
                let slot = leaf_code(&path) * samples + s;
                if m[slot].is_nan() {
                    m[slot] = model.sample_gain(&path, s);
                }
                m[slot]
            }
            None => model.sample_gain(&path, s),
        };
        if !value.is_finite() {
            return Err(Error::Planner(format!("non-finite leaf value {value}")));
        }
        abs_sum += value.abs();
        for &id in &visited {
            tree.nodes[id].visits += 1;
            tree.nodes[id].value_sum += value;
        }
        iterations += 1;
    }
    let mut controls = Vec::with_capacity(l);
    let mut node = Some(0usize);
    for _ in 0..l {
        let mut pick = Control::Stay;
        let mut next = None;
        if let Some(n) = node {
            let mut most = 0u64;
            for u in Control::ALL {
                if let Some(ch) = tree.nodes[n].child(u) {
                    if tree.nodes[ch].visits > most {
                        most = tree.nodes[ch].visits;
                        pick = u;
                        next = Some(ch);
                    }
                }
            }
        }
        controls.push(pick);
        node = next;
    }
    Ok(PlanOutcome {
        controls,
        iterations,
        tree,
    })
}

/// Exact argmax of the model's gain over all sequences; ties go to the
/// lexicographically first sequence.
pub fn exhaustive_plan<M: GainModel + ?Sized>(model: &M) -> Result<(Vec<Control>, f64)> {
    let mut best: Option<(Vec<Control>, f64)> = None;
    for c in enumerate_trajectories(model.horizon())? {
        let g = model.gain(&c);
        if best.as_ref().map_or(true, |(_, b)| g > *b) {
            best = Some((c, g));
        }
    }
    best.ok_or_else(|| Error::Planner("no trajectories".into()))
}
