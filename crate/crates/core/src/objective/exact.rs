//! Exact mutual information on tiny instances with a discrete sensor.

use crate::error::{Error, Result};
use crate::objective::{CapacityMatrix, GainModel};
use crate::sensing::HistogramFilter;
use crate::submodular::{Action, Selection, SetFunction};
use crate::world::{step_robot, Cell, Control, Grid, MotionKernel};

pub const MAX_EXACT_CELLS: usize = 16;
pub const MAX_EXACT_ROBOTS: usize = 3;
pub const MAX_EXACT_TARGETS: usize = 2;
/// Every action of three robots at horizon one.
pub const MAX_EXACT_SELECTION: usize = 15;

/// Finite-alphabet sensor given by a table `p(y | robot cell, target cell)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactDiscreteSensor {
    grid: Grid,
    alphabet: usize,
    probs: Vec<f64>,
}

impl ExactDiscreteSensor {
    /// Binary detection: `p(detect | d) = max(0.1, 1 - d / range)`.
    pub fn detection(grid: Grid, range: f64) -> Result<Self> {
        if !(range > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "detection range {range} must be positive"
            )));
        }
        Self::from_fn(grid, 2, |r, t| {
            let p = (1.0 - r.distance(t) / range).max(0.1);
            vec![1.0 - p, p]
        })
    }

    /// Observes the target cell index exactly.
    pub fn perfect(grid: Grid) -> Result<Self> {
        let n = grid.num_cells();
        Self::from_fn(grid, n, |_, t| {
            let mut v = vec![0.0; n];
            v[grid.index(t)] = 1.0;
            v
        })
    }

    pub fn from_fn<F>(grid: Grid, alphabet: usize, f: F) -> Result<Self>
    where
        F: Fn(Cell, Cell) -> Vec<f64>,
    {
        if alphabet == 0 {
            return Err(Error::InvalidArgument("empty observation alphabet".into()));
        }
        let n = grid.num_cells();
        let mut probs = Vec::with_capacity(n * n * alphabet);
        for r in grid.cells() {
            for t in grid.cells() {
                let row = f(r, t);
                let sum: f64 = row.iter().sum();
                if row.len() != alphabet || row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "observation row for robot {r:?}, target {t:?} is not a distribution"
                    )));
                }
                probs.extend(row);
            }
        }
        Ok(ExactDiscreteSensor { grid, alphabet, probs })
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    fn row(&self, robot: Cell, target: Cell) -> &[f64] {
        let n = self.grid.num_cells();
        let k = (self.grid.index(robot) * n + self.grid.index(target)) * self.alphabet;
        &self.probs[k..k + self.alphabet]
    }

    pub fn probability(&self, y: usize, robot: Cell, target: Cell) -> f64 {
        if y >= self.alphabet {
            return 0.0;
        }
        self.row(robot, target)[y]
    }

    /// Inverse-CDF draw from a uniform variate in `[0, 1)`.
    pub fn sample(&self, robot: Cell, target: Cell, u: f64) -> usize {
        let row = self.row(robot, target);
        let mut acc = 0.0;
        for (y, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return y;
            }
        }
        row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

/// Tiny single-step instance: robots choose one control, targets (optionally)
/// take one random-walk step, then every selected action yields one discrete
/// observation of every target.
#[derive(Clone, Debug)]
pub struct ExactInstance {
    grid: Grid,
    robots: Vec<Cell>,
    /// Target distributions at the observation time, dense over cells.
    beliefs: Vec<Vec<f64>>,
    sensor: ExactDiscreteSensor,
}

impl ExactInstance {
    pub fn new(
        robots: Vec<Cell>,
        filters: &[HistogramFilter],
        sensor: ExactDiscreteSensor,
        targets_move: bool,
    ) -> Result<Self> {
        let grid = sensor.grid;
        if grid.num_cells() > MAX_EXACT_CELLS {
            return Err(Error::TooLarge {
                what: "grid cells",
                actual: grid.num_cells() as u128,
                limit: MAX_EXACT_CELLS as u128,
            });
        }
        if robots.len() > MAX_EXACT_ROBOTS {
            return Err(Error::TooLarge {
                what: "robots",
                actual: robots.len() as u128,
                limit: MAX_EXACT_ROBOTS as u128,
            });
        }
        if filters.len() > MAX_EXACT_TARGETS {
            return Err(Error::TooLarge {
                what: "targets",
                actual: filters.len() as u128,
                limit: MAX_EXACT_TARGETS as u128,
            });
        }
        if robots.iter().any(|&r| !grid.contains(r)) || filters.iter().any(|f| *f.grid() != grid) {
            return Err(Error::InvalidArgument(
                "instance entities must share the sensor grid".into(),
            ));
        }
        let beliefs = filters
            .iter()
            .map(|f| {
                let f = if targets_move {
                    f.predict(&MotionKernel)
                } else {
                    f.clone()
                };
                let mut dense = vec![0.0; grid.num_cells()];
                for (c, p) in f.entries() {
                    dense[grid.index(c)] = p;
                }
                dense
            })
            .collect();
        Ok(ExactInstance {
            grid,
            robots,
            beliefs,
            sensor,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn robots(&self) -> &[Cell] {
        &self.robots
    }

    pub fn num_robots(&self) -> usize {
        self.robots.len()
    }

    pub fn num_targets(&self) -> usize {
        self.beliefs.len()
    }

    /// Belief-weighted mean position of each target at observation time.
    pub fn target_means(&self) -> Vec<(f64, f64)> {
        self.beliefs
            .iter()
            .map(|b| {
                b.iter().enumerate().fold((0.0, 0.0), |(x, y), (i, &p)| {
                    let c = self.grid.cell(i);
                    (x + p * f64::from(c.x), y + p * f64::from(c.y))
                })
            })
            .collect()
    }

    fn observer_cells(&self, set: &Selection) -> Result<Vec<Cell>> {
        if set.len() > MAX_EXACT_SELECTION {
            return Err(Error::TooLarge {
                what: "selection size",
                actual: set.len() as u128,
                limit: MAX_EXACT_SELECTION as u128,
            });
        }
        set.iter()
            .map(|a| {
                if a.robot >= self.robots.len() {
                    return Err(Error::InvalidArgument(format!("{a} refers to unknown robot")));
                }
                if a.horizon() != 1 {
                    return Err(Error::InvalidArgument(format!("{a}: exact instances use horizon 1")));
                }
                Ok(step_robot(&self.grid, self.robots[a.robot], a.controls[0]))
            })
            .collect()
    }

    /// `I(target j ; observations of X)` in bits.
    pub fn target_information(&self, set: &Selection, target: usize) -> Result<f64> {
        if target >= self.beliefs.len() {
            return Err(Error::InvalidArgument(format!("target {target} not in instance")));
        }
        let observers = self.observer_cells(set)?;
        if observers.is_empty() {
            return Ok(0.0);
        }
        let belief = &self.beliefs[target];
        let support: Vec<(Cell, f64)> = belief
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| (self.grid.cell(i), p))
            .collect();
        // H(Y | X) splits over observers because observations are
        // conditionally independent given the target cell.
        let conditional: f64 = support
            .iter()
            .map(|&(c, p)| {
                p * observers
                    .iter()
                    .map(|&r| crate::sensing::entropy_bits(self.sensor.row(r, c).iter().copied()))
                    .sum::<f64>()
            })
            .sum();
        let weights: Vec<f64> = support.iter().map(|&(_, p)| p).collect();
        let cells: Vec<Cell> = support.iter().map(|&(c, _)| c).collect();
        let mut marginal = 0.0;
        self.outcome_entropy(&observers, &cells, weights, &mut marginal);
        Ok((marginal - conditional).max(0.0))
    }

    /// Accumulates `-Σ P(y) log2 P(y)` over joint outcomes by depth-first
    /// enumeration, pruning zero-probability prefixes.
    fn outcome_entropy(&self, observers: &[Cell], cells: &[Cell], weights: Vec<f64>, acc: &mut f64) {
        let Some((&r, rest)) = observers.split_first() else {
            let p: f64 = weights.iter().sum();
            if p > 0.0 {
                *acc -= p * p.log2();
            }
            return;
        };
        for y in 0..self.sensor.alphabet {
            let next: Vec<f64> = weights
                .iter()
                .zip(cells)
                .map(|(&w, &c)| w * self.sensor.probability(y, r, c))
                .collect();
            if next.iter().any(|&w| w > 0.0) {
                self.outcome_entropy(rest, cells, next, acc);
            }
        }
    }

    /// Exact objective: sum of per-target information.
    pub fn objective(&self, set: &Selection) -> Result<f64> {
        (0..self.num_targets()).map(|j| self.target_information(set, j)).sum()
    }

    pub fn channel_capacity(&self, robot: usize, target: usize) -> Result<f64> {
        let mut best = 0.0f64;
        for u in Control::ALL {
            let x = Action::new(robot, vec![u])?;
            best = best.max(self.target_information(&Selection::singleton(x), target)?);
        }
        Ok(best)
    }

    pub fn capacity_matrix(&self, scopes: Option<&[Vec<usize>]>) -> Result<CapacityMatrix> {
        let mut values = vec![vec![0.0; self.num_targets()]; self.num_robots()];
        for (i, row) in values.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                if scopes.map_or(true, |s| s[i].contains(&j)) {
                    *v = self.channel_capacity(i, j)?;
                }
            }
        }
        CapacityMatrix::new(values)
    }

    /// Gain oracle for one robot given prior decisions, restricted to `scope`.
    pub fn conditional(&self, robot: usize, prior: &Selection, scope: Option<&[usize]>) -> Result<ExactGain<'_>> {
        if robot >= self.num_robots() {
            return Err(Error::InvalidArgument(format!("robot {robot} not in instance")));
        }
        let scope: Vec<usize> = scope.map_or_else(|| (0..self.num_targets()).collect(), |s| s.to_vec());
        let base = scope
            .iter()
            .map(|&j| self.target_information(prior, j))
            .collect::<Result<Vec<_>>>()?;
        Ok(ExactGain {
            inst: self,
            robot,
            prior: prior.clone(),
            scope,
            base,
        })
    }
}

/// Exact objective value; refuses instances beyond the enumeration limits.
pub fn exact_objective(set: &Selection, inst: &ExactInstance) -> Result<f64> {
    inst.objective(set)
}

impl SetFunction for ExactInstance {
    fn evaluate(&self, set: &Selection) -> f64 {
        self.objective(set).expect("selection incompatible with exact instance")
    }
}

/// The `j`-th summand of an exact instance as its own set function.
pub struct ExactTarget<'a> {
    pub inst: &'a ExactInstance,
    pub target: usize,
}

impl SetFunction for ExactTarget<'_> {
    fn evaluate(&self, set: &Selection) -> f64 {
        self.inst
            .target_information(set, self.target)
            .expect("selection incompatible with exact instance")
    }
}

pub struct ExactGain<'a> {
    inst: &'a ExactInstance,
    robot: usize,
    prior: Selection,
    scope: Vec<usize>,
    base: Vec<f64>,
}

impl GainModel for ExactGain<'_> {
    fn robot(&self) -> usize {
        self.robot
    }

    fn horizon(&self) -> usize {
        1
    }

    fn num_samples(&self) -> usize {
        1
    }

    fn sample_gain(&self, controls: &[Control], _sample: usize) -> f64 {
        let x = Action::new(self.robot, controls.to_vec()).expect("nonempty controls");
        let with = self.prior.with(&x);
        self.scope
            .iter()
            .zip(&self.base)
            .map(|(&j, b)| self.inst.target_information(&with, j).expect("valid action") - b)
            .sum()
    }
}
