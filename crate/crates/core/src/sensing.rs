//! Range sensing and per-target histogram Bayes filters.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{Cell, Grid, MotionKernel};

/// Posterior mass below this floor is treated as a degenerate update.
pub const DEGENERATE_MASS: f64 = 1e-300;

/// Occupancy threshold used by sparse filters.
pub const SPARSE_THRESHOLD: f64 = 1e-3;

/// Teams at least this large track targets with sparse filters.
pub const SPARSE_TEAM_SIZE: usize = 16;

/// Range observation with saturating mean and distance-dependent variance:
/// `y ~ N(min(d, sat), base + scale * min(d, sat)^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeSensorModel {
    pub saturation_distance: f64,
    pub variance_base: f64,
    pub variance_scale: f64,
}

impl Default for RangeSensorModel {
    fn default() -> Self {
        RangeSensorModel {
            saturation_distance: 20.0,
            variance_base: 0.25,
            variance_scale: 0.5,
        }
    }
}

impl RangeSensorModel {
    pub fn mean(&self, distance: f64) -> f64 {
        distance.min(self.saturation_distance)
    }

    pub fn variance(&self, distance: f64) -> f64 {
        let m = self.mean(distance);
        self.variance_base + self.variance_scale * m * m
    }

    /// Deterministic observation from a standard-normal noise draw.
    pub fn observe_with_noise(&self, robot: Cell, target: Cell, z: f64) -> f64 {
        let d = robot.distance(target);
        self.mean(d) + self.variance(d).sqrt() * z
    }

    pub fn likelihood(&self, y: f64, robot: Cell, candidate: Cell) -> f64 {
        let d = robot.distance(candidate);
        let (m, v) = (self.mean(d), self.variance(d));
        (-(y - m) * (y - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
    }
}

pub fn sample_observation<R: Rng + ?Sized>(robot: Cell, target: Cell, model: &RangeSensorModel, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    model.observe_with_noise(robot, target, z)
}

pub fn likelihood(y: f64, robot: Cell, candidate: Cell, model: &RangeSensorModel) -> f64 {
    model.likelihood(y, robot, candidate)
}

/// Observation moments tabulated by absolute cell offset, for the hot loops
/// that evaluate many likelihoods on one grid.
#[derive(Clone, Debug)]
pub struct LikelihoodTable {
    side: usize,
    mean: Vec<f64>,
    sd: Vec<f64>,
    inv_two_var: Vec<f64>,
    log_norm: Vec<f64>,
}

impl LikelihoodTable {
    pub fn new(grid: &Grid, model: &RangeSensorModel) -> Self {
        let side = grid.side();
        let mut t = LikelihoodTable {
            side,
            mean: Vec::with_capacity(side * side),
            sd: Vec::with_capacity(side * side),
            inv_two_var: Vec::with_capacity(side * side),
            log_norm: Vec::with_capacity(side * side),
        };
        for dy in 0..side {
            for dx in 0..side {
                let d = (dx as f64).hypot(dy as f64);
                let v = model.variance(d);
                t.mean.push(model.mean(d));
                t.sd.push(v.sqrt());
                t.inv_two_var.push(0.5 / v);
                t.log_norm.push(-0.5 * (2.0 * std::f64::consts::PI * v).ln());
            }
        }
        t
    }

    #[inline]
    fn slot(&self, a: Cell, b: Cell) -> usize {
        (a.y - b.y).unsigned_abs() as usize * self.side + (a.x - b.x).unsigned_abs() as usize
    }

    #[inline]
    pub fn observe(&self, robot: Cell, target: Cell, z: f64) -> f64 {
        let k = self.slot(robot, target);
        self.mean[k] + self.sd[k] * z
    }

    #[inline]
    pub fn log_likelihood(&self, y: f64, robot: Cell, candidate: Cell) -> f64 {
        let k = self.slot(robot, candidate);
        let r = y - self.mean[k];
        self.log_norm[k] - r * r * self.inv_two_var[k]
    }
}

/// Probability mass over grid cells for one target, stored sparsely as
/// `(cell index, probability)` pairs sorted by index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramFilter {
    grid: Grid,
    mass: Vec<(u32, f64)>,
    sparse_threshold: f64,
}

impl HistogramFilter {
    pub fn point_mass(grid: Grid, cell: Cell) -> Self {
        HistogramFilter {
            grid,
            mass: vec![(grid.index(cell) as u32, 1.0)],
            sparse_threshold: 0.0,
        }
    }

    pub fn uniform(grid: Grid) -> Self {
        let n = grid.num_cells();
        HistogramFilter {
            grid,
            mass: (0..n as u32).map(|i| (i, 1.0 / n as f64)).collect(),
            sparse_threshold: 0.0,
        }
    }

    /// Builds a filter from arbitrary nonnegative weights (normalized here).
    pub fn from_weights(grid: Grid, weights: &[(Cell, f64)]) -> Result<Self> {
        let mut dense = vec![0.0; grid.num_cells()];
        for &(c, w) in weights {
            if !grid.contains(c) || !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidArgument(format!("bad weight {w} at {c:?}")));
            }
            dense[grid.index(c)] += w;
        }
        let f = Self::from_dense(grid, &dense, 0.0);
        if f.mass.is_empty() {
            return Err(Error::InvalidArgument("weights sum to zero".into()));
        }
        Ok(f)
    }

    fn from_dense(grid: Grid, dense: &[f64], sparse_threshold: f64) -> Self {
        let total: f64 = dense.iter().sum();
        let mass = dense
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| (i as u32, p / total))
            .collect();
        HistogramFilter {
            grid,
            mass,
            sparse_threshold,
        }
    }

    pub fn with_sparse_threshold(mut self, threshold: f64) -> Self {
        self.sparse_threshold = threshold;
        if threshold > 0.0 {
            self.sparsify_in_place();
        }
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn sparse_threshold(&self) -> f64 {
        self.sparse_threshold
    }

    pub fn support_len(&self) -> usize {
        self.mass.len()
    }

    /// Nonzero `(cell, probability)` entries in cell-index order.
    pub fn entries(&self) -> impl Iterator<Item = (Cell, f64)> + '_ {
        self.mass.iter().map(|&(i, p)| (self.grid.cell(i as usize), p))
    }

    pub fn raw_entries(&self) -> &[(u32, f64)] {
        &self.mass
    }

    pub fn probability(&self, c: Cell) -> f64 {
        if !self.grid.contains(c) {
            return 0.0;
        }
        let i = self.grid.index(c) as u32;
        self.mass
            .binary_search_by_key(&i, |&(k, _)| k)
            .map(|pos| self.mass[pos].1)
            .unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().map(|&(_, p)| p).sum()
    }

    pub fn max_probability(&self) -> f64 {
        self.mass.iter().map(|&(_, p)| p).fold(0.0, f64::max)
    }

    /// Expected position in cell coordinates.
    pub fn mean(&self) -> (f64, f64) {
        self.entries().fold((0.0, 0.0), |(mx, my), (c, p)| {
            (mx + p * f64::from(c.x), my + p * f64::from(c.y))
        })
    }

    pub fn mean_distance(&self, from: Cell) -> f64 {
        let (mx, my) = self.mean();
        (mx - f64::from(from.x)).hypot(my - f64::from(from.y))
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        entropy_bits(self.mass.iter().map(|&(_, p)| p))
    }

    pub fn sample_cell<R: Rng + ?Sized>(&self, rng: &mut R) -> Cell {
        let u: f64 = rng.gen::<f64>() * self.total_mass();
        let mut acc = 0.0;
        for &(i, p) in &self.mass {
            acc += p;
            if u < acc {
                return self.grid.cell(i as usize);
            }
        }
        self.grid.cell(self.mass.last().expect("empty filter").0 as usize)
    }

    /// Pushes mass through the target motion kernel.
    pub fn predict(&self, kernel: &MotionKernel) -> HistogramFilter {
        let mut dense = vec![0.0; self.grid.num_cells()];
        for (c, p) in self.entries() {
            for (next, w) in kernel.row(&self.grid, c) {
                dense[self.grid.index(next)] += p * w;
            }
        }
        let mut out = Self::from_dense(self.grid, &dense, self.sparse_threshold);
        if self.sparse_threshold > 0.0 {
            out.sparsify_in_place();
        }
        out
    }

    /// Bayes update with one range observation from `robot`.
    pub fn update(&self, y: f64, robot: Cell, model: &RangeSensorModel) -> Result<HistogramFilter> {
        let weights: Vec<(u32, f64)> = self
            .mass
            .iter()
            .map(|&(i, p)| (i, p * model.likelihood(y, robot, self.grid.cell(i as usize))))
            .collect();
        self.normalized_posterior(weights)
    }

    /// Bayes update with several observations at once, accumulated in log
    /// space so that many weak likelihoods cannot underflow.
    pub fn update_many(&self, table: &LikelihoodTable, obs: &[(Cell, f64)]) -> Result<HistogramFilter> {
        if obs.is_empty() {
            return Ok(self.clone());
        }
        let logs: Vec<f64> = self
            .mass
            .iter()
            .map(|&(i, _)| {
                let c = self.grid.cell(i as usize);
                obs.iter().map(|&(r, y)| table.log_likelihood(y, r, c)).sum()
            })
            .collect();
        let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            return Err(Error::DegenerateUpdate(0.0));
        }
        let weights = self
            .mass
            .iter()
            .zip(&logs)
            .map(|(&(i, p), &l)| (i, p * (l - shift).exp()))
            .collect();
        self.normalized_posterior(weights)
    }

    fn normalized_posterior(&self, weights: Vec<(u32, f64)>) -> Result<HistogramFilter> {
        let total: f64 = weights.iter().map(|&(_, w)| w).sum();
        if !(total >= DEGENERATE_MASS) || !total.is_finite() {
            return Err(Error::DegenerateUpdate(total));
        }
        let mut out = HistogramFilter {
            grid: self.grid,
            mass: weights
                .into_iter()
                .filter(|&(_, w)| w > 0.0)
                .map(|(i, w)| (i, w / total))
                .collect(),
            sparse_threshold: self.sparse_threshold,
        };
        if self.sparse_threshold > 0.0 {
            out.sparsify_in_place();
        }
        Ok(out)
    }

    /// Drops cells below the threshold and renormalizes. Returns the mass
    /// removed. The most likely cell is always kept.
    pub fn sparsify(&self, threshold: f64) -> (HistogramFilter, f64) {
        let mut out = self.clone();
        out.sparse_threshold = threshold;
        let removed = out.sparsify_in_place();
        (out, removed)
    }

    fn sparsify_in_place(&mut self) -> f64 {
        let threshold = self.sparse_threshold;
        let peak = self.max_probability();
        let before = self.total_mass();
        self.mass.retain(|&(_, p)| p >= threshold || p == peak);
        let after = self.total_mass();
        for e in &mut self.mass {
            e.1 /= after;
        }
        before - after
    }
}

pub fn entropy(f: &HistogramFilter) -> f64 {
    f.entropy()
}

pub fn predict(f: &HistogramFilter, kernel: &MotionKernel) -> HistogramFilter {
    f.predict(kernel)
}

pub fn update(f: &HistogramFilter, y: f64, robot: Cell, model: &RangeSensorModel) -> Result<HistogramFilter> {
    f.update(y, robot, model)
}

/// `-Σ p log2 p` with `0 log 0 = 0`.
pub fn entropy_bits<I: IntoIterator<Item = f64>>(probs: I) -> f64 {
    -probs
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| p * p.log2())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;
    use crate::world::step_target;

    fn grid(side: usize) -> Grid {
        Grid::new(side).unwrap()
    }

    #[test]
    fn sensor_moments() {
        let m = RangeSensorModel::default();
        assert_eq!(m.mean(2.0), 2.0);
        assert_eq!(m.variance(2.0), 2.25);
        assert_eq!(m.mean(30.0), 20.0);
        assert_eq!(m.variance(30.0), 200.25);
        assert_eq!(m.variance(0.0), 0.25);
    }

    #[test]
    fn observation_sample_mean() {
        let m = RangeSensorModel::default();
        let robot = Cell::new(0, 0);
        let target = Cell::new(3, 4);
        let mut rng = seeds::rng(5, &[1]);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| sample_observation(robot, target, &m, &mut rng))
            .sum::<f64>()
            / n as f64;
        let sigma = m.variance(5.0).sqrt();
        assert!((mean - 5.0).abs() < 3.0 * sigma / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn likelihood_shape() {
        let m = RangeSensorModel::default();
        let r = Cell::new(0, 0);
        let c = Cell::new(0, 2);
        let peak = likelihood(2.0, r, c, &m);
        assert!((peak - 1.0 / (2.0 * std::f64::consts::PI * 2.25).sqrt()).abs() < 1e-15);
        assert!((likelihood(2.7, r, c, &m) - likelihood(1.3, r, c, &m)).abs() < 1e-15);
        // d = 1 vs d = 10 at y = 1
        let near = likelihood(1.0, r, Cell::new(1, 0), &m);
        let far = likelihood(1.0, r, Cell::new(10, 0), &m);
        let (v1, v10): (f64, f64) = (0.25 + 0.5, 0.25 + 0.5 * 100.0);
        let expected = (v10 / v1).sqrt() * (81.0 / (2.0 * v10)).exp();
        assert!((near / far - expected).abs() / expected < 1e-12);
    }

    #[test]
    fn table_matches_direct_formula() {
        let g = grid(7);
        let m = RangeSensorModel::default();
        let t = LikelihoodTable::new(&g, &m);
        for c in g.cells() {
            let r = Cell::new(2, 5);
            let y = 1.7;
            assert!((t.log_likelihood(y, r, c).exp() - m.likelihood(y, r, c)).abs() < 1e-14);
            assert!((t.observe(r, c, 0.3) - m.observe_with_noise(r, c, 0.3)).abs() < 1e-14);
        }
    }

    #[test]
    fn entropy_examples() {
        let g = grid(10);
        assert_eq!(HistogramFilter::point_mass(g, Cell::new(1, 1)).entropy(), 0.0);
        assert!((HistogramFilter::uniform(g).entropy() - 100f64.log2()).abs() < 1e-12);
        let two = HistogramFilter::from_weights(g, &[(Cell::new(0, 0), 1.0), (Cell::new(5, 5), 1.0)]).unwrap();
        assert!((two.entropy() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn predict_point_mass_interior() {
        let g = grid(5);
        let f = HistogramFilter::point_mass(g, Cell::new(2, 2)).predict(&MotionKernel);
        assert_eq!(f.support_len(), 5);
        for (_, p) in f.entries() {
            assert!((p - 0.2).abs() < 1e-15);
        }
        assert!(f.max_probability() <= 0.2 + 1e-15);
    }

    #[test]
    fn predict_uniform_matches_matrix_product() {
        let g = grid(4);
        let n = g.num_cells();
        // explicit transition matrix oracle
        let mut t = vec![vec![0.0; n]; n];
        for c in g.cells() {
            let moves: Vec<Cell> = g.feasible_moves(c).collect();
            for m in &moves {
                t[g.index(c)][g.index(*m)] += 1.0 / moves.len() as f64;
            }
        }
        let f = HistogramFilter::uniform(g).predict(&MotionKernel);
        for j in 0..n {
            let expected: f64 = (0..n).map(|i| t[i][j] / n as f64).sum();
            assert!((f.probability(g.cell(j)) - expected).abs() < 1e-15);
        }
        // two steps equal one step with the squared kernel
        let start = HistogramFilter::point_mass(g, Cell::new(0, 1));
        let twice = start.predict(&MotionKernel).predict(&MotionKernel);
        let i0 = g.index(Cell::new(0, 1));
        for j in 0..n {
            let sq: f64 = (0..n).map(|k| t[i0][k] * t[k][j]).sum();
            assert!((twice.probability(g.cell(j)) - sq).abs() < 1e-15);
        }
    }

    #[test]
    fn update_matches_hand_bayes_rule() {
        let g = grid(3);
        let m = RangeSensorModel::default();
        let robot = Cell::new(0, 0);
        let y = 1.2;
        let post = HistogramFilter::uniform(g).update(y, robot, &m).unwrap();
        let mut w = vec![];
        for yy in 0..3 {
            for xx in 0..3 {
                let d = ((xx * xx + yy * yy) as f64).sqrt();
                let v = 0.25 + 0.5 * d * d;
                w.push((-(y - d).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt() / 9.0);
            }
        }
        let total: f64 = w.iter().sum();
        for (i, wi) in w.iter().enumerate() {
            assert!((post.probability(g.cell(i)) - wi / total).abs() < 1e-14);
        }
        assert!((post.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_likelihood_leaves_prior() {
        // every cell at the same distance: a 1x1 grid trivially, or the
        // saturated regime where all candidates are beyond 20 cells
        let g = grid(30);
        let prior = HistogramFilter::from_weights(g, &[(Cell::new(28, 28), 0.3), (Cell::new(29, 27), 0.7)]).unwrap();
        let post = prior
            .update(5.0, Cell::new(0, 0), &RangeSensorModel::default())
            .unwrap();
        for (c, p) in prior.entries() {
            assert!((post.probability(c) - p).abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_update_is_an_error() {
        let g = grid(3);
        let f = HistogramFilter::point_mass(g, Cell::new(0, 0));
        let err = f
            .update(1e9, Cell::new(0, 0), &RangeSensorModel::default())
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateUpdate(_)));
    }

    #[test]
    fn update_many_matches_sequential_updates() {
        let g = grid(6);
        let m = RangeSensorModel::default();
        let t = LikelihoodTable::new(&g, &m);
        let prior = HistogramFilter::uniform(g).predict(&MotionKernel);
        let obs = [(Cell::new(0, 0), 2.5), (Cell::new(5, 1), 3.0), (Cell::new(2, 2), 0.4)];
        let batch = prior.update_many(&t, &obs).unwrap();
        let mut seq = prior.clone();
        for &(r, y) in &obs {
            seq = seq.update(y, r, &m).unwrap();
        }
        for c in g.cells() {
            assert!((batch.probability(c) - seq.probability(c)).abs() < 1e-12);
        }
    }

    #[test]
    fn expected_entropy_does_not_increase() {
        let g = grid(6);
        let m = RangeSensorModel::default();
        let prior = HistogramFilter::from_weights(
            g,
            &[(Cell::new(1, 1), 1.0), (Cell::new(4, 4), 1.0), (Cell::new(1, 4), 2.0)],
        )
        .unwrap();
        let robot = Cell::new(0, 0);
        let mut rng = seeds::rng(17, &[]);
        let n = 20_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let truth = prior.sample_cell(&mut rng);
            let y = sample_observation(robot, truth, &m, &mut rng);
            acc += prior.update(y, robot, &m).unwrap().entropy();
        }
        assert!(acc / n as f64 <= prior.entropy());
    }

    #[test]
    fn sparse_filter_tracks_dense_filter() {
        let g = grid(15);
        let m = RangeSensorModel::default();
        let t = LikelihoodTable::new(&g, &m);
        let start = Cell::new(7, 7);
        let robots = [Cell::new(3, 3), Cell::new(10, 12), Cell::new(8, 6)];
        let mut dense = HistogramFilter::point_mass(g, start);
        let mut sparse = HistogramFilter::point_mass(g, start).with_sparse_threshold(SPARSE_THRESHOLD);
        let mut truth = start;
        let mut rng = seeds::rng(23, &[]);
        for _ in 0..60 {
            truth = step_target(&g, truth, &mut rng);
            let obs: Vec<(Cell, f64)> = robots
                .iter()
                .map(|&r| (r, sample_observation(r, truth, &m, &mut rng)))
                .collect();
            dense = dense.predict(&MotionKernel).update_many(&t, &obs).unwrap();
            let predicted = HistogramFilter {
                sparse_threshold: 0.0,
                ..sparse.clone()
            }
            .predict(&MotionKernel)
            .update_many(&t, &obs)
            .unwrap();
            let (next, removed) = predicted.sparsify(SPARSE_THRESHOLD);
            sparse = next;
            assert!((sparse.total_mass() - 1.0).abs() < 1e-9);
            assert!((dense.total_mass() - 1.0).abs() < 1e-9);
            // continuity of entropy under removal of mass d and renormalization
            let d = removed;
            let h2 = if d > 0.0 {
                -d * d.log2() - (1.0 - d) * (1.0 - d).log2()
            } else {
                0.0
            };
            let bound = h2 + d * (g.num_cells() as f64).log2();
            let gap = (sparse.entropy() - predicted.entropy()).abs();
            assert!(gap <= bound + 1e-12, "entropy gap {gap} above bound {bound}");
            let (sx, sy) = sparse.mean();
            let (dx, dy) = dense.mean();
            assert!((sx - dx).hypot(sy - dy) < 1.5, "sparse mean drifted from dense mean");
        }
        // sparse support stays bounded
        assert!(sparse.support_len() < g.num_cells());
    }

    proptest::proptest! {
        #[test]
        fn filters_remain_normalized(seed in 0u64..5000, steps in 1usize..12) {
            let g = grid(8);
            let m = RangeSensorModel::default();
            let mut rng = seeds::rng(seed, &[]);
            let mut f = HistogramFilter::point_mass(g, g.random_cell(&mut rng));
            let mut truth = g.random_cell(&mut rng);
            for _ in 0..steps {
                f = f.predict(&MotionKernel);
                proptest::prop_assert!((f.total_mass() - 1.0).abs() < 1e-9);
                truth = step_target(&g, truth, &mut rng);
                let r = g.random_cell(&mut rng);
                let y = sample_observation(r, truth, &m, &mut rng);
                if let Ok(next) = f.update(y, r, &m) {
                    f = next;
                }
                proptest::prop_assert!((f.total_mass() - 1.0).abs() < 1e-9);
                proptest::prop_assert!(f.entries().all(|(_, p)| p >= 0.0));
            }
        }
    }
}
