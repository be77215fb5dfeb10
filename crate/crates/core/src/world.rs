//! Grid world, robot and target dynamics, and trajectory enumeration.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::seeds::{self, purpose};
use crate::sensing::{HistogramFilter, LikelihoodTable, RangeSensorModel};
use rand_distr::{Distribution, StandardNormal};

/// Single-step control input. Declaration order is the lexicographic order
/// used for every tie-break in the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Control {
    Stay,
    North,
    South,
    East,
    West,
}

impl Control {
    pub const ALL: [Control; 5] = [
        Control::Stay,
        Control::North,
        Control::South,
        Control::East,
        Control::West,
    ];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Control::Stay => (0, 0),
            Control::North => (0, 1),
            Control::South => (0, -1),
            Control::East => (1, 0),
            Control::West => (-1, 0),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> char {
        match self {
            Control::Stay => '.',
            Control::North => 'N',
            Control::South => 'S',
            Control::East => 'E',
            Control::West => 'W',
        }
    }

    pub fn from_symbol(c: char) -> Result<Control> {
        match c {
            '.' | 'X' | 'x' => Ok(Control::Stay),
            'N' | 'n' => Ok(Control::North),
            'S' | 's' => Ok(Control::South),
            'E' | 'e' => Ok(Control::East),
            'W' | 'w' => Ok(Control::West),
            other => Err(Error::InvalidArgument(format!("unknown control symbol {other:?}"))),
        }
    }
}

impl FromStr for Control {
    type Err = Error;

    fn from_str(s: &str) -> Result<Control> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Control::from_symbol(c),
            _ => match s.to_ascii_lowercase().as_str() {
                "stay" => Ok(Control::Stay),
                "north" => Ok(Control::North),
                "south" => Ok(Control::South),
                "east" => Ok(Control::East),
                "west" => Ok(Control::West),
                _ => Err(Error::InvalidArgument(format!("unknown control {s:?}"))),
            },
        }
    }
}

impl fmt::Display for Control {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Integer grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    pub fn distance(self, other: Cell) -> f64 {
        let dx = f64::from(self.x - other.x);
        let dy = f64::from(self.y - other.y);
        dx.hypot(dy)
    }
}

/// Square four-connected grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    side: usize,
}

/// Side length for a team of `n_robots`: `ceil(sqrt(12.5 n_r))`.
pub fn grid_side(n_robots: usize) -> Result<usize> {
    if n_robots < 1 {
        return Err(Error::InvalidArgument("team size must be at least 1".into()));
    }
    // 12.5 n = 25 n / 2; integer search avoids float rounding at perfect squares.
    let target = 25 * n_robots as u128;
    let mut side = (12.5 * n_robots as f64).sqrt().floor() as u128;
    while 2 * side * side < target {
        side += 1;
    }
    while side > 1 && 2 * (side - 1) * (side - 1) >= target {
        side -= 1;
    }
    Ok(side as usize)
}

impl Grid {
    pub fn new(side: usize) -> Result<Self> {
        if side == 0 || side > 1 << 15 {
            return Err(Error::InvalidArgument(format!("grid side {side} out of range")));
        }
        Ok(Grid { side })
    }

    pub fn for_team(n_robots: usize) -> Result<Self> {
        Grid::new(grid_side(n_robots)?)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn num_cells(&self) -> usize {
        self.side * self.side
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.side && (c.y as usize) < self.side
    }

    pub fn index(&self, c: Cell) -> usize {
        debug_assert!(self.contains(c));
        c.y as usize * self.side + c.x as usize
    }

    pub fn cell(&self, index: usize) -> Cell {
        Cell::new((index % self.side) as i32, (index / self.side) as i32)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.num_cells()).map(move |i| self.cell(i))
    }

    /// Stay plus the in-bounds four-connected neighbors, in control order.
    pub fn feasible_moves(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        Control::ALL.iter().filter_map(move |u| {
            let (dx, dy) = u.delta();
            let next = Cell::new(c.x + dx, c.y + dy);
            self.contains(next).then_some(next)
        })
    }

    pub fn random_cell<R: Rng + ?Sized>(&self, rng: &mut R) -> Cell {
        self.cell(rng.gen_range(0..self.num_cells()))
    }
}

/// Deterministic robot motion; moves leaving the grid become `Stay`.
pub fn step_robot(grid: &Grid, s: Cell, u: Control) -> Cell {
    let (dx, dy) = u.delta();
    let next = Cell::new(s.x + dx, s.y + dy);
    if grid.contains(next) {
        next
    } else {
        s
    }
}

/// Robot positions after each control of a sequence (excludes the start).
pub fn robot_path(grid: &Grid, start: Cell, controls: &[Control]) -> Vec<Cell> {
    let mut pos = start;
    controls
        .iter()
        .map(|&u| {
            pos = step_robot(grid, pos, u);
            pos
        })
        .collect()
}

/// Target random walk: uniform over stay and the feasible neighbors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotionKernel;

impl MotionKernel {
    /// Transition row of `from`: `(next cell, probability)` pairs summing to one.
    pub fn row(&self, grid: &Grid, from: Cell) -> Vec<(Cell, f64)> {
        let moves: Vec<Cell> = grid.feasible_moves(from).collect();
        let p = 1.0 / moves.len() as f64;
        moves.into_iter().map(|c| (c, p)).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, grid: &Grid, from: Cell, rng: &mut R) -> Cell {
        let moves: Vec<Cell> = grid.feasible_moves(from).collect();
        moves[rng.gen_range(0..moves.len())]
    }
}

pub fn step_target<R: Rng + ?Sized>(grid: &Grid, s: Cell, rng: &mut R) -> Cell {
    MotionKernel.sample(grid, s, rng)
}

/// All `5^l` control sequences in lexicographic order.
pub fn enumerate_trajectories(horizon: usize) -> Result<Vec<Vec<Control>>> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if horizon > 8 {
        return Err(Error::TooLarge {
            what: "horizon",
            actual: horizon as u128,
            limit: 8,
        });
    }
    let mut out: Vec<Vec<Control>> = vec![Vec::new()];
    for _ in 0..horizon {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                Control::ALL.iter().map(move |&u| {
                    let mut seq = prefix.clone();
                    seq.push(u);
                    seq
                })
            })
            .collect();
    }
    Ok(out)
}

/// Parses a compact control string such as `"NE"` or `"..".
pub fn parse_controls(s: &str) -> Result<Vec<Control>> {
    s.chars().map(Control::from_symbol).collect()
}

pub fn format_controls(controls: &[Control]) -> String {
    controls.iter().map(|c| c.symbol()).collect()
}

/// Read-only planning view of the world: robot positions and target beliefs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorldSnapshot {
    pub grid: Grid,
    pub time: u64,
    pub robots: Vec<Cell>,
    pub filters: Vec<HistogramFilter>,
}

/// Full simulation state for one trial.
#[derive(Clone, Debug)]
pub struct WorldState {
    pub grid: Grid,
    pub time: u64,
    pub robots: Vec<Cell>,
    pub targets: Vec<Cell>,
    pub filters: Vec<HistogramFilter>,
    seed: u64,
    table: LikelihoodTable,
    degenerate_updates: u64,
}

impl WorldState {
    /// Random robot and target positions; filters start as point masses on
    /// the true target cells.
    pub fn initialize(grid: Grid, n_robots: usize, n_targets: usize, sparse_threshold: f64, seed: u64) -> Self {
        let mut rng = seeds::rng(seed, &[purpose::INIT]);
        let robots: Vec<Cell> = (0..n_robots).map(|_| grid.random_cell(&mut rng)).collect();
        let targets: Vec<Cell> = (0..n_targets).map(|_| grid.random_cell(&mut rng)).collect();
        let filters = targets
            .iter()
            .map(|&t| HistogramFilter::point_mass(grid, t).with_sparse_threshold(sparse_threshold))
            .collect();
        WorldState {
            grid,
            time: 0,
            robots,
            targets,
            filters,
            seed,
            table: LikelihoodTable::new(&grid, &RangeSensorModel::default()),
            degenerate_updates: 0,
        }
    }

    pub fn snapshot(&self) -> WorldSnapshot {
        WorldSnapshot {
            grid: self.grid,
            time: self.time,
            robots: self.robots.clone(),
            filters: self.filters.clone(),
        }
    }

    /// Filter updates skipped because the likelihood underflowed.
    pub fn degenerate_updates(&self) -> u64 {
        self.degenerate_updates
    }

    pub fn mean_entropy(&self) -> f64 {
        if self.filters.is_empty() {
            return 0.0;
        }
        self.filters.iter().map(|f| f.entropy()).sum::<f64>() / self.filters.len() as f64
    }

    /// One simulation step: robots apply `controls`, targets random-walk, every
    /// robot observes every target and the filters run predict then update.
    /// Target motion and observation noise are keyed by (seed, time) so runs
    /// with different planners share the same target trajectories.
    pub fn advance(&mut self, controls: &[Control]) -> Result<()> {
        if controls.len() != self.robots.len() {
            return Err(Error::InvalidArgument(format!(
                "{} controls for {} robots",
                controls.len(),
                self.robots.len()
            )));
        }
        for (r, &u) in self.robots.iter_mut().zip(controls) {
            *r = step_robot(&self.grid, *r, u);
        }
        self.time += 1;
        let mut motion = seeds::rng(self.seed, &[purpose::TARGET_MOTION, self.time]);
        for t in self.targets.iter_mut() {
            *t = step_target(&self.grid, *t, &mut motion);
        }
        for (j, f) in self.filters.iter_mut().enumerate() {
            let mut noise = seeds::rng(self.seed, &[purpose::OBSERVATION, self.time, j as u64]);
            let obs: Vec<(Cell, f64)> = self
                .robots
                .iter()
                .map(|&r| {
                    let z: f64 = StandardNormal.sample(&mut noise);
                    (r, self.table.observe(r, self.targets[j], z))
                })
                .collect();
            let predicted = f.predict(&MotionKernel);
            *f = match predicted.update_many(&self.table, &obs) {
                Ok(post) => post,
                Err(Error::DegenerateUpdate(_)) => {
                    self.degenerate_updates += 1;
                    predicted
                }
                Err(e) => return Err(e),
            };
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    #[test]
    fn grid_side_examples() {
        assert_eq!(grid_side(8).unwrap(), 10);
        assert_eq!(grid_side(32).unwrap(), 20);
        assert_eq!(grid_side(1).unwrap(), 4);
        assert_eq!(grid_side(16).unwrap(), 15);
        assert_eq!(grid_side(64).unwrap(), 29);
        assert_eq!(grid_side(96).unwrap(), 35);
        assert!(grid_side(0).is_err());
        for n in 1..500usize {
            let s = grid_side(n).unwrap() as f64;
            assert!(s * s >= 12.5 * n as f64 - 1e-9);
            assert!((s - 1.0) * (s - 1.0) < 12.5 * n as f64);
        }
    }

    #[test]
    fn robot_steps() {
        let g = Grid::new(5).unwrap();
        assert_eq!(step_robot(&g, Cell::new(0, 0), Control::North), Cell::new(0, 1));
        assert_eq!(step_robot(&g, Cell::new(0, 0), Control::West), Cell::new(0, 0));
        assert_eq!(step_robot(&g, Cell::new(3, 3), Control::Stay), Cell::new(3, 3));
        assert_eq!(step_robot(&g, Cell::new(4, 4), Control::East), Cell::new(4, 4));
        assert_eq!(step_robot(&g, Cell::new(2, 0), Control::South), Cell::new(2, 0));
    }

    #[test]
    fn invalid_control_symbol_rejected() {
        assert!(Control::from_symbol('Q').is_err());
        assert!("jump".parse::<Control>().is_err());
        assert_eq!("N".parse::<Control>().unwrap(), Control::North);
    }

    #[test]
    fn kernel_rows_normalized() {
        let g = Grid::new(4).unwrap();
        for c in g.cells() {
            let row = MotionKernel.row(&g, c);
            let total: f64 = row.iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|(n, _)| g.contains(*n)));
        }
        assert_eq!(MotionKernel.row(&g, Cell::new(0, 0)).len(), 3);
        assert_eq!(MotionKernel.row(&g, Cell::new(1, 0)).len(), 4);
        assert_eq!(MotionKernel.row(&g, Cell::new(1, 1)).len(), 5);
    }

    fn chi_square(counts: &[usize], expected: f64) -> f64 {
        counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
    }

    #[test]
    fn target_walk_frequencies() {
        let g = Grid::new(6).unwrap();
        let n = 100_000;
        // interior: 4 dof, chi2(4) 0.999 quantile 18.47
        let mut rng = seeds::rng(1, &[2]);
        let centre = Cell::new(3, 3);
        let mut counts = [0usize; 5];
        for _ in 0..n {
            let next = step_target(&g, centre, &mut rng);
            let k = Control::ALL
                .iter()
                .position(|&u| step_robot(&g, centre, u) == next)
                .unwrap();
            counts[k] += 1;
        }
        assert!(chi_square(&counts, n as f64 / 5.0) < 18.47, "{counts:?}");

        // corner: 2 dof, 0.999 quantile 13.82
        let corner = Cell::new(0, 0);
        let outcomes = [Cell::new(0, 0), Cell::new(0, 1), Cell::new(1, 0)];
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let next = step_target(&g, corner, &mut rng);
            counts[outcomes.iter().position(|&c| c == next).unwrap()] += 1;
        }
        assert!(chi_square(&counts, n as f64 / 3.0) < 13.82, "{counts:?}");
    }

    #[test]
    fn target_walk_replays() {
        let g = Grid::new(10).unwrap();
        let run = || {
            let mut rng = seeds::rng(99, &[seeds::purpose::TARGET_MOTION]);
            let mut c = Cell::new(5, 5);
            (0..50)
                .map(|_| {
                    c = step_target(&g, c, &mut rng);
                    c
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn trajectory_enumeration() {
        assert_eq!(enumerate_trajectories(1).unwrap().len(), 5);
        let two = enumerate_trajectories(2).unwrap();
        assert_eq!(two.len(), 25);
        assert!(two.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(enumerate_trajectories(3).unwrap().len(), 125);
        assert!(enumerate_trajectories(0).is_err());
        assert_eq!(two[0], vec![Control::Stay, Control::Stay]);
    }

    #[test]
    fn control_string_round_trip() {
        let seq = vec![Control::North, Control::Stay, Control::West];
        assert_eq!(parse_controls(&format_controls(&seq)).unwrap(), seq);
    }

    proptest::proptest! {
        #[test]
        fn states_stay_in_bounds(side in 1usize..12, x in 0i32..12, y in 0i32..12,
                                 moves in proptest::collection::vec(0usize..5, 0..40)) {
            let g = Grid::new(side).unwrap();
            let mut c = Cell::new(x % side as i32, y % side as i32);
            for m in moves {
                let next = step_robot(&g, c, Control::ALL[m]);
                proptest::prop_assert_eq!(next, step_robot(&g, c, Control::ALL[m]));
                c = next;
                proptest::prop_assert!(g.contains(c));
            }
        }
    }
}
