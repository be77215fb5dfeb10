//! Set functions over robot actions, discrete derivatives, partition
//! matroids, and exhaustive reference solvers.
//!
//! The ground set is a collection of [`Action`]s, each a `(robot, control
//! sequence)` pair. Robots partition the ground set into blocks; a feasible
//! assignment picks at most one action per block.
//!
//! Derivatives follow the recursive definition for disjoint arguments:
//! `g(A | X) = g(A ∪ X) - g(X)` and `g(A; B | X) = g(A | B ∪ X) - g(A | X)`.
//! Overlapping arguments are rejected rather than given the intersection
//! semantics.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::world::{enumerate_trajectories, format_controls, Control};

/// One element of the ground set: a robot paired with an `l`-step control
/// sequence. Ordering is `(robot, controls)` lexicographic, which is the
/// tie-break order for every argmax.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Action {
    pub robot: usize,
    pub controls: Vec<Control>,
}

impl Action {
    pub fn new(robot: usize, controls: Vec<Control>) -> Result<Self> {
        if controls.is_empty() {
            return Err(Error::InvalidArgument("action needs at least one control".into()));
        }
        Ok(Action { robot, controls })
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    /// First control in lexicographic order for the given horizon.
    pub fn lexicographic_first(robot: usize, horizon: usize) -> Self {
        Action {
            robot,
            controls: vec![Control::Stay; horizon.max(1)],
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}:{}", self.robot, format_controls(&self.controls))
    }
}

/// A set of actions, iterated in sorted action order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Selection {
    actions: BTreeSet<Action>,
}

impl Selection {
    pub fn new() -> Self {
        Selection::default()
    }

    pub fn singleton(a: Action) -> Self {
        let mut s = Selection::new();
        s.insert(a);
        s
    }

    pub fn insert(&mut self, a: Action) -> bool {
        self.actions.insert(a)
    }

    pub fn remove(&mut self, a: &Action) -> bool {
        self.actions.remove(a)
    }

    pub fn contains(&self, a: &Action) -> bool {
        self.actions.contains(a)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Action> + '_ {
        self.actions.iter()
    }

    pub fn with(&self, a: &Action) -> Selection {
        let mut s = self.clone();
        s.insert(a.clone());
        s
    }

    pub fn union(&self, other: &Selection) -> Selection {
        Selection {
            actions: self.actions.union(&other.actions).cloned().collect(),
        }
    }

    pub fn is_disjoint(&self, other: &Selection) -> bool {
        self.actions.is_disjoint(&other.actions)
    }

    pub fn is_subset(&self, other: &Selection) -> bool {
        self.actions.is_subset(&other.actions)
    }

    /// Action chosen by `robot`, if exactly one is present.
    pub fn action_of(&self, robot: usize) -> Option<&Action> {
        let mut it = self.actions.iter().filter(|a| a.robot == robot);
        match (it.next(), it.next()) {
            (Some(a), None) => Some(a),
            _ => None,
        }
    }

    /// Robot ids present in the selection (sorted, with repeats removed).
    pub fn robots(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.actions.iter().map(|a| a.robot).collect();
        r.dedup();
        r
    }

    /// Restriction to actions of the given robots.
    pub fn restrict(&self, robots: &[usize]) -> Selection {
        self.actions
            .iter()
            .filter(|a| robots.contains(&a.robot))
            .cloned()
            .collect()
    }
}

impl FromIterator<Action> for Selection {
    fn from_iter<I: IntoIterator<Item = Action>>(iter: I) -> Self {
        Selection {
            actions: iter.into_iter().collect(),
        }
    }
}

impl<'a> IntoIterator for &'a Selection {
    type Item = &'a Action;
    type IntoIter = std::collections::btree_set::Iter<'a, Action>;

    fn into_iter(self) -> Self::IntoIter {
        self.actions.iter()
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, a) in self.actions.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, "}}")
    }
}

/// Partition matroid over per-robot action blocks. Block `i` holds the
/// actions of robot `i`; blocks are kept sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionMatroid {
    blocks: Vec<Vec<Action>>,
}

impl PartitionMatroid {
    pub fn new(mut blocks: Vec<Vec<Action>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (i, block) in blocks.iter_mut().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidArgument(format!("block {i} is empty")));
            }
            block.sort();
            for a in block.iter() {
                if a.robot != i {
                    return Err(Error::InvalidArgument(format!("action {a} placed in block {i}")));
                }
                if !seen.insert(a.clone()) {
                    return Err(Error::InvalidArgument(format!("duplicate action {a}")));
                }
            }
        }
        Ok(PartitionMatroid { blocks })
    }

    /// Every robot owns all `5^l` control sequences.
    pub fn uniform(n_robots: usize, horizon: usize) -> Result<Self> {
        let seqs = enumerate_trajectories(horizon)?;
        let blocks = (0..n_robots)
            .map(|i| {
                seqs.iter()
                    .map(|c| Action {
                        robot: i,
                        controls: c.clone(),
                    })
                    .collect()
            })
            .collect();
        PartitionMatroid::new(blocks)
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, i: usize) -> &[Action] {
        &self.blocks[i]
    }

    pub fn blocks(&self) -> &[Vec<Action>] {
        &self.blocks
    }

    pub fn ground(&self) -> Vec<Action> {
        self.blocks.iter().flatten().cloned().collect()
    }

    pub fn is_independent(&self, s: &Selection) -> bool {
        let mut counts = vec![0usize; self.blocks.len()];
        for a in s {
            if a.robot >= self.blocks.len() || self.blocks[a.robot].binary_search(a).is_err() {
                return false;
            }
            counts[a.robot] += 1;
        }
        counts.iter().all(|&c| c <= 1)
    }

    pub fn is_basis(&self, s: &Selection) -> bool {
        self.is_independent(s) && s.len() == self.blocks.len()
    }
}

/// Set function over actions. Implementations must be pure: the same input
/// always yields the same value, and concurrent calls are allowed.
pub trait SetFunction: Sync {
    fn evaluate(&self, set: &Selection) -> f64;

    /// `f(set ∪ {x}) - f(set)`; implementations may override with a cheaper
    /// or lower-variance route.
    fn marginal(&self, x: &Action, set: &Selection) -> f64 {
        self.evaluate(&set.with(x)) - self.evaluate(set)
    }
}

impl<F: SetFunction + ?Sized> SetFunction for &F {
    fn evaluate(&self, set: &Selection) -> f64 {
        (**self).evaluate(set)
    }

    fn marginal(&self, x: &Action, set: &Selection) -> f64 {
        (**self).marginal(x, set)
    }
}

/// First discrete derivative `f(x | X)`.
pub fn marginal_gain<F: SetFunction + ?Sized>(f: &F, x: &Action, base: &Selection) -> Result<f64> {
    if base.contains(x) {
        return Err(Error::Precondition(format!("{x} already in base set")));
    }
    Ok(f.marginal(x, base))
}

fn gain_of_set<F: SetFunction + ?Sized>(f: &F, a: &Selection, base: &Selection) -> f64 {
    f.evaluate(&a.union(base)) - f.evaluate(base)
}

fn check_disjoint(a: &Selection, b: &Selection, x: &Selection) -> Result<()> {
    if !a.is_disjoint(b) || !a.is_disjoint(x) || !b.is_disjoint(x) {
        return Err(Error::Precondition(
            "derivative arguments must be pairwise disjoint".into(),
        ));
    }
    Ok(())
}

/// Second derivative `f(A; B | X) = f(A | B ∪ X) - f(A | X)`, the effective
/// redundancy between `A` and `B` given `X`.
pub fn second_derivative<F: SetFunction + ?Sized>(f: &F, a: &Selection, b: &Selection, x: &Selection) -> Result<f64> {
    check_disjoint(a, b, x)?;
    Ok(gain_of_set(f, a, &b.union(x)) - gain_of_set(f, a, x))
}

/// Chain-rule expansion of `f(A; B | X)` over the elements of `B` in sorted
/// order: term `k` is `f(A; b_k | b_1..b_{k-1}, X)`.
pub fn chain_rule_terms<F: SetFunction + ?Sized>(
    f: &F,
    a: &Selection,
    b: &Selection,
    x: &Selection,
) -> Result<Vec<f64>> {
    check_disjoint(a, b, x)?;
    let mut prefix = x.clone();
    let mut terms = Vec::with_capacity(b.len());
    for bk in b {
        let single = Selection::singleton(bk.clone());
        terms.push(gain_of_set(f, a, &prefix.union(&single)) - gain_of_set(f, a, &prefix));
        prefix.insert(bk.clone());
    }
    Ok(terms)
}

/// Largest ground set accepted by [`check_properties`].
pub const MAX_PROPERTY_GROUND: usize = 16;

/// Outcome of an exhaustive property check. Worst violations are reported as
/// nonnegative magnitudes (zero when the property holds exactly).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub normalized: bool,
    pub monotone: bool,
    pub submodular: bool,
    pub normalization_error: f64,
    pub worst_monotone_violation: f64,
    pub worst_submodular_violation: f64,
    pub subsets_evaluated: usize,
}

/// Values of `f` on every subset of `ground`, indexed by bitmask.
pub fn subset_values<F: SetFunction + ?Sized>(f: &F, ground: &[Action]) -> Result<Vec<f64>> {
    if ground.len() > MAX_PROPERTY_GROUND {
        return Err(Error::TooLarge {
            what: "ground set",
            actual: ground.len() as u128,
            limit: MAX_PROPERTY_GROUND as u128,
        });
    }
    let n = ground.len();
    Ok((0u32..1 << n)
        .map(|mask| {
            let set: Selection = (0..n)
                .filter(|b| mask & (1 << b) != 0)
                .map(|b| ground[b].clone())
                .collect();
            f.evaluate(&set)
        })
        .collect())
}

/// Exhaustively checks normalization, monotonicity over all nested pairs
/// `B ⊆ A`, and diminishing returns over all `(A, B, c)` with `B ⊆ A` and
/// `c ∉ A`.
pub fn check_properties<F: SetFunction + ?Sized>(f: &F, ground: &[Action], tolerance: f64) -> Result<PropertyReport> {
    let distinct: BTreeSet<&Action> = ground.iter().collect();
    if distinct.len() != ground.len() {
        return Err(Error::InvalidArgument("ground set has duplicates".into()));
    }
    let values = subset_values(f, ground)?;
    Ok(properties_from_values(&values, ground.len(), tolerance))
}

/// Property check over precomputed subset values (bitmask indexed).
pub fn properties_from_values(values: &[f64], n: usize, tolerance: f64) -> PropertyReport {
    let full: u32 = if n == 0 { 0 } else { (1u32 << n) - 1 };
    let normalization_error = values[0].abs();
    let mut worst_mono = 0.0f64;
    let mut worst_sub = 0.0f64;
    for a in 0..=full {
        let fa = values[a as usize];
        // every submask b of a, including a itself and the empty set
        let mut b = a;
        loop {
            let fb = values[b as usize];
            worst_mono = worst_mono.max(fb - fa);
            let mut free = full & !a;
            while free != 0 {
                let c = free & free.wrapping_neg();
                free &= free - 1;
                let gain_a = values[(a | c) as usize] - fa;
                let gain_b = values[(b | c) as usize] - fb;
                worst_sub = worst_sub.max(gain_a - gain_b);
            }
            if b == 0 {
                break;
            }
            b = (b - 1) & a;
        }
    }
    PropertyReport {
        normalized: normalization_error <= tolerance,
        monotone: worst_mono <= tolerance,
        submodular: worst_sub <= tolerance,
        normalization_error,
        worst_monotone_violation: worst_mono,
        worst_submodular_violation: worst_sub,
        subsets_evaluated: values.len(),
    }
}

/// Default cap on the number of bases scanned by [`brute_force_optimum`].
pub const DEFAULT_BRUTE_FORCE_CAP: u128 = 1_000_000;

/// Exact maximizer over all bases of `matroid`. Bases are scanned in
/// lexicographic order and only strict improvements replace the incumbent,
/// so ties resolve to the lexicographically smallest basis.
pub fn brute_force_optimum<F: SetFunction + ?Sized>(
    f: &F,
    matroid: &PartitionMatroid,
    cap: u128,
) -> Result<(Selection, f64)> {
    let count = matroid
        .blocks()
        .iter()
        .try_fold(1u128, |acc, b| acc.checked_mul(b.len() as u128))
        .unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::TooLarge {
            what: "basis count",
            actual: count,
            limit: cap,
        });
    }
    let k = matroid.num_blocks();
    let mut idx = vec![0usize; k];
    let mut best: Option<(Selection, f64)> = None;
    loop {
        let set: Selection = (0..k).map(|i| matroid.block(i)[idx[i]].clone()).collect();
        let v = f.evaluate(&set);
        if best.as_ref().map_or(true, |(_, bv)| v > *bv) {
            best = Some((set, v));
        }
        // odometer with the last block varying fastest keeps lexicographic order
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(best.unwrap_or((Selection::new(), f.evaluate(&Selection::new()))));
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < matroid.block(pos).len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Sequential local greedy over the blocks in index order: block `i` picks
/// the action with the largest gain given the choices of blocks `0..i`.
pub fn local_greedy<F: SetFunction + ?Sized>(f: &F, matroid: &PartitionMatroid) -> Selection {
    let mut chosen = Selection::new();
    for block in matroid.blocks() {
        let mut best: Option<(&Action, f64)> = None;
        for a in block {
            let g = f.marginal(a, &chosen);
            if best.map_or(true, |(_, bg)| g > bg) {
                best = Some((a, g));
            }
        }
        if let Some((a, _)) = best {
            chosen.insert(a.clone());
        }
    }
    chosen
}

/// Small reference set functions used by tests and examples.
pub mod oracles {
    use super::*;
    use std::collections::BTreeMap;

    /// `f(X) = |X|`.
    pub struct Cardinality;

    impl SetFunction for Cardinality {
        fn evaluate(&self, set: &Selection) -> f64 {
            set.len() as f64
        }
    }

    /// `f(X) = |X|^2`, supermodular.
    pub struct SquaredCardinality;

    impl SetFunction for SquaredCardinality {
        fn evaluate(&self, set: &Selection) -> f64 {
            (set.len() * set.len()) as f64
        }
    }

    /// Additive function with per-action weights (missing actions weigh 0).
    pub struct Modular {
        pub weights: BTreeMap<Action, f64>,
    }

    impl SetFunction for Modular {
        fn evaluate(&self, set: &Selection) -> f64 {
            set.iter().map(|a| self.weights.get(a).copied().unwrap_or(0.0)).sum()
        }
    }

    /// Weighted coverage: each action covers a set of universe items, and the
    /// value is the total weight of the covered items.
    pub struct WeightedCoverage {
        pub covers: BTreeMap<Action, Vec<usize>>,
        pub weights: Vec<f64>,
    }

    impl SetFunction for WeightedCoverage {
        fn evaluate(&self, set: &Selection) -> f64 {
            let covered: BTreeSet<usize> = set
                .iter()
                .filter_map(|a| self.covers.get(a))
                .flatten()
                .copied()
                .collect();
            covered.iter().map(|&i| self.weights[i]).sum()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::oracles::*;
    use super::*;
    use crate::seeds;
    use rand::Rng;
    use std::collections::BTreeMap;

    fn act(robot: usize, c: &str) -> Action {
        Action::new(robot, crate::world::parse_controls(c).unwrap()).unwrap()
    }

    fn sel(actions: &[Action]) -> Selection {
        actions.iter().cloned().collect()
    }

    fn random_coverage(seed: u64, robots: usize, per: usize, universe: usize) -> (WeightedCoverage, PartitionMatroid) {
        let mut rng = seeds::rng(seed, &[]);
        let seqs = enumerate_trajectories(1).unwrap();
        let mut covers = BTreeMap::new();
        let mut blocks = vec![];
        for r in 0..robots {
            let mut block = vec![];
            for c in seqs.iter().take(per) {
                let a = Action::new(r, c.clone()).unwrap();
                let items: Vec<usize> = (0..universe).filter(|_| rng.gen_bool(0.35)).collect();
                covers.insert(a.clone(), items);
                block.push(a);
            }
            blocks.push(block);
        }
        let weights = (0..universe).map(|_| rng.gen_range(0.1..2.0)).collect();
        (
            WeightedCoverage { covers, weights },
            PartitionMatroid::new(blocks).unwrap(),
        )
    }

    #[test]
    fn cardinality_marginal_is_one() {
        let x = act(0, "N");
        let base = sel(&[act(1, "S"), act(2, ".")]);
        assert_eq!(marginal_gain(&Cardinality, &x, &base).unwrap(), 1.0);
        assert_eq!(marginal_gain(&Cardinality, &x, &Selection::new()).unwrap(), 1.0);
    }

    #[test]
    fn marginal_rejects_member() {
        let x = act(0, "N");
        let err = marginal_gain(&Cardinality, &x, &sel(&[x.clone()])).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn coverage_marginal_counts_new_items() {
        // universe {a, b, c} = {0, 1, 2}
        let x = act(0, "N");
        let y = act(1, "N");
        let f = WeightedCoverage {
            covers: BTreeMap::from([(x.clone(), vec![0, 1]), (y.clone(), vec![1])]),
            weights: vec![0.7, 1.3, 2.9],
        };
        assert!((marginal_gain(&f, &x, &sel(&[y])).unwrap() - 0.7).abs() < 1e-15);
        assert!((marginal_gain(&f, &x, &Selection::new()).unwrap() - f.evaluate(&sel(&[x]))).abs() < 1e-15);
    }

    #[test]
    fn modular_second_derivative_vanishes() {
        let weights: BTreeMap<Action, f64> = (0..4)
            .flat_map(|r| Control::ALL.iter().map(move |&u| Action::new(r, vec![u]).unwrap()))
            .enumerate()
            .map(|(k, a)| (a, 0.3 * k as f64 + 0.1))
            .collect();
        let f = Modular { weights };
        let a = sel(&[act(0, "N"), act(1, ".")]);
        let b = sel(&[act(2, "E")]);
        let x = sel(&[act(3, "W"), act(0, "S")]);
        assert!(second_derivative(&f, &a, &b, &x).unwrap().abs() < 1e-12);
    }

    #[test]
    fn identical_coverage_is_fully_redundant() {
        let a = act(0, "N");
        let b = act(1, "N");
        let f = WeightedCoverage {
            covers: BTreeMap::from([(a.clone(), vec![0, 2]), (b.clone(), vec![0, 2])]),
            weights: vec![1.0, 5.0, 0.5],
        };
        let d = second_derivative(&f, &sel(&[a.clone()]), &sel(&[b]), &Selection::new()).unwrap();
        assert!((d + f.evaluate(&sel(&[a]))).abs() < 1e-15);
    }

    #[test]
    fn overlapping_derivative_arguments_rejected() {
        let a = sel(&[act(0, "N")]);
        assert!(second_derivative(&Cardinality, &a, &a, &Selection::new()).is_err());
        assert!(chain_rule_terms(&Cardinality, &a, &Selection::new(), &a).is_err());
    }

    #[test]
    fn chain_rule_small_cases() {
        let (f, m) = random_coverage(11, 4, 3, 6);
        let a = sel(&[m.block(0)[0].clone()]);
        let x = sel(&[m.block(3)[1].clone()]);
        let b1 = sel(&[m.block(1)[2].clone()]);
        let terms = chain_rule_terms(&f, &a, &b1, &x).unwrap();
        assert_eq!(terms.len(), 1);
        assert_eq!(terms[0], second_derivative(&f, &a, &b1, &x).unwrap());
        assert!(chain_rule_terms(&f, &a, &Selection::new(), &x).unwrap().is_empty());
        let b3 = sel(&[m.block(1)[0].clone(), m.block(2)[1].clone(), m.block(2)[2].clone()]);
        let sum: f64 = chain_rule_terms(&f, &a, &b3, &x).unwrap().iter().sum();
        assert!((sum - second_derivative(&f, &a, &b3, &x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn properties_of_reference_functions() {
        let ground: Vec<Action> = (0..2)
            .flat_map(|r| Control::ALL.iter().map(move |&u| Action::new(r, vec![u]).unwrap()))
            .collect();
        let r = check_properties(&Cardinality, &ground, 1e-9).unwrap();
        assert!(r.normalized && r.monotone && r.submodular);
        let r = check_properties(&SquaredCardinality, &ground, 1e-9).unwrap();
        assert!(r.normalized && r.monotone && !r.submodular);
        assert!(r.worst_submodular_violation >= 2.0 - 1e-12);
        let (cov, m) = random_coverage(5, 3, 4, 8);
        let r = check_properties(&cov, &m.ground(), 1e-9).unwrap();
        assert!(r.normalized && r.monotone && r.submodular);
        assert_eq!(r.subsets_evaluated, 1 << 12);
    }

    #[test]
    fn property_check_refuses_large_ground() {
        let ground: Vec<Action> = (0..4)
            .flat_map(|r| Control::ALL.iter().map(move |&u| Action::new(r, vec![u]).unwrap()))
            .collect();
        assert!(matches!(
            check_properties(&Cardinality, &ground, 1e-9),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn brute_force_single_block_and_modular() {
        let (cov, m) = random_coverage(3, 1, 5, 6);
        let (best, v) = brute_force_optimum(&cov, &m, DEFAULT_BRUTE_FORCE_CAP).unwrap();
        let direct = m
            .block(0)
            .iter()
            .map(|a| cov.evaluate(&Selection::singleton(a.clone())))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(v, direct);
        assert_eq!(best.len(), 1);

        let m = PartitionMatroid::uniform(3, 1).unwrap();
        let weights: BTreeMap<Action, f64> = m
            .ground()
            .into_iter()
            .enumerate()
            .map(|(k, a)| (a, ((k * 7) % 5) as f64))
            .collect();
        let f = Modular {
            weights: weights.clone(),
        };
        let (best, _) = brute_force_optimum(&f, &m, DEFAULT_BRUTE_FORCE_CAP).unwrap();
        for i in 0..3 {
            let expected = m
                .block(i)
                .iter()
                .fold(None::<&Action>, |acc, a| match acc {
                    Some(b) if weights[b] >= weights[a] => Some(b),
                    _ => Some(a),
                })
                .unwrap();
            assert_eq!(best.action_of(i), Some(expected));
        }
    }

    #[test]
    fn brute_force_matches_enumeration() {
        let (cov, m) = random_coverage(21, 3, 3, 7);
        let (best, v) = brute_force_optimum(&cov, &m, DEFAULT_BRUTE_FORCE_CAP).unwrap();
        let mut scan = f64::NEG_INFINITY;
        for a in m.block(0) {
            for b in m.block(1) {
                for c in m.block(2) {
                    scan = scan.max(cov.evaluate(&sel(&[a.clone(), b.clone(), c.clone()])));
                }
            }
        }
        assert_eq!(v, scan);
        assert!(m.is_basis(&best));
    }

    #[test]
    fn brute_force_cap_refusal() {
        let m = PartitionMatroid::uniform(3, 2).unwrap();
        let err = brute_force_optimum(&Cardinality, &m, 1000).unwrap_err();
        assert_eq!(
            err,
            Error::TooLarge {
                what: "basis count",
                actual: 15625,
                limit: 1000
            }
        );
    }

    #[test]
    fn greedy_is_half_optimal_on_coverage() {
        for seed in 0..40 {
            let (cov, m) = random_coverage(100 + seed, 3, 4, 9);
            let (_, opt) = brute_force_optimum(&cov, &m, DEFAULT_BRUTE_FORCE_CAP).unwrap();
            let greedy = local_greedy(&cov, &m);
            let gv = cov.evaluate(&greedy);
            assert!(m.is_basis(&greedy));
            assert!(gv <= opt + 1e-12);
            assert!(gv >= 0.5 * opt - 1e-12);
        }
    }

    #[test]
    fn matroid_validation() {
        assert!(PartitionMatroid::new(vec![vec![act(1, "N")]]).is_err());
        assert!(PartitionMatroid::new(vec![vec![]]).is_err());
        let m = PartitionMatroid::uniform(2, 1).unwrap();
        assert!(m.is_independent(&sel(&[act(0, "N")])));
        assert!(!m.is_independent(&sel(&[act(0, "N"), act(0, "S")])));
        assert!(m.is_basis(&sel(&[act(0, "N"), act(1, "S")])));
        assert!(!m.is_independent(&sel(&[act(0, "NN")])));
    }

    proptest::proptest! {
        #[test]
        fn derivative_identities(seed in 0u64..10_000, split in proptest::collection::vec(0u8..4, 12)) {
            let (f, m) = random_coverage(seed, 4, 3, 8);
            let ground = m.ground();
            let mut parts = [Selection::new(), Selection::new(), Selection::new()];
            for (a, &k) in ground.iter().zip(split.iter()) {
                if k < 3 {
                    parts[k as usize].insert(a.clone());
                }
            }
            let [a, b, x] = parts;
            let d = second_derivative(&f, &a, &b, &x).unwrap();
            let sum: f64 = chain_rule_terms(&f, &a, &b, &x).unwrap().iter().sum();
            proptest::prop_assert!((sum - d).abs() < 1e-12);
            let swapped = second_derivative(&f, &b, &a, &x).unwrap();
            proptest::prop_assert!((swapped - d).abs() < 1e-12);
            let lower = -f.evaluate(&a).min(f.evaluate(&b));
            proptest::prop_assert!(d >= lower - 1e-12);
        }
    }
}
