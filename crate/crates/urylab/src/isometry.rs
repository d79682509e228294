//! Exact self-isometries of a finite stage: enumeration of the full group and
//! the ε-relaxed extension of partial isometries.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dk::{dk_distance, TupleStructure};
use crate::metric::{FiniteMetricSpace, MetricError};
use crate::rational::Q01;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IsometryError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("map of length {0} on a space of {1} points")]
    WrongLength(usize, usize),
    #[error("map is not a distance- and predicate-preserving permutation")]
    NotAnIsometry,
    #[error("isometry group exceeds {0} elements")]
    GroupTooLarge(usize),
    #[error("element set not closed under composition and inverse")]
    CarrierNotClosed,
}

/// A permutation of stage points preserving distances (and the predicate, when present).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FiniteIsometry {
    map: Vec<usize>,
}

impl FiniteIsometry {
    pub fn identity(n: usize) -> Self {
        FiniteIsometry { map: (0..n).collect() }
    }

    pub fn new(space: &FiniteMetricSpace, predicate: Option<&[Q01]>, map: Vec<usize>) -> Result<Self, IsometryError> {
        if map.len() != space.len() {
            return Err(IsometryError::WrongLength(map.len(), space.len()));
        }
        let mut seen = vec![false; map.len()];
        for &y in &map {
            if y >= map.len() || seen[y] {
                return Err(IsometryError::NotAnIsometry);
            }
            seen[y] = true;
        }
        let ok = (0..map.len()).all(|x| {
            predicate.map_or(true, |p| p[x] == p[map[x]]) && (0..map.len()).all(|y| space.d(x, y) == space.d(map[x], map[y]))
        });
        if !ok {
            return Err(IsometryError::NotAnIsometry);
        }
        Ok(FiniteIsometry { map })
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn apply(&self, x: usize) -> usize {
        self.map[x]
    }

    pub fn apply_tuple(&self, t: &[usize]) -> Vec<usize> {
        t.iter().map(|&x| self.map[x]).collect()
    }

    /// `(self ∘ other)(x) = self(other(x))`.
    pub fn compose(&self, other: &FiniteIsometry) -> FiniteIsometry {
        FiniteIsometry { map: other.map.iter().map(|&x| self.map[x]).collect() }
    }

    pub fn inverse(&self) -> FiniteIsometry {
        let mut inv = vec![0; self.map.len()];
        for (x, &y) in self.map.iter().enumerate() {
            inv[y] = x;
        }
        FiniteIsometry { map: inv }
    }

    /// Sup-displacement over all points: a finite surrogate for the group metric.
    pub fn displacement(&self, space: &FiniteMetricSpace) -> Q01 {
        (0..self.map.len()).map(|x| space.d(x, self.map[x])).max().unwrap_or(Q01::ZERO)
    }
}

/// A finite group of stage isometries with its multiplication table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsometryGroup {
    elements: Vec<FiniteIsometry>,
    index: BTreeMap<FiniteIsometry, usize>,
    product: Vec<Vec<usize>>,
    inverse: Vec<usize>,
    identity: usize,
}

impl IsometryGroup {
    /// Builds the group from an explicit element list; fails unless it is
    /// closed under composition and inverse and contains the identity.
    pub fn from_elements(elements: Vec<FiniteIsometry>) -> Result<Self, IsometryError> {
        let n = elements.first().map_or(0, |g| g.map.len());
        let index: BTreeMap<FiniteIsometry, usize> = elements.iter().cloned().enumerate().map(|(i, g)| (g, i)).collect();
        if index.len() != elements.len() {
            return Err(IsometryError::CarrierNotClosed);
        }
        let identity = *index.get(&FiniteIsometry::identity(n)).ok_or(IsometryError::CarrierNotClosed)?;
        let mut product = vec![vec![0; elements.len()]; elements.len()];
        for (i, g) in elements.iter().enumerate() {
            for (j, h) in elements.iter().enumerate() {
                product[i][j] = *index.get(&g.compose(h)).ok_or(IsometryError::CarrierNotClosed)?;
            }
        }
        let inverse = elements
            .iter()
            .map(|g| index.get(&g.inverse()).copied().ok_or(IsometryError::CarrierNotClosed))
            .collect::<Result<_, _>>()?;
        Ok(IsometryGroup { elements, index, product, inverse, identity })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[FiniteIsometry] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &FiniteIsometry {
        &self.elements[i]
    }

    pub fn index_of(&self, g: &FiniteIsometry) -> Option<usize> {
        self.index.get(g).copied()
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    /// Index of `g_i ∘ g_j`.
    pub fn mul(&self, i: usize, j: usize) -> usize {
        self.product[i][j]
    }

    pub fn inv(&self, i: usize) -> usize {
        self.inverse[i]
    }
}

/// All isometries of the space (preserving `predicate` when given), in
/// lexicographic order of their maps.
pub fn isometry_group(
    space: &FiniteMetricSpace,
    predicate: Option<&[Q01]>,
    cap: usize,
) -> Result<IsometryGroup, IsometryError> {
    let n = space.len();
    let mut out = vec![];
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];
    enumerate(space, predicate, 0, &mut map, &mut used, &mut out, cap)?;
    IsometryGroup::from_elements(out)
}

fn enumerate(
    space: &FiniteMetricSpace,
    predicate: Option<&[Q01]>,
    x: usize,
    map: &mut Vec<usize>,
    used: &mut Vec<bool>,
    out: &mut Vec<FiniteIsometry>,
    cap: usize,
) -> Result<(), IsometryError> {
    let n = space.len();
    if x == n {
        if out.len() == cap {
            return Err(IsometryError::GroupTooLarge(cap));
        }
        out.push(FiniteIsometry { map: map.clone() });
        return Ok(());
    }
    for y in 0..n {
        if used[y] || predicate.is_some_and(|p| p[x] != p[y]) {
            continue;
        }
        if (0..x).all(|z| space.d(z, x) == space.d(map[z], y)) {
            map[x] = y;
            used[y] = true;
            enumerate(space, predicate, x + 1, map, used, out, cap)?;
            used[y] = false;
            map[x] = usize::MAX;
        }
    }
    Ok(())
}

/// A successful extension: the isometry and `max_i d(g(source_i), target_i)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsometryExtension {
    pub isometry: FiniteIsometry,
    pub displacement: Q01,
    pub nodes: usize,
}

/// Why no extension was returned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtensionFailure {
    /// Search nodes visited.
    pub explored: usize,
    /// True when the whole search space was covered within the budget.
    pub exhausted: bool,
    /// d^𝒦 between the source and target tuple structures. Any isometry of
    /// any extension moves some source point by at least this much.
    pub dk_lower_bound: Q01,
    /// Set when `dk_lower_bound > ε`, which rules out every extension.
    pub certified_infeasible: bool,
}

/// Searches stage isometries `g` with `d(g(source_i), target_i) <= ε` for all
/// `i`, returning one of minimal displacement (ties broken toward fixing
/// points outside the source).
pub fn extend_partial_isometry(
    space: &FiniteMetricSpace,
    predicate: Option<&[Q01]>,
    source: &[usize],
    target: &[usize],
    epsilon: Q01,
    budget: usize,
) -> Result<Result<IsometryExtension, ExtensionFailure>, IsometryError> {
    if source.len() != target.len() {
        return Err(MetricError::LengthMismatch(source.len(), target.len()).into());
    }
    space.check_indices(source)?;
    space.check_indices(target)?;
    let structure = |t: &[usize]| match predicate {
        Some(p) => TupleStructure {
            d: t.iter().map(|&i| t.iter().map(|&j| space.d(i, j)).collect()).collect(),
            p: t.iter().map(|&i| p[i]).collect(),
        },
        None => TupleStructure::of_metric(space, t),
    };
    let lower = dk_distance(&structure(source), &structure(target))
        .expect("tuple structures from a valid space")
        .value;
    let n = space.len();
    let mut order: Vec<usize> = vec![];
    for x in source.iter().copied().chain(0..n) {
        if !order.contains(&x) {
            order.push(x);
        }
    }
    let mut state = ExtendState {
        space,
        predicate,
        source,
        target,
        epsilon,
        order,
        map: vec![usize::MAX; n],
        used: vec![false; n],
        best: None,
        nodes: 0,
        budget,
        out_of_budget: false,
    };
    state.search(0);
    match state.best {
        Some((disp, map)) => Ok(Ok(IsometryExtension {
            isometry: FiniteIsometry { map },
            displacement: disp,
            nodes: state.nodes,
        })),
        None => Ok(Err(ExtensionFailure {
            explored: state.nodes,
            exhausted: !state.out_of_budget,
            dk_lower_bound: lower,
            certified_infeasible: lower > epsilon,
        })),
    }
}

struct ExtendState<'a> {
    space: &'a FiniteMetricSpace,
    predicate: Option<&'a [Q01]>,
    source: &'a [usize],
    target: &'a [usize],
    epsilon: Q01,
    order: Vec<usize>,
    map: Vec<usize>,
    used: Vec<bool>,
    best: Option<(Q01, Vec<usize>)>,
    nodes: usize,
    budget: usize,
    out_of_budget: bool,
}

impl ExtendState<'_> {
    fn displacement_bound(&self, x: usize, y: usize) -> Q01 {
        self.source
            .iter()
            .zip(self.target)
            .filter(|(&s, _)| s == x)
            .map(|(_, &t)| self.space.d(y, t))
            .max()
            .unwrap_or(Q01::ZERO)
    }

    fn search(&mut self, depth: usize) {
        if self.best.as_ref().is_some_and(|(d, _)| d.is_zero()) {
            return;
        }
        if depth == self.order.len() {
            let disp = (0..self.source.len())
                .map(|i| self.space.d(self.map[self.source[i]], self.target[i]))
                .max()
                .unwrap_or(Q01::ZERO);
            if self.best.as_ref().map_or(true, |(d, _)| disp < *d) {
                self.best = Some((disp, self.map.clone()));
            }
            return;
        }
        let x = self.order[depth];
        let n = self.space.len();
        let mut candidates: Vec<(Q01, usize, usize)> = (0..n)
            .filter(|&y| !self.used[y])
            .map(|y| (self.displacement_bound(x, y), usize::from(y != x), y))
            .filter(|&(d, _, _)| d <= self.epsilon)
            .collect();
        candidates.sort();
        for (disp, _, y) in candidates {
            if self.best.as_ref().is_some_and(|(d, _)| disp >= *d) {
                continue;
            }
            if self.predicate.is_some_and(|p| p[x] != p[y]) {
                continue;
            }
            let consistent = self.order[..depth].iter().all(|&z| self.space.d(z, x) == self.space.d(self.map[z], y));
            if !consistent {
                continue;
            }
            if self.nodes >= self.budget {
                self.out_of_budget = true;
                return;
            }
            self.nodes += 1;
            self.map[x] = y;
            self.used[y] = true;
            self.search(depth + 1);
            self.used[y] = false;
            self.map[x] = usize::MAX;
        }
    }
}
