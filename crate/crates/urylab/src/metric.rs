//! Finite rational metric spaces of diameter at most 1, Katětov functions,
//! one-point extensions and the two amalgamation constructions.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::rational::{Q01, Rat};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("distance matrix is not square for {0} labels")]
    NotSquare(usize),
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("nonzero diagonal at {0:?}")]
    NonzeroDiagonal(String),
    #[error("asymmetric distances between {0:?} and {1:?}")]
    Asymmetry(String, String),
    #[error("distinct points {0:?} and {1:?} at distance 0")]
    ZeroDistance(String, String),
    #[error("distance between {0:?} and {1:?} outside [0,1]")]
    DiameterExceeded(String, String),
    #[error("triangle inequality fails: d({0},{2}) > d({0},{1}) + d({1},{2})")]
    TriangleViolation(String, String, String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("pair ({0:?}, {1:?}) listed more than once")]
    DuplicatePair(String, String),
    #[error("pair ({0:?}, {1:?}) missing")]
    MissingPair(String, String),
    #[error("tuple lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("index {0} outside a space of {1} points")]
    IndexOutOfRange(usize, usize),
    #[error("Katětov function not 1-Lipschitz at ({0:?}, {1:?})")]
    LipschitzViolation(String, String),
    #[error("Katětov function violates d(x,y) <= f(x)+f(y) at ({0:?}, {1:?})")]
    SumViolation(String, String),
    #[error("new point would sit at distance 0 from {0:?}")]
    ZeroDistanceToExisting(String),
    #[error("label {0:?} already present")]
    LabelCollision(String),
    #[error("shared parts differ: d({0},{1}) differs between the two sides")]
    SharedPartMismatch(String, String),
    #[error("amalgamation over an empty shared part; use disjoint_join")]
    EmptySharedPart,
    #[error("partial map does not preserve d({0},{1})")]
    NotPartialIsometry(usize, usize),
}

/// Labeled points with an exact distance matrix. Construct via [`validate_space`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteMetricSpace {
    labels: Vec<String>,
    dist: Vec<Vec<Q01>>,
    index: BTreeMap<String, usize>,
}

/// Checks the metric axioms and builds the space. Checks run in a fixed
/// order so that the reported axiom is the first one violated.
pub fn validate_space(labels: Vec<String>, dist: Vec<Vec<Rat>>) -> Result<FiniteMetricSpace, MetricError> {
    let n = labels.len();
    if dist.len() != n || dist.iter().any(|row| row.len() != n) {
        return Err(MetricError::NotSquare(n));
    }
    let mut index = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        if index.insert(l.clone(), i).is_some() {
            return Err(MetricError::DuplicateLabel(l.clone()));
        }
    }
    let zero = Rat::from_integer(0);
    for i in 0..n {
        if dist[i][i] != zero {
            return Err(MetricError::NonzeroDiagonal(labels[i].clone()));
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            if dist[i][j] != dist[j][i] {
                return Err(MetricError::Asymmetry(labels[i].clone(), labels[j].clone()));
            }
        }
    }
    let mut q = vec![vec![Q01::ZERO; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if dist[i][j] == zero {
                return Err(MetricError::ZeroDistance(labels[i].clone(), labels[j].clone()));
            }
            q[i][j] = Q01::new(dist[i][j])
                .map_err(|_| MetricError::DiameterExceeded(labels[i].clone(), labels[j].clone()))?;
        }
    }
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                if q[x][z].value() > q[x][y].value() + q[y][z].value() {
                    return Err(MetricError::TriangleViolation(
                        labels[x].clone(),
                        labels[y].clone(),
                        labels[z].clone(),
                    ));
                }
            }
        }
    }
    Ok(FiniteMetricSpace { labels, dist: q, index })
}

impl FiniteMetricSpace {
    pub fn empty() -> Self {
        FiniteMetricSpace { labels: vec![], dist: vec![], index: BTreeMap::new() }
    }

    pub fn singleton(label: &str) -> Self {
        validate_space(vec![label.to_string()], vec![vec![Rat::from_integer(0)]]).unwrap()
    }

    /// Builds a space from a list of unordered pairs, each given exactly once.
    pub fn from_pairs(labels: Vec<String>, pairs: &[(String, String, Q01)]) -> Result<Self, MetricError> {
        let n = labels.len();
        let mut index = BTreeMap::new();
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(MetricError::DuplicateLabel(l.clone()));
            }
        }
        let mut m: Vec<Vec<Option<Rat>>> = vec![vec![None; n]; n];
        for (a, b, v) in pairs {
            let i = *index.get(a).ok_or_else(|| MetricError::UnknownLabel(a.clone()))?;
            let j = *index.get(b).ok_or_else(|| MetricError::UnknownLabel(b.clone()))?;
            if i == j {
                return Err(MetricError::NonzeroDiagonal(a.clone()));
            }
            if m[i][j].is_some() {
                return Err(MetricError::DuplicatePair(a.clone(), b.clone()));
            }
            m[i][j] = Some(v.value());
            m[j][i] = Some(v.value());
        }
        let mut dist = vec![vec![Rat::from_integer(0); n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    dist[i][j] = m[i][j].ok_or_else(|| MetricError::MissingPair(labels[i].clone(), labels[j].clone()))?;
                }
            }
        }
        validate_space(labels, dist)
    }

    /// Convenience constructor from a Q01 matrix.
    pub fn from_matrix(labels: Vec<String>, dist: Vec<Vec<Q01>>) -> Result<Self, MetricError> {
        let raw = dist.iter().map(|r| r.iter().map(|q| q.value()).collect()).collect();
        validate_space(labels, raw)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn d(&self, i: usize, j: usize) -> Q01 {
        self.dist[i][j]
    }

    pub fn matrix(&self) -> &[Vec<Q01>] {
        &self.dist
    }

    /// Unordered pairs `i < j` with their distance.
    pub fn pairs(&self) -> Vec<(usize, usize, Q01)> {
        let mut out = vec![];
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                out.push((i, j, self.dist[i][j]));
            }
        }
        out
    }

    pub fn subspace(&self, indices: &[usize]) -> FiniteMetricSpace {
        let labels = indices.iter().map(|&i| self.labels[i].clone()).collect();
        let dist = indices.iter().map(|&i| indices.iter().map(|&j| self.dist[i][j]).collect()).collect();
        let mut index = BTreeMap::new();
        for (k, &i) in indices.iter().enumerate() {
            index.insert(self.labels[i].clone(), k);
        }
        FiniteMetricSpace { labels, dist, index }
    }

    /// True when every distance is a multiple of `1/denominator`.
    pub fn on_grid(&self, denominator: i64) -> bool {
        self.dist.iter().flatten().all(|q| q.on_grid(denominator))
    }

    pub fn check_indices(&self, tuple: &[usize]) -> Result<(), MetricError> {
        match tuple.iter().find(|&&i| i >= self.len()) {
            Some(&i) => Err(MetricError::IndexOutOfRange(i, self.len())),
            None => Ok(()),
        }
    }

    /// The same space with new labels, in order.
    pub fn relabel(&self, labels: Vec<String>) -> Result<FiniteMetricSpace, MetricError> {
        FiniteMetricSpace::from_matrix(labels, self.dist.clone())
    }

    /// `c` relabeled so that none of its labels outside `keep` occur in `b`.
    pub fn relabel_apart(b: &FiniteMetricSpace, c: &FiniteMetricSpace, keep: &[usize]) -> FiniteMetricSpace {
        let mut used: std::collections::BTreeSet<String> = b.labels.iter().cloned().collect();
        used.extend(c.labels.iter().cloned());
        let mut labels = c.labels.clone();
        for (i, l) in labels.iter_mut().enumerate() {
            if keep.contains(&i) || b.index_of(l).is_none() {
                continue;
            }
            let fresh = (1..).map(|k| format!("{l}'{k}")).find(|x| !used.contains(x)).unwrap();
            used.insert(fresh.clone());
            *l = fresh;
        }
        c.relabel(labels).expect("relabeling preserves validity")
    }

    /// A label not yet in use, derived from `base`.
    pub fn fresh_label(&self, base: &str) -> String {
        if !self.index.contains_key(base) {
            return base.to_string();
        }
        (1..).map(|k| format!("{base}#{k}")).find(|l| !self.index.contains_key(l)).unwrap()
    }
}

/// Max over coordinates of the pointwise distances.
pub fn tuple_distance(space: &FiniteMetricSpace, a: &[usize], b: &[usize]) -> Result<Q01, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    space.check_indices(a)?;
    space.check_indices(b)?;
    Ok(a.iter().zip(b).map(|(&x, &y)| space.d(x, y)).max().unwrap_or(Q01::ZERO))
}

/// A validated distance profile for a new point over `space`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KatetovFunction {
    values: Vec<Q01>,
}

impl KatetovFunction {
    pub fn values(&self) -> &[Q01] {
        &self.values
    }

    pub fn at(&self, i: usize) -> Q01 {
        self.values[i]
    }

    /// The largest Katětov function extending `f` from `sub` to the whole space:
    /// `F(y) = min(1, min_x f(x) + d(x,y))`.
    pub fn maximal_extension(space: &FiniteMetricSpace, sub: &[usize], f: &[Q01]) -> KatetovFunction {
        let values = (0..space.len())
            .map(|y| {
                sub.iter()
                    .zip(f)
                    .map(|(&x, &v)| v.tadd(space.d(x, y)))
                    .min()
                    .unwrap_or(Q01::ONE)
            })
            .collect();
        KatetovFunction { values }
    }
}

pub fn katetov_validate(space: &FiniteMetricSpace, f: &[Q01]) -> Result<KatetovFunction, MetricError> {
    if f.len() != space.len() {
        return Err(MetricError::LengthMismatch(f.len(), space.len()));
    }
    for x in 0..space.len() {
        for y in 0..space.len() {
            let dxy = space.d(x, y).value();
            if f[x].value() - f[y].value() > dxy {
                return Err(MetricError::LipschitzViolation(space.label(y).into(), space.label(x).into()));
            }
            if dxy > f[x].value() + f[y].value() {
                return Err(MetricError::SumViolation(space.label(x).into(), space.label(y).into()));
            }
        }
    }
    Ok(KatetovFunction { values: f.to_vec() })
}

/// Checks the Katětov inequalities of `f` over the subspace `sub` only.
pub fn is_katetov_over(space: &FiniteMetricSpace, sub: &[usize], f: &[Q01]) -> bool {
    for (a, &x) in sub.iter().enumerate() {
        for (b, &y) in sub.iter().enumerate().skip(a + 1) {
            let dxy = space.d(x, y);
            if f[a].abs_diff(f[b]) > dxy || dxy.value() > f[a].value() + f[b].value() {
                return false;
            }
        }
    }
    true
}

/// Adds a point at distances `f` from the existing points.
pub fn one_point_extend(
    space: &FiniteMetricSpace,
    f: &KatetovFunction,
    label: &str,
) -> Result<FiniteMetricSpace, MetricError> {
    if f.values.len() != space.len() {
        return Err(MetricError::LengthMismatch(f.values.len(), space.len()));
    }
    if space.index_of(label).is_some() {
        return Err(MetricError::LabelCollision(label.to_string()));
    }
    if let Some(x) = f.values.iter().position(|v| v.is_zero()) {
        return Err(MetricError::ZeroDistanceToExisting(space.label(x).to_string()));
    }
    let n = space.len();
    let mut labels = space.labels.clone();
    labels.push(label.to_string());
    let mut dist = space.dist.clone();
    for (i, row) in dist.iter_mut().enumerate() {
        row.push(f.values[i]);
    }
    let mut last = f.values.clone();
    last.push(Q01::ZERO);
    dist.push(last);
    let mut index = space.index.clone();
    index.insert(label.to_string(), n);
    Ok(FiniteMetricSpace { labels, dist, index })
}

/// Result of an amalgamation: the joint space and where each input point went.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Amalgam {
    pub space: FiniteMetricSpace,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

/// Free amalgamation of `b` and `c` over the identified pairs `(label in b, label in c)`.
/// Cross distances are `min(1, min_z d(x,z) + d(z,y))` over shared `z`.
pub fn free_amalgamate(
    b: &FiniteMetricSpace,
    c: &FiniteMetricSpace,
    shared: &[(String, String)],
) -> Result<Amalgam, MetricError> {
    if shared.is_empty() {
        return Err(MetricError::EmptySharedPart);
    }
    let mut c_to_b: BTreeMap<usize, usize> = BTreeMap::new();
    let mut seen_b = std::collections::BTreeSet::new();
    for (lb, lc) in shared {
        let ib = b.index_of(lb).ok_or_else(|| MetricError::UnknownLabel(lb.clone()))?;
        let ic = c.index_of(lc).ok_or_else(|| MetricError::UnknownLabel(lc.clone()))?;
        if c_to_b.insert(ic, ib).is_some() || !seen_b.insert(ib) {
            return Err(MetricError::DuplicatePair(lb.clone(), lc.clone()));
        }
    }
    for (&c1, &b1) in &c_to_b {
        for (&c2, &b2) in &c_to_b {
            if c.d(c1, c2) != b.d(b1, b2) {
                return Err(MetricError::SharedPartMismatch(c.label(c1).into(), c.label(c2).into()));
            }
        }
    }
    let nb = b.len();
    let mut labels = b.labels.clone();
    let mut right = vec![0; c.len()];
    for ic in 0..c.len() {
        match c_to_b.get(&ic) {
            Some(&ib) => right[ic] = ib,
            None => {
                let l = c.label(ic);
                if b.index_of(l).is_some() {
                    return Err(MetricError::LabelCollision(l.to_string()));
                }
                right[ic] = labels.len();
                labels.push(l.to_string());
            }
        }
    }
    let n = labels.len();
    let mut dist = vec![vec![Rat::from_integer(0); n]; n];
    for i in 0..nb {
        for j in 0..nb {
            dist[i][j] = b.d(i, j).value();
        }
    }
    for i in 0..c.len() {
        for j in 0..c.len() {
            dist[right[i]][right[j]] = c.d(i, j).value();
        }
    }
    let shared_pairs: Vec<(usize, usize)> = c_to_b.iter().map(|(&ic, &ib)| (ib, ic)).collect();
    for x in 0..nb {
        if shared_pairs.iter().any(|&(ib, _)| ib == x) {
            continue;
        }
        for y in 0..c.len() {
            if c_to_b.contains_key(&y) {
                continue;
            }
            let v = shared_pairs
                .iter()
                .map(|&(ib, ic)| b.d(x, ib).tadd(c.d(ic, y)))
                .min()
                .unwrap();
            dist[x][right[y]] = v.value();
            dist[right[y]][x] = v.value();
        }
    }
    let space = validate_space(labels, dist)?;
    Ok(Amalgam { space, left: (0..nb).collect(), right })
}

/// Disjoint union with every cross distance equal to 1.
pub fn disjoint_join(b: &FiniteMetricSpace, c: &FiniteMetricSpace) -> Result<FiniteMetricSpace, MetricError> {
    for l in &c.labels {
        if b.index_of(l).is_some() {
            return Err(MetricError::LabelCollision(l.clone()));
        }
    }
    let n = b.len() + c.len();
    let mut labels = b.labels.clone();
    labels.extend(c.labels.iter().cloned());
    let mut dist = vec![vec![Rat::from_integer(1); n]; n];
    for (i, row) in dist.iter_mut().enumerate() {
        row[i] = Rat::from_integer(0);
    }
    for i in 0..b.len() {
        for j in 0..b.len() {
            dist[i][j] = b.d(i, j).value();
        }
    }
    let o = b.len();
    for i in 0..c.len() {
        for j in 0..c.len() {
            dist[o + i][o + j] = c.d(i, j).value();
        }
    }
    validate_space(labels, dist)
}

/// A distance-preserving correspondence between two equal-length tuples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialIsometry {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

impl PartialIsometry {
    pub fn new(space: &FiniteMetricSpace, source: Vec<usize>, target: Vec<usize>) -> Result<Self, MetricError> {
        if source.len() != target.len() {
            return Err(MetricError::LengthMismatch(source.len(), target.len()));
        }
        space.check_indices(&source)?;
        space.check_indices(&target)?;
        for i in 0..source.len() {
            for j in 0..source.len() {
                if space.d(source[i], source[j]) != space.d(target[i], target[j]) {
                    return Err(MetricError::NotPartialIsometry(i, j));
                }
            }
        }
        Ok(PartialIsometry { source, target })
    }
}
