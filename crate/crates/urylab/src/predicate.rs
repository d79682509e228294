//! The class 𝒦 of finite metric spaces carrying a predicate `P` that is the
//! distance to a subset of some extension: membership, realization of the
//! witness set, and amalgamation of realized presentations.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::metric::{disjoint_join, free_amalgamate, FiniteMetricSpace, KatetovFunction, MetricError};
use crate::rational::Q01;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredicateError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("P has {0} values for {1} points")]
    WrongLength(usize, usize),
    #[error("P is not 1-Lipschitz: |P({0}) - P({1})| > d({0},{1})")]
    NotLipschitz(String, String),
    #[error("structure is not in class K")]
    NotInClassK,
    #[error("P differs on shared point {0:?}")]
    PredicateMismatchOnShared(String),
    #[error("{0:?} is not a point of the original space")]
    NotABasePoint(String),
    #[error("tuple lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("sequence is not Cauchy within tolerance at step {0}")]
    NotCauchy(usize),
    #[error("joint construction failed: {0}")]
    JointConstruction(String),
}

/// A finite metric space with a `[0,1]`-valued predicate that passed the
/// 𝒦-membership test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateSpace {
    base: FiniteMetricSpace,
    p: Vec<Q01>,
}

impl PredicateSpace {
    pub fn base(&self) -> &FiniteMetricSpace {
        &self.base
    }

    pub fn p(&self) -> &[Q01] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn restrict(&self, indices: &[usize]) -> PredicateSpace {
        PredicateSpace { base: self.base.subspace(indices), p: indices.iter().map(|&i| self.p[i]).collect() }
    }
}

/// Decides membership in 𝒦: `P` is the restriction of a distance-to-subset
/// function iff it is 1-Lipschitz.
pub fn k_membership(space: &FiniteMetricSpace, p: &[Q01]) -> Result<PredicateSpace, PredicateError> {
    if p.len() != space.len() {
        return Err(PredicateError::WrongLength(p.len(), space.len()));
    }
    for x in 0..space.len() {
        for y in x + 1..space.len() {
            if p[x].abs_diff(p[y]) > space.d(x, y) {
                return Err(PredicateError::NotLipschitz(space.label(x).into(), space.label(y).into()));
            }
        }
    }
    Ok(PredicateSpace { base: space.clone(), p: p.to_vec() })
}

/// A presentation `(B, B0)` of a predicate space: `P(x) = d(x, B0)` on the
/// original points, which sit inside `ambient` at `base_points`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RealizedPredicateSpace {
    pub ambient: FiniteMetricSpace,
    pub witnesses: Vec<usize>,
    pub base_points: Vec<usize>,
    pub original: PredicateSpace,
}

/// `min_{w in set} d(x, w)`, or 1 for an empty set.
pub fn distance_to_set(space: &FiniteMetricSpace, x: usize, set: &[usize]) -> Q01 {
    set.iter().map(|&w| space.d(x, w)).min().unwrap_or(Q01::ONE)
}

impl RealizedPredicateSpace {
    /// Re-checks `P(x) = d(x, B0)` and that the original base is the induced subspace.
    pub fn verify(&self) -> Result<(), String> {
        if self.ambient.subspace(&self.base_points).matrix() != self.original.base.matrix() {
            return Err("original base is not the induced subspace".into());
        }
        for (k, &x) in self.base_points.iter().enumerate() {
            let v = distance_to_set(&self.ambient, x, &self.witnesses);
            if v != self.original.p[k] {
                return Err(format!("P({}) = {} but d(x,B0) = {}", self.ambient.label(x), self.original.p[k], v));
            }
        }
        Ok(())
    }

    /// The predicate `d(x, B0)` on every ambient point.
    pub fn ambient_predicate(&self) -> Vec<Q01> {
        (0..self.ambient.len()).map(|x| distance_to_set(&self.ambient, x, &self.witnesses)).collect()
    }
}

/// Adds one witness per point with positive `P`, at the maximal Katětov
/// extension of the single value `P(a)` at `a`; points with `P(a) = 0` are
/// their own witness.
pub fn realize_predicate(ps: &PredicateSpace) -> Result<RealizedPredicateSpace, PredicateError> {
    k_membership(&ps.base, &ps.p).map_err(|_| PredicateError::NotInClassK)?;
    let mut ambient = ps.base.clone();
    let mut witnesses = vec![];
    for a in 0..ps.len() {
        if ps.p[a].is_zero() {
            witnesses.push(a);
            continue;
        }
        let g = KatetovFunction::maximal_extension(&ambient, &[a], &[ps.p[a]]);
        let label = ambient.fresh_label(&format!("w:{}", ps.base.label(a)));
        ambient = crate::metric::one_point_extend(&ambient, &g, &label)?;
        witnesses.push(ambient.len() - 1);
    }
    let out = RealizedPredicateSpace {
        ambient,
        witnesses,
        base_points: (0..ps.len()).collect(),
        original: ps.clone(),
    };
    out.verify().map_err(PredicateError::JointConstruction)?;
    Ok(out)
}

/// Output of [`nap_amalgamate`] and [`jep_join`]: the joint presentation and
/// where each side's original points went (indices into `realized.original`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateAmalgam {
    pub realized: RealizedPredicateSpace,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

fn assemble(
    space: FiniteMetricSpace,
    witnesses: Vec<usize>,
    left_ambient: Vec<usize>,
    right_ambient: Vec<usize>,
) -> Result<PredicateAmalgam, PredicateError> {
    let mut base_points: Vec<usize> = vec![];
    let mut slot = BTreeMap::new();
    let mut place = |x: usize, base_points: &mut Vec<usize>| -> usize {
        *slot.entry(x).or_insert_with(|| {
            base_points.push(x);
            base_points.len() - 1
        })
    };
    let left: Vec<usize> = left_ambient.iter().map(|&x| place(x, &mut base_points)).collect();
    let right: Vec<usize> = right_ambient.iter().map(|&x| place(x, &mut base_points)).collect();
    let p: Vec<Q01> = base_points.iter().map(|&x| distance_to_set(&space, x, &witnesses)).collect();
    let original = k_membership(&space.subspace(&base_points), &p)?;
    Ok(PredicateAmalgam { realized: RealizedPredicateSpace { ambient: space, witnesses, base_points, original }, left, right })
}

/// Amalgamates two realized predicate spaces over identified original points
/// `(label in b, label in c)`; the joint predicate is `d(x, B0 ∪ C0)`.
pub fn nap_amalgamate(
    b: &RealizedPredicateSpace,
    c: &RealizedPredicateSpace,
    shared: &[(String, String)],
) -> Result<PredicateAmalgam, PredicateError> {
    if shared.is_empty() {
        return Err(MetricError::EmptySharedPart.into());
    }
    let base_index = |r: &RealizedPredicateSpace, l: &str| -> Result<usize, PredicateError> {
        r.original.base.index_of(l).ok_or_else(|| PredicateError::NotABasePoint(l.to_string()))
    };
    let mut keep_c = vec![];
    let mut pairs = vec![];
    for (lb, lc) in shared {
        let ib = base_index(b, lb)?;
        let ic = base_index(c, lc)?;
        if b.original.p[ib] != c.original.p[ic] {
            return Err(PredicateError::PredicateMismatchOnShared(lb.clone()));
        }
        let ab = b.base_points[ib];
        let ac = c.base_points[ic];
        keep_c.push(ac);
        pairs.push((b.ambient.label(ab).to_string(), ac));
    }
    let c_amb = FiniteMetricSpace::relabel_apart(&b.ambient, &c.ambient, &keep_c);
    let shared_amb: Vec<(String, String)> = pairs.into_iter().map(|(lb, ac)| (lb, c_amb.label(ac).to_string())).collect();
    let am = free_amalgamate(&b.ambient, &c_amb, &shared_amb)?;
    let mut witnesses: Vec<usize> = b.witnesses.iter().map(|&w| am.left[w]).collect();
    for &w in &c.witnesses {
        if !witnesses.contains(&am.right[w]) {
            witnesses.push(am.right[w]);
        }
    }
    let left = b.base_points.iter().map(|&x| am.left[x]).collect();
    let right = c.base_points.iter().map(|&x| am.right[x]).collect();
    assemble(am.space, witnesses, left, right)
}

/// Joint embedding: disjoint union of the ambients with cross distances 1.
pub fn jep_join(b: &RealizedPredicateSpace, c: &RealizedPredicateSpace) -> Result<PredicateAmalgam, PredicateError> {
    let c_amb = FiniteMetricSpace::relabel_apart(&b.ambient, &c.ambient, &[]);
    let joined = disjoint_join(&b.ambient, &c_amb)?;
    let off = b.ambient.len();
    let mut witnesses = b.witnesses.clone();
    witnesses.extend(c.witnesses.iter().map(|&w| w + off));
    let left = b.base_points.clone();
    let right = c.base_points.iter().map(|&x| x + off).collect();
    assemble(joined, witnesses, left, right)
}
