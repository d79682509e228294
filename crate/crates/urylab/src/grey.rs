//! Grey subsets and grey subgroups over finite carriers: stabilizers, cosets,
//! conjugates, the max/scaling closure, cones and invariance certificates.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::formula::{assignment, eval, ExpansionStructure, Formula, FormulaError};
use crate::isometry::IsometryGroup;
use crate::metric::{tuple_distance, FiniteMetricSpace, MetricError};
use crate::rational::{Q01, Rat};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GreyError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error("group acts on {0} points but the space has {1}")]
    CarrierActionMismatch(usize, usize),
    #[error("table has {0} values for a carrier of {1} elements")]
    CarrierSizeMismatch(usize, usize),
    #[error("element {0} is not in the carrier")]
    ElementOutsideCarrier(usize),
    #[error("action table is not a group action: {0}")]
    ActionUndefined(String),
    #[error("grey subgroup axiom fails: {0:?}")]
    NotASubgroup(SubgroupCounterexample),
}

/// A `[0,1]`-valued function on a finite carrier, with a description of
/// where it came from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GreySubset {
    pub values: Vec<Q01>,
    pub provenance: String,
}

/// A grey subset of a finite isometry group satisfying `H(1) = 0`,
/// `H(g) = H(g⁻¹)` and `H(gh) <= H(g) + H(h)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GreySubgroup {
    values: Vec<Q01>,
    provenance: String,
}

impl GreySubgroup {
    pub fn new(group: &IsometryGroup, values: Vec<Q01>, provenance: &str) -> Result<Self, GreyError> {
        verify_subgroup(group, &values)?.map_err(GreyError::NotASubgroup)?;
        Ok(GreySubgroup { values, provenance: provenance.to_string() })
    }

    pub fn values(&self) -> &[Q01] {
        &self.values
    }

    pub fn at(&self, g: usize) -> Q01 {
        self.values[g]
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn as_subset(&self) -> GreySubset {
        GreySubset { values: self.values.clone(), provenance: self.provenance.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum SubgroupCounterexample {
    Identity(Q01),
    Symmetry { g: usize, inverse: usize },
    Subadditivity { g: usize, h: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgroupCertificate {
    /// Number of inequality instances checked.
    pub checked: usize,
}

/// Checks the three grey subgroup axioms exhaustively, pairs in lexicographic
/// order; returns the first failure.
pub fn verify_subgroup(
    group: &IsometryGroup,
    values: &[Q01],
) -> Result<Result<SubgroupCertificate, SubgroupCounterexample>, GreyError> {
    let n = group.len();
    if values.len() != n {
        return Err(GreyError::CarrierSizeMismatch(values.len(), n));
    }
    let id = group.identity();
    if !values[id].is_zero() {
        return Ok(Err(SubgroupCounterexample::Identity(values[id])));
    }
    for g in 0..n {
        if values[g] != values[group.inv(g)] {
            return Ok(Err(SubgroupCounterexample::Symmetry { g, inverse: group.inv(g) }));
        }
    }
    for g in 0..n {
        for h in 0..n {
            if values[group.mul(g, h)] > values[g].tadd(values[h]) {
                return Ok(Err(SubgroupCounterexample::Subadditivity { g, h }));
            }
        }
    }
    Ok(Ok(SubgroupCertificate { checked: 1 + n + n * n }))
}

/// `H(g) = min(1, q · d(g(s̄), s̄))` under the max tuple metric.
pub fn grey_stabilizer(
    group: &IsometryGroup,
    space: &FiniteMetricSpace,
    q: Rat,
    tuple: &[usize],
) -> Result<GreySubgroup, GreyError> {
    let acts_on = group.elements().first().map_or(space.len(), |g| g.map().len());
    if acts_on != space.len() {
        return Err(GreyError::CarrierActionMismatch(acts_on, space.len()));
    }
    space.check_indices(tuple)?;
    let values = group
        .elements()
        .iter()
        .map(|g| Ok(tuple_distance(space, &g.apply_tuple(tuple), tuple)?.scale(q)))
        .collect::<Result<Vec<_>, GreyError>>()?;
    let names: Vec<&str> = tuple.iter().map(|&i| space.label(i)).collect();
    GreySubgroup::new(group, values, &format!("stab({}; {})", crate::rational::format_rat(&q), names.join(",")))
}

fn check_element(group: &IsometryGroup, g: usize) -> Result<(), GreyError> {
    if g < group.len() {
        Ok(())
    } else {
        Err(GreyError::ElementOutsideCarrier(g))
    }
}

/// The coset `Hg₀ : g ↦ H(g g₀⁻¹)`.
pub fn coset(group: &IsometryGroup, h: &GreySubgroup, g0: usize) -> Result<GreySubset, GreyError> {
    check_element(group, g0)?;
    let inv = group.inv(g0);
    Ok(GreySubset {
        values: (0..group.len()).map(|g| h.values[group.mul(g, inv)]).collect(),
        provenance: format!("coset({}, g{g0})", h.provenance),
    })
}

/// The conjugate `H^{g₀} : h ↦ H(g₀ h g₀⁻¹)`.
pub fn conjugate(group: &IsometryGroup, h: &GreySubgroup, g0: usize) -> Result<GreySubgroup, GreyError> {
    check_element(group, g0)?;
    let inv = group.inv(g0);
    let values = (0..group.len()).map(|x| h.values[group.mul(group.mul(g0, x), inv)]).collect();
    GreySubgroup::new(group, values, &format!("conj({}, g{g0})", h.provenance))
}

/// Pointwise maximum of grey subgroups.
pub fn max_subgroup(group: &IsometryGroup, parts: &[&GreySubgroup]) -> Result<GreySubgroup, GreyError> {
    let values = (0..group.len()).map(|g| parts.iter().map(|h| h.values[g]).max().unwrap_or(Q01::ZERO)).collect();
    let names: Vec<&str> = parts.iter().map(|h| h.provenance.as_str()).collect();
    GreySubgroup::new(group, values, &format!("max({})", names.join(", ")))
}

/// Truncated scaling `min(1, q·H)`.
pub fn scale_subgroup(group: &IsometryGroup, h: &GreySubgroup, q: Rat) -> Result<GreySubgroup, GreyError> {
    let values = h.values.iter().map(|v| v.scale(q)).collect();
    GreySubgroup::new(group, values, &format!("scale({}, {})", crate::rational::format_rat(&q), h.provenance))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosureFamily {
    pub subgroups: Vec<GreySubgroup>,
    pub cosets: Vec<GreySubset>,
    pub depth_reached: usize,
    /// The member cap stopped the closure before the requested depth.
    pub depth_exceeded: bool,
}

/// Closes the generator subgroups under pairwise max, truncated scaling by
/// `scalars` and conjugation by the `elements` (a finite stand-in for G₀),
/// for `depth` rounds; then adds the `elements`-cosets of every subgroup.
/// Members are deduplicated by value table; `member_cap` bounds the number
/// of subgroups.
pub fn closure_family(
    group: &IsometryGroup,
    generators: &[GreySubgroup],
    elements: &[usize],
    scalars: &[Rat],
    depth: usize,
    member_cap: usize,
) -> Result<ClosureFamily, GreyError> {
    for &g in elements {
        check_element(group, g)?;
    }
    let mut seen: BTreeMap<Vec<Q01>, usize> = BTreeMap::new();
    let mut subgroups: Vec<GreySubgroup> = vec![];
    let mut add = |h: GreySubgroup, subgroups: &mut Vec<GreySubgroup>| {
        if !seen.contains_key(&h.values) {
            seen.insert(h.values.clone(), subgroups.len());
            subgroups.push(h);
        }
    };
    for h in generators {
        add(h.clone(), &mut subgroups);
    }
    let mut out = ClosureFamily { subgroups: vec![], cosets: vec![], depth_reached: 0, depth_exceeded: false };
    'levels: for level in 1..=depth {
        let current = subgroups.clone();
        let mut fresh = vec![];
        for (i, a) in current.iter().enumerate() {
            for b in &current[i + 1..] {
                fresh.push(max_subgroup(group, &[a, b])?);
            }
            for &q in scalars {
                fresh.push(scale_subgroup(group, a, q)?);
            }
            for &g in elements {
                fresh.push(conjugate(group, a, g)?);
            }
        }
        for h in fresh {
            if subgroups.len() >= member_cap {
                out.depth_exceeded = true;
                break 'levels;
            }
            add(h, &mut subgroups);
        }
        out.depth_reached = level;
    }
    let mut coset_seen = BTreeSet::new();
    for h in &subgroups {
        for &g in elements {
            let c = coset(group, h, g)?;
            if coset_seen.insert(c.values.clone()) {
                out.cosets.push(c);
            }
        }
    }
    out.subgroups = subgroups;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    Less,
    LessEq,
    Greater,
    GreaterEq,
}

/// Carrier elements whose value stands in the given relation to `r`.
pub fn cone(values: &[Q01], r: Rat, kind: ConeKind) -> Vec<usize> {
    (0..values.len())
        .filter(|&i| {
            let v = values[i].value();
            match kind {
                ConeKind::Less => v < r,
                ConeKind::LessEq => v <= r,
                ConeKind::Greater => v > r,
                ConeKind::GreaterEq => v >= r,
            }
        })
        .collect()
}

/// How a finite group acts on a finite carrier: `table[g][x]` is the index
/// of `g·x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    table: Vec<Vec<usize>>,
}

impl Action {
    /// Validates that the table is a left action of `group`.
    pub fn new(group: &IsometryGroup, table: Vec<Vec<usize>>) -> Result<Self, GreyError> {
        if table.len() != group.len() {
            return Err(GreyError::ActionUndefined(format!("{} rows for {} elements", table.len(), group.len())));
        }
        let m = table.first().map_or(0, Vec::len);
        if table.iter().any(|r| r.len() != m || r.iter().any(|&x| x >= m)) {
            return Err(GreyError::ActionUndefined("ragged or out-of-range table".into()));
        }
        if (0..m).any(|x| table[group.identity()][x] != x) {
            return Err(GreyError::ActionUndefined("identity moves a carrier element".into()));
        }
        for g in 0..group.len() {
            for h in 0..group.len() {
                if (0..m).any(|x| table[group.mul(g, h)][x] != table[g][table[h][x]]) {
                    return Err(GreyError::ActionUndefined(format!("(g{g} g{h})x != g{g}(g{h} x)")));
                }
            }
        }
        Ok(Action { table })
    }

    pub fn carrier_len(&self) -> usize {
        self.table.first().map_or(0, Vec::len)
    }

    pub fn apply(&self, g: usize, x: usize) -> usize {
        self.table[g][x]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvarianceViolation {
    pub g: usize,
    pub x: usize,
    /// `φ(g·x)`
    pub moved: Q01,
    /// `min(1, φ(x) + H(g))`
    pub bound: Q01,
}

/// Checks `φ(g·x) <= min(1, φ(x) + H(g))` over all `(g, x)` in lexicographic
/// order. Returns the number of checked instances or the first violator.
pub fn invariance_check(
    phi: &GreySubset,
    h: &GreySubgroup,
    action: &Action,
) -> Result<Result<usize, InvarianceViolation>, GreyError> {
    let m = action.carrier_len();
    if phi.values.len() != m {
        return Err(GreyError::CarrierSizeMismatch(phi.values.len(), m));
    }
    if h.values.len() != action.table.len() {
        return Err(GreyError::CarrierSizeMismatch(h.values.len(), action.table.len()));
    }
    for g in 0..h.values.len() {
        for x in 0..m {
            let moved = phi.values[action.apply(g, x)];
            let bound = phi.values[x].tadd(h.values[g]);
            if moved > bound {
                return Ok(Err(InvarianceViolation { g, x, moved, bound }));
            }
        }
    }
    Ok(Ok(h.values.len() * m))
}

/// A grey subset paired with the grey subgroup claimed to leave it invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreyBasisEntry {
    pub subset: GreySubset,
    pub subgroup: GreySubgroup,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoodBasisReport {
    /// Indices of entries whose invariance was certified.
    pub certified: Vec<usize>,
    pub checked_instances: usize,
    pub failures: Vec<(usize, InvarianceViolation)>,
}

pub fn good_basis_check(entries: &[GreyBasisEntry], action: &Action) -> Result<GoodBasisReport, GreyError> {
    let mut r = GoodBasisReport { certified: vec![], checked_instances: 0, failures: vec![] };
    for (i, e) in entries.iter().enumerate() {
        match invariance_check(&e.subset, &e.subgroup, action)? {
            Ok(n) => {
                r.certified.push(i);
                r.checked_instances += n;
            }
            Err(v) => r.failures.push((i, v)),
        }
    }
    Ok(r)
}

/// The structures `g·M` for all group elements and seeds, deduplicated, with
/// the induced action table.
pub fn structure_orbits(group: &IsometryGroup, seeds: &[ExpansionStructure]) -> Result<(Vec<ExpansionStructure>, Action), GreyError> {
    let mut carrier: Vec<ExpansionStructure> = vec![];
    for m in seeds {
        for g in group.elements() {
            let t = m.transported(g.map());
            if !carrier.contains(&t) {
                carrier.push(t);
            }
        }
    }
    let table = group
        .elements()
        .iter()
        .map(|g| {
            carrier
                .iter()
                .map(|m| {
                    let t = m.transported(g.map());
                    carrier.iter().position(|c| *c == t).expect("orbits are closed")
                })
                .collect()
        })
        .collect();
    Ok((carrier, Action::new(group, table)?))
}

/// The grey subset `M ↦ φ^M(c̄)` on a set of structures, with the free
/// variables `vars` bound to the parameter tuple.
pub fn formula_subset(
    phi: &Formula,
    vars: &[String],
    params: &[usize],
    structures: &[ExpansionStructure],
) -> Result<GreySubset, GreyError> {
    let env = assignment(vars, params);
    let values = structures.iter().map(|m| eval(phi, m, &env)).collect::<Result<Vec<_>, _>>()?;
    Ok(GreySubset { values, provenance: format!("{phi} at {params:?}") })
}

/// Sup-displacement distance between two group elements, `max_x d(g(x), h(x))`:
/// the finite surrogate for a left-invariant group metric.
pub fn sup_displacement(group: &IsometryGroup, space: &FiniteMetricSpace, g: usize, h: usize) -> Q01 {
    let (a, b) = (group.element(g), group.element(h));
    (0..space.len()).map(|x| space.d(a.apply(x), b.apply(x))).max().unwrap_or(Q01::ZERO)
}
