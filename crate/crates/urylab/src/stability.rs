//! Finite witness searches for order and independence patterns, at the
//! level of tuples and at the level of group elements acting on a carrier
//! of structures, together with iterated-limit estimates, Ramsey extraction
//! and the conversions between witness kinds.
//!
//! Absence results are always relative to the given pools and budget. Every
//! found witness carries a transcript of checked inequalities that the
//! `verify_*` functions recompute from the inputs alone.

use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{
    assignment, eval, induced_structure, inverse_modulus, normalize, qf_type_distance, ExpansionStructure, Formula,
    FormulaError,
};
use crate::grey::{
    formula_subset, grey_stabilizer, invariance_check, max_subgroup, structure_orbits, Action, GreyError, GreySubgroup,
    GreySubset, InvarianceViolation,
};
use crate::isometry::IsometryGroup;
use crate::metric::{tuple_distance, FiniteMetricSpace, MetricError};
use crate::rational::{Q01, Rat};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StabilityError {
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Grey(#[from] GreyError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("structures do not share a base and signature: {0}")]
    FamilyMismatch(String),
    #[error("budget of {0} search nodes exhausted")]
    BudgetExhausted(u64),
    #[error("grey set is not invariant under max(H, H'): {0:?}")]
    InvarianceNotCertified(InvarianceViolation),
    #[error("tails of {formula} do not settle within the tolerance at index {index} (spread {spread}, window {window})")]
    InconclusiveTails { formula: String, index: usize, spread: Rat, window: usize },
    #[error("target length {target} not found among {length} indices")]
    TargetLengthInfeasible { target: usize, length: usize },
    #[error("malformed witness: {0}")]
    MalformedWitness(String),
}

type Result<T> = std::result::Result<T, StabilityError>;

/// A finite sample of structures over one base space and signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpansionFamily {
    structures: Vec<ExpansionStructure>,
    label: String,
}

impl ExpansionFamily {
    pub fn new(structures: Vec<ExpansionStructure>, label: &str) -> Result<Self> {
        let first = structures.first().ok_or_else(|| StabilityError::FamilyMismatch("empty family".into()))?;
        for (i, m) in structures.iter().enumerate() {
            if m.base() != first.base() {
                return Err(StabilityError::FamilyMismatch(format!("structure {i} has another base")));
            }
            if m.signature() != first.signature() {
                return Err(StabilityError::FamilyMismatch(format!("structure {i} has another signature")));
            }
        }
        Ok(ExpansionFamily { structures, label: label.into() })
    }

    pub fn structures(&self) -> &[ExpansionStructure] {
        &self.structures
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn base(&self) -> &FiniteMetricSpace {
        self.structures[0].base()
    }
}

/// A formula whose free variables split into a left and a right block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitFormula {
    pub formula: Formula,
    pub left: Vec<String>,
    pub right: Vec<String>,
}

impl SplitFormula {
    pub fn new(formula: Formula, left: &[&str], right: &[&str]) -> Result<Self> {
        let left: Vec<String> = left.iter().map(|s| s.to_string()).collect();
        let right: Vec<String> = right.iter().map(|s| s.to_string()).collect();
        if left.is_empty() || right.is_empty() || left.iter().any(|v| right.contains(v)) {
            return Err(StabilityError::InvalidParams("variable blocks must be nonempty and disjoint".into()));
        }
        if let Some(v) = formula.free_vars().into_iter().find(|v| !left.contains(v) && !right.contains(v)) {
            return Err(FormulaError::UnboundVariable(v).into());
        }
        Ok(SplitFormula { formula, left, right })
    }

    fn vars(&self) -> Vec<String> {
        self.left.iter().chain(&self.right).cloned().collect()
    }

    pub fn eval(&self, m: &ExpansionStructure, left: &[usize], right: &[usize]) -> Result<Q01> {
        let points: Vec<usize> = left.iter().chain(right).copied().collect();
        Ok(eval(&self.formula, m, &assignment(&self.vars(), &points))?)
    }

    /// The same split of `min(1, (φ ∸ r1) / (r2 - r1))`.
    pub fn normalized(&self, r1: Q01, r2: Q01) -> Result<SplitFormula> {
        Ok(SplitFormula { formula: normalize(&self.formula, r1, r2)?, left: self.left.clone(), right: self.right.clone() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchParams {
    pub n: usize,
    pub epsilon: Q01,
    pub r1: Q01,
    pub r2: Q01,
    /// Maximum number of search nodes.
    pub budget: u64,
}

impl SearchParams {
    fn check(&self) -> Result<()> {
        if self.n == 0 {
            return Err(StabilityError::InvalidParams("n must be positive".into()));
        }
        if self.r1 >= self.r2 {
            return Err(StabilityError::InvalidParams(format!("r1 = {} is not below r2 = {}", self.r1, self.r2)));
        }
        Ok(())
    }

    fn low_bound(&self) -> Q01 {
        self.r1.tadd(self.epsilon)
    }

    fn high_bound(&self) -> Q01 {
        self.r2.tsub(self.epsilon)
    }
}

/// Candidate tuples for the two variable blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TuplePools {
    pub left: Vec<Vec<usize>>,
    pub right: Vec<Vec<usize>>,
}

impl TuplePools {
    /// All tuples of the given lengths over `points` base points.
    pub fn all(points: usize, left_len: usize, right_len: usize) -> Self {
        TuplePools { left: all_tuples(points, left_len), right: all_tuples(points, right_len) }
    }
}

/// All `len`-tuples over `0..points` in lexicographic order.
pub fn all_tuples(points: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out.into_iter().flat_map(|t| (0..points).map(move |x| [t.clone(), vec![x]].concat())).collect();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessKind {
    Order,
    Anchored,
    GroupOrder,
    Ip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

/// One checked inequality `value relation bound`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub value: Q01,
    pub relation: Relation,
    pub bound: Q01,
}

impl Check {
    fn new(label: String, value: Q01, relation: Relation, bound: Q01) -> Self {
        Check { label, value, relation, bound }
    }

    pub fn holds(&self) -> bool {
        match self.relation {
            Relation::Le => self.value <= self.bound,
            Relation::Ge => self.value >= self.bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Witness {
    /// `left[i]` and `right[j]` are the tuples `s̄_i`, `s̄'_j`.
    Tuples { left: Vec<Vec<usize>>, right: Vec<Vec<usize>> },
    /// `cells[i][c]` is a group element index; columns are `j` for order
    /// witnesses and subset bitmasks `I` for independence witnesses.
    Elements { cells: Vec<Vec<usize>> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub kind: WitnessKind,
    pub params: SearchParams,
    /// Index of the witnessing structure in the family or carrier.
    pub structure: usize,
    pub witness: Witness,
    /// The realized value pattern, `values[i][c]`.
    pub values: Vec<Vec<Q01>>,
    pub transcript: Vec<Check>,
    pub nodes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchOutcome {
    Found(WitnessReport),
    /// Every candidate within the pools was ruled out.
    NotFound { nodes: u64 },
}

impl SearchOutcome {
    pub fn found(&self) -> Option<&WitnessReport> {
        match self {
            SearchOutcome::Found(r) => Some(r),
            SearchOutcome::NotFound { .. } => None,
        }
    }
}

struct Budget {
    limit: u64,
    used: u64,
}

impl Budget {
    fn tick(&mut self) -> Result<()> {
        self.used += 1;
        if self.used > self.limit {
            Err(StabilityError::BudgetExhausted(self.limit))
        } else {
            Ok(())
        }
    }
}

/// Pairs `(a_k, b_k)` for `k < n` with `low[a_i][b_j]` for `i < j` and
/// `high[a_i][b_j]` for `j <= i`; the lexicographically least sequence.
fn pair_sequence_search(low: &[Vec<bool>], high: &[Vec<bool>], n: usize, budget: &mut Budget) -> Result<Option<Vec<(usize, usize)>>> {
    fn go(low: &[Vec<bool>], high: &[Vec<bool>], n: usize, chosen: &mut Vec<(usize, usize)>, budget: &mut Budget) -> Result<bool> {
        if chosen.len() == n {
            return Ok(true);
        }
        let cols = low.first().map_or(0, Vec::len);
        for a in 0..low.len() {
            if !chosen.iter().all(|&(_, b)| high[a][b]) {
                continue;
            }
            for b in 0..cols {
                budget.tick()?;
                if !high[a][b] || !chosen.iter().all(|&(ai, _)| low[ai][b]) {
                    continue;
                }
                chosen.push((a, b));
                if go(low, high, n, chosen, budget)? {
                    return Ok(true);
                }
                chosen.pop();
            }
        }
        Ok(false)
    }
    let mut chosen = vec![];
    Ok(if go(low, high, n, &mut chosen, budget)? { Some(chosen) } else { None })
}

fn tuple_search(
    family: &ExpansionFamily,
    phi: &SplitFormula,
    anchor: Option<(&[usize], &[usize])>,
    pools: &TuplePools,
    params: &SearchParams,
) -> Result<SearchOutcome> {
    params.check()?;
    if pools.left.is_empty() || pools.right.is_empty() {
        return Err(StabilityError::InvalidParams("empty candidate pool".into()));
    }
    if pools.left.iter().any(|t| t.len() != phi.left.len()) || pools.right.iter().any(|t| t.len() != phi.right.len()) {
        return Err(StabilityError::InvalidParams("pool tuple length differs from its variable block".into()));
    }
    let kind = if anchor.is_some() { WitnessKind::Anchored } else { WitnessKind::Order };
    let mut budget = Budget { limit: params.budget, used: 0 };
    for (mi, m) in family.structures.iter().enumerate() {
        let anchor_type = anchor.map(|(l, r)| induced_structure(m, &[l, r].concat()));
        let (mut low, mut high) = (vec![], vec![]);
        for a in &pools.left {
            let (mut lr, mut hr) = (vec![], vec![]);
            for b in &pools.right {
                let v = phi.eval(m, a, b)?;
                let typed = match &anchor_type {
                    Some(t) => qf_type_distance(&induced_structure(m, &[a.as_slice(), b].concat()), t)? <= params.epsilon,
                    None => true,
                };
                lr.push(typed && v <= params.low_bound());
                hr.push(typed && v >= params.high_bound());
            }
            low.push(lr);
            high.push(hr);
        }
        if let Some(seq) = pair_sequence_search(&low, &high, params.n, &mut budget)? {
            let left = seq.iter().map(|&(a, _)| pools.left[a].clone()).collect();
            let right = seq.iter().map(|&(_, b)| pools.right[b].clone()).collect();
            let mut report = tuple_report(family, phi, anchor, kind, params, mi, Witness::Tuples { left, right })?;
            report.nodes = budget.used;
            return Ok(SearchOutcome::Found(report));
        }
    }
    Ok(SearchOutcome::NotFound { nodes: budget.used })
}

/// Builds the value pattern and full transcript of a tuple witness.
fn tuple_report(
    family: &ExpansionFamily,
    phi: &SplitFormula,
    anchor: Option<(&[usize], &[usize])>,
    kind: WitnessKind,
    params: &SearchParams,
    structure: usize,
    witness: Witness,
) -> Result<WitnessReport> {
    let Witness::Tuples { left, right } = &witness else {
        return Err(StabilityError::MalformedWitness("expected tuples".into()));
    };
    let n = params.n;
    if left.len() != n || right.len() != n {
        return Err(StabilityError::MalformedWitness(format!("expected {n} tuples per block")));
    }
    let m = family
        .structures
        .get(structure)
        .ok_or_else(|| StabilityError::MalformedWitness(format!("no structure {structure}")))?;
    for t in left.iter().chain(right) {
        m.base().check_indices(t)?;
    }
    let mut values = vec![];
    let mut transcript = vec![];
    for i in 0..n {
        let mut row = vec![];
        for j in 0..n {
            let v = phi.eval(m, &left[i], &right[j])?;
            let label = format!("phi(s{}, s'{})", i + 1, j + 1);
            transcript.push(if i < j {
                Check::new(label, v, Relation::Le, params.low_bound())
            } else {
                Check::new(label, v, Relation::Ge, params.high_bound())
            });
            row.push(v);
        }
        values.push(row);
    }
    if let Some((l, r)) = anchor {
        let t = induced_structure(m, &[l, r].concat());
        for i in 0..n {
            for j in 0..n {
                let d = qf_type_distance(&induced_structure(m, &[left[i].as_slice(), &right[j]].concat()), &t)?;
                transcript.push(Check::new(format!("tp(s{} s'{})", i + 1, j + 1), d, Relation::Le, params.epsilon));
            }
        }
    }
    Ok(WitnessReport { kind, params: *params, structure, witness, values, transcript, nodes: 0 })
}

/// Standard order pattern for `φ` over `Y`: tuples with `φ(s̄_i, s̄'_j) <= r1 + ε`
/// for `i < j` and `>= r2 - ε` for `j <= i`.
pub fn order_search(family: &ExpansionFamily, phi: &SplitFormula, pools: &TuplePools, params: &SearchParams) -> Result<SearchOutcome> {
    tuple_search(family, phi, None, pools, params)
}

/// The order pattern with every pair `(s̄_i, s̄'_j)` additionally within `ε`
/// of the anchor in quantifier-free type distance.
pub fn anchored_order_search(
    family: &ExpansionFamily,
    phi: &SplitFormula,
    anchor: (&[usize], &[usize]),
    pools: &TuplePools,
    params: &SearchParams,
) -> Result<SearchOutcome> {
    if anchor.0.len() != phi.left.len() || anchor.1.len() != phi.right.len() {
        return Err(StabilityError::InvalidParams("anchor lengths differ from the variable blocks".into()));
    }
    tuple_search(family, phi, Some(anchor), pools, params)
}

fn compare_transcripts(claimed: &WitnessReport, fresh: &WitnessReport) -> Result<usize> {
    if fresh.values != claimed.values {
        return Err(StabilityError::MalformedWitness("value pattern differs from recomputation".into()));
    }
    if fresh.transcript != claimed.transcript {
        return Err(StabilityError::MalformedWitness("transcript differs from recomputation".into()));
    }
    if let Some(c) = fresh.transcript.iter().find(|c| !c.holds()) {
        return Err(StabilityError::MalformedWitness(format!("{} = {} fails against {}", c.label, c.value, c.bound)));
    }
    Ok(fresh.transcript.len())
}

/// Recomputes every value of an order or anchored witness from the family and
/// returns the number of re-checked inequalities.
pub fn verify_tuple_witness(
    family: &ExpansionFamily,
    phi: &SplitFormula,
    anchor: Option<(&[usize], &[usize])>,
    report: &WitnessReport,
) -> Result<usize> {
    let expected = if anchor.is_some() { WitnessKind::Anchored } else { WitnessKind::Order };
    if report.kind != expected {
        return Err(StabilityError::MalformedWitness(format!("kind {:?}, expected {expected:?}", report.kind)));
    }
    report.params.check()?;
    let fresh = tuple_report(family, phi, anchor, report.kind, &report.params, report.structure, report.witness.clone())?;
    compare_transcripts(report, &fresh)
}

/// A group acting on a carrier of structures, a grey set on the carrier and
/// the two grey subgroups of the pattern conditions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreyInstance {
    pub group: IsometryGroup,
    pub action: Action,
    pub phi: GreySubset,
    pub h: GreySubgroup,
    pub h_prime: GreySubgroup,
}

impl GreyInstance {
    /// `(gφ)(x) = φ(g⁻¹·x)`.
    pub fn translate(&self, g: usize, x: usize) -> Q01 {
        self.phi.values[self.action.apply(self.group.inv(g), x)]
    }

    /// `H(g⁻¹h)`.
    fn h_between(&self, sub: &GreySubgroup, g: usize, h: usize) -> Q01 {
        sub.at(self.group.mul(self.group.inv(g), h))
    }

    fn certify_invariance(&self) -> Result<usize> {
        let both = max_subgroup(&self.group, &[&self.h, &self.h_prime])?;
        match invariance_check(&self.phi, &both, &self.action)? {
            Ok(n) => Ok(n),
            Err(v) => Err(StabilityError::InvarianceNotCertified(v)),
        }
    }
}

fn column_count(kind: WitnessKind, n: usize) -> usize {
    match kind {
        WitnessKind::Ip => 1 << n,
        _ => n,
    }
}

/// Whether cell `(i, c)` must be low: `i < j` for order, `i ∈ I` for IP.
fn wants_low(kind: WitnessKind, i: usize, c: usize) -> bool {
    match kind {
        WitnessKind::Ip => c >> i & 1 == 1,
        _ => i < c,
    }
}

fn column_name(kind: WitnessKind, c: usize) -> String {
    match kind {
        WitnessKind::Ip => {
            let members: Vec<String> = (0..usize::BITS as usize).filter(|i| c >> i & 1 == 1).map(|i| (i + 1).to_string()).collect();
            format!("{{{}}}", members.join(","))
        }
        _ => (c + 1).to_string(),
    }
}

fn group_report(inst: &GreyInstance, kind: WitnessKind, params: &SearchParams, structure: usize, cells: Vec<Vec<usize>>) -> Result<WitnessReport> {
    let n = params.n;
    let cols = column_count(kind, n);
    if cells.len() != n || cells.iter().any(|r| r.len() != cols) {
        return Err(StabilityError::MalformedWitness(format!("expected a {n} x {cols} grid of elements")));
    }
    if structure >= inst.action.carrier_len() {
        return Err(StabilityError::MalformedWitness(format!("no carrier point {structure}")));
    }
    if let Some(&g) = cells.iter().flatten().find(|&&g| g >= inst.group.len()) {
        return Err(StabilityError::MalformedWitness(format!("no group element {g}")));
    }
    let eps = params.epsilon;
    let mut values = vec![];
    let mut transcript = vec![];
    for i in 0..n {
        let mut row = vec![];
        for c in 0..cols {
            let v = inst.translate(cells[i][c], structure);
            let label = format!("g[{},{}]phi", i + 1, column_name(kind, c));
            transcript.push(if wants_low(kind, i, c) {
                Check::new(label, v, Relation::Le, eps)
            } else {
                Check::new(label, v, Relation::Ge, eps.complement())
            });
            row.push(v);
        }
        values.push(row);
    }
    for i in 0..n {
        for c in 0..cols {
            for c2 in 0..cols {
                let v = inst.h_between(&inst.h, cells[i][c], cells[i][c2]);
                let label = format!("H(g[{0},{1}]^-1 g[{0},{2}])", i + 1, column_name(kind, c), column_name(kind, c2));
                transcript.push(Check::new(label, v, Relation::Le, eps));
            }
            for i2 in 0..n {
                let v = inst.h_between(&inst.h_prime, cells[i][c], cells[i2][c]);
                let label = format!("H'(g[{},{2}]^-1 g[{},{2}])", i + 1, i2 + 1, column_name(kind, c));
                transcript.push(Check::new(label, v, Relation::Le, eps));
            }
        }
    }
    Ok(WitnessReport { kind, params: *params, structure, witness: Witness::Elements { cells }, values, transcript, nodes: 0 })
}

/// Fills the grid cell by cell (row-major), trying pool elements in order.
fn grid_search(
    inst: &GreyInstance,
    kind: WitnessKind,
    n: usize,
    x: usize,
    pool: &[usize],
    eps: Q01,
    budget: &mut Budget,
) -> Result<Option<Vec<Vec<usize>>>> {
    let cols = column_count(kind, n);
    let p = pool.len();
    let value: Vec<Q01> = pool.iter().map(|&g| inst.translate(g, x)).collect();
    let row_ok: Vec<Vec<bool>> = (0..p).map(|a| (0..p).map(|b| inst.h_between(&inst.h, pool[a], pool[b]) <= eps).collect()).collect();
    let col_ok: Vec<Vec<bool>> =
        (0..p).map(|a| (0..p).map(|b| inst.h_between(&inst.h_prime, pool[a], pool[b]) <= eps).collect()).collect();
    let low: Vec<usize> = (0..p).filter(|&a| value[a] <= eps).collect();
    let high: Vec<usize> = (0..p).filter(|&a| value[a] >= eps.complement()).collect();
    let mut grid = vec![vec![usize::MAX; cols]; n];
    #[allow(clippy::too_many_arguments)]
    fn go(
        k: usize,
        n: usize,
        cols: usize,
        kind: WitnessKind,
        grid: &mut Vec<Vec<usize>>,
        cand: (&[usize], &[usize]),
        ok: (&[Vec<bool>], &[Vec<bool>]),
        budget: &mut Budget,
    ) -> Result<bool> {
        if k == n * cols {
            return Ok(true);
        }
        let (i, c) = (k / cols, k % cols);
        let list = if wants_low(kind, i, c) { cand.0 } else { cand.1 };
        for &a in list {
            budget.tick()?;
            if !(0..c).all(|c2| ok.0[a][grid[i][c2]]) || !(0..i).all(|i2| ok.1[a][grid[i2][c]]) {
                continue;
            }
            grid[i][c] = a;
            if go(k + 1, n, cols, kind, grid, cand, ok, budget)? {
                return Ok(true);
            }
        }
        grid[i][c] = usize::MAX;
        Ok(false)
    }
    if go(0, n, cols, kind, &mut grid, (&low, &high), (&row_ok, &col_ok), budget)? {
        Ok(Some(grid.into_iter().map(|r| r.into_iter().map(|a| pool[a]).collect()).collect()))
    } else {
        Ok(None)
    }
}

fn element_search(inst: &GreyInstance, kind: WitnessKind, y: &[usize], pool: &[usize], params: &SearchParams) -> Result<SearchOutcome> {
    if params.n == 0 {
        return Err(StabilityError::InvalidParams("n must be positive".into()));
    }
    if pool.is_empty() || y.is_empty() {
        return Err(StabilityError::InvalidParams("empty pool or carrier subset".into()));
    }
    if kind == WitnessKind::Ip && params.n >= usize::BITS as usize {
        return Err(StabilityError::InvalidParams("n too large for subset columns".into()));
    }
    if let Some(&g) = pool.iter().find(|&&g| g >= inst.group.len()) {
        return Err(StabilityError::InvalidParams(format!("pool element {g} outside the group")));
    }
    if let Some(&x) = y.iter().find(|&&x| x >= inst.action.carrier_len()) {
        return Err(StabilityError::InvalidParams(format!("carrier point {x} out of range")));
    }
    inst.certify_invariance()?;
    let mut budget = Budget { limit: params.budget, used: 0 };
    for &x in y {
        if let Some(cells) = grid_search(inst, kind, params.n, x, pool, params.epsilon, &mut budget)? {
            let mut report = group_report(inst, kind, params, x, cells)?;
            report.nodes = budget.used;
            return Ok(SearchOutcome::Found(report));
        }
    }
    Ok(SearchOutcome::NotFound { nodes: budget.used })
}

/// Elements `g_{i,j}` of the pool with `H(g_{i,j}⁻¹ g_{i,l}) <= ε`,
/// `H'(g_{i,j}⁻¹ g_{l,j}) <= ε` and a point `x ∈ Y` where `(g_{i,j}φ)(x) <= ε`
/// for `i < j` and `>= 1 - ε` for `j <= i`. Only `n`, `ε` and the budget
/// of `params` are used.
pub fn group_order_search(inst: &GreyInstance, y: &[usize], pool: &[usize], params: &SearchParams) -> Result<SearchOutcome> {
    element_search(inst, WitnessKind::GroupOrder, y, pool, params)
}

/// Elements `g_{i,I}` for `I ⊆ {1..n}` with the same compatibility
/// conditions along rows (`H`) and columns (`H'`), low exactly when `i ∈ I`.
pub fn ip_search(inst: &GreyInstance, y: &[usize], pool: &[usize], params: &SearchParams) -> Result<SearchOutcome> {
    element_search(inst, WitnessKind::Ip, y, pool, params)
}

/// Recomputes every value and grey-subgroup bound of a group-order or IP
/// witness; returns the number of re-checked inequalities.
pub fn verify_group_witness(inst: &GreyInstance, report: &WitnessReport) -> Result<usize> {
    let Witness::Elements { cells } = &report.witness else {
        return Err(StabilityError::MalformedWitness("expected group elements".into()));
    };
    if !matches!(report.kind, WitnessKind::GroupOrder | WitnessKind::Ip) {
        return Err(StabilityError::MalformedWitness(format!("kind {:?} is not group-level", report.kind)));
    }
    inst.certify_invariance()?;
    let fresh = group_report(inst, report.kind, &report.params, report.structure, cells.clone())?;
    compare_transcripts(report, &fresh)
}

fn truncated(report: &WitnessReport, n: usize, epsilon: Q01) -> Result<(Witness, SearchParams)> {
    if n == 0 || n > report.params.n || epsilon < report.params.epsilon {
        return Err(StabilityError::InvalidParams("truncation needs 0 < n' <= n and ε' >= ε".into()));
    }
    let cols = column_count(report.kind, n);
    let witness = match &report.witness {
        Witness::Tuples { left, right } => Witness::Tuples { left: left[..n].to_vec(), right: right[..n].to_vec() },
        Witness::Elements { cells } => Witness::Elements { cells: cells[..n].iter().map(|r| r[..cols].to_vec()).collect() },
    };
    Ok((witness, SearchParams { n, epsilon, ..report.params }))
}

/// The first `n` pairs of a tuple witness, at a relaxed `ε`.
pub fn truncate_tuple_witness(
    family: &ExpansionFamily,
    phi: &SplitFormula,
    anchor: Option<(&[usize], &[usize])>,
    report: &WitnessReport,
    n: usize,
    epsilon: Q01,
) -> Result<WitnessReport> {
    let (witness, params) = truncated(report, n, epsilon)?;
    tuple_report(family, phi, anchor, report.kind, &params, report.structure, witness)
}

/// The first `n` rows (and the columns that only involve them) of a
/// group-level witness, at a relaxed `ε`.
pub fn truncate_group_witness(inst: &GreyInstance, report: &WitnessReport, n: usize, epsilon: Q01) -> Result<WitnessReport> {
    let (witness, params) = truncated(report, n, epsilon)?;
    let Witness::Elements { cells } = witness else {
        return Err(StabilityError::MalformedWitness("expected group elements".into()));
    };
    group_report(inst, report.kind, &params, report.structure, cells)
}

/// Selects `g_{i,I_j}` with `I_j = {1, …, j-1}`, so that `i ∈ I_j` exactly
/// when `i < j`, turning an independence witness into a group-order witness
/// with the same `n`, `ε` and grey set.
pub fn ip_to_order(inst: &GreyInstance, ip: &WitnessReport) -> Result<WitnessReport> {
    let Witness::Elements { cells } = &ip.witness else {
        return Err(StabilityError::MalformedWitness("expected group elements".into()));
    };
    let n = ip.params.n;
    if ip.kind != WitnessKind::Ip || cells.len() != n || cells.iter().any(|r| r.len() != 1 << n) {
        return Err(StabilityError::MalformedWitness("not an independence witness".into()));
    }
    let order: Vec<Vec<usize>> = (0..n).map(|i| (0..n).map(|j| cells[i][(1 << j) - 1]).collect()).collect();
    let mut report = group_report(inst, WitnessKind::GroupOrder, &ip.params, ip.structure, order)?;
    report.nodes = 0;
    Ok(report)
}

/// Structures, group action and normalized formula tied together: the grey
/// set is `x ↦ φ^x(s̄, s̄')` at the anchor, `H` and `H'` are the stabilizers
/// of the anchor blocks at the slope of `φ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormulaGreySetup {
    pub space: FiniteMetricSpace,
    pub structures: Vec<ExpansionStructure>,
    pub phi: SplitFormula,
    pub anchor: (Vec<usize>, Vec<usize>),
    pub slope: Rat,
    pub instance: GreyInstance,
}

impl FormulaGreySetup {
    /// `group` must consist of isometries of the platform (the metric and,
    /// when present, the predicate) of `seeds`.
    pub fn new(group: IsometryGroup, seeds: &[ExpansionStructure], phi: SplitFormula, anchor: (Vec<usize>, Vec<usize>)) -> Result<Self> {
        let first = seeds.first().ok_or_else(|| StabilityError::FamilyMismatch("no seed structures".into()))?;
        let space = first.base().clone();
        if anchor.0.len() != phi.left.len() || anchor.1.len() != phi.right.len() {
            return Err(StabilityError::InvalidParams("anchor lengths differ from the variable blocks".into()));
        }
        let (structures, action) = structure_orbits(&group, seeds)?;
        let slope = inverse_modulus(&phi.formula, &first.signature())?;
        let params: Vec<usize> = [anchor.0.as_slice(), &anchor.1].concat();
        let set = formula_subset(&phi.formula, &phi.vars(), &params, &structures)?;
        let h = grey_stabilizer(&group, &space, slope, &anchor.0)?;
        let h_prime = grey_stabilizer(&group, &space, slope, &anchor.1)?;
        let instance = GreyInstance { group, action, phi: set, h, h_prime };
        Ok(FormulaGreySetup { space, structures, phi, anchor, slope, instance })
    }

    pub fn family(&self) -> Result<ExpansionFamily> {
        ExpansionFamily::new(self.structures.clone(), "orbit carrier")
    }

    fn anchor_tuple(&self) -> Vec<usize> {
        [self.anchor.0.as_slice(), &self.anchor.1].concat()
    }
}

/// Outcome of converting a witness between the tuple and group levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conversion {
    pub epsilon_in: Q01,
    pub epsilon_out: Q01,
    /// Largest distance between a chosen element's image of the anchor and
    /// the tuple pair it stands for.
    pub displacement: Q01,
    pub report: WitnessReport,
    pub checked: usize,
}

/// From an anchored witness for `φ'` on `family` (whose structures must lie in
/// the setup's carrier, and whose formula normalizes to the setup's) to a
/// group-order witness for the normalized grey set. Each `g_{i,j}` is the
/// pool element moving the anchor closest to `(s̄_i, s̄'_j)`, at distance
/// `δ`; with `k` the setup slope the output uses
/// `ε' = max(ε/(r2 - r1) + kδ, 2kδ)`.
pub fn anchored_to_group(
    setup: &FormulaGreySetup,
    family: &ExpansionFamily,
    original: &SplitFormula,
    report: &WitnessReport,
    pool: &[usize],
) -> Result<Conversion> {
    let p = report.params;
    if report.kind != WitnessKind::Anchored {
        return Err(StabilityError::MalformedWitness("expected an anchored witness".into()));
    }
    if original.normalized(p.r1, p.r2)? != setup.phi {
        return Err(StabilityError::MalformedWitness("setup formula is not the normalized witness formula".into()));
    }
    let Witness::Tuples { left, right } = &report.witness else {
        return Err(StabilityError::MalformedWitness("expected tuples".into()));
    };
    let m = family
        .structures
        .get(report.structure)
        .ok_or_else(|| StabilityError::MalformedWitness("structure out of range".into()))?;
    let x = setup
        .structures
        .iter()
        .position(|s| s == m)
        .ok_or_else(|| StabilityError::MalformedWitness("witness structure is not in the carrier".into()))?;
    if pool.is_empty() {
        return Err(StabilityError::InvalidParams("empty pool".into()));
    }
    let anchor = setup.anchor_tuple();
    let group = &setup.instance.group;
    let mut displacement = Q01::ZERO;
    let mut cells = vec![];
    for li in left {
        let mut row = vec![];
        for rj in right {
            let target = [li.as_slice(), rj].concat();
            let mut best: Option<(Q01, usize)> = None;
            for &g in pool {
                let d = tuple_distance(&setup.space, &group.element(g).apply_tuple(&anchor), &target)?;
                if best.map_or(true, |(b, _)| d < b) {
                    best = Some((d, g));
                }
            }
            let (d, g) = best.expect("pool is nonempty");
            displacement = displacement.max(d);
            row.push(g);
        }
        cells.push(row);
    }
    let k = setup.slope;
    let kd = k * displacement.value();
    let cone = p.epsilon.value() / (p.r2.value() - p.r1.value()) + kd;
    let epsilon_out = Q01::clamp(cone.max(kd * Rat::from_integer(2)));
    let params = SearchParams { epsilon: epsilon_out, ..p };
    let out = group_report(&setup.instance, WitnessKind::GroupOrder, &params, x, cells)?;
    let checked = verify_group_witness(&setup.instance, &out)?;
    Ok(Conversion { epsilon_in: p.epsilon, epsilon_out, displacement, report: out, checked })
}

/// From a group-order witness on the setup to an anchored witness for the
/// setup's (normalized) formula with `r1 = 1/4`, `r2 = 3/4`, `s̄_i = g_{i,i}s̄`,
/// `s̄'_j = g_{j,j}s̄'` and `ε' = max(2ε, ε/k)` for the setup slope `k`
/// (`2ε` once `k >= 1/2`).
pub fn group_to_anchored(setup: &FormulaGreySetup, report: &WitnessReport) -> Result<Conversion> {
    if report.kind != WitnessKind::GroupOrder {
        return Err(StabilityError::MalformedWitness("expected a group-order witness".into()));
    }
    verify_group_witness(&setup.instance, report)?;
    let Witness::Elements { cells } = &report.witness else {
        return Err(StabilityError::MalformedWitness("expected group elements".into()));
    };
    let group = &setup.instance.group;
    let n = report.params.n;
    let left: Vec<Vec<usize>> = (0..n).map(|i| group.element(cells[i][i]).apply_tuple(&setup.anchor.0)).collect();
    let right: Vec<Vec<usize>> = (0..n).map(|j| group.element(cells[j][j]).apply_tuple(&setup.anchor.1)).collect();
    let eps = report.params.epsilon;
    let doubled = eps.value() * Rat::from_integer(2);
    let scaled = if setup.slope.is_zero() { Rat::one() } else { eps.value() / setup.slope };
    let epsilon_out = Q01::clamp(doubled.max(scaled));
    let params = SearchParams { n, epsilon: epsilon_out, r1: Q01::frac(1, 4), r2: Q01::frac(3, 4), budget: report.params.budget };
    let family = setup.family()?;
    let anchor = (setup.anchor.0.as_slice(), setup.anchor.1.as_slice());
    let out = tuple_report(&family, &setup.phi, Some(anchor), WitnessKind::Anchored, &params, report.structure, Witness::Tuples { left, right })?;
    let checked = verify_tuple_witness(&family, &setup.phi, Some(anchor), &out)?;
    let displacement = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            let moved = group.element(cells[i][j]).apply_tuple(&setup.anchor_tuple());
            let target = match &out.witness {
                Witness::Tuples { left, right } => [left[i].as_slice(), &right[j]].concat(),
                Witness::Elements { .. } => unreachable!(),
            };
            tuple_distance(&setup.space, &moved, &target)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?
        .into_iter()
        .max()
        .unwrap_or(Q01::ZERO);
    Ok(Conversion { epsilon_in: eps, epsilon_out, displacement, report: out, checked })
}

/// Tail-window estimates of the two iterated limits of a square array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IteratedLimits {
    /// `lim_i lim_j v[i][j]`
    #[serde(with = "crate::rational::rat_string")]
    pub rows_first: Rat,
    /// `lim_j lim_i v[i][j]`
    #[serde(with = "crate::rational::rat_string")]
    pub columns_first: Rat,
    pub window: usize,
}

impl IteratedLimits {
    pub fn agree_within(&self, tolerance: Rat) -> bool {
        (self.rows_first - self.columns_first).abs() <= tolerance
    }
}

fn settled(values: impl Iterator<Item = Rat>, tolerance: Rat) -> std::result::Result<Rat, Rat> {
    let v: Vec<Rat> = values.collect();
    let lo = v.iter().min().copied().unwrap_or_else(Rat::zero);
    let hi = v.iter().max().copied().unwrap_or_else(Rat::zero);
    if hi - lo > tolerance {
        Err(hi - lo)
    } else {
        Ok(v.iter().sum::<Rat>() / Rat::from_integer(v.len() as i64))
    }
}

/// For a sequence of length `L` and window `w`: the inner limit at an outer
/// index is the average over the last `w` inner indices, the outer limit
/// the average of inner limits over the `w` indices before those. Every
/// window must have spread at most `tolerance`.
pub fn iterated_limits(values: &[Vec<Rat>], tolerance: Rat, window: usize, name: &str) -> Result<IteratedLimits> {
    let len = values.len();
    if window == 0 || len < 2 * window || values.iter().any(|r| r.len() != len) {
        return Err(StabilityError::InvalidParams(format!("need a square array of side >= {} (got {len})", 2 * window)));
    }
    let inner = len - window..len;
    let outer = len - 2 * window..len - window;
    let fail = |index, spread| StabilityError::InconclusiveTails { formula: name.into(), index, spread, window };
    let mut by_rows = vec![];
    let mut by_cols = vec![];
    for k in outer.clone() {
        by_rows.push(settled(inner.clone().map(|j| values[k][j]), tolerance).map_err(|s| fail(k, s))?);
        by_cols.push(settled(inner.clone().map(|i| values[i][k]), tolerance).map_err(|s| fail(k, s))?);
    }
    let rows_first = settled(by_rows.into_iter(), tolerance).map_err(|s| fail(outer.start, s))?;
    let columns_first = settled(by_cols.into_iter(), tolerance).map_err(|s| fail(outer.start, s))?;
    Ok(IteratedLimits { rows_first, columns_first, window })
}

fn value_array(m: &ExpansionStructure, seq: &[(Vec<usize>, Vec<usize>)], phi: &SplitFormula) -> Result<Vec<Vec<Rat>>> {
    seq.iter()
        .map(|(a, _)| seq.iter().map(|(_, b)| Ok(phi.eval(m, a, b)?.value())).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormulaLimits {
    pub formula: String,
    pub limits: IteratedLimits,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoubleLimitReport {
    pub tolerance: Q01,
    pub window: usize,
    pub phi: FormulaLimits,
    pub thetas: Vec<FormulaLimits>,
    pub thetas_agree: bool,
    pub phi_differs: bool,
    /// Θ-limits agree and φ-limits differ.
    pub instability_evidence: bool,
}

/// Iterated limits of `φ` and each `θ ∈ Θ` along `(s̄_i, s̄'_j)` for the
/// tuple pairs of `seq`.
pub fn double_limit_check(
    m: &ExpansionStructure,
    seq: &[(Vec<usize>, Vec<usize>)],
    phi: &SplitFormula,
    thetas: &[SplitFormula],
    tolerance: Q01,
    window: usize,
) -> Result<DoubleLimitReport> {
    let tol = tolerance.value();
    let limits = |f: &SplitFormula| -> Result<FormulaLimits> {
        let name = f.formula.to_string();
        Ok(FormulaLimits { limits: iterated_limits(&value_array(m, seq, f)?, tol, window, &name)?, formula: name })
    };
    let phi_limits = limits(phi)?;
    let thetas = thetas.iter().map(limits).collect::<Result<Vec<_>>>()?;
    let thetas_agree = thetas.iter().all(|t| t.limits.agree_within(tol));
    let phi_differs = !phi_limits.limits.agree_within(tol);
    Ok(DoubleLimitReport {
        tolerance,
        window,
        phi: phi_limits,
        thetas,
        thetas_agree,
        phi_differs,
        instability_evidence: thetas_agree && phi_differs,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StableEquivReport {
    pub tolerance: Q01,
    /// Limits of `φ - θ`, valued in `[-1, 1]`.
    pub difference: IteratedLimits,
    pub theta: IteratedLimits,
    /// Limits of `φ` as the sums of the two above.
    pub phi: IteratedLimits,
    /// Direct estimate of `φ`'s limits, when its tails settle.
    pub phi_direct: Option<IteratedLimits>,
    /// The difference's iterated limits differ: evidence that `φ` and `θ`
    /// are not stably equivalent.
    pub instability_evidence: bool,
    /// If `θ`'s and the difference's limits agree within the tolerance,
    /// `φ`'s agree within twice the tolerance; and direct estimates, when
    /// present, equal the sums.
    pub transfer_holds: bool,
}

/// The double-limit test for `φ - θ` on one sequence, with the transfer of
/// agreement from `θ` and `φ - θ` to `φ`.
pub fn stable_equiv_check(
    m: &ExpansionStructure,
    seq: &[(Vec<usize>, Vec<usize>)],
    phi: &SplitFormula,
    theta: &SplitFormula,
    tolerance: Q01,
    window: usize,
) -> Result<StableEquivReport> {
    if phi.left != theta.left || phi.right != theta.right {
        return Err(StabilityError::InvalidParams("φ and θ must share variable blocks".into()));
    }
    let tol = tolerance.value();
    let pv = value_array(m, seq, phi)?;
    let tv = value_array(m, seq, theta)?;
    let dv: Vec<Vec<Rat>> = pv.iter().zip(&tv).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect();
    let name = format!("{} - {}", phi.formula, theta.formula);
    let difference = iterated_limits(&dv, tol, window, &name)?;
    let theta_l = iterated_limits(&tv, tol, window, &theta.formula.to_string())?;
    let phi_l = IteratedLimits {
        rows_first: difference.rows_first + theta_l.rows_first,
        columns_first: difference.columns_first + theta_l.columns_first,
        window,
    };
    let phi_direct = iterated_limits(&pv, tol, window, &phi.formula.to_string()).ok();
    let premise = theta_l.agree_within(tol) && difference.agree_within(tol);
    let transfer_holds = (!premise || phi_l.agree_within(tol * Rat::from_integer(2))) && phi_direct.as_ref().map_or(true, |d| *d == phi_l);
    Ok(StableEquivReport {
        tolerance,
        instability_evidence: !difference.agree_within(tol),
        difference,
        theta: theta_l,
        phi: phi_l,
        phi_direct,
        transfer_holds,
    })
}

/// An index subsequence whose pairwise values lie in one band.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RamseyCertificate {
    pub indices: Vec<usize>,
    pub band_low: Q01,
    pub band_high: Q01,
    /// `(a, b, v[a][b])` for every `a < b` in the subsequence.
    pub values: Vec<(usize, usize, Q01)>,
    /// Array length from which a subsequence of this length is guaranteed,
    /// when the values fall into at most two bands.
    pub guaranteed_from: Option<usize>,
}

/// Diagonal 2-colour Ramsey numbers `R(k, k)` for `k <= 4`, and the
/// binomial upper bound `C(2k-2, k-1)` beyond.
pub fn ramsey_bound(k: usize) -> usize {
    match k {
        0 | 1 => 1,
        2 => 2,
        3 => 6,
        4 => 18,
        _ => (0..k - 1).fold(1usize, |acc, i| acc * (2 * k - 2 - i) / (i + 1)),
    }
}

/// Lexicographically least `target`-subsequence of `0..values.len()` whose
/// values `v[a][b]`, `a < b`, have spread at most `tolerance`. Only entries
/// above the diagonal are read.
pub fn ramsey_extract(values: &[Vec<Q01>], tolerance: Q01, target: usize) -> Result<RamseyCertificate> {
    let len = values.len();
    if values.iter().any(|r| r.len() != len) {
        return Err(StabilityError::InvalidParams("array must be square".into()));
    }
    let mut distinct: Vec<Q01> = (0..len).flat_map(|a| (a + 1..len).map(move |b| (a, b))).map(|(a, b)| values[a][b]).collect();
    distinct.sort();
    distinct.dedup();
    let two_bands = distinct.len() <= 2 || tolerance >= Q01::frac(1, 2);
    let guaranteed_from = two_bands.then(|| ramsey_bound(target));
    fn go(values: &[Vec<Q01>], tol: Q01, target: usize, chosen: &mut Vec<usize>, band: Option<(Q01, Q01)>) -> Option<Option<(Q01, Q01)>> {
        if chosen.len() == target {
            return Some(band);
        }
        let start = chosen.last().map_or(0, |&c| c + 1);
        for x in start..values.len() {
            let mut b = band;
            let mut ok = true;
            for &c in chosen.iter() {
                let v = values[c][x];
                let (lo, hi) = b.map_or((v, v), |(lo, hi)| (lo.min(v), hi.max(v)));
                if hi.value() - lo.value() > tol.value() {
                    ok = false;
                    break;
                }
                b = Some((lo, hi));
            }
            if !ok {
                continue;
            }
            chosen.push(x);
            if let Some(r) = go(values, tol, target, chosen, b) {
                return Some(r);
            }
            chosen.pop();
        }
        None
    }
    let mut chosen = vec![];
    let band = go(values, tolerance, target, &mut chosen, None)
        .ok_or(StabilityError::TargetLengthInfeasible { target, length: len })?;
    let (band_low, band_high) = band.unwrap_or((Q01::ZERO, Q01::ZERO));
    let pairs = chosen
        .iter()
        .enumerate()
        .flat_map(|(k, &a)| chosen[k + 1..].iter().map(move |&b| (a, b)))
        .map(|(a, b)| (a, b, values[a][b]))
        .collect();
    Ok(RamseyCertificate { indices: chosen, band_low, band_high, values: pairs, guaranteed_from })
}

/// The longest band subsequence, trying lengths from the full array down.
pub fn ramsey_longest(values: &[Vec<Q01>], tolerance: Q01) -> Result<RamseyCertificate> {
    let len = values.len();
    for target in (1..=len).rev() {
        if let Ok(c) = ramsey_extract(values, tolerance, target) {
            return Ok(c);
        }
    }
    ramsey_extract(values, tolerance, 0)
}

/// Re-reads every listed value from the array and checks the band.
pub fn verify_ramsey(values: &[Vec<Q01>], tolerance: Q01, cert: &RamseyCertificate) -> bool {
    let idx = &cert.indices;
    let increasing = idx.windows(2).all(|w| w[0] < w[1]) && idx.iter().all(|&i| i < values.len());
    let pairs = idx.len() * idx.len().saturating_sub(1) / 2;
    increasing
        && cert.values.len() == pairs
        && cert.band_high.value() - cert.band_low.value() <= tolerance.value()
        && cert.values.iter().all(|&(a, b, v)| {
            idx.contains(&a) && idx.contains(&b) && a < b && values[a][b] == v && cert.band_low <= v && v <= cert.band_high
        })
}

/// Human-readable summary line for a search outcome.
pub fn outcome_line(outcome: &SearchOutcome) -> String {
    match outcome {
        SearchOutcome::Found(r) => format!(
            "found {:?} witness at n = {}, eps = {} ({} inequalities, {} nodes)",
            r.kind,
            r.params.n,
            r.params.epsilon,
            r.transcript.len(),
            r.nodes
        ),
        SearchOutcome::NotFound { nodes } => format!("not found within the given pools ({nodes} nodes)"),
    }
}
