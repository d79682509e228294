//! Constructed instances for the stability checks: the metric order pattern,
//! block patterns carrying a binary relation `Q`, and a predicate stage.

use num::One;

use crate::formula::{ExpansionStructure, Formula, FormulaError, RelationTable};
use crate::metric::{katetov_validate, one_point_extend, FiniteMetricSpace, MetricError};
use crate::rational::{Q01, Rat};
use crate::stage::{grow_stage, GrowthConfig, GrowthRule, Stage, StageError};

/// Symbol of the crafted binary relation.
pub const Q_SYMBOL: &str = "Q";

/// A space with two point blocks; `left[i]`, `right[j]` index the points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSpace {
    pub space: FiniteMetricSpace,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

/// Counts of the exhaustive checks a construction passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatternCertificate {
    pub triangles_checked: usize,
    pub lipschitz_pairs_checked: usize,
}

/// The 4-point order pattern: `d(s_i, t_j) = 1/4` for `i < j`, `3/4` for
/// `j <= i`, and `1/2` inside each block.
pub fn order_witness_space() -> BlockSpace {
    let q = |n| Q01::frac(n, 4);
    let labels = ["s1", "s2", "t1", "t2"].map(String::from).to_vec();
    let pairs = [
        ("s1", "s2", q(2)),
        ("t1", "t2", q(2)),
        ("s1", "t1", q(3)),
        ("s1", "t2", q(1)),
        ("s2", "t1", q(3)),
        ("s2", "t2", q(3)),
    ]
    .map(|(a, b, v)| (a.to_string(), b.to_string(), v));
    let space = FiniteMetricSpace::from_pairs(labels, &pairs).expect("order pattern is a metric");
    BlockSpace { space, left: vec![0, 1], right: vec![2, 3] }
}

/// Extends an order pattern by one pair `(s_{m+1}, t_{m+1})`, each added by a
/// validated Katětov extension.
pub fn extend_order_witness(p: &BlockSpace) -> Result<BlockSpace, MetricError> {
    let m = p.left.len();
    let mut f: Vec<Q01> = vec![Q01::ZERO; p.space.len()];
    for &s in &p.left {
        f[s] = Q01::frac(1, 4);
    }
    for &t in &p.right {
        f[t] = Q01::frac(1, 2);
    }
    let k = katetov_validate(&p.space, &f)?;
    let space = one_point_extend(&p.space, &k, &format!("t{}", m + 1))?;
    let t_new = space.len() - 1;
    let mut f: Vec<Q01> = vec![Q01::ZERO; space.len()];
    for &s in &p.left {
        f[s] = Q01::frac(1, 2);
    }
    for &t in p.right.iter().chain([&t_new]) {
        f[t] = Q01::frac(3, 4);
    }
    let k = katetov_validate(&space, &f)?;
    let space = one_point_extend(&space, &k, &format!("s{}", m + 1))?;
    let mut left = p.left.clone();
    left.push(space.len() - 1);
    let mut right = p.right.clone();
    right.push(t_new);
    Ok(BlockSpace { space, left, right })
}

/// The order pattern on `n >= 2` pairs.
pub fn order_pattern(n: usize) -> Result<BlockSpace, MetricError> {
    let mut p = order_witness_space();
    while p.left.len() < n {
        p = extend_order_witness(&p)?;
    }
    Ok(p)
}

/// A block space with distances `3/4` inside blocks and `1/2` across, and a
/// 1-Lipschitz `Q` taking `0` on the `(left[i], right[j])` with `low(i, j)`
/// and `3/4` on the other cross pairs, extended to all pairs by the largest
/// 1-Lipschitz extension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPattern {
    pub structure: ExpansionStructure,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub certificate: PatternCertificate,
}

pub fn block_pattern(left_labels: &[String], right_labels: &[String], low: impl Fn(usize, usize) -> bool) -> Result<BlockPattern, FormulaError> {
    let (a, b) = (left_labels.len(), right_labels.len());
    let n = a + b;
    let labels: Vec<String> = left_labels.iter().chain(right_labels).cloned().collect();
    let dist: Vec<Vec<Q01>> = (0..n)
        .map(|x| {
            (0..n)
                .map(|y| match (x == y, (x < a) == (y < a)) {
                    (true, _) => Q01::ZERO,
                    (false, true) => Q01::frac(3, 4),
                    (false, false) => Q01::frac(1, 2),
                })
                .collect()
        })
        .collect();
    let space = FiniteMetricSpace::from_matrix(labels, dist).map_err(|e| FormulaError::SchemeMismatch(e.to_string()))?;
    let prescribed: Vec<((usize, usize), Q01)> = (0..a)
        .flat_map(|i| (0..b).map(move |j| (i, j)))
        .map(|(i, j)| ((i, a + j), if low(i, j) { Q01::ZERO } else { Q01::frac(3, 4) }))
        .collect();
    let mut values = Vec::with_capacity(n * n);
    for x in 0..n {
        for y in 0..n {
            let v = prescribed
                .iter()
                .map(|&((u, w), q)| q.value() + space.d(x, u).max(space.d(y, w)).value())
                .min()
                .unwrap_or_else(Rat::one);
            values.push(Q01::clamp(v));
        }
    }
    let certificate = check_pattern(&space, &values)?;
    let mut structure = ExpansionStructure::new(space);
    structure.insert(Q_SYMBOL, RelationTable { arity: 2, slope: Rat::one(), values })?;
    Ok(BlockPattern { structure, left: (0..a).collect(), right: (a..n).collect(), certificate })
}

/// Exhaustive triangle check of the base and slope-1 check of a binary table.
fn check_pattern(space: &FiniteMetricSpace, q: &[Q01]) -> Result<PatternCertificate, FormulaError> {
    let n = space.len();
    let mut triangles = 0;
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                if space.d(x, z).value() > space.d(x, y).value() + space.d(y, z).value() {
                    return Err(FormulaError::SchemeMismatch(format!("triangle ({x}, {y}, {z})")));
                }
                triangles += 1;
            }
        }
    }
    let mut pairs = 0;
    for i in 0..n * n {
        for j in i + 1..n * n {
            let dist = space.d(i / n, j / n).max(space.d(i % n, j % n));
            if q[i].abs_diff(q[j]) > dist {
                return Err(FormulaError::SlopeViolation {
                    symbol: Q_SYMBOL.into(),
                    slope: Rat::one(),
                    left: vec![i / n, i % n],
                    right: vec![j / n, j % n],
                });
            }
            pairs += 1;
        }
    }
    Ok(PatternCertificate { triangles_checked: triangles, lipschitz_pairs_checked: pairs })
}

/// `Q(s_i, t_j) = 0` exactly when `i < j`.
pub fn q_pattern(n: usize) -> Result<BlockPattern, FormulaError> {
    let left: Vec<String> = (1..=n).map(|i| format!("s{i}")).collect();
    let right: Vec<String> = (1..=n).map(|i| format!("t{i}")).collect();
    block_pattern(&left, &right, |i, j| i < j)
}

/// Right points indexed by subsets `I` of `{1..n}` (bit `i-1` set when
/// `i ∈ I`), with `Q(s_i, t_I) = 0` exactly when `i ∈ I`.
pub fn ip_pattern(n: usize) -> Result<BlockPattern, FormulaError> {
    let left: Vec<String> = (1..=n).map(|i| format!("s{i}")).collect();
    let right: Vec<String> = (0..1usize << n).map(|m| format!("t{m}")).collect();
    block_pattern(&left, &right, |i, m| m >> i & 1 == 1)
}

/// A stage in class 𝒦 at denominator bound 8: two points at distance 1/2
/// with `P = d(., {first})`, grown by one free round over pairs and capped
/// at `size_cap` points.
pub fn predicate_stage(size_cap: usize) -> Result<Stage, StageError> {
    let seed = FiniteMetricSpace::from_pairs(
        vec!["a".into(), "b".into()],
        &[("a".into(), "b".into(), Q01::frac(1, 2))],
    )?;
    let st = Stage::seed(seed, None, 8)?.with_distance_predicate(&[0])?;
    let cfg = GrowthConfig { rounds: 1, size_cap, arity: 2, rule: GrowthRule::Free };
    Ok(grow_stage(&st, &cfg)?.stage)
}

/// A fixed list of quantifier-free `(d, P)` formulas in `x`, `y` of depth at
/// most 3 and inverse modulus at most 2.
pub fn pinned_qf_formulas() -> Vec<Formula> {
    [
        "(d x y)",
        "(P x)",
        "(P y)",
        "(neg (d x y))",
        "(max (d x y) (P x))",
        "(min (d x y) (P y))",
        "(sub (P x) (P y))",
        "(sub (P y) (P x))",
        "(scale 1/2 (sub (d x y) (P x)))",
        "(max (P x) (P y))",
        "(min (neg (P x)) (d x y))",
        "(neg (max (P x) (neg (P y))))",
        "(scale 2 (P x))",
        "(scale 1/2 (d x y))",
        "(max (scale 1/2 (d x y)) (neg (P y)))",
        "(min (max (d x y) (P x)) (neg (P y)))",
        "(sub (neg (P x)) (P y))",
        "(scale 2/3 (sub (d x y) (neg (P y))))",
        "(max (min (P x) (P y)) (scale 1/2 (neg (d x y))))",
        "(min (sub (P x) (P y)) (max (d x y) 1/4))",
    ]
    .iter()
    .map(|s| s.parse().expect("pinned formulas parse"))
    .collect()
}
