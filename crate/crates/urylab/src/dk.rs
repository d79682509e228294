//! The pseudo-metric d^𝒦 on tuples of 𝒦-structures: a closed form with a
//! realizing joint space, and a grid brute-force oracle.

use crate::metric::{validate_space, FiniteMetricSpace};
use crate::predicate::{PredicateError, PredicateSpace};
use num::Signed;

use crate::rational::{Q01, Rat};

/// The structure induced on a tuple: pairwise distances (zero allowed for
/// repeated entries) and predicate values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TupleStructure {
    pub d: Vec<Vec<Q01>>,
    pub p: Vec<Q01>,
}

impl TupleStructure {
    pub fn of(ps: &PredicateSpace, tuple: &[usize]) -> Result<Self, PredicateError> {
        ps.base().check_indices(tuple)?;
        Ok(TupleStructure {
            d: tuple.iter().map(|&i| tuple.iter().map(|&j| ps.base().d(i, j)).collect()).collect(),
            p: tuple.iter().map(|&i| ps.p()[i]).collect(),
        })
    }

    /// Tuple structure of a pure metric space, with `P ≡ 0`.
    pub fn of_metric(space: &FiniteMetricSpace, tuple: &[usize]) -> Self {
        TupleStructure {
            d: tuple.iter().map(|&i| tuple.iter().map(|&j| space.d(i, j)).collect()).collect(),
            p: vec![Q01::ZERO; tuple.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Pseudo-metric axioms plus 1-Lipschitz `P`; returns the first failing pair or triple.
    pub fn coherence_violation(&self) -> Option<Vec<usize>> {
        let n = self.len();
        for i in 0..n {
            if !self.d[i][i].is_zero() {
                return Some(vec![i]);
            }
            for j in 0..n {
                if self.d[i][j] != self.d[j][i] || self.p[i].abs_diff(self.p[j]) > self.d[i][j] {
                    return Some(vec![i, j]);
                }
                for k in 0..n {
                    if self.d[i][k].value() > self.d[i][j].value() + self.d[j][k].value() {
                        return Some(vec![i, j, k]);
                    }
                }
            }
        }
        None
    }
}

/// A joint 𝒦-structure containing both tuples, witnessing `value`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DkCertificate {
    pub value: Q01,
    pub joint: FiniteMetricSpace,
    pub joint_p: Vec<Q01>,
    /// Joint point of each coordinate of the first tuple.
    pub left: Vec<usize>,
    /// Joint point of each coordinate of the second tuple.
    pub right: Vec<usize>,
}

impl DkCertificate {
    /// Re-checks the certificate without trusting the closed form.
    pub fn verify(&self, a: &TupleStructure, b: &TupleStructure) -> Result<(), String> {
        let j = &self.joint;
        if self.joint_p.len() != j.len() {
            return Err("predicate length".into());
        }
        for x in 0..j.len() {
            for y in 0..j.len() {
                if self.joint_p[x].abs_diff(self.joint_p[y]) > j.d(x, y) {
                    return Err(format!("joint P not Lipschitz at ({x},{y})"));
                }
            }
        }
        for (side, map) in [(a, &self.left), (b, &self.right)] {
            for i in 0..side.len() {
                if self.joint_p[map[i]] != side.p[i] {
                    return Err(format!("P mismatch at coordinate {i}"));
                }
                for k in 0..side.len() {
                    if j.d(map[i], map[k]) != side.d[i][k] {
                        return Err(format!("distance mismatch at ({i},{k})"));
                    }
                }
            }
        }
        let attained = (0..a.len()).map(|i| j.d(self.left[i], self.right[i])).max().unwrap_or(Q01::ZERO);
        if attained != self.value {
            return Err(format!("matched distance {attained} differs from value {}", self.value));
        }
        Ok(())
    }
}

/// `min(1, max(½·max|d_A − d_B|, max|P_A − P_B|))` with the joint space
/// attaching the tuples at uniform distance `t` = that value.
pub fn dk_distance(a: &TupleStructure, b: &TupleStructure) -> Result<DkCertificate, PredicateError> {
    if a.len() != b.len() {
        return Err(PredicateError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    let half = Rat::new(1, 2);
    let mut t = Q01::ZERO;
    for i in 0..n {
        t = t.max(a.p[i].abs_diff(b.p[i]));
        for j in 0..n {
            t = t.max(Q01::clamp(half * (a.d[i][j].value() - b.d[i][j].value()).abs()));
        }
    }
    let cross = |i: usize, j: usize| -> Q01 {
        (0..n).map(|k| a.d[i][k].tadd(t).tadd(b.d[k][j])).min().unwrap()
    };
    // Slots 0..n are the first tuple, n..2n the second.
    let m = 2 * n;
    let mut d = vec![vec![Q01::ZERO; m]; m];
    let mut p = vec![Q01::ZERO; m];
    for i in 0..n {
        p[i] = a.p[i];
        p[n + i] = b.p[i];
        for j in 0..n {
            d[i][j] = a.d[i][j];
            d[n + i][n + j] = b.d[i][j];
            d[i][n + j] = cross(i, j);
            d[n + j][i] = d[i][n + j];
        }
    }
    let slots = TupleStructure { d, p };
    if let Some(v) = slots.coherence_violation() {
        return Err(PredicateError::JointConstruction(format!("slots {v:?}")));
    }
    let (joint, joint_p, rep) = quotient(&slots)?;
    let cert = DkCertificate { value: t, joint, joint_p, left: rep[..n].to_vec(), right: rep[n..].to_vec() };
    cert.verify(a, b).map_err(PredicateError::JointConstruction)?;
    Ok(cert)
}

/// Collapses slots at distance zero into single points.
fn quotient(s: &TupleStructure) -> Result<(FiniteMetricSpace, Vec<Q01>, Vec<usize>), PredicateError> {
    let m = s.len();
    let mut rep = vec![usize::MAX; m];
    let mut reps: Vec<usize> = vec![];
    for x in 0..m {
        match reps.iter().position(|&r| s.d[x][r].is_zero()) {
            Some(k) => rep[x] = k,
            None => {
                rep[x] = reps.len();
                reps.push(x);
            }
        }
    }
    let labels = reps.iter().map(|&r| format!("j{r}")).collect();
    let dist = reps.iter().map(|&x| reps.iter().map(|&y| s.d[x][y].value()).collect()).collect();
    let joint = validate_space(labels, dist)?;
    let p = reps.iter().map(|&x| s.p[x]).collect();
    Ok((joint, p, rep))
}

/// Grid minimum of `max_i d(a_i, b_i)` over all joint pseudo-metrics on the
/// two tuples with cross distances multiples of `1/bound` and `P` 1-Lipschitz.
pub fn dk_oracle(a: &TupleStructure, b: &TupleStructure, bound: i64) -> Q01 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let grid = Q01::grid(bound);
    for &v in &grid {
        let mut cross = vec![vec![None; n]; n];
        if oracle_fill(a, b, &grid, v, 0, &mut cross) {
            return v;
        }
    }
    Q01::ONE
}

fn oracle_fill(
    a: &TupleStructure,
    b: &TupleStructure,
    grid: &[Q01],
    v: Q01,
    pos: usize,
    cross: &mut Vec<Vec<Option<Q01>>>,
) -> bool {
    let n = a.len();
    if pos == n * n {
        return true;
    }
    let (i, j) = (pos / n, pos % n);
    for &c in grid {
        if i == j && c > v {
            break;
        }
        if a.p[i].abs_diff(b.p[j]) > c {
            continue;
        }
        // Triangles with two cross edges sharing an endpoint.
        let ok = (0..n).all(|k| {
            let row = match cross[k][j] {
                Some(e) => c.abs_diff(e) <= a.d[i][k] && a.d[i][k].value() <= c.value() + e.value(),
                None => true,
            };
            let col = match cross[i][k] {
                Some(e) => c.abs_diff(e) <= b.d[j][k] && b.d[j][k].value() <= c.value() + e.value(),
                None => true,
            };
            row && col
        });
        if !ok {
            continue;
        }
        cross[i][j] = Some(c);
        if oracle_fill(a, b, grid, v, pos + 1, cross) {
            return true;
        }
        cross[i][j] = None;
    }
    false
}

/// Outcome of [`predicate_limit_check`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LimitReport {
    pub pass: bool,
    /// Final-step predicate values, the limit estimate per coordinate.
    pub limit: Vec<Q01>,
    /// `(step, coordinates)` of the first incoherent structure or continuity failure.
    pub violation: Option<(usize, Vec<usize>)>,
    pub tolerance: Q01,
}

/// Checks that along a d^𝒦-Cauchy tail the predicate values settle: every
/// tail step is within tolerance of the last in d^𝒦, and each coordinate's
/// P moves by no more than the d^𝒦 distance.
pub fn predicate_limit_check(seq: &[TupleStructure], tolerance: Q01) -> Result<LimitReport, PredicateError> {
    let last = seq.last().expect("nonempty sequence");
    let mut report = LimitReport { pass: true, limit: last.p.clone(), violation: None, tolerance };
    for (m, s) in seq.iter().enumerate() {
        if s.len() != last.len() {
            return Err(PredicateError::LengthMismatch(s.len(), last.len()));
        }
        if let Some(v) = s.coherence_violation() {
            report.pass = false;
            report.violation = Some((m, v));
            return Ok(report);
        }
    }
    for m in seq.len() / 2..seq.len() {
        let dk = dk_distance(&seq[m], last)?.value;
        if dk > tolerance {
            return Err(PredicateError::NotCauchy(m));
        }
        for i in 0..last.len() {
            if seq[m].p[i].abs_diff(last.p[i]) > dk {
                report.pass = false;
                report.violation = Some((m, vec![i]));
                return Ok(report);
            }
        }
    }
    Ok(report)
}
