//! Brute-force membership test for 𝒦, independent of the Lipschitz criterion:
//! searches grid extensions `B ⊇ A` with a bounded number of added points
//! for a set `B0` with `P(x) = d(x, B0)` on `A`.

use num::Integer;

use crate::metric::{validate_space, FiniteMetricSpace};
use crate::rational::{Q01, Rat};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleVerdict {
    pub accept: bool,
    /// Original points used as members of `B0`.
    pub in_space_witnesses: Vec<usize>,
    /// The extension found: the original points followed by the added witnesses.
    pub extension: Option<FiniteMetricSpace>,
    pub witness_budget: usize,
    pub denominator_bound: i64,
    /// Set on rejection: the verdict only covers extensions within the budgets.
    pub budget_too_small: bool,
}

/// All quantities are integers in units of `1/unit`.
struct Search<'a> {
    space: &'a FiniteMetricSpace,
    n: usize,
    unit: i64,
    d: Vec<Vec<i64>>,
    p: Vec<i64>,
    candidates: Vec<Vec<i64>>,
    step: i64,
}

impl Search<'_> {
    fn cover(&self, uncovered: u32, budget: usize, chosen: &mut Vec<usize>) -> Option<FiniteMetricSpace> {
        if uncovered == 0 {
            return self.complete(chosen);
        }
        if budget == 0 {
            return None;
        }
        let x = uncovered.trailing_zeros() as usize;
        for (ci, f) in self.candidates.iter().enumerate() {
            if f[x] != self.p[x] || chosen.contains(&ci) {
                continue;
            }
            let mut rest = uncovered;
            for y in 0..self.n {
                if f[y] == self.p[y] {
                    rest &= !(1 << y);
                }
            }
            chosen.push(ci);
            if let Some(ext) = self.cover(rest, budget - 1, chosen) {
                return Some(ext);
            }
            chosen.pop();
        }
        None
    }

    /// Tries every grid assignment of witness-to-witness distances.
    fn complete(&self, chosen: &[usize]) -> Option<FiniteMetricSpace> {
        let n = self.n;
        let k = chosen.len();
        let total = n + k;
        let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect();
        let mut dist = vec![vec![0i64; total]; total];
        for i in 0..n {
            for j in 0..n {
                dist[i][j] = self.d[i][j];
            }
        }
        for (w, &ci) in chosen.iter().enumerate() {
            for x in 0..n {
                dist[x][n + w] = self.candidates[ci][x];
                dist[n + w][x] = self.candidates[ci][x];
            }
        }
        let values: Vec<i64> = (1..).map(|m| m * self.step).take_while(|&v| v <= self.unit).collect();
        let mut digits = vec![0usize; pairs.len()];
        loop {
            for (pi, &(a, b)) in pairs.iter().enumerate() {
                dist[n + a][n + b] = values[digits[pi]];
                dist[n + b][n + a] = values[digits[pi]];
            }
            if triangles_hold(&dist) {
                return Some(self.build(&dist));
            }
            let mut i = 0;
            loop {
                if i == digits.len() {
                    return None;
                }
                digits[i] += 1;
                if digits[i] < values.len() {
                    break;
                }
                digits[i] = 0;
                i += 1;
            }
        }
    }

    fn build(&self, dist: &[Vec<i64>]) -> FiniteMetricSpace {
        let mut labels: Vec<String> = self.space.labels().to_vec();
        for i in self.n..dist.len() {
            labels.push(self.space.fresh_label(&format!("w{}", i - self.n)));
        }
        let m = dist.iter().map(|r| r.iter().map(|&v| Rat::new(v, self.unit)).collect()).collect();
        validate_space(labels, m).expect("integer triangle check passed")
    }
}

fn triangles_hold(d: &[Vec<i64>]) -> bool {
    let m = d.len();
    (0..m).all(|x| (0..m).all(|y| (0..m).all(|z| d[x][z] <= d[x][y] + d[y][z])))
}

fn grid_vectors(len: usize, values: &[i64]) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|v: Vec<i64>| {
                values.iter().map(move |&q| {
                    let mut w = v.clone();
                    w.push(q);
                    w
                })
            })
            .collect();
    }
    out
}

/// Exhaustive search, sound and complete for extensions with at most
/// `witness_budget` added points and all new distances multiples of
/// `1/denominator_bound`.
pub fn oracle_k_membership(
    space: &FiniteMetricSpace,
    p: &[Q01],
    witness_budget: usize,
    denominator_bound: i64,
) -> OracleVerdict {
    assert!(witness_budget > 0 && denominator_bound > 0, "budgets must be positive");
    assert!(space.len() < 32);
    let n = space.len();
    let mut unit = denominator_bound;
    for q in space.matrix().iter().flatten().chain(p) {
        unit = unit.lcm(q.value().denom());
    }
    let scale = |q: Q01| (q.value() * Rat::from_integer(unit)).to_integer();
    let d: Vec<Vec<i64>> = (0..n).map(|i| (0..n).map(|j| scale(space.d(i, j))).collect()).collect();
    let pi: Vec<i64> = p.iter().map(|&q| scale(q)).collect();
    let step = unit / denominator_bound;
    let positive: Vec<i64> = (1..=denominator_bound).map(|m| m * step).collect();
    // Katětov profiles of a witness over A that never undercut P and are tight somewhere.
    let candidates: Vec<Vec<i64>> = grid_vectors(n, &positive)
        .into_iter()
        .filter(|f| {
            (0..n).all(|x| {
                f[x] >= pi[x] && (0..n).all(|y| (f[x] - f[y]).abs() <= d[x][y] && d[x][y] <= f[x] + f[y])
            }) && (0..n).any(|x| f[x] == pi[x])
        })
        .collect();
    let search = Search { space, n, unit, d: d.clone(), p: pi.clone(), candidates, step };
    let zeros: Vec<usize> = (0..n).filter(|&x| pi[x] == 0).collect();
    for mask in 0u32..(1 << zeros.len()) {
        let s: Vec<usize> = (0..zeros.len()).filter(|b| mask & (1 << b) != 0).map(|b| zeros[b]).collect();
        if s.iter().any(|&z| (0..n).any(|x| d[x][z] < pi[x])) {
            continue;
        }
        let mut uncovered = 0u32;
        for x in 0..n {
            if !s.iter().any(|&z| d[x][z] == pi[x]) {
                uncovered |= 1 << x;
            }
        }
        let mut chosen = vec![];
        if let Some(ext) = search.cover(uncovered, witness_budget, &mut chosen) {
            return OracleVerdict {
                accept: true,
                in_space_witnesses: s,
                extension: Some(ext),
                witness_budget,
                denominator_bound,
                budget_too_small: false,
            };
        }
    }
    OracleVerdict {
        accept: false,
        in_space_witnesses: vec![],
        extension: None,
        witness_budget,
        denominator_bound,
        budget_too_small: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_predicate_needs_no_witness() {
        let s = FiniteMetricSpace::singleton("a");
        let v = oracle_k_membership(&s, &[Q01::ZERO], 1, 2);
        assert!(v.accept);
        assert_eq!(v.extension.unwrap().len(), 1);
        assert_eq!(v.in_space_witnesses, vec![0]);
    }

    #[test]
    fn singleton_half() {
        let s = FiniteMetricSpace::singleton("a");
        let v = oracle_k_membership(&s, &[Q01::frac(1, 2)], 1, 2);
        assert!(v.accept);
        let ext = v.extension.unwrap();
        assert_eq!(ext.len(), 2);
        assert_eq!(ext.d(0, 1), Q01::frac(1, 2));
    }

    #[test]
    fn gap_rejected() {
        let s = FiniteMetricSpace::from_pairs(vec!["a".into(), "b".into()], &[("a".into(), "b".into(), Q01::frac(1, 2))])
            .unwrap();
        let v = oracle_k_membership(&s, &[Q01::ZERO, Q01::frac(3, 4)], 2, 8);
        assert!(!v.accept);
        assert!(v.budget_too_small);
        let v = oracle_k_membership(&s, &[Q01::frac(1, 4), Q01::frac(1, 2)], 2, 8);
        assert!(v.accept);
    }
}
