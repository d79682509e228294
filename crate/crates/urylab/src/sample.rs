//! Exhaustive enumeration and seeded sampling of small grid spaces and
//! predicates, shared by the property tests, the acceptance suite and the
//! fuzzing commands.

use rand::Rng;

use crate::metric::FiniteMetricSpace;
use crate::rational::Q01;

fn labels(n: usize, prefix: &str) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Every metric space on `n` labeled points whose distances are positive
/// multiples of `1/denominator`.
pub fn all_grid_spaces(n: usize, denominator: i64, prefix: &str) -> Vec<FiniteMetricSpace> {
    let positive: Vec<Q01> = Q01::grid(denominator).into_iter().skip(1).collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let mut out = vec![];
    let mut digits = vec![0usize; pairs.len()];
    loop {
        let mut m = vec![vec![Q01::ZERO; n]; n];
        for (k, &(i, j)) in pairs.iter().enumerate() {
            m[i][j] = positive[digits[k]];
            m[j][i] = positive[digits[k]];
        }
        if let Ok(s) = FiniteMetricSpace::from_matrix(labels(n, prefix), m) {
            out.push(s);
        }
        let mut k = 0;
        loop {
            if k == digits.len() {
                return out;
            }
            digits[k] += 1;
            if digits[k] < positive.len() {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}

/// Every vector of length `n` over the grid `{0, 1/d, ..., 1}`.
pub fn all_grid_vectors(n: usize, denominator: i64) -> Vec<Vec<Q01>> {
    let grid = Q01::grid(denominator);
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|v: Vec<Q01>| {
                grid.iter().map(move |&q| {
                    let mut w = v.clone();
                    w.push(q);
                    w
                })
            })
            .collect();
    }
    out
}

fn pick<R: Rng>(rng: &mut R, lo: Q01, hi: Q01, denominator: i64) -> Q01 {
    let grid: Vec<Q01> = Q01::grid(denominator).into_iter().filter(|q| *q >= lo && *q <= hi).collect();
    grid[rng.gen_range(0..grid.len())]
}

/// A random grid metric space built point by point: each new distance is
/// drawn uniformly from the values still compatible with the triangle
/// inequality.
pub fn random_space<R: Rng>(rng: &mut R, n: usize, denominator: i64, prefix: &str) -> FiniteMetricSpace {
    let step = Q01::frac(1, denominator);
    let mut m = vec![vec![Q01::ZERO; n]; n];
    for k in 1..n {
        for x in 0..k {
            let mut lo = step;
            let mut hi = Q01::ONE;
            for y in 0..x {
                lo = lo.max(m[k][y].abs_diff(m[x][y]));
                hi = hi.min(m[k][y].tadd(m[x][y]));
            }
            let v = pick(rng, lo, hi, denominator);
            m[k][x] = v;
            m[x][k] = v;
        }
    }
    FiniteMetricSpace::from_matrix(labels(n, prefix), m).expect("sequential sampling stays metric")
}

/// A random 1-Lipschitz grid predicate on `space` (requires the space's
/// distances to lie on the same grid).
pub fn random_lipschitz<R: Rng>(rng: &mut R, space: &FiniteMetricSpace, denominator: i64) -> Vec<Q01> {
    let mut p: Vec<Q01> = vec![];
    for x in 0..space.len() {
        let mut lo = Q01::ZERO;
        let mut hi = Q01::ONE;
        for (y, &py) in p.iter().enumerate() {
            lo = lo.max(py.tsub(space.d(x, y)));
            hi = hi.min(py.tadd(space.d(x, y)));
        }
        p.push(pick(rng, lo, hi, denominator));
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn counts() {
        assert_eq!(all_grid_spaces(1, 4, "a").len(), 1);
        assert_eq!(all_grid_spaces(2, 4, "a").len(), 4);
        assert_eq!(all_grid_spaces(3, 2, "a").len(), 8);
        assert_eq!(all_grid_spaces(3, 3, "a").len(), 24);
        assert_eq!(all_grid_vectors(2, 2).len(), 9);
    }

    #[test]
    fn samples_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let s = random_space(&mut rng, 6, 24, "x");
            assert!(s.on_grid(24));
            let p = random_lipschitz(&mut rng, &s, 24);
            assert!(crate::predicate::k_membership(&s, &p).is_ok());
        }
    }
}
