//! Acceptance suite: one line per criterion, nonzero exit on any failure.
//! Each criterion recomputes its claims with checks written here, separate
//! from the library code paths where that is feasible.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use urylab::dk::{dk_distance, dk_oracle, TupleStructure};
use urylab::formula::{assignment, eval, inverse_modulus, random_formula, random_table, ExpansionStructure, Formula};
use urylab::grey::{
    closure_family, conjugate, formula_subset, grey_stabilizer, invariance_check, max_subgroup, structure_orbits,
    verify_subgroup,
};
use urylab::isometry::{extend_partial_isometry, isometry_group, IsometryGroup};
use urylab::k_oracle::oracle_k_membership;
use urylab::metric::{tuple_distance, FiniteMetricSpace};
use urylab::patterns::*;
use urylab::predicate::{k_membership, nap_amalgamate, realize_predicate, PredicateAmalgam, RealizedPredicateSpace};
use urylab::rational::{Q01, Rat};
use urylab::sample::{all_grid_spaces, all_grid_vectors, random_lipschitz, random_space};
use urylab::stability::*;
use urylab::stage::{extension_property_check, grow_stage, hamming_template, GrowthConfig, GrowthRule, Stage};
use urylab_cli::scenarios::SCENARIOS;

type Check = fn() -> String;

const CRITERIA: [(&str, u64, Check); 15] = [
    ("class K membership equals the extension oracle on all <= 3-point spaces over sixths", 60, a1),
    ("NAP amalgamation of 1000 seeded realized pairs validates and restricts", 60, a2),
    ("d^K closed form equals the grid oracle", 300, a3),
    ("saturated template stage at bound 4 realizes every two-point Katetov function", 120, a4),
    ("50 partial isometries of the cube extend within 1/8 or are certified infeasible", 120, a5),
    ("50 random formula grey sets are invariant under their stabilizers", 120, a6),
    ("closure members at depth 2 satisfy the grey subgroup axioms", 60, a7),
    ("order witnesses for d at n = 2 and n = 3", 30, a8),
    ("no type-anchored order witness for the pinned formulas on the predicate stage", 600, a9),
    ("type-anchored order witness on the Q-pattern at n = 3, eps = 0", 30, a10),
    ("tuple and group witnesses convert both ways on the Q-pattern", 60, a11),
    ("independence witnesses yield verified order witnesses, 100-instance fuzz", 300, a12),
    ("iterated limits on the length-12 Q-sequence", 10, a13),
    ("band triples in 1000 seeded two-colourings of size 6", 120, a14),
    ("every scenario replays byte-identically", 900, a15),
];

fn main() {
    let mut failed = 0;
    let total = Instant::now();
    for (i, (name, limit, f)) in CRITERIA.iter().enumerate() {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f));
        let elapsed = t.elapsed();
        let (ok, detail) = match result {
            Ok(detail) if elapsed <= Duration::from_secs(*limit) => (true, detail),
            Ok(detail) => (false, format!("{detail}; over the {limit} s limit")),
            Err(e) => {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                (false, msg.unwrap_or_else(|| "panicked".into()))
            }
        };
        failed += usize::from(!ok);
        println!(
            "ACCEPTANCE {:>2}: {} {name} ({:.2} s, limit {limit} s): {detail}",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed in {:.1} s", CRITERIA.len() - failed, total.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}

/// Pairwise Lipschitz test written out here, independent of `k_membership`.
fn lipschitz(s: &FiniteMetricSpace, p: &[Q01]) -> bool {
    (0..s.len()).all(|x| (0..s.len()).all(|y| p[x].abs_diff(p[y]) <= s.d(x, y)))
}

fn metric_ok(s: &FiniteMetricSpace) -> bool {
    let n = s.len();
    (0..n).all(|x| {
        s.d(x, x).is_zero()
            && (0..n).all(|y| s.d(x, y) == s.d(y, x) && (x == y || !s.d(x, y).is_zero()))
            && (0..n).all(|y| (0..n).all(|z| s.d(x, z).value() <= s.d(x, y).value() + s.d(y, z).value()))
    })
}

fn a1() -> String {
    let mut cases = vec![];
    for n in 1..=3 {
        for s in all_grid_spaces(n, 6, "a") {
            for p in all_grid_vectors(n, 6) {
                cases.push((s.clone(), p));
            }
        }
    }
    let bad: Vec<_> = cases
        .par_iter()
        .filter(|(s, p)| {
            let fast = k_membership(s, p).is_ok();
            fast != oracle_k_membership(s, p, 3, 12).accept || fast != lipschitz(s, p)
        })
        .collect();
    assert!(bad.is_empty(), "{} disagreements, first {:?}", bad.len(), bad.first());
    format!("{} predicate spaces, 0 disagreements", cases.len())
}

fn restricts(am: &PredicateAmalgam, side: &RealizedPredicateSpace, map: &[usize]) -> bool {
    let out = &am.realized.original;
    map.iter().enumerate().all(|(i, &j)| {
        out.p()[j] == side.original.p()[i] && map.iter().enumerate().all(|(i2, &j2)| out.base().d(j, j2) == side.original.base().d(i, i2))
    })
}

fn a2() -> String {
    let failures: usize = (0..1000u64)
        .into_par_iter()
        .filter(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let nb = rng.gen_range(1..=5);
            let nc = rng.gen_range(1..=5);
            let k = rng.gen_range(1..=nb.min(nc));
            let s = random_space(&mut rng, nb + nc - k, 24, "x");
            let p = random_lipschitz(&mut rng, &s, 24);
            let whole = k_membership(&s, &p).unwrap();
            let b_idx: Vec<usize> = (0..nb).collect();
            let c_idx: Vec<usize> = (0..k).chain(nb..nb + nc - k).collect();
            let b = realize_predicate(&whole.restrict(&b_idx)).unwrap();
            let c = realize_predicate(&whole.restrict(&c_idx)).unwrap();
            let shared: Vec<(String, String)> = (0..k).map(|i| (format!("x{i}"), format!("x{i}"))).collect();
            let am = nap_amalgamate(&b, &c, &shared).unwrap();
            let r = &am.realized;
            // P(x) = d(x, witnesses) on the original points, recomputed here
            let realized = r.base_points.iter().enumerate().all(|(i, &x)| {
                r.witnesses.iter().map(|&w| r.ambient.d(x, w)).min().unwrap_or(Q01::ONE) == r.original.p()[i]
            });
            let ok = metric_ok(&r.ambient)
                && lipschitz(r.original.base(), r.original.p())
                && realized
                && restricts(&am, &b, &am.left)
                && restricts(&am, &c, &am.right);
            !ok
        })
        .count();
    assert_eq!(failures, 0, "{failures} failing pairs");
    "1000 pairs, 0 failures".into()
}

fn tuple_structures(max_points: usize, denominator: i64) -> Vec<TupleStructure> {
    let mut out = vec![];
    for n in 1..=max_points {
        for s in all_grid_spaces(n, denominator, "a") {
            for p in all_grid_vectors(n, denominator) {
                if let Ok(ps) = k_membership(&s, &p) {
                    out.push(TupleStructure::of(&ps, &(0..n).collect::<Vec<_>>()).unwrap());
                }
            }
        }
    }
    out
}

fn a3() -> String {
    let all = tuple_structures(2, 4);
    let pairs: Vec<(&TupleStructure, &TupleStructure)> =
        all.iter().flat_map(|a| all.iter().filter(move |b| b.len() == a.len()).map(move |b| (a, b))).collect();
    // values over quarters land on eighths, so the grid must contain them
    let bad_small = pairs
        .par_iter()
        .filter(|(a, b)| {
            let c = dk_distance(a, b).unwrap();
            c.verify(a, b).is_err() || c.value != dk_oracle(a, b, 24)
        })
        .count();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let random: Vec<(TupleStructure, TupleStructure)> = (0..200)
        .map(|_| {
            let mut one = || {
                let s = random_space(&mut rng, 3, 6, "a");
                let p = random_lipschitz(&mut rng, &s, 6);
                TupleStructure::of(&k_membership(&s, &p).unwrap(), &[0, 1, 2]).unwrap()
            };
            (one(), one())
        })
        .collect();
    let bad_random = random
        .par_iter()
        .filter(|(a, b)| {
            let c = dk_distance(a, b).unwrap();
            c.verify(a, b).is_err() || c.value != dk_oracle(a, b, 12)
        })
        .count();
    assert_eq!((bad_small, bad_random), (0, 0));
    format!("{} exhaustive pairs and 200 random 3-point pairs, 0 discrepancies", pairs.len())
}

fn a4() -> String {
    let seed = Stage::seed(FiniteMetricSpace::singleton("s"), None, 4).unwrap();
    let cfg = GrowthConfig {
        rounds: 100,
        size_cap: 1000,
        arity: 2,
        rule: GrowthRule::Template { template: hamming_template(4, 3), embedding: None },
    };
    let out = grow_stage(&seed, &cfg).unwrap();
    assert!(out.saturated && !out.cap_exceeded && !out.template_dropped);
    let st = &out.stage;
    let report = extension_property_check(st, 2, 4);
    assert!(report.unrealized.is_empty(), "{} unrealized", report.unrealized.len());
    // enumerate the positive Katětov functions over <= 2-point subspaces here
    let s = st.space();
    let n = s.len();
    let grid: Vec<Q01> = (1..=4).map(|k| Q01::frac(k, 4)).collect();
    let realized = |sub: &[usize], f: &[Q01]| (0..n).any(|z| sub.iter().zip(f).all(|(&x, &v)| s.d(z, x) == v));
    let mut total = 0;
    for x in 0..n {
        for &v in &grid {
            total += 1;
            assert!(realized(&[x], &[v]), "point {x} at {v}");
        }
        for y in x + 1..n {
            for &u in &grid {
                for &v in &grid {
                    let d = s.d(x, y);
                    if u.abs_diff(v) <= d && d.value() <= u.value() + v.value() {
                        total += 1;
                        assert!(realized(&[x, y], &[u, v]), "pair ({x},{y}) at ({u},{v})");
                    }
                }
            }
        }
    }
    assert_eq!(total, report.total);
    format!("{} points, {total}/{total} functions realized", n)
}

fn cube() -> (FiniteMetricSpace, IsometryGroup) {
    let c = hamming_template(3, 2);
    let g = isometry_group(&c, None, 1000).unwrap();
    (c, g)
}

fn a5() -> String {
    let (c, g) = cube();
    assert_eq!(g.len(), 48);
    let eps = Q01::frac(1, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut extended, mut infeasible) = (0, 0);
    for _ in 0..50 {
        let k = rng.gen_range(1..=2);
        let src: Vec<usize> = (0..k).map(|_| rng.gen_range(0..c.len())).collect();
        let dst: Vec<usize> = (0..k).map(|_| rng.gen_range(0..c.len())).collect();
        let exact = g.elements().iter().any(|h| tuple_distance(&c, &h.apply_tuple(&src), &dst).unwrap() <= eps);
        match extend_partial_isometry(&c, None, &src, &dst, eps, 100_000).unwrap() {
            Ok(ext) => {
                let m = &ext.isometry;
                assert!((0..c.len()).all(|x| (0..c.len()).all(|y| c.d(x, y) == c.d(m.apply(x), m.apply(y)))));
                assert!(tuple_distance(&c, &m.apply_tuple(&src), &dst).unwrap() <= eps);
                extended += 1;
            }
            Err(fail) => {
                assert!(!exact && fail.certified_infeasible, "uncertified failure {src:?} -> {dst:?}");
                let a = TupleStructure::of_metric(&c, &src);
                let b = TupleStructure::of_metric(&c, &dst);
                assert!(dk_oracle(&a, &b, 12) > eps);
                infeasible += 1;
            }
        }
    }
    format!("{extended} extended, {infeasible} certified infeasible")
}

fn a6() -> String {
    let (c, g) = cube();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let seeds: Vec<ExpansionStructure> = (0..2)
        .map(|_| {
            let p = random_lipschitz(&mut rng, &c, 6);
            let mut m = ExpansionStructure::with_predicate(c.clone(), &p).unwrap();
            m.insert("R", random_table(&mut rng, &c, 2, Rat::new(3, 2), 6)).unwrap();
            m
        })
        .collect();
    let (structures, action) = structure_orbits(&g, &seeds).unwrap();
    let sig = seeds[0].signature();
    let vars = vec!["x".to_string(), "y".to_string()];
    let mut instances = 0;
    for _ in 0..50 {
        let phi = random_formula(&mut rng, &sig, &vars, 4);
        let k = inverse_modulus(&phi, &sig).unwrap();
        let params: Vec<usize> = (0..2).map(|_| rng.gen_range(0..c.len())).collect();
        let subset = formula_subset(&phi, &vars, &params, &structures).unwrap();
        let h = grey_stabilizer(&g, &c, k, &params).unwrap();
        instances += invariance_check(&subset, &h, &action).unwrap().unwrap_or_else(|v| panic!("{phi}: {v:?}"));
        // direct form on the seeds: |phi^M(g c) - phi^M(c)| <= min(1, k d(g c, c))
        for m in &seeds {
            let base = eval(&phi, m, &assignment(&vars, &params)).unwrap();
            for e in g.elements() {
                let moved = e.apply_tuple(&params);
                let v = eval(&phi, m, &assignment(&vars, &moved)).unwrap();
                assert!(v.abs_diff(base) <= tuple_distance(&c, &moved, &params).unwrap().scale(k), "{phi}");
            }
        }
    }
    format!("50 formulas, {instances} invariance instances, 0 violations")
}

fn axioms(g: &IsometryGroup, v: &[Q01]) -> bool {
    let n = g.len();
    v[g.identity()].is_zero()
        && (0..n).all(|a| v[a] == v[g.inv(a)])
        && (0..n).all(|a| (0..n).all(|b| v[g.mul(a, b)] <= v[a].tadd(v[b])))
}

fn a7() -> String {
    let (c, g) = cube();
    let gens = vec![
        grey_stabilizer(&g, &c, Rat::from_integer(1), &[0]).unwrap(),
        grey_stabilizer(&g, &c, Rat::from_integer(2), &[3, 5]).unwrap(),
        grey_stabilizer(&g, &c, Rat::new(3, 2), &[1, 6]).unwrap(),
    ];
    let elements = [1, 7, 20, 33];
    let fam = closure_family(&g, &gens, &elements, &[Rat::new(1, 2), Rat::from_integer(3)], 2, 100_000).unwrap();
    assert!(!fam.depth_exceeded && fam.depth_reached == 2);
    let mut checked = 0;
    for h in &fam.subgroups {
        assert!(verify_subgroup(&g, h.values()).unwrap().is_ok() && axioms(&g, h.values()), "{}", h.provenance());
        checked += 1;
    }
    for a in &gens {
        for &e in &elements {
            assert!(axioms(&g, conjugate(&g, a, e).unwrap().values()));
        }
        for b in &gens {
            assert!(axioms(&g, max_subgroup(&g, &[a, b]).unwrap().values()));
        }
        checked += elements.len() + gens.len();
    }
    format!("{} closure members and {checked} subgroups checked, 0 violations", fam.subgroups.len())
}

fn params(n: usize, eps: Q01) -> SearchParams {
    SearchParams { n, epsilon: eps, r1: Q01::frac(1, 4), r2: Q01::frac(3, 4), budget: 10_000_000 }
}

fn split(f: Formula) -> SplitFormula {
    SplitFormula::new(f, &["x"], &["y"]).unwrap()
}

/// Order pattern on single points, read straight from a value function.
fn order_pattern_holds(value: impl Fn(usize, usize) -> Q01, left: &[usize], right: &[usize], p: &SearchParams) -> bool {
    let n = p.n;
    (0..n).all(|i| {
        (0..n).all(|j| {
            let v = value(left[i], right[j]);
            if i < j {
                v.value() <= p.r1.value() + p.epsilon.value()
            } else {
                v.value() >= p.r2.value() - p.epsilon.value()
            }
        })
    })
}

fn singles(w: &Witness) -> (Vec<usize>, Vec<usize>) {
    match w {
        Witness::Tuples { left, right } => (left.iter().map(|t| t[0]).collect(), right.iter().map(|t| t[0]).collect()),
        Witness::Elements { .. } => panic!("expected tuples"),
    }
}

fn a8() -> String {
    let d = split(Formula::dist("x", "y"));
    let mut out = vec![];
    for (n, p) in [(2, order_witness_space()), (3, order_pattern(3).unwrap())] {
        let fam = ExpansionFamily::new(vec![ExpansionStructure::new(p.space.clone())], "pure metric").unwrap();
        let prm = params(n, Q01::ZERO);
        let r = order_search(&fam, &d, &TuplePools::all(p.space.len(), 1, 1), &prm).unwrap();
        let r = r.found().expect("order witness");
        let checks = verify_tuple_witness(&fam, &d, None, r).unwrap();
        let (l, rt) = singles(&r.witness);
        assert!(order_pattern_holds(|x, y| p.space.d(x, y), &l, &rt, &prm));
        // the constructed blocks are a witness too
        assert!(order_pattern_holds(|x, y| p.space.d(x, y), &p.left, &p.right, &prm));
        out.push(format!("n = {n}: {} points, {checks} checks", p.space.len()));
    }
    out.join("; ")
}

/// Type distance of `(x, y)` to `(a, b)` in closed form.
fn type_gap(s: &FiniteMetricSpace, p: &[Q01], (x, y): (usize, usize), (a, b): (usize, usize)) -> Q01 {
    let half = Q01::clamp(s.d(x, y).abs_diff(s.d(a, b)).value() / Rat::from_integer(2));
    half.max(p[x].abs_diff(p[a])).max(p[y].abs_diff(p[b]))
}

fn a9() -> String {
    let st = predicate_stage(40).unwrap();
    let (s, p) = (st.space(), st.predicate().unwrap());
    let m = ExpansionStructure::with_predicate(s.clone(), p).unwrap();
    let sig = m.signature();
    let fam = ExpansionFamily::new(vec![m.clone()], "predicate stage").unwrap();
    let pools = TuplePools::all(st.len(), 1, 1);
    let prm = params(3, Q01::frac(1, 16));
    let formulas = pinned_qf_formulas();
    assert!(formulas.len() <= 20);
    let gap_needed = prm.r2.value() - prm.r1.value() - Rat::from_integer(2) * prm.epsilon.value();
    let mut spreads = vec![];
    for f in &formulas {
        assert!(f.is_quantifier_free() && f.depth() <= 3, "{f}");
        assert!(inverse_modulus(f, &sig).unwrap() <= Rat::from_integer(2));
        let phi = split(f.clone());
        let out = anchored_order_search(&fam, &phi, (&[0], &[1]), &pools, &prm).unwrap();
        assert!(out.found().is_none(), "witness for {f}");
        // a witness needs a low and a high value among type-close pairs
        let vals: Vec<Q01> = (0..s.len())
            .flat_map(|x| (0..s.len()).map(move |y| (x, y)))
            .filter(|&(x, y)| type_gap(s, p, (x, y), (0, 1)) <= prm.epsilon)
            .map(|(x, y)| phi.eval(&m, &[x], &[y]).unwrap())
            .collect();
        let spread = vals.iter().max().unwrap().value() - vals.iter().min().unwrap().value();
        assert!(spread < gap_needed, "{f}: spread {spread}");
        spreads.push(spread);
    }
    let widest = spreads.iter().max().unwrap();
    format!("{} formulas not found on {} points; widest type-close spread {widest} < {gap_needed}", formulas.len(), s.len())
}

fn a10() -> String {
    let p = q_pattern(3).unwrap();
    assert!(p.certificate.triangles_checked == 216 && p.certificate.lipschitz_pairs_checked > 0);
    let q = split(Formula::rel(Q_SYMBOL, &["x", "y"]));
    let fam = ExpansionFamily::new(vec![p.structure.clone()], "Q-pattern").unwrap();
    let prm = params(3, Q01::ZERO);
    let anchor = (p.left[0], p.right[0]);
    let r = anchored_order_search(&fam, &q, (&[anchor.0], &[anchor.1]), &TuplePools::all(6, 1, 1), &prm).unwrap();
    let r = r.found().expect("anchored witness");
    let checks = verify_tuple_witness(&fam, &q, Some((&[anchor.0], &[anchor.1])), r).unwrap();
    let (l, rt) = singles(&r.witness);
    let m = &p.structure;
    assert!(order_pattern_holds(|x, y| m.value(Q_SYMBOL, &[x, y]).unwrap(), &l, &rt, &prm));
    let zero_p = vec![Q01::ZERO; m.base().len()];
    for &x in &l {
        for &y in &rt {
            assert!(type_gap(m.base(), &zero_p, (x, y), anchor).is_zero());
        }
    }
    format!("{checks} checks; {} triangles and {} Lipschitz pairs certified", p.certificate.triangles_checked, p.certificate.lipschitz_pairs_checked)
}

fn q_setup(p: &BlockPattern) -> FormulaGreySetup {
    let g = isometry_group(p.structure.base(), None, 10_000).unwrap();
    let norm = split(Formula::rel(Q_SYMBOL, &["x", "y"])).normalized(Q01::frac(1, 4), Q01::frac(3, 4)).unwrap();
    FormulaGreySetup::new(g, &[p.structure.clone()], norm, (vec![p.left[0]], vec![p.right[0]])).unwrap()
}

/// `(gφ)(x) = φ^x(g · anchor)`, evaluated directly.
fn recheck_group_values(setup: &FormulaGreySetup, r: &WitnessReport) {
    let Witness::Elements { cells } = &r.witness else { panic!("expected elements") };
    let m = &setup.structures[r.structure];
    let anchor = [setup.anchor.0.as_slice(), &setup.anchor.1].concat();
    for (i, row) in cells.iter().enumerate() {
        for (c, &g) in row.iter().enumerate() {
            let moved = setup.instance.group.element(g).apply_tuple(&anchor);
            let v = eval(&setup.phi.formula, m, &assignment(&[setup.phi.left.as_slice(), &setup.phi.right].concat(), &moved)).unwrap();
            assert_eq!(v, r.values[i][c], "cell ({i}, {c})");
        }
    }
}

fn a11() -> String {
    let p = q_pattern(3).unwrap();
    let setup = q_setup(&p);
    let q = split(Formula::rel(Q_SYMBOL, &["x", "y"]));
    let fam = ExpansionFamily::new(vec![p.structure.clone()], "Q-pattern").unwrap();
    let anchor = ([p.left[0]], [p.right[0]]);
    let w = anchored_order_search(&fam, &q, (&anchor.0, &anchor.1), &TuplePools::all(6, 1, 1), &params(3, Q01::ZERO)).unwrap();
    let w = w.found().expect("anchored witness").clone();
    let pool: Vec<usize> = (0..setup.instance.group.len()).collect();
    let up = anchored_to_group(&setup, &fam, &q, &w, &pool).unwrap();
    assert_eq!((up.displacement, up.epsilon_out), (Q01::ZERO, Q01::ZERO));
    let up_checks = verify_group_witness(&setup.instance, &up.report).unwrap();
    recheck_group_values(&setup, &up.report);
    let down = group_to_anchored(&setup, &up.report).unwrap();
    assert_eq!(down.epsilon_out, Q01::ZERO);
    let down_checks = verify_tuple_witness(&setup.family().unwrap(), &setup.phi, Some((&anchor.0, &anchor.1)), &down.report).unwrap();
    // relaxed group witness comes down at twice the epsilon (slope 2 >= 1/2)
    let all: Vec<usize> = (0..setup.structures.len()).collect();
    let eps = Q01::frac(1, 16);
    let g = group_order_search(&setup.instance, &all, &pool, &params(3, eps)).unwrap();
    let g = g.found().expect("relaxed group witness");
    recheck_group_values(&setup, g);
    let relaxed = group_to_anchored(&setup, g).unwrap();
    assert_eq!(relaxed.epsilon_out, Q01::frac(1, 8));
    verify_tuple_witness(&setup.family().unwrap(), &setup.phi, Some((&anchor.0, &anchor.1)), &relaxed.report).unwrap();
    format!("up {up_checks} checks at eps 0, down {down_checks} checks at eps 0; relaxed 1/16 -> 1/8")
}

fn a12() -> String {
    let q = || split(Formula::rel(Q_SYMBOL, &["x", "y"]));
    let p = ip_pattern(2).unwrap();
    let setup = q_setup(&p);
    let pool: Vec<usize> = (0..setup.instance.group.len()).collect();
    let all: Vec<usize> = (0..setup.structures.len()).collect();
    let ip = ip_search(&setup.instance, &all, &pool, &params(2, Q01::ZERO)).unwrap();
    let ip = ip.found().expect("IP witness on the subset pattern");
    recheck_group_values(&setup, ip);
    let order = ip_to_order(&setup.instance, ip).unwrap();
    verify_group_witness(&setup.instance, &order).unwrap();
    recheck_group_values(&setup, &order);

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut found, mut exhausted) = (0, 0);
    for _ in 0..100 {
        let n = rng.gen_range(1..=2);
        let space = random_space(&mut rng, 4, 4, "p");
        let table = random_table(&mut rng, &space, 2, Rat::from_integer(1), 4);
        let mut m = ExpansionStructure::new(space.clone());
        m.insert(Q_SYMBOL, table).unwrap();
        let g = isometry_group(&space, None, 10_000).unwrap();
        let norm = q().normalized(Q01::frac(1, 4), Q01::frac(3, 4)).unwrap();
        let setup = FormulaGreySetup::new(g, &[m], norm, (vec![0], vec![1])).unwrap();
        let pool: Vec<usize> = (0..setup.instance.group.len()).collect();
        let all: Vec<usize> = (0..setup.structures.len()).collect();
        let eps = Q01::frac(rng.gen_range(0..3), 8);
        let prm = SearchParams { budget: 200_000, ..params(n, eps) };
        match ip_search(&setup.instance, &all, &pool, &prm) {
            Ok(SearchOutcome::Found(ip)) => {
                found += 1;
                let order = ip_to_order(&setup.instance, &ip).unwrap();
                verify_group_witness(&setup.instance, &order).unwrap();
                recheck_group_values(&setup, &order);
            }
            Ok(SearchOutcome::NotFound { .. }) => {}
            Err(StabilityError::BudgetExhausted(_)) => exhausted += 1,
            Err(e) => panic!("{e}"),
        }
    }
    assert!(found > 0);
    format!("subset pattern converted; fuzz: {found} IP witnesses of 100 instances all convert ({exhausted} over budget)")
}

fn a13() -> String {
    let p = q_pattern(12).unwrap();
    let seq: Vec<(Vec<usize>, Vec<usize>)> = (0..12).map(|i| (vec![p.left[i]], vec![p.right[i]])).collect();
    let q = split(Formula::rel(Q_SYMBOL, &["x", "y"]));
    let d = split(Formula::dist("x", "y"));
    let r = double_limit_check(&p.structure, &seq, &q, &[d], Q01::ZERO, 4).unwrap();
    let want = |v: &IteratedLimits, a: Rat, b: Rat| assert_eq!((v.rows_first, v.columns_first), (a, b));
    want(&r.phi.limits, Rat::from_integer(0), Rat::new(3, 4));
    want(&r.thetas[0].limits, Rat::new(1, 2), Rat::new(1, 2));
    assert!(r.instability_evidence);
    // the tails read straight from the table
    let m = &p.structure;
    for i in 4..8 {
        for j in 8..12 {
            assert_eq!(m.value(Q_SYMBOL, &[p.left[i], p.right[j]]).unwrap(), Q01::ZERO);
            assert_eq!(m.value(Q_SYMBOL, &[p.left[j], p.right[i]]).unwrap(), Q01::frac(3, 4));
        }
    }
    "Q: 0 and 3/4; d: 1/2 and 1/2".into()
}

fn a14() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let samples: Vec<u32> = (0..1000).map(|_| rng.gen_range(0..1u32 << 15)).collect();
    let failures = samples
        .par_iter()
        .filter(|&&bits| {
            let mut v = vec![vec![Q01::ZERO; 6]; 6];
            let mut k = 0;
            for a in 0..6 {
                for b in a + 1..6 {
                    v[a][b] = if bits >> k & 1 == 1 { Q01::ONE } else { Q01::ZERO };
                    k += 1;
                }
            }
            let Ok(c) = ramsey_extract(&v, Q01::ZERO, 3) else { return true };
            let [a, b, e] = c.indices[..] else { return true };
            let mono = a < b && b < e && v[a][b] == v[a][e] && v[a][e] == v[b][e];
            !(mono && verify_ramsey(&v, Q01::ZERO, &c) && c.guaranteed_from == Some(6))
        })
        .count();
    assert_eq!(failures, 0, "{failures} failures");
    "1000 colourings, 0 failures".into()
}

fn a15() -> String {
    let run = |name: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_urylab")).args(["scenario", name]).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let mut bytes = 0;
    for (name, _) in SCENARIOS {
        let a = run(name);
        let b = run(name);
        assert!(a == b, "{name} differs between runs");
        bytes += a.len();
    }
    format!("{} scenarios, {bytes} report bytes, identical on replay", SCENARIOS.len())
}
