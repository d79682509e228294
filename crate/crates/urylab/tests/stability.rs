use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use urylab::formula::{inverse_modulus, ExpansionStructure, Formula, Signature};
use urylab::isometry::isometry_group;
use urylab::patterns::*;
use urylab::rational::{Q01, Rat};
use urylab::stability::*;

fn params(n: usize, eps: Q01) -> SearchParams {
    SearchParams { n, epsilon: eps, r1: Q01::frac(1, 4), r2: Q01::frac(3, 4), budget: 10_000_000 }
}

fn dist_xy() -> SplitFormula {
    SplitFormula::new(Formula::dist("x", "y"), &["x"], &["y"]).unwrap()
}

fn q_xy() -> SplitFormula {
    SplitFormula::new(Formula::rel(Q_SYMBOL, &["x", "y"]), &["x"], &["y"]).unwrap()
}

fn pure(space: &urylab::metric::FiniteMetricSpace) -> ExpansionFamily {
    ExpansionFamily::new(vec![ExpansionStructure::new(space.clone())], "pure metric").unwrap()
}

#[test]
fn four_point_order_witness() {
    let p = order_witness_space();
    let fam = pure(&p.space);
    let out = order_search(&fam, &dist_xy(), &TuplePools::all(4, 1, 1), &params(2, Q01::ZERO)).unwrap();
    let r = out.found().expect("witness");
    assert_eq!(verify_tuple_witness(&fam, &dist_xy(), None, r).unwrap(), 4);
    // the crafted assignment is itself a witness
    let crafted = WitnessReport {
        witness: Witness::Tuples { left: vec![vec![0], vec![1]], right: vec![vec![2], vec![3]] },
        ..r.clone()
    };
    let rebuilt = truncate_tuple_witness(&fam, &dist_xy(), None, &crafted, 2, Q01::ZERO).unwrap();
    verify_tuple_witness(&fam, &dist_xy(), None, &rebuilt).unwrap();
    assert_eq!(rebuilt.values, vec![vec![Q01::frac(3, 4), Q01::frac(1, 4)], vec![Q01::frac(3, 4); 2]]);
}

#[test]
fn extended_order_witness_at_three() {
    let p = order_pattern(3).unwrap();
    assert_eq!(p.space.len(), 6);
    let fam = pure(&p.space);
    let out = order_search(&fam, &dist_xy(), &TuplePools::all(6, 1, 1), &params(3, Q01::ZERO)).unwrap();
    let r = out.found().expect("witness");
    verify_tuple_witness(&fam, &dist_xy(), None, r).unwrap();
    for n in 1..=3 {
        for eps in [Q01::ZERO, Q01::frac(1, 8)] {
            let t = truncate_tuple_witness(&fam, &dist_xy(), None, r, n, eps).unwrap();
            verify_tuple_witness(&fam, &dist_xy(), None, &t).unwrap();
        }
    }
}

#[test]
fn constant_formula_has_no_single_pair_witness() {
    let p = order_witness_space();
    let fam = pure(&p.space);
    let phi = SplitFormula::new(Formula::Max(vec![Formula::Const(Q01::frac(1, 4)), Formula::Min(vec![Formula::dist("x", "y"), Formula::Const(Q01::ZERO)])]), &["x"], &["y"]).unwrap();
    let out = order_search(&fam, &phi, &TuplePools::all(4, 1, 1), &params(1, Q01::ZERO)).unwrap();
    assert!(matches!(out, SearchOutcome::NotFound { .. }));
}

#[test]
fn budget_exhaustion_is_an_error() {
    let p = order_pattern(3).unwrap();
    let fam = pure(&p.space);
    let tight = SearchParams { budget: 3, ..params(3, Q01::ZERO) };
    assert!(matches!(
        order_search(&fam, &dist_xy(), &TuplePools::all(6, 1, 1), &tight),
        Err(StabilityError::BudgetExhausted(3))
    ));
}

#[test]
fn type_closeness_excludes_platform_metric() {
    for (space, anchor) in [(order_pattern(3).unwrap().space, (0, 2)), (q_pattern(3).unwrap().structure.base().clone(), (0, 3))] {
        let fam = pure(&space);
        let pools = TuplePools::all(space.len(), 1, 1);
        for eps in [Q01::ZERO, Q01::frac(1, 8), Q01::frac(3, 16)] {
            for n in [2, 3] {
                let out = anchored_order_search(&fam, &dist_xy(), (&[anchor.0], &[anchor.1]), &pools, &params(n, eps)).unwrap();
                assert!(out.found().is_none(), "eps {eps} n {n}");
            }
        }
    }
}

#[test]
fn q_pattern_anchored_witness() {
    let p = q_pattern(3).unwrap();
    assert_eq!(p.certificate.lipschitz_pairs_checked, 36 * 35 / 2);
    let fam = ExpansionFamily::new(vec![p.structure.clone()], "Q-pattern").unwrap();
    let anchor = ([p.left[0]], [p.right[0]]);
    let out = anchored_order_search(&fam, &q_xy(), (&anchor.0, &anchor.1), &TuplePools::all(6, 1, 1), &params(3, Q01::ZERO)).unwrap();
    let r = out.found().expect("witness");
    assert_eq!(verify_tuple_witness(&fam, &q_xy(), Some((&anchor.0, &anchor.1)), r).unwrap(), 18);
    assert!(verify_tuple_witness(&fam, &q_xy(), None, r).is_err());
}

#[test]
fn predicate_stage_formulas_have_no_anchored_witness() {
    let st = predicate_stage(40).unwrap();
    let m = ExpansionStructure::with_predicate(st.space().clone(), st.predicate().unwrap()).unwrap();
    let sig = m.signature();
    let fam = ExpansionFamily::new(vec![m], "predicate stage").unwrap();
    let pools = TuplePools::all(st.len(), 1, 1);
    let formulas = pinned_qf_formulas();
    assert_eq!(formulas.len(), 20);
    for f in formulas {
        assert!(f.is_quantifier_free() && f.depth() <= 3);
        assert!(inverse_modulus(&f, &sig).unwrap() <= Rat::from_integer(2));
        let phi = SplitFormula::new(f.clone(), &["x"], &["y"]).unwrap();
        let out = anchored_order_search(&fam, &phi, (&[0], &[1]), &pools, &params(3, Q01::frac(1, 16))).unwrap();
        assert!(out.found().is_none(), "{f}");
    }
}

fn q_sequence(n: usize) -> (ExpansionStructure, Vec<(Vec<usize>, Vec<usize>)>) {
    let p = q_pattern(n).unwrap();
    let seq = (0..n).map(|i| (vec![p.left[i]], vec![p.right[i]])).collect();
    (p.structure, seq)
}

#[test]
fn double_limits_on_q_sequence() {
    let (m, seq) = q_sequence(12);
    let r = double_limit_check(&m, &seq, &q_xy(), &[dist_xy()], Q01::ZERO, 4).unwrap();
    assert_eq!(r.phi.limits.rows_first, Rat::from_integer(0));
    assert_eq!(r.phi.limits.columns_first, Rat::new(3, 4));
    assert_eq!(r.thetas[0].limits.rows_first, Rat::new(1, 2));
    assert_eq!(r.thetas[0].limits.columns_first, Rat::new(1, 2));
    assert!(r.instability_evidence);
    let only_phi = double_limit_check(&m, &seq, &q_xy(), &[], Q01::ZERO, 6).unwrap();
    assert!(only_phi.thetas.is_empty() && only_phi.phi_differs);
    assert!(matches!(
        double_limit_check(&m, &seq, &q_xy(), &[], Q01::ZERO, 7),
        Err(StabilityError::InvalidParams(_))
    ));
}

#[test]
fn oscillating_tails_are_inconclusive() {
    let v: Vec<Vec<Rat>> = (0..8).map(|i| (0..8).map(|j| Rat::new(((i + j) % 2) as i64, 1)).collect()).collect();
    assert!(matches!(iterated_limits(&v, Rat::new(1, 2), 3, "alt"), Err(StabilityError::InconclusiveTails { .. })));
    assert!(iterated_limits(&v, Rat::from_integer(1), 3, "alt").is_ok());
}

#[test]
fn stable_equivalence_reports() {
    let (m, seq) = q_sequence(12);
    let same = stable_equiv_check(&m, &seq, &q_xy(), &q_xy(), Q01::ZERO, 4).unwrap();
    assert_eq!(same.difference.rows_first, Rat::from_integer(0));
    assert!(!same.instability_evidence && same.transfer_holds);
    let r = stable_equiv_check(&m, &seq, &q_xy(), &dist_xy(), Q01::ZERO, 4).unwrap();
    assert_eq!(r.difference.rows_first, Rat::new(-1, 2));
    assert_eq!(r.difference.columns_first, Rat::new(1, 4));
    assert!(r.instability_evidence && r.transfer_holds);
    assert_eq!(r.phi_direct.as_ref(), Some(&r.phi));
}

/// Brute force over all triples, independent of the extractor.
fn has_monochromatic_triple(v: &[Vec<Q01>]) -> bool {
    let n = v.len();
    (0..n).any(|a| (a + 1..n).any(|b| (b + 1..n).any(|c| v[a][b] == v[a][c] && v[a][c] == v[b][c])))
}

fn coloring(bits: u32, n: usize) -> Vec<Vec<Q01>> {
    let mut v = vec![vec![Q01::ZERO; n]; n];
    let mut k = 0;
    for a in 0..n {
        for b in a + 1..n {
            v[a][b] = if bits >> k & 1 == 1 { Q01::ONE } else { Q01::ZERO };
            k += 1;
        }
    }
    v
}

#[test]
fn ramsey_on_every_six_point_coloring() {
    for bits in 0..1u32 << 15 {
        let v = coloring(bits, 6);
        assert!(has_monochromatic_triple(&v));
        let c = ramsey_extract(&v, Q01::ZERO, 3).unwrap();
        assert_eq!(c.guaranteed_from, Some(6));
        assert!(verify_ramsey(&v, Q01::ZERO, &c));
    }
    // the 5-cycle coloring has no monochromatic triple
    let mut pent = vec![vec![Q01::ZERO; 5]; 5];
    for a in 0..5 {
        for b in a + 1..5 {
            pent[a][b] = if b - a == 1 || b - a == 4 { Q01::ONE } else { Q01::ZERO };
        }
    }
    assert!(!has_monochromatic_triple(&pent));
    assert!(matches!(ramsey_extract(&pent, Q01::ZERO, 3), Err(StabilityError::TargetLengthInfeasible { .. })));
}

#[test]
fn ramsey_constant_and_alternating() {
    let v = vec![vec![Q01::frac(1, 3); 7]; 7];
    let c = ramsey_longest(&v, Q01::ZERO).unwrap();
    assert_eq!(c.indices, (0..7).collect::<Vec<_>>());
    assert_eq!(c.band_low, c.band_high);
    let alt: Vec<Vec<Q01>> = (0..6).map(|a| (0..6).map(|b| if (a + b) % 2 == 0 { Q01::ZERO } else { Q01::ONE }).collect()).collect();
    let c = ramsey_extract(&alt, Q01::ZERO, 3).unwrap();
    assert!(verify_ramsey(&alt, Q01::ZERO, &c));
    let mut bad = c.clone();
    bad.values[0].2 = Q01::frac(1, 2);
    assert!(!verify_ramsey(&alt, Q01::ZERO, &bad));
}

fn q_setup(n: usize) -> (BlockPattern, FormulaGreySetup) {
    let p = q_pattern(n).unwrap();
    let g = isometry_group(p.structure.base(), None, 10_000).unwrap();
    let norm = q_xy().normalized(Q01::frac(1, 4), Q01::frac(3, 4)).unwrap();
    let setup = FormulaGreySetup::new(g, &[p.structure.clone()], norm, (vec![p.left[0]], vec![p.right[0]])).unwrap();
    (p, setup)
}

#[test]
fn identity_pool_has_no_group_witness() {
    let (_, setup) = q_setup(2);
    let id = setup.instance.group.identity();
    for n in 2..=3 {
        let out = group_order_search(&setup.instance, &[0], &[id], &params(n, Q01::frac(1, 8))).unwrap();
        assert!(out.found().is_none());
    }
}

#[test]
fn round_trip_between_tuple_and_group_witnesses() {
    let (p, setup) = q_setup(3);
    assert_eq!(setup.instance.group.len(), 72);
    assert_eq!(setup.slope, Rat::from_integer(2));
    let fam = ExpansionFamily::new(vec![p.structure.clone()], "Q-pattern").unwrap();
    let anchor = ([p.left[0]], [p.right[0]]);
    let anchored = anchored_order_search(&fam, &q_xy(), (&anchor.0, &anchor.1), &TuplePools::all(6, 1, 1), &params(3, Q01::ZERO))
        .unwrap()
        .found()
        .unwrap()
        .clone();
    let pool: Vec<usize> = (0..setup.instance.group.len()).collect();
    let up = anchored_to_group(&setup, &fam, &q_xy(), &anchored, &pool).unwrap();
    assert_eq!(up.displacement, Q01::ZERO);
    assert_eq!(up.epsilon_out, Q01::ZERO);
    verify_group_witness(&setup.instance, &up.report).unwrap();
    let down = group_to_anchored(&setup, &up.report).unwrap();
    assert_eq!(down.epsilon_out, Q01::ZERO);
    verify_tuple_witness(&setup.family().unwrap(), &setup.phi, Some((&anchor.0, &anchor.1)), &down.report).unwrap();

    // searching directly at the group level, then converting down
    let all: Vec<usize> = (0..setup.structures.len()).collect();
    let found = group_order_search(&setup.instance, &all, &pool, &params(3, Q01::ZERO)).unwrap();
    let g = found.found().expect("group witness");
    let down = group_to_anchored(&setup, g).unwrap();
    assert!(down.checked > 0);
    for n in 1..=3 {
        let t = truncate_group_witness(&setup.instance, g, n, Q01::frac(1, 16)).unwrap();
        verify_group_witness(&setup.instance, &t).unwrap();
    }
}

#[test]
fn relaxed_group_witness_doubles_epsilon() {
    let (_, setup) = q_setup(2);
    let pool: Vec<usize> = (0..setup.instance.group.len()).collect();
    let all: Vec<usize> = (0..setup.structures.len()).collect();
    let eps = Q01::frac(1, 16);
    let g = group_order_search(&setup.instance, &all, &pool, &params(2, eps)).unwrap().found().unwrap().clone();
    let down = group_to_anchored(&setup, &g).unwrap();
    assert_eq!(down.epsilon_out, Q01::frac(1, 8));
}

#[test]
fn ip_witnesses_convert_to_order_witnesses() {
    let p = ip_pattern(2).unwrap();
    let g = isometry_group(p.structure.base(), None, 10_000).unwrap();
    assert_eq!(g.len(), 48);
    let norm = q_xy().normalized(Q01::frac(1, 4), Q01::frac(3, 4)).unwrap();
    let setup = FormulaGreySetup::new(g, &[p.structure.clone()], norm, (vec![p.left[0]], vec![p.right[0]])).unwrap();
    let pool: Vec<usize> = (0..setup.instance.group.len()).collect();
    let all: Vec<usize> = (0..setup.structures.len()).collect();
    for n in 1..=2 {
        let ip = ip_search(&setup.instance, &all, &pool, &params(n, Q01::ZERO)).unwrap();
        let ip = ip.found().expect("ip witness");
        verify_group_witness(&setup.instance, ip).unwrap();
        let order = ip_to_order(&setup.instance, ip).unwrap();
        assert_eq!(order.params, ip.params);
        verify_group_witness(&setup.instance, &order).unwrap();
    }
}

#[test]
fn understated_subgroup_is_rejected() {
    let (_, setup) = q_setup(2);
    let mut inst = setup.instance.clone();
    let zero = vec![Q01::ZERO; inst.group.len()];
    inst.h = urylab::grey::GreySubgroup::new(&inst.group, zero.clone(), "trivial").unwrap();
    inst.h_prime = urylab::grey::GreySubgroup::new(&inst.group, zero, "trivial").unwrap();
    let pool: Vec<usize> = (0..inst.group.len()).collect();
    assert!(matches!(
        group_order_search(&inst, &[0], &pool, &params(2, Q01::ZERO)),
        Err(StabilityError::InvarianceNotCertified(_))
    ));
}

#[test]
fn seeded_ip_fuzz_conversions_verify() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut found = 0;
    for _ in 0..40 {
        let n = rng.gen_range(1..=2);
        let space = urylab::sample::random_space(&mut rng, 4, 4, "p");
        let table = urylab::formula::random_table(&mut rng, &space, 2, Rat::from_integer(1), 4);
        let mut m = ExpansionStructure::new(space.clone());
        m.insert(Q_SYMBOL, table).unwrap();
        let g = isometry_group(&space, None, 10_000).unwrap();
        let norm = q_xy().normalized(Q01::frac(1, 4), Q01::frac(3, 4)).unwrap();
        let setup = FormulaGreySetup::new(g, &[m], norm, (vec![0], vec![1])).unwrap();
        let pool: Vec<usize> = (0..setup.instance.group.len()).collect();
        let all: Vec<usize> = (0..setup.structures.len()).collect();
        let eps = Q01::frac(rng.gen_range(0..3), 8);
        let p = SearchParams { budget: 200_000, ..params(n, eps) };
        if let Ok(SearchOutcome::Found(ip)) = ip_search(&setup.instance, &all, &pool, &p) {
            found += 1;
            let order = ip_to_order(&setup.instance, &ip).unwrap();
            verify_group_witness(&setup.instance, &order).unwrap();
        }
    }
    assert!(found > 0);
}

#[test]
fn sig_free_formula_rejected_by_split() {
    let _ = Signature::predicate_only();
    assert!(SplitFormula::new(Formula::dist("x", "z"), &["x"], &["y"]).is_err());
    assert!(SplitFormula::new(Formula::dist("x", "y"), &["x"], &["x"]).is_err());
}
