use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use urylab::formula::*;
use urylab::grey::*;
use urylab::isometry::{isometry_group, IsometryGroup};
use urylab::metric::FiniteMetricSpace;
use urylab::rational::{Q01, Rat};
use urylab::sample::random_lipschitz;
use urylab::stage::hamming_template;

fn cube() -> (FiniteMetricSpace, IsometryGroup) {
    let c = hamming_template(3, 2);
    let g = isometry_group(&c, None, 100).unwrap();
    (c, g)
}

fn random_structure(rng: &mut ChaCha8Rng, c: &FiniteMetricSpace) -> ExpansionStructure {
    let p = random_lipschitz(rng, c, 6);
    let mut m = ExpansionStructure::with_predicate(c.clone(), &p).unwrap();
    m.insert("R", random_table(rng, c, 2, Rat::new(3, 2), 6)).unwrap();
    m
}

#[test]
fn stabilizers_are_subgroups() {
    let (c, g) = cube();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..100 {
        let q = Rat::new(rng.gen_range(1..=8), rng.gen_range(1..=4));
        let k = rng.gen_range(1..=3);
        let s: Vec<usize> = (0..k).map(|_| rng.gen_range(0..c.len())).collect();
        let h = grey_stabilizer(&g, &c, q, &s).unwrap();
        assert!(verify_subgroup(&g, h.values()).unwrap().is_ok());
    }
}

#[test]
fn coset_and_conjugate_tables_match_definitions() {
    let (c, g) = cube();
    let h = grey_stabilizer(&g, &c, Rat::new(3, 2), &[1, 6]).unwrap();
    for g0 in 0..g.len() {
        let cs = coset(&g, &h, g0).unwrap();
        let cj = conjugate(&g, &h, g0).unwrap();
        for x in 0..g.len() {
            assert_eq!(cs.values[x], h.at(g.mul(x, g.inv(g0))));
            assert_eq!(cj.at(x), h.at(g.mul(g.mul(g0, x), g.inv(g0))));
        }
    }
}

#[test]
fn closure_members_are_subgroups() {
    let (c, g) = cube();
    let gens = vec![
        grey_stabilizer(&g, &c, Rat::from_integer(1), &[0]).unwrap(),
        grey_stabilizer(&g, &c, Rat::from_integer(2), &[3, 5]).unwrap(),
    ];
    let fam = closure_family(&g, &gens, &[1, 7, 20], &[Rat::new(1, 2), Rat::from_integer(3)], 2, 10_000).unwrap();
    assert!(!fam.depth_exceeded);
    assert_eq!(fam.depth_reached, 2);
    for h in &fam.subgroups {
        assert!(verify_subgroup(&g, h.values()).unwrap().is_ok());
    }
    // closed under pairwise max of its generators
    for a in &gens {
        for b in &gens {
            let m = max_subgroup(&g, &[a, b]).unwrap();
            assert!(fam.subgroups.iter().any(|h| h.values() == m.values()));
        }
    }
    let capped = closure_family(&g, &gens, &[1, 7, 20], &[Rat::new(1, 2)], 3, 5).unwrap();
    assert!(capped.depth_exceeded);
}

#[test]
fn formula_subsets_are_stabilizer_invariant() {
    let (c, g) = cube();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let seeds: Vec<ExpansionStructure> = (0..2).map(|_| random_structure(&mut rng, &c)).collect();
    let (structures, action) = structure_orbits(&g, &seeds).unwrap();
    let sig = seeds[0].signature();
    let vars = vec!["x".to_string(), "y".to_string()];
    for _ in 0..50 {
        let phi = random_formula(&mut rng, &sig, &vars, 4);
        let k = inverse_modulus(&phi, &sig).unwrap();
        let params: Vec<usize> = (0..2).map(|_| rng.gen_range(0..c.len())).collect();
        let subset = formula_subset(&phi, &vars, &params, &structures).unwrap();
        let h = grey_stabilizer(&g, &c, k, &params).unwrap();
        assert!(invariance_check(&subset, &h, &action).unwrap().is_ok(), "{phi}");
    }
}

#[test]
fn understated_slope_is_caught() {
    let (c, g) = cube();
    let p: Vec<Q01> = (0..c.len()).map(|x| c.d(0, x)).collect();
    let m = ExpansionStructure::with_predicate(c.clone(), &p).unwrap();
    let (structures, action) = structure_orbits(&g, &[m]).unwrap();
    let phi: Formula = "(P x)".parse().unwrap();
    let vars = vec!["x".to_string()];
    let subset = formula_subset(&phi, &vars, &[0], &structures).unwrap();
    let entries = vec![
        GreyBasisEntry { subset: subset.clone(), subgroup: grey_stabilizer(&g, &c, Rat::from_integer(1), &[0]).unwrap() },
        GreyBasisEntry { subset, subgroup: grey_stabilizer(&g, &c, Rat::new(1, 2), &[0]).unwrap() },
    ];
    let r = good_basis_check(&entries, &action).unwrap();
    assert_eq!(r.certified, vec![0]);
    assert_eq!(r.failures.len(), 1);
    assert_eq!(r.failures[0].0, 1);
}

#[test]
fn broken_action_rejected() {
    let (_, g) = cube();
    let mut table: Vec<Vec<usize>> = g.elements().iter().map(|e| e.map().to_vec()).collect();
    table[1].swap(0, 1);
    assert!(Action::new(&g, table).is_err());
}
