mod common;

use common::*;
use hytc::ast::{Env, Term};
use hytc::prover::{implies, replay, Certainty, Prover, ProverConfig};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn verdicts_agree_with_enumeration(seed in any::<u64>()) {
        let ob = gen_obligation(&mut StdRng::seed_from_u64(seed));
        let env = ob.env();
        let (p, q) = ob.terms();
        let (c, w) = implies(&env, &p, &q);
        let cex = ob.counterexample(8);
        match c {
            Certainty::Yes => prop_assert!(cex.is_none(), "Yes but {:?} refutes {}", cex, q),
            Certainty::No => {
                let w = w.expect("No comes with a witness");
                prop_assert!(replay(&env, &p, &q, &w), "witness {} does not replay", w);
            }
            Certainty::Maybe => {}
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn every_formula_implies_itself(seed in any::<u64>()) {
        let ob = gen_obligation(&mut StdRng::seed_from_u64(seed));
        let (p, _) = ob.terms();
        prop_assert_eq!(implies(&ob.env(), &p, &p).0, Certainty::Yes);
    }

    #[test]
    fn conjunction_and_disjunction_are_decided(seed in any::<u64>()) {
        let ob = gen_obligation(&mut StdRng::seed_from_u64(seed));
        let env = ob.env();
        let (p, q) = ob.terms();
        prop_assert_eq!(implies(&env, &Term::and(p.clone(), q.clone()), &p).0, Certainty::Yes);
        prop_assert_eq!(implies(&env, &p, &Term::or(p.clone(), q.clone())).0, Certainty::Yes);
    }

    #[test]
    fn disabled_prover_never_refutes(seed in any::<u64>()) {
        let ob = gen_obligation(&mut StdRng::seed_from_u64(seed));
        let (p, q) = ob.terms();
        let off = Prover::new(ProverConfig { enabled: false, ..Default::default() });
        prop_assert_ne!(off.implies(&ob.env(), &p, &q).0, Certainty::No);
    }

    #[test]
    fn an_unsatisfiable_antecedent_implies_anything(seed in any::<u64>(), k in -20i64..20) {
        let ob = gen_obligation(&mut StdRng::seed_from_u64(seed));
        let (_, q) = ob.terms();
        let scope = ob.scope();
        let bottom = hytc::surface::parse_term(&format!("x < {k} && {k} < x"), &scope, opts()).unwrap();
        prop_assert_eq!(implies(&ob.env(), &bottom, &q).0, Certainty::Yes);
    }
}

#[test]
fn a_false_linear_claim_is_refuted_with_a_replayable_witness() {
    let env = Env::from_entries(vec![("x".into(), hytc::ast::Type::int())]);
    let p = hytc::surface::parse_term("0 <= x", &["x".into()], opts()).unwrap();
    let q = hytc::surface::parse_term("x < 5", &["x".into()], opts()).unwrap();
    let (c, w) = implies(&env, &p, &q);
    assert_eq!(c, Certainty::No);
    assert!(replay(&env, &p, &q, &w.unwrap()));
}

#[test]
fn an_empty_binding_makes_the_implication_vacuous() {
    // 4x = 7 has no integer solution, so nothing can refute the claim about y
    let x = hytc::surface::parse_type("{x:Int | 6 - 2 * x = 2 * x - 1}", &[], opts()).unwrap();
    let env = Env::from_entries(vec![("x".into(), x), ("y".into(), hytc::ast::Type::int())]);
    let scope = vec!["x".to_string(), "y".to_string()];
    let p = hytc::surface::parse_term("2 * y + 1 <= y + 5", &scope, opts()).unwrap();
    let q = hytc::surface::parse_term("4 <= 1", &scope, opts()).unwrap();
    assert_eq!(implies(&env, &p, &q).0, Certainty::Yes);
}
