mod common;

use common::*;
use hytc::ast::term_has;
use hytc::htc::{compile, HtcOptions};
use hytc::prover::{implies, Certainty, ProverConfig};
use hytc::recon::{eliminate_free_vars, reconstruct, ReconError};
use hytc::surface::{parse_program, parse_term, print_program};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// An obligation whose consequent mentions only `x`.
fn x_only(seed: u64) -> Obligation {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut ob = gen_obligation(&mut rng);
    ob.n = 3;
    ob.refinements.resize(3, None);
    ob.refinements = (0..3).map(|i| rng.gen_bool(0.4).then(|| gen_formula(&mut rng, 3, i + 1, 1))).collect();
    ob.p = gen_formula(&mut rng, 3, 3, 2);
    ob.q = gen_formula(&mut rng, 3, 1, 1);
    ob
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn free_variable_elimination_preserves_verdicts(seed in any::<u64>()) {
        let ob = x_only(seed);
        let env = ob.env();
        let (p, q) = ob.terms();
        let (env2, p2) = eliminate_free_vars(&env, &p, &q);
        for (y, _) in env2.entries() {
            prop_assert!(hytc::ast::free_vars(&q).contains(y));
        }
        prop_assert_eq!(valid_in_box(&env, &p, &q, 4), valid_in_box(&env2, &p2, &q, 4));
        let before = implies(&env, &p, &q).0;
        let after = implies(&env2, &p2, &q).0;
        if before != Certainty::Maybe && after != Certainty::Maybe {
            prop_assert_eq!(before, after);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn reconstructed_programs_compile(seed in any::<u64>()) {
        let fp = gen_program(&mut StdRng::seed_from_u64(seed));
        let erased = erase_results(&fp.text);
        let prog = parse_program(&erased).unwrap();
        let r = reconstruct(&prog, &ProverConfig::default());
        let r = match r {
            Ok(r) => r,
            Err(e) => return Err(TestCaseError::fail(format!("{e}\n{erased}"))),
        };
        let out = compile(&r.program, &HtcOptions::default(), None);
        prop_assert!(out.accepted(), "{}\n{:?}", print_program(&r.program), out.rejections);
        // the printed program is ordinary source again
        prop_assert!(parse_program(&print_program(&r.program)).is_ok());
    }

    #[test]
    fn solutions_bound_their_lower_bounds(seed in any::<u64>()) {
        let fp = gen_program(&mut StdRng::seed_from_u64(seed));
        let prog = parse_program(&erase_results(&fp.text)).unwrap();
        let r = reconstruct(&prog, &ProverConfig::default()).unwrap();
        for ph in r.placeholders.iter().filter(|ph| !ph.recursive) {
            for lb in &ph.lower_bounds {
                if term_has(lb, &|t| matches!(t, hytc::ast::Term::Hole(_))) {
                    continue;
                }
                let c = implies(&ph.env, lb, &ph.solution).0;
                if term_has(&ph.solution, &|t| matches!(t, hytc::ast::Term::Exists(..))) {
                    // outside the linear fragment: only a refutation would be wrong
                    prop_assert_ne!(c, Certainty::No, "{} / {}", lb, ph.solution);
                } else {
                    prop_assert_eq!(c, Certainty::Yes, "{} / {}", lb, ph.solution);
                }
            }
        }
    }
}

#[test]
fn running_example_gives_positive_domain() {
    let src = "let id : x:? -> ? = fun (x:?) => x;\n\
               let w : {n:Int | n = 0} = 0;\n\
               let y : {n:Int | n > w} = 3;\n\
               id (id y)";
    let r = reconstruct(&parse_program(src).unwrap(), &ProverConfig::default()).unwrap();
    let id = &r.program.bindings[0];
    let hytc::ast::Type::Arrow(_, dom, _) = id.ty.as_ref().unwrap() else { panic!() };
    let hytc::ast::Type::Base(v, _, p) = &**dom else { panic!() };
    let pos = parse_term(&format!("0 < {v}"), std::slice::from_ref(v), opts()).unwrap();
    let env = hytc::ast::Env::from_entries(vec![(v.clone(), hytc::ast::Type::int())]);
    assert_eq!(implies(&env, p, &pos).0, Certainty::Yes);
    assert_eq!(implies(&env, &pos, p).0, Certainty::Yes);
}

#[test]
fn recursive_functions_get_checkable_types() {
    let src = "let rec sum (n:?) : ? = let z = n <= 0 in if z then 0 else n + sum (n - 1);\nsum 4";
    let r = reconstruct(&parse_program(src).unwrap(), &ProverConfig::default()).unwrap();
    let text = print_program(&r.program);
    assert!(!text.contains("exists"), "{text}");
    let out = compile(&r.program, &HtcOptions::default(), None);
    assert!(out.accepted(), "{:?}", out.rejections);
}

#[test]
fn boolean_into_integer_position_is_rejected() {
    let src = "let f : ? = fun (x:Int) => x + 1;\nf true";
    let r = reconstruct(&parse_program(src).unwrap(), &ProverConfig::default());
    assert!(matches!(r, Err(ReconError::ShapeFail { .. })), "{r:?}");
}

#[test]
fn fully_annotated_programs_come_back_unchanged() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..20 {
        let fp = gen_program(&mut rng);
        let prog = parse_program(&fp.text).unwrap();
        let r = reconstruct(&prog, &ProverConfig::default()).unwrap();
        // inner lets carry no annotation in the source, so compare the declarations
        for (a, b) in r.program.bindings.iter().zip(&prog.bindings) {
            assert!(hytc::ast::alpha_eq_type(a.ty.as_ref().unwrap(), b.ty.as_ref().unwrap()), "{}", fp.text);
        }
    }
}
