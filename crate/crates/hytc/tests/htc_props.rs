mod common;

use common::*;
use hytc::ast::Term;
use hytc::eval::{evaluate, StepOutcome};
use hytc::htc::{compile, CompileReport, HtcOptions};
use hytc::prover::ProverConfig;
use hytc::surface::{parse_program, SourceProgram};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::path::PathBuf;

fn opts(prover: bool) -> HtcOptions {
    HtcOptions { prover: ProverConfig { enabled: prover, ..Default::default() }, recheck: true }
}

fn corpus() -> Vec<(String, SourceProgram)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.extension().is_some_and(|x| x == "lh") {
            let text = std::fs::read_to_string(&path).unwrap();
            out.push((path.display().to_string(), parse_program(&text).unwrap()));
        }
    }
    out
}

/// A fuzzed program the prover verifies without casts.
fn verified_program(rng: &mut StdRng) -> (FuzzProgram, SourceProgram) {
    loop {
        let fp = gen_program(rng);
        let prog = parse_program(&fp.text).unwrap_or_else(|e| panic!("{e}\n{}", fp.text));
        let r = compile(&prog, &opts(true), None);
        if r.accepted() && r.casts.is_empty() {
            return (fp, prog);
        }
    }
}

fn run(r: &CompileReport, args: &[i64]) -> StepOutcome {
    let main = Term::apps(r.output.main.clone(), args.iter().map(|a| Term::int(*a)));
    let prog = SourceProgram { bindings: r.output.bindings.clone(), main };
    evaluate(&prog.to_term(), 200_000).unwrap()
}

#[test]
fn corpus_outputs_recompile_without_casts() {
    for (name, prog) in corpus() {
        for prover in [true, false] {
            let r = compile(&prog, &opts(prover), None);
            if r.accepted() {
                assert_eq!(r.recheck_casts, Some(0), "{name} (prover {prover})");
            }
        }
    }
}

#[test]
fn fuzzed_programs_are_mostly_verified() {
    // the generator is only useful if the prover settles most of what it makes
    let mut rng = StdRng::seed_from_u64(7);
    let mut ok = 0;
    for _ in 0..100 {
        let fp = gen_program(&mut rng);
        let r = compile(&parse_program(&fp.text).unwrap(), &opts(true), None);
        assert!(r.accepted(), "well-typed program rejected:\n{}\n{:?}", fp.text, r.rejections);
        if r.casts.is_empty() {
            ok += 1;
        }
    }
    assert!(ok >= 50, "only {ok} of 100 verified");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn redundant_casts_never_fail(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let (fp, prog) = verified_program(&mut rng);
        let r = compile(&prog, &opts(false), None);
        prop_assert!(r.accepted());
        for _ in 0..10 {
            let args = fp.inputs(&mut rng);
            let out = run(&r, &args);
            prop_assert!(!matches!(out, StepOutcome::FailedCast(_)), "{}\n{:?}\n{:?}", fp.text, args, out);
        }
    }

    #[test]
    fn cast_insertion_is_idempotent(seed in any::<u64>(), prover in any::<bool>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let fp = gen_program(&mut rng);
        let r = compile(&parse_program(&fp.text).unwrap(), &opts(prover), None);
        prop_assert!(r.accepted());
        prop_assert_eq!(r.recheck_casts, Some(0), "{}", fp.text);
    }

    #[test]
    fn casts_do_not_change_results(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let (fp, prog) = verified_program(&mut rng);
        let plain = compile(&prog, &opts(true), None);
        let checked = compile(&prog, &opts(false), None);
        let args = fp.inputs(&mut rng);
        prop_assert_eq!(run(&plain, &args), run(&checked, &args));
    }

    #[test]
    fn disabling_the_prover_only_adds_casts(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let fp = gen_program(&mut rng);
        let prog = parse_program(&fp.text).unwrap();
        let with = compile(&prog, &opts(true), None);
        let without = compile(&prog, &opts(false), None);
        prop_assert!(without.accepted());
        prop_assert!(with.casts.len() <= without.casts.len());
        prop_assert_eq!(with.verdicts().1 <= without.verdicts().1, true);
    }

    #[test]
    fn out_of_domain_inputs_are_caught_by_a_cast(seed in any::<u64>(), below in 1i64..10) {
        // a Dynamic argument is checked against the precondition by a cast
        let mut rng = StdRng::seed_from_u64(seed);
        let (fp, _) = verified_program(&mut rng);
        let wrapped = format!("{}\n", fp.text.rsplit_once('\n').unwrap().0);
        let entry = fp.text.lines().last().unwrap();
        let main = if fp.two {
            format!("let go (a:Dynamic) (b:Int) : Int = {entry} a b + 0;\ngo")
        } else {
            format!("let go (a:Dynamic) : Int = {entry} a + 0;\ngo")
        };
        let prog = parse_program(&format!("{wrapped}{main}")).unwrap();
        let r = compile(&prog, &opts(true), None);
        prop_assert!(r.accepted(), "{:?}", r.rejections);
        prop_assert!(!r.casts.is_empty());
        let mut args = fp.inputs(&mut rng);
        args[0] = fp.lower - below;
        prop_assert!(matches!(run(&r, &args), StepOutcome::FailedCast(_)));
        args[0] = fp.lower + rng.gen_range(0..5);
        prop_assert!(matches!(run(&r, &args), StepOutcome::Value(_)));
    }
}
