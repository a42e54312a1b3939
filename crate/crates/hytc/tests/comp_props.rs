mod common;

use common::*;
use hytc::comp::{comp_check, CompOutcome};
use hytc::prover::{Certainty, ProverConfig};
use hytc::surface::parse_program;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;
use std::path::PathBuf;

fn corpus(name: &str) -> hytc::surface::SourceProgram {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name);
    parse_program(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn search_tree_is_accepted_outright() {
    let r = comp_check(&corpus("bst.lh"), &ProverConfig::default());
    assert_eq!(r.outcome, CompOutcome::Accept, "{:?}", r.errors);
    assert_eq!(r.verdicts().1, 0);
    assert!(r.in_fragment);
}

#[test]
fn flipped_comparison_is_rejected_with_a_witness() {
    let r = comp_check(&corpus("bst_mutant.lh"), &ProverConfig::default());
    assert!(matches!(r.outcome, CompOutcome::Reject(_)), "{:?}", r.outcome);
    let bad = r.rejection().unwrap();
    assert_eq!(bad.certainty, Certainty::No);
    assert!(bad.witness_replays(), "{bad}");
}

#[test]
fn without_the_prover_nothing_is_decided() {
    let cfg = ProverConfig { enabled: false, ..Default::default() };
    let r = comp_check(&corpus("bst_mutant.lh"), &cfg);
    assert!(matches!(r.outcome, CompOutcome::Fallback(_)), "{:?}", r.outcome);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn well_typed_programs_are_never_rejected(seed in any::<u64>()) {
        let fp = gen_program(&mut StdRng::seed_from_u64(seed));
        let r = comp_check(&parse_program(&fp.text).unwrap(), &ProverConfig::default());
        prop_assert!(!matches!(r.outcome, CompOutcome::Reject(_)), "{}\n{}", fp.text, r.rejection().unwrap());
    }

    #[test]
    fn every_refutation_replays(seed in any::<u64>(), bound in -8i64..8) {
        // demanding results below a bound the bodies may exceed produces refutations
        let fp = gen_program(&mut StdRng::seed_from_u64(seed));
        let lit = if bound < 0 { format!("(0 - {})", -bound) } else { bound.to_string() };
        let broken = fp.text.replace(": {r:Int | ", &format!(": {{r:Int | r < {lit} && "));
        let r = comp_check(&parse_program(&broken).unwrap(), &ProverConfig::default());
        for o in r.obligations.iter().filter(|o| o.certainty == Certainty::No) {
            prop_assert!(o.witness_replays(), "{}", o);
        }
    }
}
