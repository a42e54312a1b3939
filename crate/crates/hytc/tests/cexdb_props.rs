mod common;

use common::*;
use hytc::ast::{Env, Term, Type};
use hytc::cexdb::{CexStore, DbError, JudgmentKey};
use hytc::surface::parse_type;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;
use std::io::Write;

fn refined(var: &str, f: &F) -> Type {
    // render over `x`, then rename the binder
    let text = f.render().replace('x', var);
    parse_type(&format!("{{{var}:Int | {text}}}"), &[], opts()).unwrap()
}

fn positive() -> Type {
    parse_type("{x:Int | 0 < x}", &[], opts()).unwrap()
}

#[test]
fn entries_survive_a_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("db.jsonl");
    let key = JudgmentKey::new(&Env::new(), &Type::int(), &positive());
    {
        let mut db = CexStore::open(&path).unwrap();
        assert!(db.record(&key, &Type::int(), &positive(), &Term::int(-3), "p.lh").unwrap());
        // a second refutation of the same judgment keeps the first witness
        assert!(!db.record(&key, &Type::int(), &positive(), &Term::int(0), "q.lh").unwrap());
    }
    let db = CexStore::open(&path).unwrap();
    assert!(db.warnings.is_empty(), "{:?}", db.warnings);
    assert_eq!(db.len(), 1);
    assert!(db.refuted(&Env::new(), &Type::int(), &positive()));
    assert_eq!(db.lookup(&Env::new(), &Type::int(), &positive()).unwrap().witness, "(-3)");
    assert!(db.validate_all().iter().all(|(_, r)| r.is_ok()));
}

#[test]
fn a_damaged_line_is_skipped_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("db.jsonl");
    let key = JudgmentKey::new(&Env::new(), &Type::int(), &positive());
    CexStore::open(&path).unwrap().record(&key, &Type::int(), &positive(), &Term::int(-1), "p").unwrap();
    writeln!(std::fs::OpenOptions::new().append(true).open(&path).unwrap(), "{{not json").unwrap();
    let db = CexStore::open(&path).unwrap();
    assert_eq!(db.len(), 1);
    assert_eq!(db.warnings.len(), 1);
}

#[test]
fn a_stale_witness_is_dropped_on_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("db.jsonl");
    let key = JudgmentKey::new(&Env::new(), &Type::int(), &positive());
    CexStore::open(&path).unwrap().record(&key, &Type::int(), &positive(), &Term::int(-1), "p").unwrap();
    let text = std::fs::read_to_string(&path).unwrap().replace("\"witness\":\"(-1)\"", "\"witness\":\"7\"");
    std::fs::write(&path, text).unwrap();
    let db = CexStore::open(&path).unwrap();
    assert!(db.is_empty());
    assert_eq!(db.warnings.len(), 1);
}

#[test]
fn maybe_notes_name_the_programs_at_risk() {
    let mut db = CexStore::in_memory();
    let key = JudgmentKey::new(&Env::new(), &Type::int(), &positive());
    db.note_maybe(&key, "a.lh").unwrap();
    db.note_maybe(&key, "b.lh").unwrap();
    db.note_maybe(&key, "a.lh").unwrap();
    assert_eq!(db.affected_programs(&key), vec!["a.lh".to_string(), "b.lh".to_string()]);
    let other = JudgmentKey::new(&Env::new(), &Type::int(), &Type::int());
    assert!(db.affected_programs(&other).is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn only_failing_witnesses_are_recorded(seed in any::<u64>(), n in -20i64..20) {
        let f = gen_formula(&mut StdRng::seed_from_u64(seed), 1, 1, 2);
        let target = refined("x", &f);
        let key = JudgmentKey::new(&Env::new(), &Type::int(), &target);
        let mut db = CexStore::in_memory();
        let res = db.record(&key, &Type::int(), &target, &Term::int(n), "p");
        if f.eval(&[n]) {
            prop_assert!(matches!(res, Err(DbError::Validation(_))));
            prop_assert!(db.is_empty());
        } else {
            prop_assert!(res.unwrap());
            prop_assert!(db.refuted(&Env::new(), &Type::int(), &target));
        }
    }

    #[test]
    fn keys_ignore_binder_names(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let f = gen_formula(&mut rng, 1, 1, 2);
        let g = gen_formula(&mut rng, 1, 1, 2);
        let a = JudgmentKey::new(&Env::new(), &refined("x", &f), &refined("x", &g));
        let b = JudgmentKey::new(&Env::new(), &refined("u", &f), &refined("w", &g));
        prop_assert_eq!(&a, &b);
        // different judgments get different keys
        if f.render() != g.render() {
            let c = JudgmentKey::new(&Env::new(), &refined("x", &g), &refined("x", &f));
            prop_assert_ne!(a.hash, c.hash);
        }
    }

    #[test]
    fn keys_ignore_unrelated_bindings(seed in any::<u64>()) {
        let f = gen_formula(&mut StdRng::seed_from_u64(seed), 1, 1, 2);
        let env = Env::from_entries(vec![("junk".into(), Type::bool())]);
        let a = JudgmentKey::new(&env, &Type::int(), &refined("x", &f));
        let b = JudgmentKey::new(&Env::new(), &Type::int(), &refined("x", &f));
        prop_assert_eq!(a, b);
    }
}
