//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

#[path = "../../hytc/tests/common/mod.rs"]
mod common;

use common::*;
use hytc::ast::{Env, Term, Type};
use hytc::eval::{evaluate, StepOutcome};
use hytc::htc::{compile, HtcOptions};
use hytc::prover::{implies, replay, Certainty, ProverConfig};
use hytc::recon::reconstruct;
use hytc::surface::{parse_program, parse_term, SourceProgram};
use rand::rngs::StdRng;
use rand::SeedableRng;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn hytc(db: &Path, args: &[&str]) -> Run {
    let Output { status, stdout, stderr } = Command::new(env!("CARGO_BIN_EXE_hytc"))
        .arg("--db")
        .arg(db)
        .args(args)
        .output()
        .expect("spawn hytc");
    Run {
        code: status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&stdout).into_owned(),
        stderr: String::from_utf8_lossy(&stderr).into_owned(),
    }
}

fn json(r: &Run) -> serde_json::Value {
    serde_json::from_str(&r.stdout).unwrap_or(serde_json::Value::Null)
}

fn casts(v: &serde_json::Value) -> usize {
    v["casts"].as_array().map_or(usize::MAX, |a| a.len())
}

fn maybes(v: &serde_json::Value) -> u64 {
    v["verdicts"]["maybe"].as_u64().unwrap_or(u64::MAX)
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Outcome plus a line of detail.
type Verdict = (bool, String);

fn serialize_matrix(tmp: &Path) -> Verdict {
    let db = tmp.join("c1.jsonl");
    let start = Instant::now();
    let nm = json(&hytc(&db, &["--json", "check", path(&corpus("serialize_nm.lh"))]));
    let mn = json(&hytc(&db, &["--json", "check", path(&corpus("serialize_mn.lh"))]));
    let runs: Vec<i32> = [["2", "3"], ["5", "1"]]
        .iter()
        .map(|a| hytc(&db, &["run", path(&corpus("serialize_mn.lh")), a[0], a[1]]).code)
        .collect();
    let mm = hytc(&db, &["check", path(&corpus("serialize_mm.lh"))]).code;
    let took = start.elapsed();
    let ok = casts(&nm) == 0
        && casts(&mn) >= 1
        && casts(&mn) != usize::MAX
        && runs.iter().all(|c| *c == 0)
        && mm == 2
        && took < Duration::from_secs(1);
    (ok, format!("n*m {} casts, m*n {} casts, runs exit {:?}, m*m exit {mm}, {took:.2?}", casts(&nm), casts(&mn), runs))
}

fn reconstruction_example(tmp: &Path) -> Verdict {
    let start = Instant::now();
    let cli = hytc(&tmp.join("c2.jsonl"), &["reconstruct", path(&corpus("recon_example.lh"))]);
    let src = std::fs::read_to_string(corpus("recon_example.lh")).unwrap();
    let r = match reconstruct(&parse_program(&src).unwrap(), &ProverConfig::default()) {
        Ok(r) => r,
        Err(e) => return (false, format!("reconstruction failed: {e}")),
    };
    let Some(Type::Arrow(_, dom, _)) = r.program.bindings.first().and_then(|b| b.ty.clone()) else {
        return (false, "id has no arrow type".into());
    };
    let Type::Base(v, _, p) = &*dom else {
        return (false, "id's domain is not a base type".into());
    };
    let pos = parse_term(&format!("0 < {v}"), std::slice::from_ref(v), opts()).unwrap();
    let env = Env::from_entries(vec![(v.clone(), Type::int())]);
    let fwd = implies(&env, p, &pos).0;
    let back = implies(&env, &pos, p).0;
    let took = start.elapsed();
    let ok = cli.code == 0 && fwd == Certainty::Yes && back == Certainty::Yes && took < Duration::from_secs(1);
    (ok, format!("domain {{{v}:Int | {p}}}, => {fwd:?}, <= {back:?}, cli exit {}, {took:.2?}", cli.code))
}

fn idempotence(tmp: &Path) -> Verdict {
    let mut checked = 0;
    let mut bad = Vec::new();
    let mut names: Vec<PathBuf> = std::fs::read_dir(corpus(""))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "lh"))
        .collect();
    names.sort();
    for file in names {
        for prover in [true, false] {
            let db = tmp.join(format!("c3-{checked}.jsonl"));
            let mut args = vec!["--json"];
            if !prover {
                args.push("--no-prover");
            }
            let first = hytc(&db, &[args.as_slice(), &["check", path(&file)]].concat());
            if first.code != 0 {
                continue;
            }
            let out = tmp.join(format!("c3-{checked}.lh"));
            std::fs::write(&out, json(&first)["output"].as_str().unwrap_or_default()).unwrap();
            let again = json(&hytc(&db, &[args.as_slice(), &["check", path(&out)]].concat()));
            checked += 1;
            if casts(&again) != 0 {
                bad.push(format!("{} ({})", file.display(), casts(&again)));
            }
        }
    }
    (checked > 0 && bad.is_empty(), format!("{checked} recompilations, nonzero: {bad:?}"))
}

fn redundant_casts() -> Verdict {
    let mut rng = StdRng::seed_from_u64(2024);
    let no_prover = HtcOptions { prover: ProverConfig { enabled: false, ..Default::default() }, recheck: false };
    let (mut runs, mut failed, mut total_casts) = (0, 0, 0);
    for _ in 0..200 {
        let fp = gen_program(&mut rng);
        let prog = parse_program(&fp.text).unwrap();
        let r = compile(&prog, &no_prover, None);
        if !r.accepted() {
            return (false, format!("well-typed program rejected:\n{}", fp.text));
        }
        total_casts += r.casts.len();
        for _ in 0..10 {
            let main = Term::apps(r.output.main.clone(), fp.inputs(&mut rng).into_iter().map(Term::int));
            let whole = SourceProgram { bindings: r.output.bindings.clone(), main }.to_term();
            runs += 1;
            if matches!(evaluate(&whole, 200_000), Ok(StepOutcome::FailedCast(_))) {
                failed += 1;
            }
        }
    }
    (failed == 0, format!("{runs} runs over {total_casts} casts, {failed} failed casts"))
}

fn prover_tables(tmp: &Path) -> Verdict {
    let mut ok = true;
    let mut rows = Vec::new();
    for name in ["bst.lh", "arith.lh", "mergesort.lh"] {
        let db = tmp.join(format!("c5-{name}.jsonl"));
        let start = Instant::now();
        let with = json(&hytc(&db, &["--json", "check", path(&corpus(name))]));
        let took = start.elapsed();
        let without = json(&hytc(&db, &["--json", "--no-prover", "check", path(&corpus(name))]));
        ok &= maybes(&with) == 0
            && casts(&with) == 0
            && maybes(&without) > 0
            && maybes(&without) != u64::MAX
            && took < Duration::from_secs(5);
        rows.push(format!(
            "{name}: without {} maybe/{} casts, with {} maybe/{} casts in {took:.2?}",
            maybes(&without),
            casts(&without),
            maybes(&with),
            casts(&with)
        ));
    }
    (ok, rows.join("; "))
}

fn one_shot_failures(tmp: &Path) -> Verdict {
    let db = tmp.join("c6.jsonl");
    let file = corpus("dyn_bad.lh");
    let run = hytc(&db, &["run", path(&file)]);
    let check = hytc(&db, &["check", path(&file)]);
    let validate = hytc(&db, &["db", "validate"]);
    let ok = run.code == 1 && check.code == 2 && validate.code == 0 && validate.stdout.contains("1 valid, 0 invalid");
    let detail = format!("run exit {}, check exit {}, validate exit {} ({})", run.code, check.code, validate.code, validate.stdout.trim().replace('\n', "; "));
    if !ok {
        return (false, format!("{detail}\n{}{}", run.stderr, check.stderr));
    }
    (ok, detail)
}

fn prover_soundness() -> Verdict {
    let mut rng = StdRng::seed_from_u64(7);
    let (mut yes, mut no, mut maybe, mut wrong) = (0, 0, 0, 0);
    for _ in 0..1000 {
        let ob = gen_obligation(&mut rng);
        let env = ob.env();
        let (p, q) = ob.terms();
        let (c, w) = implies(&env, &p, &q);
        match c {
            Certainty::Yes => {
                yes += 1;
                if ob.counterexample(8).is_some() {
                    wrong += 1;
                }
            }
            Certainty::No => {
                no += 1;
                if !w.is_some_and(|w| replay(&env, &p, &q, &w)) {
                    wrong += 1;
                }
            }
            Certainty::Maybe => maybe += 1,
        }
    }
    (wrong == 0, format!("{yes} yes, {no} no, {maybe} maybe (rate {:.1}%), {wrong} disagreements", maybe as f64 / 10.0))
}

fn compositional(tmp: &Path) -> Verdict {
    let good = hytc(&tmp.join("c8a.jsonl"), &["comp-check", path(&corpus("bst.lh"))]);
    let bad = hytc(&tmp.join("c8b.jsonl"), &["comp-check", path(&corpus("bst_mutant.lh"))]);
    let accepted = good.code == 0 && good.stdout.contains("accepted") && good.stdout.contains(" 0 maybe");
    let rejected = bad.code == 2 && bad.stderr.contains("witness replays: true");
    (
        accepted && rejected,
        format!("bst: exit {} ({}), mutant: exit {}, witness replays {}", good.code, good.stdout.trim(), bad.code, rejected),
    )
}

fn fair_parallel_or() -> Verdict {
    let omega = parse_term("(fun (x:Dynamic) => x x) (fun (x:Dynamic) => x x)", &[], opts()).unwrap();
    let results: Vec<bool> = [Term::por(Term::tt(), omega.clone()), Term::por(omega, Term::tt())]
        .iter()
        .map(|t| matches!(evaluate(t, 4), Ok(StepOutcome::Value(v)) if v == Term::tt()))
        .collect();
    (results.iter().all(|b| *b), format!("true|omega {}, omega|true {}", results[0], results[1]))
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let checks: Vec<(&str, Verdict)> = vec![
        ("serializeMatrix casts and rejection", serialize_matrix(t)),
        ("reconstruction running example", reconstruction_example(t)),
        ("cast insertion is idempotent", idempotence(t)),
        ("redundant casts never fail", redundant_casts()),
        ("prover removes all casts on bst/arith/mergesort", prover_tables(t)),
        ("run-time failures are remembered", one_shot_failures(t)),
        ("prover agrees with enumeration", prover_soundness()),
        ("compositional check on bst", compositional(t)),
        ("parallel-or is fair", fair_parallel_or()),
    ];
    let mut failed = 0;
    for (i, (name, (ok, detail))) in checks.iter().enumerate() {
        println!("{} {}: {name}: {detail}", if *ok { "PASS" } else { "FAIL" }, i + 1);
        failed += usize::from(!ok);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
