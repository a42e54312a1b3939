//! `hytc`: check, run, reconstruct and compositionally check `.lh` programs.

use clap::{Args, Parser, Subcommand};
use hytc::ast::{Env, Term};
use hytc::cexdb::{CexStore, JudgmentKey, DEFAULT_DB_PATH};
use hytc::comp::{comp_check, CompOutcome, CompReport};
use hytc::eval::{evaluate, StepOutcome, RUN_FUEL};
use hytc::htc::{compile, CompileReport, HtcOptions};
use hytc::prover::ProverConfig;
use hytc::recon::reconstruct;
use hytc::subtyping::ObligationRecord;
use hytc::surface::{parse_program_with, parse_term, print_program, print_term, print_type, ParseOptions, SourceProgram};
use serde_json::json;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const OK: u8 = 0;
const CAST_FAILED: u8 = 1;
const REJECTED: u8 = 2;
const USAGE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "hytc", version, about = "Hybrid refinement type checker for .lh programs")]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Opts {
    /// Evaluation step budget for `run`.
    #[arg(long, global = true, default_value_t = RUN_FUEL)]
    fuel: u64,
    /// Counterexample database.
    #[arg(long, global = true, env = "HYTC_DB", default_value = DEFAULT_DB_PATH)]
    db: PathBuf,
    /// Answer every non-trivial implication with Maybe.
    #[arg(long, global = true)]
    no_prover: bool,
    /// Treat products as commutative atoms.
    #[arg(long, global = true)]
    normalize_products: bool,
    /// Write each prover query as an SMT-LIB script into this directory.
    #[arg(long, global = true, value_name = "DIR")]
    emit_smtlib: Option<PathBuf>,
    /// Print every obligation with its verdict.
    #[arg(long, global = true)]
    explain: bool,
    /// Machine-readable report on standard output.
    #[arg(long, global = true)]
    json: bool,
    /// Write the prover queries as JSON lines to this file.
    #[arg(long, global = true, value_name = "FILE")]
    dump_obligations: Option<PathBuf>,
    /// Accept `exists` in source types.
    #[arg(long, global = true)]
    allow_exists: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Type check and insert casts; prints the cast count.
    Check { file: PathBuf },
    /// Check, then apply `main` to the arguments and evaluate.
    Run {
        file: PathBuf,
        #[arg(allow_hyphen_values = true)]
        args: Vec<String>,
    },
    /// Fill in `?` annotations and print the annotated program.
    Reconstruct { file: PathBuf },
    /// Compositional check; undecided programs fall back to `check`.
    CompCheck { file: PathBuf },
    /// Inspect the counterexample database.
    Db {
        #[command(subcommand)]
        cmd: DbCmd,
    },
}

#[derive(Subcommand, Debug)]
enum DbCmd {
    List,
    Validate,
}

struct Failure(u8, String);

type Res = Result<u8, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure(USAGE, msg.into())
}

impl Opts {
    fn prover(&self) -> ProverConfig {
        ProverConfig {
            enabled: !self.no_prover,
            normalize_products: self.normalize_products,
            smtlib_dir: self.emit_smtlib.clone(),
            ..Default::default()
        }
    }

    fn parse_opts(&self) -> ParseOptions {
        ParseOptions { allow_exists: self.allow_exists }
    }

    fn open_db(&self) -> Result<CexStore, Failure> {
        let db = CexStore::open(&self.db).map_err(|e| usage(e.to_string()))?;
        for w in &db.warnings {
            eprintln!("warning: {}: {w}", self.db.display());
        }
        Ok(db)
    }
}

fn load(opts: &Opts, file: &Path) -> Result<SourceProgram, Failure> {
    let text = std::fs::read_to_string(file).map_err(|e| usage(format!("{}: {e}", file.display())))?;
    parse_program_with(&text, opts.parse_opts()).map_err(|e| usage(format!("{}: {e}", file.display())))
}

fn dump(opts: &Opts, log: &[ObligationRecord]) -> Result<(), Failure> {
    let Some(path) = &opts.dump_obligations else { return Ok(()) };
    let io = |e: std::io::Error| usage(format!("{}: {e}", path.display()));
    let mut f = std::fs::File::create(path).map_err(io)?;
    for r in log {
        writeln!(f, "{}", serde_json::to_string(r).expect("records serialize")).map_err(io)?;
    }
    Ok(())
}

fn explain(log: &[ObligationRecord]) {
    for r in log {
        println!("[{}] {} ==> {} : {}", r.env, r.antecedent, r.consequent, r.result);
    }
}

fn compile_report_json(r: &CompileReport) -> serde_json::Value {
    let (yes, maybe, no) = r.verdicts();
    json!({
        "accepted": r.accepted(),
        "casts": r.casts.iter().map(|c| json!({
            "label": c.label,
            "location": c.location,
            "source": print_type(&c.source),
            "target": print_type(&c.target),
        })).collect::<Vec<_>>(),
        "verdicts": { "yes": yes, "maybe": maybe, "no": no },
        "rejections": r.rejections.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
        "output": print_program(&r.output),
    })
}

/// Compiles against the database and notes the judgments the program now relies on casts for.
fn check_program(opts: &Opts, file: &Path, db: &mut CexStore) -> Result<CompileReport, Failure> {
    let prog = load(opts, file)?;
    let report = compile(&prog, &HtcOptions { prover: opts.prover(), recheck: false }, Some(db));
    dump(opts, &report.obligations)?;
    if report.accepted() {
        let name = file.display().to_string();
        for c in &report.casts {
            db.note_maybe(&c.key(), &name).map_err(|e| usage(e.to_string()))?;
        }
    }
    Ok(report)
}

fn print_check(opts: &Opts, r: &CompileReport) {
    if opts.explain {
        explain(&r.obligations);
    }
    if opts.json {
        println!("{}", compile_report_json(r));
        return;
    }
    for x in &r.rejections {
        eprintln!("error: {x}");
    }
    if r.accepted() {
        let (yes, maybe, no) = r.verdicts();
        println!("{} casts inserted", r.casts.len());
        println!("verdicts: {yes} yes, {maybe} maybe, {no} no");
        for c in &r.casts {
            println!("  cast #{} at {}: {} => {}", c.label, c.location, print_type(&c.source), print_type(&c.target));
        }
    } else {
        println!("rejected");
    }
}

fn cmd_check(opts: &Opts, file: &Path) -> Res {
    let mut db = opts.open_db()?;
    let r = check_program(opts, file, &mut db)?;
    print_check(opts, &r);
    Ok(if r.accepted() { OK } else { REJECTED })
}

fn cmd_run(opts: &Opts, file: &Path, args: &[String]) -> Res {
    let mut db = opts.open_db()?;
    let r = check_program(opts, file, &mut db)?;
    if !r.accepted() {
        print_check(opts, &r);
        return Ok(REJECTED);
    }
    let mut actuals = Vec::new();
    for a in args {
        actuals.push(parse_term(a, &[], opts.parse_opts()).map_err(|e| usage(format!("argument `{a}`: {e}")))?);
    }
    let prog = SourceProgram { bindings: r.output.bindings.clone(), main: Term::apps(r.output.main.clone(), actuals) };
    let outcome = evaluate(&prog.to_term(), opts.fuel).map_err(|e| Failure(CAST_FAILED, format!("evaluation: {e}")))?;
    match outcome {
        StepOutcome::Value(v) | StepOutcome::Stepped(v) => {
            if opts.json {
                println!("{}", json!({ "outcome": "value", "value": print_term(&v) }));
            } else {
                println!("{}", print_term(&v));
            }
            Ok(OK)
        }
        StepOutcome::OutOfFuel(_) => {
            eprintln!("warning: out of fuel after {} steps", opts.fuel);
            if opts.json {
                println!("{}", json!({ "outcome": "out-of-fuel" }));
            }
            Ok(OK)
        }
        StepOutcome::FailedCast(f) => {
            let key = match f.label.and_then(|l| r.cast_by_label(l)) {
                Some(c) => c.key(),
                None => JudgmentKey::new(&Env::new(), &f.source, &f.target),
            };
            let name = file.display().to_string();
            let fresh = db.record(&key, &f.source, &f.target, &f.witness, &name).map_err(|e| usage(e.to_string()))?;
            let affected = db.affected_programs(&key);
            if opts.json {
                println!(
                    "{}",
                    json!({
                        "outcome": "failed-cast",
                        "witness": print_term(&f.witness),
                        "source": print_type(&f.source),
                        "target": print_type(&f.target),
                        "judgment": { "env": key.env, "source": key.source, "target": key.target },
                        "recorded": fresh,
                        "affected": affected,
                    })
                );
            } else {
                eprintln!(
                    "cast failed: {} does not satisfy {}",
                    print_term(&f.witness),
                    print_type(&f.target)
                );
                eprintln!("  judgment [{}] |- {} <: {}", key.env, key.source, key.target);
                eprintln!("  witness {}", print_term(&f.witness));
                if fresh {
                    eprintln!("  recorded in {}", opts.db.display());
                }
                if !affected.is_empty() {
                    eprintln!("  programs relying on this cast: {}", affected.join(", "));
                }
            }
            Ok(CAST_FAILED)
        }
    }
}

fn cmd_reconstruct(opts: &Opts, file: &Path) -> Res {
    let prog = load(opts, file)?;
    let report = reconstruct(&prog, &opts.prover()).map_err(|e| Failure(REJECTED, e.to_string()))?;
    let unresolved: Vec<String> = report.unresolved().map(|o| o.to_string()).collect();
    if opts.explain {
        for p in &report.placeholders {
            println!("psi{} := {}", p.id, print_term(&p.solution));
        }
        for o in &report.residual {
            println!("{o}");
        }
    }
    if opts.json {
        println!("{}", json!({ "program": print_program(&report.program), "unresolved": unresolved }));
    } else {
        print!("{}", print_program(&report.program));
        for u in &unresolved {
            eprintln!("note: left to run-time checks: {u}");
        }
    }
    Ok(OK)
}

fn comp_report_json(r: &CompReport) -> serde_json::Value {
    let (yes, maybe, no) = r.verdicts();
    let outcome = match &r.outcome {
        CompOutcome::Accept => "accept".to_string(),
        CompOutcome::Reject(_) => "reject".to_string(),
        CompOutcome::Fallback(why) => format!("fallback: {why}"),
    };
    json!({
        "outcome": outcome,
        "verdicts": { "yes": yes, "maybe": maybe, "no": no },
        "in_fragment": r.in_fragment,
        "rejection": r.rejection().map(|o| json!({
            "obligation": o.to_string(),
            "witness": o.witness.as_ref().map(|w| w.to_string()),
            "replays": o.witness_replays(),
        })),
    })
}

fn cmd_comp_check(opts: &Opts, file: &Path) -> Res {
    let prog = load(opts, file)?;
    let r = comp_check(&prog, &opts.prover());
    dump(opts, &r.prover_log)?;
    if opts.explain {
        for o in &r.obligations {
            println!("{o}");
        }
    }
    if opts.json {
        println!("{}", comp_report_json(&r));
    }
    let (yes, maybe, no) = r.verdicts();
    match &r.outcome {
        CompOutcome::Accept => {
            if !opts.json {
                println!("accepted ({yes} yes, {maybe} maybe, {no} no)");
            }
            Ok(OK)
        }
        CompOutcome::Reject(_) => {
            let o = r.rejection().expect("a rejected obligation");
            if !opts.json {
                println!("rejected");
                eprintln!("error: {o}");
                if o.witness.is_some() {
                    eprintln!("  witness replays: {}", o.witness_replays());
                }
            }
            Ok(REJECTED)
        }
        CompOutcome::Fallback(why) => {
            eprintln!("note: falling back to hybrid checking: {why}");
            if opts.json {
                // one JSON document per line: the compositional one above, then the hybrid one
                let mut db = opts.open_db()?;
                let h = check_program(opts, file, &mut db)?;
                println!("{}", compile_report_json(&h));
                return Ok(if h.accepted() { OK } else { REJECTED });
            }
            cmd_check(opts, file)
        }
    }
}

fn cmd_db(opts: &Opts, cmd: &DbCmd) -> Res {
    let db = opts.open_db()?;
    match cmd {
        DbCmd::List => {
            if opts.json {
                let all: Vec<_> = db.entries().collect();
                println!("{}", serde_json::to_string(&all).expect("entries serialize"));
            } else {
                for e in db.entries() {
                    println!("{}  [{}] |- {} <: {}", &e.key[..12], e.env, e.source, e.target);
                    println!("    witness {}  from {}", e.witness, e.program);
                }
                println!("{} entries", db.len());
            }
            Ok(OK)
        }
        DbCmd::Validate => {
            let results = db.validate_all();
            let bad = results.iter().filter(|(_, r)| r.is_err()).count() + db.warnings.len();
            for (e, r) in &results {
                match r {
                    Ok(()) => println!("ok    {}", &e.key[..12]),
                    Err(why) => println!("FAIL  {}: {why}", &e.key[..12]),
                }
            }
            println!("{} valid, {} invalid", results.len() - (bad - db.warnings.len()), bad);
            Ok(if bad == 0 { OK } else { CAST_FAILED })
        }
    }
}

fn run(cli: Cli) -> Res {
    let opts = &cli.opts;
    match &cli.cmd {
        Cmd::Check { file } => cmd_check(opts, file),
        Cmd::Run { file, args } => cmd_run(opts, file, args),
        Cmd::Reconstruct { file } => cmd_reconstruct(opts, file),
        Cmd::CompCheck { file } => cmd_comp_check(opts, file),
        Cmd::Db { cmd } => cmd_db(opts, cmd),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { OK });
        }
    };
    // Checking and evaluation recurse on the term structure.
    let worker = std::thread::Builder::new().stack_size(256 << 20).spawn(move || run(cli));
    let res = match worker {
        Ok(h) => h.join().unwrap_or_else(|_| Err(Failure(USAGE, "internal error".into()))),
        Err(e) => Err(usage(e.to_string())),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
