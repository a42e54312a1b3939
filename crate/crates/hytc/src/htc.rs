//! Hybrid type checking: cast insertion driven by three-valued subtyping.
//!
//! Terms are synthesized bottom-up, and checked top-down where the expected
//! type is known (function bodies against declared codomains, let bodies, case
//! branches). A `Yes` subtyping verdict leaves the term alone, `Maybe` wraps it
//! in a cast, and `No` rejects the program.

use crate::ast::*;
use crate::cexdb::{CexStore, JudgmentKey};
use crate::prover::{eliminate_singleton, Certainty, Prover, ProverConfig, Witness};
use crate::subtyping::{render_env, ObligationRecord, Subtyper};
use crate::surface::{print_type, SourceProgram, TopBinding};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

#[derive(Clone, Debug, Default)]
pub struct HtcOptions {
    pub prover: ProverConfig,
    /// Compile the output a second time and count the casts that pass inserts.
    pub recheck: bool,
}

/// A cast inserted for a `Maybe` verdict.
#[derive(Clone, Debug)]
pub struct InsertedCast {
    pub label: usize,
    pub location: String,
    pub env: Env,
    pub source: Type,
    pub target: Type,
}

impl InsertedCast {
    pub fn key(&self) -> JudgmentKey {
        JudgmentKey::new(&self.env, &self.source, &self.target)
    }
}

#[derive(Clone, Debug)]
pub struct Rejection {
    pub location: String,
    pub message: String,
    /// The refuted judgment `env ⊢ S <: T`, when the rejection came from subtyping.
    pub judgment: Option<(Env, Type, Type)>,
    pub witness: Option<Witness>,
    pub from_db: bool,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)?;
        if let Some((env, s, t)) = &self.judgment {
            write!(f, "\n  under [{}]\n  {} is not a subtype of {}", render_env(env), print_type(s), print_type(t))?;
        }
        if let Some(w) = &self.witness {
            write!(f, "\n  witness {w}")?;
        }
        if self.from_db {
            write!(f, "\n  (refuted by an earlier run-time failure)")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum HtcError {
    #[error("static type error: {0}")]
    StaticType(Box<Rejection>),
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("{0}")]
    Ill(String),
}

#[derive(Clone, Debug)]
pub struct CompileReport {
    pub output: SourceProgram,
    pub casts: Vec<InsertedCast>,
    pub rejections: Vec<Rejection>,
    pub obligations: Vec<ObligationRecord>,
    /// Casts inserted when recompiling the output (`HtcOptions::recheck`).
    pub recheck_casts: Option<usize>,
}

impl CompileReport {
    pub fn accepted(&self) -> bool {
        self.rejections.is_empty()
    }

    /// Counts of Yes, Maybe and No prover verdicts.
    pub fn verdicts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for o in &self.obligations {
            match o.result {
                Certainty::Yes => c.0 += 1,
                Certainty::Maybe => c.1 += 1,
                Certainty::No => c.2 += 1,
            }
        }
        c
    }

    pub fn cast_by_label(&self, label: usize) -> Option<&InsertedCast> {
        self.casts.iter().find(|c| c.label == label)
    }
}

/// Whether a type mentions an existential predicate anywhere.
fn mentions_exists(t: &Type) -> bool {
    let found = std::cell::Cell::new(false);
    visit_type(
        t,
        &mut |ty| {
            if matches!(ty, Type::Exists(..)) {
                found.set(true)
            }
        },
        &mut |e| {
            if matches!(e, Term::Exists(..)) {
                found.set(true)
            }
        },
    );
    found.get()
}

pub struct Checker<'a> {
    sub: Subtyper<'a>,
    pub casts: Vec<InsertedCast>,
    location: String,
}

impl<'a> Checker<'a> {
    pub fn new(prover: Prover, db: Option<&'a CexStore>) -> Checker<'a> {
        Checker { sub: Subtyper::new(prover, db), casts: Vec::new(), location: String::from("main") }
    }

    pub fn obligations(&self) -> &[ObligationRecord] {
        &self.sub.log
    }

    fn ill<T>(&self, msg: impl Into<String>) -> Result<T, HtcError> {
        Err(HtcError::Ill(format!("{}: {}", self.location, msg.into())))
    }

    /// Compiles the refinements inside a type (each checked against Bool).
    pub fn ctype(&mut self, env: &Env, t: &Type) -> Result<Type, HtcError> {
        Ok(match t {
            Type::Base(x, b, p) => {
                if p.is_true() {
                    return Ok(t.clone());
                }
                let (x, p) = unshadow_term(env, x, p);
                let p2 = self.check(&env.extended(&x, Type::base(*b)), &p, &Type::bool())?;
                Type::Base(x, *b, Box::new(p2))
            }
            Type::Arrow(x, s, u) => {
                let s2 = self.ctype(env, s)?;
                let (x, u) = unshadow_type(env, x, u);
                let u2 = self.ctype(&env.extended(&x, s2.clone()), &u)?;
                Type::Arrow(x, Box::new(s2), Box::new(u2))
            }
            Type::Exists(x, s, u) => {
                let s2 = self.ctype(env, s)?;
                let (x, u) = unshadow_type(env, x, u);
                let u2 = self.ctype(&env.extended(&x, s2.clone()), &u)?;
                Type::Exists(x, Box::new(s2), Box::new(u2))
            }
            Type::Dynamic | Type::Var(..) => t.clone(),
        })
    }

    /// Subsumption with cast insertion.
    pub fn coerce(&mut self, env: &Env, e: Term, s: &Type, t: &Type) -> Result<Term, HtcError> {
        let v = self.sub.subtype(env, s, t);
        match v.certainty {
            Certainty::Yes => Ok(e),
            Certainty::Maybe => {
                if t.has_tyvar() || mentions_exists(t) || (matches!(s, Type::Arrow(..)) && mentions_exists(s)) {
                    return self.ill(format!(
                        "cannot check {} against {} at run time; add an annotation",
                        print_type(s),
                        print_type(t)
                    ));
                }
                let label = self.casts.len();
                self.casts.push(InsertedCast {
                    label,
                    location: self.location.clone(),
                    env: env.clone(),
                    source: s.clone(),
                    target: t.clone(),
                });
                Ok(Term::app(Term::Cast(Box::new(s.clone()), Box::new(t.clone()), Some(label)), e))
            }
            Certainty::No => Err(HtcError::StaticType(Box::new(Rejection {
                location: self.location.clone(),
                message: "subtyping refuted".into(),
                judgment: Some((env.clone(), s.clone(), t.clone())),
                witness: v.witness,
                from_db: v.from_db,
            }))),
        }
    }

    pub fn synth(&mut self, env: &Env, d: &Term) -> Result<(Term, Type), HtcError> {
        match d {
            Term::Var(x) => match env.lookup(x) {
                Some(t) => Ok((d.clone(), t.clone())),
                None => Err(HtcError::UnknownVariable(x.clone())),
            },
            Term::Prim(p) => {
                let p2 = match p {
                    Prim::If(t) => Prim::If(Box::new(self.ctype(env, t)?)),
                    Prim::Fix(t) => Prim::Fix(Box::new(self.ctype(env, t)?)),
                    p => p.clone(),
                };
                let ty = prim_type(&p2);
                Ok((Term::Prim(p2), ty))
            }
            Term::Ctor(c, args) => {
                let mut ty = ctor_type(c);
                let mut out = Vec::new();
                for a in args {
                    match ty {
                        Type::Arrow(x, s, u) => {
                            let ea = self.check(env, a, &s)?;
                            ty = subst_type(&u, &x, &ea);
                            out.push(ea);
                        }
                        _ => return self.ill(format!("constructor {} over-applied", c.name())),
                    }
                }
                Ok((Term::Ctor(c.clone(), out), ty))
            }
            Term::Lam(x, s, b) => {
                if s.has_tyvar() {
                    return self.ill(format!("parameter {x} needs a type annotation"));
                }
                let s2 = self.ctype(env, s)?;
                let (x, b) = unshadow_term(env, x, b);
                let (eb, t) = self.synth(&env.extended(&x, s2.clone()), &b)?;
                Ok((Term::Lam(x.clone(), Box::new(s2.clone()), Box::new(eb)), Type::Arrow(x, Box::new(s2), Box::new(t))))
            }
            Term::App(f, a) => {
                if let Term::Lam(x, ann, body) = &**f {
                    if matches!(**ann, Type::Var(..)) {
                        // let without annotation: the bound variable gets the synthesized type
                        let (ea, ta) = self.synth(env, a)?;
                        let (x, body) = unshadow_term(env, x, body);
                        let (eb, u) = self.synth(&env.extended(&x, ta), &body)?;
                        let out = Term::app(Term::Lam(x.clone(), ann.clone(), Box::new(eb)), ea.clone());
                        return Ok((out, subst_type(&u, &x, &ea)));
                    }
                }
                let (ef, tf) = self.synth(env, f)?;
                match tf {
                    Type::Arrow(x, s, u) => {
                        let ea = self.check(env, a, &s)?;
                        let ty = subst_type(&u, &x, &ea);
                        Ok((Term::app(ef, ea), ty))
                    }
                    Type::Dynamic => {
                        let ea = self.check(env, a, &Type::Dynamic)?;
                        let dd = Type::fun(Type::Dynamic, Type::Dynamic);
                        let ef = self.coerce(env, ef, &Type::Dynamic, &dd)?;
                        Ok((Term::app(ef, ea), Type::Dynamic))
                    }
                    other => self.ill(format!("applying a non-function of type {}", print_type(&other))),
                }
            }
            Term::Cast(s, t, l) => {
                let s2 = self.ctype(env, s)?;
                let t2 = self.ctype(env, t)?;
                if t2.has_tyvar() || mentions_exists(&t2) {
                    return self.ill("cast target must be checkable at run time");
                }
                Ok((Term::Cast(Box::new(s2.clone()), Box::new(t2.clone()), *l), Type::fun(s2, t2)))
            }
            Term::Checking { target, .. } => Ok((d.clone(), (**target).clone())),
            Term::Case(s, brs) => self.case(env, s, brs, None),
            Term::POr(a, b, n) | Term::PAnd(a, b, n) => {
                let ea = self.check(env, a, &Type::bool())?;
                let eb = self.check(env, b, &Type::bool())?;
                let out = if matches!(d, Term::POr(..)) {
                    Term::POr(Box::new(ea), Box::new(eb), *n)
                } else {
                    Term::PAnd(Box::new(ea), Box::new(eb), *n)
                };
                Ok((out, Type::bool()))
            }
            Term::Exists(x, t, b) => {
                let t2 = self.ctype(env, t)?;
                let (x, b) = unshadow_term(env, x, b);
                let eb = self.check(&env.extended(&x, t2.clone()), &b, &Type::bool())?;
                Ok((Term::Exists(x, Box::new(t2), Box::new(eb)), Type::bool()))
            }
            Term::Hole(_) => self.ill("unsolved refinement placeholder"),
        }
    }

    pub fn check(&mut self, env: &Env, d: &Term, t: &Type) -> Result<Term, HtcError> {
        match (d, t) {
            (Term::Lam(x, s, b), Type::Arrow(y, t1, t2)) if !s.has_tyvar() => {
                let s2 = self.ctype(env, s)?;
                let dom = self.sub.subtype(env, t1, &s2);
                if dom.certainty == Certainty::Yes {
                    let fv_t2 = free_vars_type(t2);
                    let clash = |n: &str| (n != y && fv_t2.contains(n)) || env.contains(n);
                    let x2 = if clash(x) { avoid_name(x, &clash) } else { x.clone() };
                    let b2 = if x2 != *x { rename_term(b, x, &x2) } else { (**b).clone() };
                    let t2 = rename_type(t2, y, &x2);
                    let eb = self.check(&env.extended(&x2, (**t1).clone()), &b2, &t2)?;
                    return Ok(Term::Lam(x2, Box::new(s2), Box::new(eb)));
                }
            }
            (Term::App(f, a), _) if matches!(&**f, Term::Lam(..)) => {
                if let Term::Lam(x, ann, body) = &**f {
                    let (ea, ta, ann2) = if matches!(**ann, Type::Var(..)) {
                        let (ea, ta) = self.synth(env, a)?;
                        (ea, ta, (**ann).clone())
                    } else {
                        let ann2 = self.ctype(env, ann)?;
                        (self.check(env, a, &ann2)?, ann2.clone(), ann2)
                    };
                    let fv_t = free_vars_type(t);
                    let clash = |n: &str| fv_t.contains(n) || env.contains(n);
                    let x2 = if clash(x) { avoid_name(x, &clash) } else { x.clone() };
                    let body = if x2 != *x { rename_term(body, x, &x2) } else { (**body).clone() };
                    let eb = self.check(&env.extended(&x2, ta), &body, t)?;
                    return Ok(Term::app(Term::Lam(x2, Box::new(ann2), Box::new(eb)), ea));
                }
            }
            (Term::Case(s, brs), _) => {
                let (e, _) = self.case(env, s, brs, Some(t))?;
                return Ok(e);
            }
            _ => {}
        }
        let (e, s) = self.synth(env, d)?;
        self.coerce(env, e, &s, t)
    }

    /// Case analysis. With an expected type each branch is checked against it;
    /// otherwise the result type is the disjunction of the branch types, each
    /// guarded by its constructor.
    fn case(&mut self, env: &Env, s: &Term, brs: &[(Ctor, Term)], expected: Option<&Type>) -> Result<(Term, Type), HtcError> {
        let (es, st) = self.synth(env, s)?;
        let (sz, b, q) = match &st {
            Type::Base(z, b, q) => (z.clone(), *b, (**q).clone()),
            _ => return self.ill(format!("case on a value of type {}", print_type(&st))),
        };
        let want: BTreeSet<String> = match b.ctors() {
            Some(cs) => cs.iter().map(|c| c.name()).collect(),
            None => return self.ill(format!("case on {} is not supported", b.name())),
        };
        let have: BTreeSet<String> = brs.iter().map(|(c, _)| c.name()).collect();
        if want != have || have.len() != brs.len() {
            return self.ill("case must have exactly one branch per constructor");
        }
        let avoid_t: BTreeSet<Name> = expected.map(free_vars_type).unwrap_or_default();
        let mut out = Vec::new();
        let mut branch_types: Vec<(Vec<(Name, Type)>, Type)> = Vec::new();
        for (c, h) in brs {
            let (params, _) = h.peel_lams();
            if params.len() != c.arity() + 1 {
                return self.ill(format!("branch {} binds {} names", c.name(), params.len()));
            }
            // Bind fields and the scrutinee self-binding under fresh names where needed.
            let mut body = h.clone();
            let mut binders: Vec<(Name, Name, Type)> = Vec::new();
            let mut env2 = env.clone();
            let mut ft = ctor_type(c);
            let mut locals: Vec<(Name, Type)> = Vec::new();
            for i in 0..=c.arity() {
                let (x, ann, inner) = match body {
                    Term::Lam(x, ann, inner) => (x, *ann, *inner),
                    _ => unreachable!(),
                };
                let clash = |n: &str| env2.contains(n) || avoid_t.contains(n) || free_vars(&es).contains(n);
                let x2 = avoid_name(&x, &clash);
                let inner = if x2 != x && x != "_" { rename_term(&inner, &x, &x2) } else { inner };
                let ty = if i < c.arity() {
                    match ft {
                        Type::Arrow(y, fty, rest) => {
                            ft = subst_type(&rest, &y, &Term::var(&x2));
                            *fty
                        }
                        _ => unreachable!(),
                    }
                } else {
                    let sv = Term::var(&x2);
                    let mut parts = vec![Term::eq(sv.clone(), es.clone())];
                    let qs = subst_term(&q, &sz, &sv);
                    if !qs.is_true() {
                        parts.push(qs);
                    }
                    let guard = match c {
                        Ctor::Bool(true) => sv.clone(),
                        Ctor::Bool(false) => Term::not(sv.clone()),
                        _ => Term::eq(sv.clone(), Term::Ctor(c.clone(), locals.iter().map(|(n, _)| Term::var(n)).collect())),
                    };
                    parts.push(guard);
                    Type::Base(x2.clone(), b, Box::new(Term::and_all(parts)))
                };
                env2.push(&x2, ty.clone());
                locals.push((x2.clone(), ty));
                let shown = if x == "_" { x.clone() } else { x2.clone() };
                binders.push((shown, x2, ann));
                body = inner;
            }
            let (eb, bt) = match expected {
                Some(t) => (self.check(&env2, &body, t)?, t.clone()),
                None => self.synth(&env2, &body)?,
            };
            let handler = binders.iter().rev().fold(eb, |acc, (shown, _, ann)| Term::lam(shown, ann.clone(), acc));
            out.push((c.clone(), handler));
            branch_types.push((locals, bt));
        }
        let term = Term::Case(Box::new(es), out);
        if let Some(t) = expected {
            return Ok((term, t.clone()));
        }
        let ty = self.join(&branch_types)?;
        Ok((term, ty))
    }

    fn join(&self, branches: &[(Vec<(Name, Type)>, Type)]) -> Result<Type, HtcError> {
        let base = match &branches[0].1 {
            Type::Base(_, b, _) => Some(*b),
            _ => None,
        };
        if let Some(b) = base {
            if branches.iter().all(|(_, t)| t.base_id() == Some(b)) {
                let y = fresh_name("y");
                let mut disj = Vec::new();
                for (locals, t) in branches {
                    let r = match t {
                        Type::Base(z, _, r) => subst_term(r, z, &Term::var(&y)),
                        _ => unreachable!(),
                    };
                    let mut acc = r;
                    for (x, xt) in locals.iter().rev() {
                        if let Type::Base(_, _, _) = xt {
                            // the self-binding is always kept so its guard survives
                            acc = match eliminate_singleton(x, xt, &acc) {
                                Some(e) => e,
                                None => {
                                    let keep = free_vars(&acc).contains(x) || matches!(xt, Type::Base(_, _, g) if !g.is_true());
                                    if keep {
                                        Term::exists(x, xt.clone(), acc)
                                    } else {
                                        acc
                                    }
                                }
                            };
                        }
                    }
                    disj.push(acc);
                }
                let p = disj.into_iter().reduce(Term::or).unwrap_or_else(Term::ff);
                return Ok(Type::refined(&y, b, p));
            }
        }
        let first = &branches[0].1;
        let all_locals: BTreeSet<Name> = branches.iter().flat_map(|(l, _)| l.iter().map(|(n, _)| n.clone())).collect();
        let fv = free_vars_type(first);
        if branches.iter().all(|(_, t)| alpha_eq_type(t, first)) && fv.is_disjoint(&all_locals) {
            return Ok(first.clone());
        }
        self.ill("case branches have incompatible types; annotate the case")
    }
}

/// Renames binder `x` over `body` when it would shadow an environment entry.
fn unshadow_term(env: &Env, x: &str, body: &Term) -> (Name, Term) {
    if env.contains(x) {
        let x2 = avoid_name(x, &|n| env.contains(n));
        let b = rename_term(body, x, &x2);
        (x2, b)
    } else {
        (x.to_string(), body.clone())
    }
}

fn unshadow_type(env: &Env, x: &str, body: &Type) -> (Name, Type) {
    if env.contains(x) {
        let x2 = avoid_name(x, &|n| env.contains(n));
        let b = rename_type(body, x, &x2);
        (x2, b)
    } else {
        (x.to_string(), body.clone())
    }
}

fn rejection_of(loc: &str, e: HtcError) -> Rejection {
    match e {
        HtcError::StaticType(r) => *r,
        other => Rejection { location: loc.to_string(), message: other.to_string(), judgment: None, witness: None, from_db: false },
    }
}

/// Compiles a program, inserting casts where subtyping is undecided.
pub fn compile(p: &SourceProgram, opts: &HtcOptions, db: Option<&CexStore>) -> CompileReport {
    let mut ck = Checker::new(Prover::new(opts.prover.clone()), db);
    let mut env = Env::new();
    let mut bindings = Vec::new();
    let mut rejections = Vec::new();
    for b in &p.bindings {
        ck.location = b.name.clone();
        let res = match &b.ty {
            Some(t) => ck.ctype(&env, t).and_then(|t2| {
                let e = ck.check(&env, &b.term, &t2)?;
                Ok((e, t2, true))
            }),
            None => ck.synth(&env, &b.term).map(|(e, t)| (e, t, false)),
        };
        match res {
            Ok((e, t, annotated)) => {
                bindings.push(TopBinding { name: b.name.clone(), ty: if annotated { Some(t.clone()) } else { None }, term: e });
                env.push(&b.name, t);
            }
            Err(err) => {
                rejections.push(rejection_of(&b.name, err));
                bindings.push(b.clone());
                env.push(&b.name, b.ty.clone().unwrap_or(Type::Dynamic));
            }
        }
    }
    ck.location = "main".into();
    let main = match ck.synth(&env, &p.main) {
        Ok((e, _)) => e,
        Err(err) => {
            rejections.push(rejection_of("main", err));
            p.main.clone()
        }
    };
    let output = SourceProgram { bindings, main };
    let mut report = CompileReport {
        output,
        casts: ck.casts,
        rejections,
        obligations: ck.sub.log,
        recheck_casts: None,
    };
    if opts.recheck && report.accepted() {
        let again = compile(&report.output, &HtcOptions { recheck: false, ..opts.clone() }, db);
        report.recheck_casts = Some(again.casts.len());
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::parse_program;

    fn run(src: &str) -> CompileReport {
        compile(&parse_program(src).unwrap(), &HtcOptions { recheck: true, ..Default::default() }, None)
    }

    #[test]
    fn literal_and_variable_need_no_casts() {
        let r = run("let x : {x:Int | x > 0} = 3; let y : {y:Int | y > 0} = x; y");
        assert!(r.accepted());
        assert_eq!(r.casts.len(), 0);
    }

    const IMPRECISE: &str =
        "let f : {x:Int | x > 0} -> Int = fun (x:{x:Int | x > 0}) => x; let g : Int -> Int = fun (n:Int) => f n; g 1";

    #[test]
    fn undecided_argument_gets_a_cast() {
        let opts = HtcOptions { recheck: true, prover: ProverConfig { enabled: false, ..Default::default() } };
        let r = compile(&parse_program(IMPRECISE).unwrap(), &opts, None);
        assert!(r.accepted(), "{:?}", r.rejections);
        assert_eq!(r.casts.len(), 1);
        assert_eq!(r.recheck_casts, Some(0));
    }

    #[test]
    fn refutable_argument_is_rejected_with_prover() {
        let r = run(IMPRECISE);
        assert!(!r.accepted());
        assert!(r.rejections[0].witness.is_some());
    }

    #[test]
    fn nonlinear_argument_gets_a_cast() {
        let r = run("let f : {x:Int | x * x >= 0} -> Int = fun (x:{x:Int | x * x >= 0}) => x; let g : Int -> Int = fun (n:Int) => f n; g 1");
        assert!(r.accepted(), "{:?}", r.rejections);
        assert_eq!(r.casts.len(), 1);
        assert_eq!(r.recheck_casts, Some(0));
    }

    #[test]
    fn refuted_subtyping_rejects() {
        let r = run("let x : {x:Int | x > 0} = 0; x");
        assert!(!r.accepted());
        assert!(r.rejections[0].judgment.is_some());
    }

    #[test]
    fn dynamic_argument_is_downcast() {
        let r = run("let pos : {x:Int | 0 < x} -> Int = fun (x:{x:Int | 0 < x}) => x; let d : Dynamic = 0; pos d");
        assert!(r.accepted());
        assert_eq!(r.casts.len(), 1);
        assert_eq!(r.casts[0].source, Type::Dynamic);
    }

    #[test]
    fn conditional_branches_see_their_guard() {
        let r = run("let abs : Int -> {z:Int | z >= 0} = fun (x:Int) => if x < 0 then 0 - x else x + 0; abs 3");
        assert!(r.accepted(), "{:?}", r.rejections);
        assert_eq!(r.casts.len(), 0);
    }

    #[test]
    fn unannotated_let_uses_synthesized_type() {
        let r = run("let f : Int -> {z:Int | z > 5} = fun (x:Int) => let y = 7 in y; f 0");
        assert!(r.accepted(), "{:?}", r.rejections);
        assert_eq!(r.casts.len(), 0);
    }

    #[test]
    fn synthesized_case_type_is_a_guarded_disjunction() {
        let r = run("let f : x:Int -> {z:Int | z >= x} = fun (x:Int) => let c = (if x < 0 then 0 else x + 0) in c; f 1");
        assert!(r.accepted(), "{:?}", r.rejections);
        assert_eq!(r.casts.len(), 0);
    }
}
