//! Compositional checking with self types and existential result types.
//!
//! Variables are typed by their self type, applications produce existentials
//! over their arguments instead of substituting terms into the codomain, and
//! `case` scrutinees must be variables. On the restricted predicate fragment
//! (linear arithmetic over Int, the measures `lower`/`upper`/`length`,
//! conjunction and case splits on variables) every obligation is decided, so
//! the checker either accepts or rejects; anything else falls back to hybrid
//! checking.

use crate::ast::*;
use crate::prover::{eliminate_singleton, replay, Certainty, Prover, ProverConfig, Witness};
use crate::subtyping::{render_env, ObligationRecord, Subtyper};
use crate::surface::{print_term, print_type, SourceProgram};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum CompError {
    #[error("{0}: not a function")]
    NotAFunction(String),
    #[error("case on a non-variable {0}; rewrite as `let y = e in case y of ...`")]
    CaseOnNonVariable(String),
    #[error("case over {0} must have exactly one branch per constructor")]
    NonExhaustiveCase(String),
    #[error("existential on the right of a subtyping check: {0}")]
    ExistentialOnRight(String),
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("parameter {0} needs a type annotation")]
    NeedsAnnotation(String),
    #[error("{0}")]
    Unsupported(String),
}

/// One `env ⊢ E <: T` check and its verdict.
#[derive(Clone, Debug)]
pub struct Obligation {
    pub location: String,
    pub env: Env,
    pub source: Type,
    pub target: Type,
    pub certainty: Certainty,
    pub witness: Option<Witness>,
    /// The prover query the witness falsifies.
    pub refuted: Option<(Env, Term, Term)>,
}

impl Obligation {
    /// Evaluates the refuted implication under the witness.
    pub fn witness_replays(&self) -> bool {
        match (&self.witness, &self.refuted) {
            (Some(w), Some((env, p, q))) => replay(env, p, q, w),
            _ => false,
        }
    }
}

impl fmt::Display for Obligation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: [{}] ⊢ {} <: {} : {}",
            self.location,
            render_env(&self.env),
            print_type(&self.source),
            print_type(&self.target),
            self.certainty
        )?;
        if let Some(w) = &self.witness {
            write!(f, "\n  witness {w}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CompOutcome {
    Accept,
    /// Index of the refuted obligation.
    Reject(usize),
    Fallback(String),
}

#[derive(Clone, Debug)]
pub struct CompReport {
    pub outcome: CompOutcome,
    pub obligations: Vec<Obligation>,
    pub prover_log: Vec<ObligationRecord>,
    pub errors: Vec<(String, CompError)>,
    pub in_fragment: bool,
}

impl CompReport {
    /// Counts of Yes, Maybe and No verdicts over the subtyping checks.
    pub fn verdicts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for o in &self.obligations {
            match o.certainty {
                Certainty::Yes => c.0 += 1,
                Certainty::Maybe => c.1 += 1,
                Certainty::No => c.2 += 1,
            }
        }
        c
    }

    pub fn rejection(&self) -> Option<&Obligation> {
        match self.outcome {
            CompOutcome::Reject(i) => self.obligations.get(i),
            _ => None,
        }
    }
}

/// The self type of `x` at type `t`: base types gain `y = x`.
///
/// Function types are returned unchanged. Strengthening them with `f x`
/// applications would put uninterpreted terms into every obligation that
/// mentions a call, leaving the decidable fragment.
pub fn selfify(t: &Type, x: &str) -> Type {
    match t {
        Type::Base(y, b, p) => {
            let (y, p) = if y == x {
                let y2 = avoid_name(y, &|n| n == x || free_vars(p).contains(n));
                (y2.clone(), rename_term(p, y, &y2))
            } else {
                (y.clone(), (**p).clone())
            };
            let eq = Term::eq(Term::var(&y), Term::var(x));
            let p2 = if p.is_true() { eq } else { Term::and(p, eq) };
            Type::Base(y, *b, Box::new(p2))
        }
        Type::Exists(z, s, u) => {
            if z == x {
                let z2 = avoid_name(z, &|n| n == x || free_vars_type(u).contains(n));
                Type::Exists(z2.clone(), s.clone(), Box::new(selfify(&rename_type(u, z, &z2), x)))
            } else {
                Type::Exists(z.clone(), s.clone(), Box::new(selfify(u, x)))
            }
        }
        _ => t.clone(),
    }
}

fn linear(t: &Term) -> bool {
    match t {
        Term::Var(_) => true,
        Term::Ctor(Ctor::Int(_), _) => true,
        Term::App(..) => {
            let (h, args) = t.spine();
            match (h, args.as_slice()) {
                (Term::Prim(Prim::Add | Prim::Sub), [a, b]) => linear(a) && linear(b),
                (Term::Prim(Prim::Mul), [a, b]) => (a.as_int().is_some() && linear(b)) || (b.as_int().is_some() && linear(a)),
                (Term::Prim(Prim::Lower | Prim::Upper | Prim::Length), [a]) => matches!(a, Term::Var(_)),
                _ => false,
            }
        }
        _ => false,
    }
}

fn data_term(t: &Term) -> bool {
    match t {
        Term::Var(_) => true,
        Term::Ctor(_, args) => args.iter().all(|a| linear(a) || data_term(a)),
        _ => false,
    }
}

/// Whether a refinement lies in the decidable fragment.
pub fn in_fragment(p: &Term) -> bool {
    match p {
        Term::Var(_) => true,
        Term::Ctor(Ctor::Bool(_), _) => true,
        Term::Case(s, brs) => matches!(**s, Term::Var(_)) && brs.iter().all(|(_, h)| in_fragment(h.peel_lams().1)),
        Term::App(..) => {
            let (h, args) = p.spine();
            match (h, args.as_slice()) {
                (Term::Prim(Prim::And), [a, b]) => in_fragment(a) && in_fragment(b),
                (Term::Prim(Prim::Not), [a]) => in_fragment(a),
                (Term::Prim(Prim::Lt | Prim::Le), [a, b]) => linear(a) && linear(b),
                (Term::Prim(Prim::Eq), [a, b]) => (linear(a) && linear(b)) || (data_term(a) && data_term(b)),
                _ => false,
            }
        }
        _ => false,
    }
}

fn type_in_fragment(t: &Type) -> bool {
    match t {
        Type::Base(_, _, p) => p.is_true() || in_fragment(p),
        Type::Arrow(_, s, u) | Type::Exists(_, s, u) => type_in_fragment(s) && type_in_fragment(u),
        Type::Var(..) | Type::Dynamic => false,
    }
}

fn term_in_fragment(e: &Term) -> bool {
    let ok = std::cell::Cell::new(true);
    visit_term(
        e,
        &mut |t| {
            // unannotated let binders carry a type variable
            if !matches!(t, Type::Var(..)) && !type_in_fragment(t) {
                ok.set(false)
            }
        },
        &mut |d| match d {
            Term::Cast(..) | Term::Checking { .. } | Term::POr(..) | Term::PAnd(..) | Term::Exists(..) | Term::Hole(_) => ok.set(false),
            Term::Case(s, _) if !matches!(**s, Term::Var(_)) => ok.set(false),
            Term::App(..) => {
                let (h, args) = d.spine();
                if let (Term::Prim(p @ (Prim::Mul | Prim::Div | Prim::Mod)), [a, b]) = (h, args.as_slice()) {
                    let constant = if *p == Prim::Mul { a.as_int().is_some() || b.as_int().is_some() } else { b.as_int().is_some() };
                    if !constant {
                        ok.set(false)
                    }
                }
            }
            _ => {}
        },
    );
    ok.get()
}

pub fn program_in_fragment(p: &SourceProgram) -> bool {
    p.bindings.iter().all(|b| b.ty.as_ref().is_none_or(type_in_fragment) && term_in_fragment(&b.term)) && term_in_fragment(&p.main)
}

/// Moves the outer existentials of `t` into `env` under names that do not clash.
fn peel(env: &mut Env, t: &Type) -> Type {
    let mut cur = t.clone();
    while let Type::Exists(z, s, u) = cur {
        let z2 = avoid_name(&z, &|n| env.contains(n));
        let u = if z2 != z { rename_type(&u, &z, &z2) } else { *u };
        env.push(&z2, *s);
        cur = u;
    }
    cur
}

/// A base type's predicate about `y`, existentials turned into predicate binders.
fn as_predicate(t: &Type, y: &str) -> Option<(BaseTy, Term)> {
    match t {
        Type::Base(z, b, p) => Some((*b, subst_term(p, z, &Term::var(y)))),
        Type::Exists(w, s, u) => {
            let (b, pu) = as_predicate(u, y)?;
            let p = eliminate_singleton(w, s, &pu).unwrap_or_else(|| Term::exists(w, (**s).clone(), pu));
            Some((b, p))
        }
        _ => None,
    }
}

pub struct CompChecker<'a> {
    sub: Subtyper<'a>,
    pub obligations: Vec<Obligation>,
    location: String,
}

type Res<T> = Result<T, CompError>;

struct Branch {
    ctor: Ctor,
    env: Env,
    locals: Vec<(Name, Type)>,
    body: Term,
}

impl<'a> CompChecker<'a> {
    pub fn new(prover: Prover) -> CompChecker<'a> {
        CompChecker { sub: Subtyper::new(prover, None), obligations: Vec::new(), location: "main".into() }
    }

    /// Algorithmic subtyping; existentials on the left become bindings.
    pub fn asubtype(&mut self, env: &Env, e: &Type, r: &Type) -> Res<Certainty> {
        if r.has_exists() {
            return Err(CompError::ExistentialOnRight(print_type(r)));
        }
        let v = self.sub.subtype(env, e, r);
        self.obligations.push(Obligation {
            location: self.location.clone(),
            env: env.clone(),
            source: e.clone(),
            target: r.clone(),
            certainty: v.certainty,
            witness: v.witness,
            refuted: v.refuted,
        });
        Ok(v.certainty)
    }

    pub fn atype(&mut self, env: &Env, e: &Term) -> Res<Type> {
        match e {
            Term::Var(x) => env.lookup(x).map(|t| selfify(t, x)).ok_or_else(|| CompError::UnknownVariable(x.clone())),
            Term::Prim(Prim::Eq) => Err(CompError::Unsupported("equality must be applied to two arguments".into())),
            Term::Prim(p) => Ok(prim_type(p)),
            Term::Ctor(c, args) => {
                let mut ty = ctor_type(c);
                let mut binds = Vec::new();
                let mut env2 = env.clone();
                for a in args {
                    ty = self.apply(&mut env2, &mut binds, ty, a, &c.name())?;
                }
                Ok(wrap(binds, ty))
            }
            Term::Lam(x, s, b) => {
                if s.has_tyvar() {
                    return Err(CompError::NeedsAnnotation(x.clone()));
                }
                let (x, b) = unshadow(env, x, b);
                let u = self.atype(&env.extended(&x, (**s).clone()), &b)?;
                Ok(Type::Arrow(x, s.clone(), Box::new(u)))
            }
            Term::App(f, a) => {
                if let Term::Lam(x, ann, body) = &**f {
                    let (ta, x, body) = self.bind_let(env, x, ann, body, a, &BTreeSet::new())?;
                    let u = self.atype(&env.extended(&x, ta.clone()), &body)?;
                    return Ok(Type::Exists(x, Box::new(ta), Box::new(u)));
                }
                let (h, args) = e.spine();
                match (h, args.as_slice()) {
                    (Term::Prim(Prim::Eq), [l, r]) => return self.equality(env, l, r),
                    (Term::Prim(Prim::Fix(t)), [g]) => {
                        self.check(env, g, &Type::fun((**t).clone(), (**t).clone()))?;
                        return Ok((**t).clone());
                    }
                    _ => {}
                }
                let tf = self.atype(env, f)?;
                let mut env2 = env.clone();
                let mut binds = Vec::new();
                let before = env2.len();
                let core = peel(&mut env2, &tf);
                binds.extend(env2.entries()[before..].iter().cloned());
                let ty = self.apply(&mut env2, &mut binds, core, a, &print_term(f))?;
                Ok(wrap(binds, ty))
            }
            Term::Case(s, brs) => {
                let branches = self.branches(env, s, brs, &BTreeSet::new())?;
                let mut tys = Vec::new();
                for br in branches {
                    let t = self.atype(&br.env, &br.body)?;
                    tys.push((br.ctor, br.locals, t));
                }
                self.tycase(&tys)
            }
            Term::Cast(..) | Term::Checking { .. } => Err(CompError::Unsupported("casts are outside the compositional fragment".into())),
            Term::POr(..) | Term::PAnd(..) | Term::Exists(..) | Term::Hole(_) => {
                Err(CompError::Unsupported(format!("{} is outside the compositional fragment", print_term(e))))
            }
        }
    }

    /// Applies a function type to an argument: checks the argument against the
    /// domain and binds it existentially.
    fn apply(&mut self, env: &mut Env, binds: &mut Vec<(Name, Type)>, tf: Type, a: &Term, what: &str) -> Res<Type> {
        match tf {
            Type::Arrow(x, s, u) => {
                let ta = self.atype(env, a)?;
                self.asubtype(env, &ta, &s)?;
                let x2 = avoid_name(&x, &|n| env.contains(n));
                let u = if x2 != x { rename_type(&u, &x, &x2) } else { *u };
                env.push(&x2, ta.clone());
                binds.push((x2, ta));
                Ok(u)
            }
            Type::Dynamic => Err(CompError::Unsupported(format!("{what} has type Dynamic"))),
            _ => Err(CompError::NotAFunction(what.to_string())),
        }
    }

    fn equality(&mut self, env: &Env, l: &Term, r: &Term) -> Res<Type> {
        let tl = self.atype(env, l)?;
        let mut env2 = env.clone();
        let a = avoid_name("a", &|n| env2.contains(n));
        env2.push(&a, tl.clone());
        let tr = self.atype(&env2, r)?;
        let b = avoid_name("b", &|n| env2.contains(n));
        let base = |t: &Type| {
            let mut e = Env::new();
            peel(&mut e, t).base_id()
        };
        if base(&tl).is_none() || base(&tl) != base(&tr) {
            return Err(CompError::Unsupported(format!("equality between {} and {}", print_type(&tl), print_type(&tr))));
        }
        let z = Type::refined("z", BaseTy::Bool, Term::eq(Term::var("z"), Term::eq(Term::var(&a), Term::var(&b))));
        Ok(Type::exists(&a, tl, Type::exists(&b, tr, z)))
    }

    /// Types the bound expression of a `let`, returning the binder's type and
    /// a binder name clear of `env` and `avoid`.
    fn bind_let(&mut self, env: &Env, x: &str, ann: &Type, body: &Term, a: &Term, avoid: &BTreeSet<Name>) -> Res<(Type, Name, Term)> {
        let ta = if matches!(ann, Type::Var(..)) {
            self.atype(env, a)?
        } else {
            self.check(env, a, ann)?;
            ann.clone()
        };
        let clash = |n: &str| env.contains(n) || avoid.contains(n);
        let x2 = if clash(x) { avoid_name(x, &clash) } else { x.to_string() };
        let body = if x2 != x { rename_term(body, x, &x2) } else { body.clone() };
        Ok((ta, x2, body))
    }

    pub fn check(&mut self, env: &Env, e: &Term, t: &Type) -> Res<()> {
        match (e, t) {
            (Term::Lam(x, s, b), Type::Arrow(y, t1, t2)) if !s.has_tyvar() => {
                self.asubtype(env, t1, s)?;
                let fv_t2 = free_vars_type(t2);
                let clash = |n: &str| (n != y && fv_t2.contains(n)) || env.contains(n);
                let x2 = if clash(x) { avoid_name(x, &clash) } else { x.clone() };
                let b2 = if x2 != *x { rename_term(b, x, &x2) } else { (**b).clone() };
                let t2 = rename_type(t2, y, &x2);
                self.check(&env.extended(&x2, (**t1).clone()), &b2, &t2)
            }
            (Term::App(f, a), _) if matches!(&**f, Term::Lam(..)) => {
                let Term::Lam(x, ann, body) = &**f else { unreachable!() };
                let (ta, x, body) = self.bind_let(env, x, ann, body, a, &free_vars_type(t))?;
                self.check(&env.extended(&x, ta), &body, t)
            }
            (Term::Case(s, brs), _) => {
                for br in self.branches(env, s, brs, &free_vars_type(t))? {
                    self.check(&br.env, &br.body, t)?;
                }
                Ok(())
            }
            _ => {
                let te = self.atype(env, e)?;
                self.asubtype(env, &te, t)?;
                Ok(())
            }
        }
    }

    /// Branch environments: constructor fields at their declared types and
    /// the scrutinee's self binding refined by the constructor guard.
    fn branches(&mut self, env: &Env, s: &Term, brs: &[(Ctor, Term)], avoid: &BTreeSet<Name>) -> Res<Vec<Branch>> {
        let x = match s {
            Term::Var(x) => x.clone(),
            other => return Err(CompError::CaseOnNonVariable(print_term(other))),
        };
        let st = env.lookup(&x).ok_or_else(|| CompError::UnknownVariable(x.clone()))?;
        let b = peel(&mut Env::new(), st).base_id().ok_or_else(|| CompError::Unsupported(format!("case on {x} of type {}", print_type(st))))?;
        let want: BTreeSet<String> = match b.ctors() {
            Some(cs) => cs.iter().map(|c| c.name()).collect(),
            None => return Err(CompError::Unsupported(format!("case on {}", b.name()))),
        };
        let have: BTreeSet<String> = brs.iter().map(|(c, _)| c.name()).collect();
        if want != have || have.len() != brs.len() {
            return Err(CompError::NonExhaustiveCase(b.name().into()));
        }
        let mut out = Vec::new();
        for (c, h) in brs {
            let (params, _) = h.peel_lams();
            if params.len() != c.arity() + 1 {
                return Err(CompError::Unsupported(format!("branch {} binds {} names", c.name(), params.len())));
            }
            let mut body = h.clone();
            let mut env2 = env.clone();
            let mut ft = ctor_type(c);
            let mut locals: Vec<(Name, Type)> = Vec::new();
            for i in 0..=c.arity() {
                let Term::Lam(y, _, inner) = body else { unreachable!() };
                let clash = |n: &str| env2.contains(n) || avoid.contains(n) || n == x;
                let y2 = avoid_name(&y, &clash);
                let inner = if y2 != y && y != "_" { rename_term(&inner, &y, &y2) } else { *inner };
                let ty = if i < c.arity() {
                    let Type::Arrow(z, fty, rest) = ft else { unreachable!() };
                    ft = subst_type(&rest, &z, &Term::var(&y2));
                    *fty
                } else {
                    let sv = Term::var(&y2);
                    let guard = match c {
                        Ctor::Bool(true) => sv.clone(),
                        Ctor::Bool(false) => Term::not(sv.clone()),
                        _ => Term::eq(sv.clone(), Term::Ctor(c.clone(), locals.iter().map(|(n, _)| Term::var(n)).collect())),
                    };
                    Type::Base(y2.clone(), b, Box::new(Term::and(Term::eq(sv, Term::var(&x)), guard)))
                };
                env2.push(&y2, ty.clone());
                locals.push((y2, ty));
                body = inner;
            }
            out.push(Branch { ctor: c.clone(), env: env2, locals, body });
        }
        Ok(out)
    }

    /// Lifts a case to the type level: a disjunction of the branch predicates,
    /// each under its constructor guard with the branch locals quantified.
    fn tycase(&self, branches: &[(Ctor, Vec<(Name, Type)>, Type)]) -> Res<Type> {
        let y = fresh_name("y");
        let mut base = None;
        let mut disj = Vec::new();
        for (_, locals, t) in branches {
            let Some((b, mut p)) = as_predicate(t, &y) else {
                break;
            };
            if base.is_some_and(|b0| b0 != b) {
                return Err(CompError::Unsupported("case branches have different base types".into()));
            }
            base = Some(b);
            for (x, xt) in locals.iter().rev() {
                p = eliminate_singleton(x, xt, &p).unwrap_or_else(|| Term::exists(x, xt.clone(), p));
            }
            disj.push(p);
        }
        if let (Some(b), true) = (base, disj.len() == branches.len()) {
            let p = disj.into_iter().reduce(Term::or).unwrap_or_else(Term::ff);
            return Ok(Type::refined(&y, b, p));
        }
        let first = &branches[0].2;
        let locals: BTreeSet<Name> = branches.iter().flat_map(|(_, l, _)| l.iter().map(|(n, _)| n.clone())).collect();
        if branches.iter().all(|(_, _, t)| alpha_eq_type(t, first)) && free_vars_type(first).is_disjoint(&locals) {
            return Ok(first.clone());
        }
        Err(CompError::Unsupported("case branches have incompatible function types; annotate the case".into()))
    }
}

fn wrap(binds: Vec<(Name, Type)>, t: Type) -> Type {
    binds.into_iter().rev().fold(t, |acc, (x, s)| Type::Exists(x, Box::new(s), Box::new(acc)))
}

fn unshadow(env: &Env, x: &str, body: &Term) -> (Name, Term) {
    if env.contains(x) {
        let x2 = avoid_name(x, &|n| env.contains(n));
        let b = rename_term(body, x, &x2);
        (x2, b)
    } else {
        (x.to_string(), body.clone())
    }
}

/// Checks a whole program compositionally.
pub fn comp_check(p: &SourceProgram, cfg: &ProverConfig) -> CompReport {
    let mut ck = CompChecker::new(Prover::new(cfg.clone()));
    let mut env = Env::new();
    let mut errors = Vec::new();
    for b in &p.bindings {
        ck.location = b.name.clone();
        let res = match &b.ty {
            Some(t) => ck.check(&env, &b.term, t).map(|_| t.clone()),
            None => ck.atype(&env, &b.term),
        };
        match res {
            Ok(t) => env.push(&b.name, t),
            Err(e) => {
                errors.push((b.name.clone(), e));
                env.push(&b.name, b.ty.clone().unwrap_or(Type::Dynamic));
            }
        }
    }
    ck.location = "main".into();
    if let Err(e) = ck.atype(&env, &p.main) {
        errors.push(("main".into(), e));
    }
    let in_frag = program_in_fragment(p);
    let refuted = ck.obligations.iter().position(|o| o.certainty == Certainty::No);
    let outcome = match refuted {
        Some(i) if in_frag => CompOutcome::Reject(i),
        _ if !errors.is_empty() => CompOutcome::Fallback(format!("{}: {}", errors[0].0, errors[0].1)),
        Some(_) => CompOutcome::Fallback("a check was refuted outside the decidable fragment".into()),
        None if ck.obligations.iter().all(|o| o.certainty == Certainty::Yes) => CompOutcome::Accept,
        None => CompOutcome::Fallback("some checks are undecided".into()),
    };
    CompReport { outcome, obligations: ck.obligations, prover_log: ck.sub.log, errors, in_fragment: in_frag }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{parse_program, parse_term, parse_type, ParseOptions};

    fn ty(s: &str, scope: &[&str]) -> Type {
        let scope: Vec<Name> = scope.iter().map(|s| s.to_string()).collect();
        parse_type(s, &scope, ParseOptions::default()).unwrap()
    }

    #[test]
    fn selfify_cases() {
        assert!(alpha_eq_type(&selfify(&Type::int(), "x"), &ty("{y:Int | y = x}", &["x"])));
        assert!(alpha_eq_type(&selfify(&ty("{y:Int | y > 0}", &[]), "x"), &ty("{y:Int | y > 0 && y = x}", &["x"])));
        let ex = Type::exists("z", Type::int(), ty("{y:Int | y > z}", &["z"]));
        let want = Type::exists("z", Type::int(), ty("{y:Int | y > z && y = x}", &["z", "x"]));
        assert!(alpha_eq_type(&selfify(&ex, "x"), &want));
        // the binder never captures the variable itself
        let s = selfify(&ty("{x:Int | x > 0}", &[]), "x");
        assert!(free_vars_type(&s).contains("x"));
    }

    #[test]
    fn x_minus_x_is_zero() {
        let env = Env::from_entries(vec![("x".into(), Type::int())]);
        let mut ck = CompChecker::new(Prover::default());
        let e = parse_term("x - x", &["x".to_string()], ParseOptions::default()).unwrap();
        let t = ck.atype(&env, &e).unwrap();
        assert!(matches!(t, Type::Exists(..)));
        let zero = ty("{z:Int | z = 0}", &[]);
        assert_eq!(ck.asubtype(&env, &t, &zero).unwrap(), Certainty::Yes);
    }

    #[test]
    fn application_result_is_existential() {
        let pos = ty("{x:Int | x > 0}", &[]);
        let f = Type::arrow("x", pos.clone(), ty("{y:Int | y = x}", &["x"]));
        let env = Env::from_entries(vec![("f".into(), f), ("e".into(), pos.clone())]);
        let mut ck = CompChecker::new(Prover::default());
        let e = parse_term("f e", &["f".to_string(), "e".to_string()], ParseOptions::default()).unwrap();
        let t = ck.atype(&env, &e).unwrap();
        assert!(matches!(&t, Type::Exists(_, _, u) if matches!(**u, Type::Base(..))));
        assert_eq!(ck.asubtype(&env, &t, &pos).unwrap(), Certainty::Yes);
        assert!(matches!(ck.asubtype(&env, &pos, &t), Err(CompError::ExistentialOnRight(_))));
    }

    #[test]
    fn case_scrutinee_must_be_a_variable() {
        let p = parse_program("let f (n:Int) : Int = case (n < 1) of true => 0 | false => 1; f 3").unwrap();
        let r = comp_check(&p, &ProverConfig::default());
        assert!(matches!(r.outcome, CompOutcome::Fallback(_)));
        assert!(r.errors.iter().any(|(_, e)| matches!(e, CompError::CaseOnNonVariable(_))));
    }

    #[test]
    fn accept_and_reject() {
        let good = parse_program(
            "let f (n:Int) : {r:Int | 0 <= r} = let neg = n < 0 in if neg then 0 - n else n; f 3",
        )
        .unwrap();
        let r = comp_check(&good, &ProverConfig::default());
        assert_eq!(r.outcome, CompOutcome::Accept, "{:?}", r.errors);
        assert_eq!(r.verdicts().1, 0);
        let bad = parse_program(
            "let f (n:Int) : {r:Int | 0 <= r} = let neg = n < 0 in if neg then n else n; f 3",
        )
        .unwrap();
        let r = comp_check(&bad, &ProverConfig::default());
        assert!(matches!(r.outcome, CompOutcome::Reject(_)), "{:?} {:?}", r.outcome, r.errors);
        assert!(r.rejection().unwrap().witness_replays());
    }

    #[test]
    fn nonlinear_program_falls_back() {
        let p = parse_program("let f (a:Int) (b:{b:Int | 0 < b}) : {r:Int | 0 <= r} = mod a b; f 7 2").unwrap();
        let r = comp_check(&p, &ProverConfig::default());
        assert!(!r.in_fragment);
        assert!(matches!(r.outcome, CompOutcome::Fallback(_)));
    }
}
