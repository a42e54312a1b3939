//! Refinement reconstruction: replaces `?` types with refinement types.
//!
//! Three phases. Constraint generation walks the program and emits subtyping
//! and well-formedness constraints over type variables. Shape reconstruction
//! assigns every type variable a shape, introducing one refinement placeholder
//! per base occurrence and leaving implication constraints between
//! predicates. Solving turns the lower bounds of each placeholder into its
//! strongest solution, then discharges the ground leftovers with the prover.

use crate::ast::*;
use crate::prover::{eliminate_singleton, fold_constants, Certainty, Prover, ProverConfig, Witness};
use crate::subtyping::render_env;
use crate::surface::{handler_param_types, print_term, print_type, SourceProgram};
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq)]
pub enum Constraint {
    Sub(Env, Type, Type),
    WfTy(Env, Type),
    Imp(Env, Term, Term),
    WtPred(Env, Term),
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Sub(g, s, t) => write!(f, "{} |- {} <: {}", render_env(g), print_type(s), print_type(t)),
            Constraint::WfTy(g, t) => write!(f, "{} |- {}", render_env(g), print_type(t)),
            Constraint::Imp(g, p, q) => write!(f, "{} |- {} ==> {}", render_env(g), print_term(p), print_term(q)),
            Constraint::WtPred(g, p) => write!(f, "{} |- {} : Bool", render_env(g), print_term(p)),
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ReconError {
    #[error("unbound variable {0}")]
    UnboundVariable(Name),
    #[error("no shape satisfies {constraint}: {reason}")]
    ShapeFail { constraint: String, reason: String },
    #[error("type variable under a cast in {0}")]
    TyVarUnderCast(String),
    #[error("not supported by reconstruction: {0}")]
    Unsupported(String),
    #[error("residual obligation refuted: {0}")]
    ResidualObligationFailed(String),
}

fn rename_binder_term(env: &Env, x: &str, body: &Term) -> (Name, Term) {
    if env.contains(x) || x == "_" {
        let x2 = avoid_name(x, &|n| env.contains(n) || n == "_");
        let b = rename_term(body, x, &x2);
        (x2, b)
    } else {
        (x.to_string(), body.clone())
    }
}

fn rename_binder_type(env: &Env, x: &str, body: &Type) -> (Name, Type) {
    if env.contains(x) || x == "_" {
        let x2 = avoid_name(x, &|n| env.contains(n) || n == "_");
        let b = rename_type(body, x, &x2);
        (x2, b)
    } else {
        (x.to_string(), body.clone())
    }
}

// ---------------------------------------------------------------------------
// Constraint generation

#[derive(Default)]
struct Generator {
    out: Vec<Constraint>,
}

impl Generator {
    fn fresh(&mut self) -> (usize, Type) {
        let id = fresh_id();
        (id, Type::Var(Subst::new(), id))
    }

    fn ty(&mut self, env: &Env, t: &Type) -> Result<(), ReconError> {
        match t {
            Type::Base(x, b, p) => {
                if p.is_true() {
                    return Ok(());
                }
                let (x2, p2) = rename_binder_term(env, x, p);
                let env2 = env.extended(&x2, Type::base(*b));
                let tp = self.term(&env2, &p2)?;
                self.out.push(Constraint::Sub(env2, tp, Type::bool()));
                Ok(())
            }
            Type::Arrow(x, s, u) | Type::Exists(x, s, u) => {
                self.ty(env, s)?;
                let (x2, u2) = rename_binder_type(env, x, u);
                self.ty(&env.extended(&x2, (**s).clone()), &u2)
            }
            Type::Var(..) => {
                self.out.push(Constraint::WfTy(env.clone(), t.clone()));
                Ok(())
            }
            Type::Dynamic => Ok(()),
        }
    }

    /// Application of something of type `tf` to `a`.
    fn app(&mut self, env: &Env, tf: Type, a: &Term) -> Result<Type, ReconError> {
        let s = self.term(env, a)?;
        let hint = match &tf {
            Type::Arrow(x, ..) => x.clone(),
            _ => "x".to_string(),
        };
        let x = avoid_name(&hint, &|n| env.contains(n) || n == "_");
        let (id, alpha) = self.fresh();
        // A known non-dependent arrow cannot make the result depend on the argument.
        let dependent = match &tf {
            Type::Arrow(y, _, u) => free_vars_type(u).contains(y),
            _ => true,
        };
        self.out.push(Constraint::Sub(env.clone(), tf, Type::arrow(&x, s.clone(), alpha.clone())));
        if !dependent {
            self.out.push(Constraint::WfTy(env.clone(), alpha.clone()));
            return Ok(alpha);
        }
        self.out.push(Constraint::WfTy(env.extended(&x, s.clone()), alpha));
        Ok(Type::Var(Subst::single(&x, a.clone(), s), id))
    }

    fn term(&mut self, env: &Env, e: &Term) -> Result<Type, ReconError> {
        match e {
            Term::Var(x) => env.lookup(x).cloned().ok_or_else(|| ReconError::UnboundVariable(x.clone())),
            Term::Prim(p) => {
                if let Prim::If(t) | Prim::Fix(t) = p {
                    self.ty(env, t)?;
                }
                Ok(prim_type(p))
            }
            Term::Ctor(c, args) => {
                let mut tf = ctor_type(c);
                for a in args {
                    tf = self.app(env, tf, a)?;
                }
                Ok(tf)
            }
            Term::Lam(x, s, b) => {
                self.ty(env, s)?;
                let (x2, b2) = rename_binder_term(env, x, b);
                let t = self.term(&env.extended(&x2, (**s).clone()), &b2)?;
                Ok(Type::Arrow(x2, s.clone(), Box::new(t)))
            }
            Term::App(f, a) => {
                let tf = self.term(env, f)?;
                self.app(env, tf, a)
            }
            Term::Cast(s, t, _) => {
                if s.has_tyvar() || t.has_tyvar() {
                    return Err(ReconError::TyVarUnderCast(print_term(e)));
                }
                self.ty(env, s)?;
                self.ty(env, t)?;
                Ok(Type::fun((**s).clone(), (**t).clone()))
            }
            Term::Case(s, brs) => {
                let base = match brs.first() {
                    Some((c, _)) => c.base(),
                    None => return Err(ReconError::Unsupported("case without branches".into())),
                };
                let ts = self.term(env, s)?;
                self.out.push(Constraint::Sub(env.clone(), ts, Type::base(base)));
                let (_, alpha) = self.fresh();
                self.out.push(Constraint::WfTy(env.clone(), alpha.clone()));
                for (c, h) in brs {
                    let th = self.term(env, h)?;
                    let expected = handler_param_types(c)
                        .into_iter()
                        .rev()
                        .fold(alpha.clone(), |acc, t| Type::arrow(&fresh_name("f"), t, acc));
                    self.out.push(Constraint::Sub(env.clone(), th, expected));
                }
                Ok(alpha)
            }
            Term::POr(a, b, _) | Term::PAnd(a, b, _) => {
                for x in [a, b] {
                    let t = self.term(env, x)?;
                    self.out.push(Constraint::Sub(env.clone(), t, Type::bool()));
                }
                Ok(Type::bool())
            }
            Term::Exists(x, t, b) => {
                self.ty(env, t)?;
                let (x2, b2) = rename_binder_term(env, x, b);
                let env2 = env.extended(&x2, (**t).clone());
                let tb = self.term(&env2, &b2)?;
                self.out.push(Constraint::Sub(env2, tb, Type::bool()));
                Ok(Type::bool())
            }
            Term::Checking { .. } => Err(ReconError::Unsupported("active check in source".into())),
            Term::Hole(_) => Err(ReconError::Unsupported("placeholder in source".into())),
        }
    }
}

/// Type of `e` under `env` together with the constraints that make it valid.
pub fn generate_constraints(env: &Env, e: &Term) -> Result<(Type, Vec<Constraint>), ReconError> {
    let mut g = Generator::default();
    for (x, t) in env.entries() {
        let prefix = Env::from_entries(env.entries().iter().take_while(|(y, _)| y != x).cloned().collect());
        g.ty(&prefix, t)?;
    }
    let t = g.term(env, e)?;
    Ok((t, g.out))
}

// ---------------------------------------------------------------------------
// Rewriting type variables and placeholders

struct Rewrite<'a> {
    tyvar: &'a dyn Fn(usize) -> Option<Type>,
    hole: &'a dyn Fn(usize) -> Option<Term>,
    /// Simplify refinements that contained a placeholder.
    tidy: bool,
    /// Abstract opaque substituted arguments and weaken the result until a cast can check it.
    open: bool,
}

impl Rewrite<'_> {
    fn subst(&self, th: &Subst) -> Subst {
        Subst(
            th.0.iter()
                .map(|en| SubstEntry { name: en.name.clone(), term: self.term(&en.term), ty: self.ty(&en.ty) })
                .collect(),
        )
    }

    fn ty(&self, t: &Type) -> Type {
        match t {
            Type::Base(x, b, p) => {
                let mut p2 = if self.open { self.term(&abstract_arguments(None, p)) } else { self.term(p) };
                if self.tidy && has_hole(p) {
                    p2 = if self.open { checkable(&p2) } else { simplify(&p2) };
                }
                Type::Base(x.clone(), *b, Box::new(p2))
            }
            Type::Arrow(x, s, u) => Type::Arrow(x.clone(), Box::new(self.ty(s)), Box::new(self.ty(u))),
            Type::Exists(x, s, u) => Type::Exists(x.clone(), Box::new(self.ty(s)), Box::new(self.ty(u))),
            Type::Var(th, a) => {
                let th2 = self.subst(th);
                match (self.tyvar)(*a) {
                    Some(r) => apply_subst_type(&self.ty(&r), &th2),
                    None => Type::Var(th2, *a),
                }
            }
            Type::Dynamic => Type::Dynamic,
        }
    }

    fn term(&self, e: &Term) -> Term {
        match e {
            Term::Var(_) => e.clone(),
            Term::Prim(Prim::If(t)) => Term::Prim(Prim::If(Box::new(self.ty(t)))),
            Term::Prim(Prim::Fix(t)) => Term::Prim(Prim::Fix(Box::new(self.ty(t)))),
            Term::Prim(_) => e.clone(),
            Term::Ctor(c, args) => Term::Ctor(c.clone(), args.iter().map(|a| self.term(a)).collect()),
            Term::Lam(x, t, b) => Term::Lam(x.clone(), Box::new(self.ty(t)), Box::new(self.term(b))),
            Term::Exists(x, t, b) => Term::Exists(x.clone(), Box::new(self.ty(t)), Box::new(self.term(b))),
            Term::App(f, a) => Term::App(Box::new(self.term(f)), Box::new(self.term(a))),
            Term::Cast(s, t, l) => Term::Cast(Box::new(self.ty(s)), Box::new(self.ty(t)), *l),
            Term::Checking { target, residual, subject, source, label } => Term::Checking {
                target: Box::new(self.ty(target)),
                residual: Box::new(self.term(residual)),
                subject: Box::new(self.term(subject)),
                source: Box::new(self.ty(source)),
                label: *label,
            },
            Term::Case(s, brs) => {
                Term::Case(Box::new(self.term(s)), brs.iter().map(|(c, h)| (c.clone(), self.term(h))).collect())
            }
            Term::POr(a, b, n) => Term::POr(Box::new(self.term(a)), Box::new(self.term(b)), *n),
            Term::PAnd(a, b, n) => Term::PAnd(Box::new(self.term(a)), Box::new(self.term(b)), *n),
            Term::Hole(h) => {
                let th2 = self.subst(&h.subst);
                match (self.hole)(h.id) {
                    Some(r) => apply_subst_term(&self.term(&r), &th2),
                    None => Term::Hole(Box::new(Hole { id: h.id, scope: h.scope.clone(), subst: th2 })),
                }
            }
        }
    }

    fn env(&self, g: &Env) -> Env {
        Env::from_entries(g.entries().iter().map(|(x, t)| (x.clone(), self.ty(t))).collect())
    }

    fn constraint(&self, c: &Constraint) -> Constraint {
        match c {
            Constraint::Sub(g, s, t) => Constraint::Sub(self.env(g), self.ty(s), self.ty(t)),
            Constraint::WfTy(g, t) => Constraint::WfTy(self.env(g), self.ty(t)),
            Constraint::Imp(g, p, q) => Constraint::Imp(self.env(g), self.term(p), self.term(q)),
            Constraint::WtPred(g, p) => Constraint::WtPred(self.env(g), self.term(p)),
        }
    }
}

pub fn has_hole(e: &Term) -> bool {
    term_has(e, &|t| matches!(t, Term::Hole(_)))
}

fn holes_in(e: &Term) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    visit_term(e, &mut |_| {}, &mut |t| {
        if let Term::Hole(h) = t {
            out.insert(h.id);
        }
    });
    out
}

/// Replaces occurrences `θ·ψ` of one placeholder by `θ(r)`.
pub fn replace_placeholder(e: &Term, id: usize, r: &Term) -> Term {
    let none = |_| None;
    let hole = |h: usize| (h == id).then(|| r.clone());
    Rewrite { tyvar: &none, hole: &hole, tidy: false, open: false }.term(e)
}

// ---------------------------------------------------------------------------
// Shape reconstruction

/// A refinement placeholder `ψ` with its environment (ending in its own binder).
#[derive(Clone, Debug, PartialEq)]
pub struct Placeholder {
    pub id: usize,
    pub env: Env,
}

impl Placeholder {
    pub fn scope(&self) -> Vec<Name> {
        self.env.names()
    }
}

#[derive(Clone, Debug, Default)]
pub struct Shapes {
    /// Type variable replacement; entries may mention other variables.
    pub pi: HashMap<usize, Type>,
    /// Remaining predicate constraints (implications and well-typedness).
    pub predicates: Vec<Constraint>,
    pub placeholders: BTreeMap<usize, Placeholder>,
}

impl Shapes {
    fn rewrite<'a>(&'a self, tyvar: &'a dyn Fn(usize) -> Option<Type>) -> Rewrite<'a> {
        static NO_HOLE: fn(usize) -> Option<Term> = |_| None;
        Rewrite { tyvar, hole: &NO_HOLE, tidy: false, open: false }
    }

    pub fn resolve_type(&self, t: &Type) -> Type {
        let f = |a: usize| self.pi.get(&a).cloned();
        self.rewrite(&f).ty(t)
    }

    pub fn resolve_term(&self, e: &Term) -> Term {
        let f = |a: usize| self.pi.get(&a).cloned();
        self.rewrite(&f).term(e)
    }

    /// Unwraps resolved variables at the head of `t`.
    fn head(&self, t: &Type) -> Type {
        let mut cur = t.clone();
        while let Type::Var(th, a) = &cur {
            match self.pi.get(a) {
                Some(r) => cur = apply_subst_type(r, th),
                None => break,
            }
        }
        cur
    }

    fn occurs(&self, a: usize, t: &Type) -> bool {
        match t {
            Type::Var(_, b) => *b == a || self.pi.get(b).is_some_and(|r| self.occurs(a, r)),
            Type::Arrow(_, s, u) | Type::Exists(_, s, u) => self.occurs(a, s) || self.occurs(a, u),
            Type::Base(..) | Type::Dynamic => false,
        }
    }
}

struct ShapeState {
    shapes: Shapes,
    wf_env: HashMap<usize, Env>,
}

impl ShapeState {
    fn env_of(&self, a: usize) -> Env {
        self.wf_env.get(&a).cloned().unwrap_or_default()
    }

    fn to_arrow(&mut self, a: usize, hint: &str) {
        let g = self.env_of(a);
        let x = avoid_name(hint, &|n| g.contains(n) || n == "_");
        let (a1, a2) = (fresh_id(), fresh_id());
        let t1 = Type::Var(Subst::new(), a1);
        self.wf_env.insert(a1, g.clone());
        self.wf_env.insert(a2, g.extended(&x, t1.clone()));
        self.shapes.pi.insert(a, Type::Arrow(x, Box::new(t1), Box::new(Type::Var(Subst::new(), a2))));
    }

    fn to_base(&mut self, a: usize, hint: &str, b: BaseTy) {
        // Refinements range over first-order values only.
        let mut dropped: BTreeSet<Name> = BTreeSet::new();
        let mut entries = Vec::new();
        for (x, t) in self.env_of(a).entries() {
            match self.shapes.head(t) {
                Type::Arrow(..) | Type::Dynamic => {
                    dropped.insert(x.clone());
                }
                t2 if free_vars_type(&t2).is_disjoint(&dropped) => entries.push((x.clone(), t.clone())),
                t2 => entries.push((x.clone(), erase(&t2))),
            }
        }
        let g = Env::from_entries(entries);
        let x = avoid_name(hint, &|n| g.contains(n) || n == "_");
        let id = fresh_id();
        let env = g.extended(&x, Type::base(b));
        let hole = Hole { id, scope: env.names(), subst: Subst::new() };
        self.shapes.placeholders.insert(id, Placeholder { id, env });
        self.shapes.pi.insert(a, Type::Base(x, b, Box::new(Term::Hole(Box::new(hole)))));
    }
}

fn shape_fail(c: &Constraint, reason: &str) -> ReconError {
    ReconError::ShapeFail { constraint: c.to_string(), reason: reason.to_string() }
}

/// Assigns shapes to all type variables; returns the replacement and the predicate constraints.
pub fn shape_reconstruct(constraints: Vec<Constraint>) -> Result<Shapes, ReconError> {
    let mut st = ShapeState { shapes: Shapes::default(), wf_env: HashMap::new() };
    for c in &constraints {
        if let Constraint::WfTy(g, Type::Var(th, a)) = c {
            if th.is_empty() {
                st.wf_env.entry(*a).or_insert_with(|| g.clone());
            }
        }
    }
    let mut work: VecDeque<Constraint> = constraints.into();
    let mut stuck: Vec<Constraint> = Vec::new();
    let mut out: Vec<Constraint> = Vec::new();
    loop {
        while let Some(c) = work.pop_front() {
            match &c {
                Constraint::Sub(g, s, t) => {
                    let s = st.shapes.head(s);
                    let t = st.shapes.head(t);
                    match (&s, &t) {
                        (Type::Dynamic, _) | (_, Type::Dynamic) => {}
                        (Type::Var(_, a), Type::Var(_, b)) => {
                            if a != b {
                                stuck.push(Constraint::Sub(g.clone(), s.clone(), t.clone()));
                            }
                        }
                        (Type::Var(_, a), arrow @ Type::Arrow(x, ..)) | (arrow @ Type::Arrow(x, ..), Type::Var(_, a)) => {
                            if st.shapes.occurs(*a, arrow) {
                                return Err(shape_fail(&c, "type variable occurs in the arrow it must equal"));
                            }
                            st.to_arrow(*a, x);
                            work.push_back(Constraint::Sub(g.clone(), s.clone(), t.clone()));
                            work.extend(stuck.drain(..));
                        }
                        (Type::Var(_, a), Type::Base(x, b, _)) | (Type::Base(x, b, _), Type::Var(_, a)) => {
                            st.to_base(*a, x, *b);
                            work.push_back(Constraint::Sub(g.clone(), s.clone(), t.clone()));
                            work.extend(stuck.drain(..));
                        }
                        (Type::Arrow(x, s1, s2), Type::Arrow(y, t1, t2)) => {
                            work.push_back(Constraint::Sub(g.clone(), (**t1).clone(), (**s1).clone()));
                            let fs2 = free_vars_type(s2);
                            let ft2 = free_vars_type(t2);
                            let z = avoid_name(x, &|n| {
                                g.contains(n) || n == "_" || (n != x && fs2.contains(n)) || (n != y && ft2.contains(n))
                            });
                            let s2 = if *x != z { rename_type(s2, x, &z) } else { (**s2).clone() };
                            let t2 = if *y != z { rename_type(t2, y, &z) } else { (**t2).clone() };
                            work.push_back(Constraint::Sub(g.extended(&z, (**t1).clone()), s2, t2));
                        }
                        (Type::Base(x, b1, p), Type::Base(y, b2, q)) => {
                            if b1 != b2 {
                                return Err(shape_fail(&c, "different base types"));
                            }
                            if q.is_true() {
                                continue;
                            }
                            let fp = free_vars(p);
                            let fq = free_vars(q);
                            let z = avoid_name(x, &|n| {
                                g.contains(n) || n == "_" || (n != x && fp.contains(n)) || (n != y && fq.contains(n))
                            });
                            let p = if *x != z { rename_term(p, x, &z) } else { (**p).clone() };
                            let q = if *y != z { rename_term(q, y, &z) } else { (**q).clone() };
                            out.push(Constraint::Imp(g.extended(&z, Type::base(*b1)), p, q));
                        }
                        (Type::Exists(..), _) | (_, Type::Exists(..)) => {
                            return Err(ReconError::Unsupported(format!("existential type in {c}")));
                        }
                        _ => return Err(shape_fail(&c, "a base type cannot match an arrow")),
                    }
                }
                Constraint::WfTy(g, t) => match st.shapes.head(t) {
                    Type::Arrow(x, s, u) => {
                        work.push_back(Constraint::WfTy(g.clone(), (*s).clone()));
                        let (x2, u2) = rename_binder_type(g, &x, &u);
                        work.push_back(Constraint::WfTy(g.extended(&x2, *s), u2));
                    }
                    Type::Base(x, b, p) => {
                        let (x2, p2) = rename_binder_term(g, &x, &p);
                        out.push(Constraint::WtPred(g.extended(&x2, Type::base(b)), p2));
                    }
                    t2 @ Type::Var(..) => stuck.push(Constraint::WfTy(g.clone(), t2)),
                    Type::Dynamic => {}
                    Type::Exists(..) => return Err(ReconError::Unsupported(format!("existential type in {c}"))),
                },
                _ => out.push(c.clone()),
            }
        }
        if stuck.is_empty() {
            break;
        }
        // Nothing determines the remaining variables: default the first one to a refined Int.
        let first = stuck.iter().find_map(|c| match c {
            Constraint::Sub(_, s, t) => [s, t].into_iter().find_map(|x| match st.shapes.head(x) {
                Type::Var(_, a) => Some(a),
                _ => None,
            }),
            Constraint::WfTy(_, t) => match st.shapes.head(t) {
                Type::Var(_, a) => Some(a),
                _ => None,
            },
            _ => None,
        });
        match first {
            Some(a) => st.to_base(a, "v", BaseTy::Int),
            None => break,
        }
        work.extend(stuck.drain(..));
    }
    let pi = st.shapes.pi.clone();
    let resolve = |a: usize| pi.get(&a).cloned();
    let rw = st.shapes.rewrite(&resolve);
    let predicates: Vec<Constraint> = out.iter().map(|c| rw.constraint(c)).collect();
    let placeholders: BTreeMap<usize, Placeholder> = st
        .shapes
        .placeholders
        .iter()
        .map(|(id, p)| (*id, Placeholder { id: *id, env: rw.env(&p.env) }))
        .collect();
    Ok(Shapes { pi, predicates, placeholders })
}

// ---------------------------------------------------------------------------
// Implication solving

/// `Γ, y:T ⊢ p ⇒ q` with `y ∉ fv(q)` becomes `Γ ⊢ (exists y:T. p) ⇒ q`, repeatedly.
pub fn eliminate_free_vars(env: &Env, p: &Term, q: &Term) -> (Env, Term) {
    let fq = free_vars(q);
    let mut entries = env.entries().to_vec();
    let mut p = p.clone();
    loop {
        let pick = (0..entries.len()).rev().find(|&i| {
            let y = &entries[i].0;
            !fq.contains(y) && entries[i + 1..].iter().all(|(_, t)| !free_vars_type(t).contains(y))
        });
        match pick {
            Some(i) => {
                let (y, t) = entries.remove(i);
                p = Term::exists(&y, t, p);
            }
            None => break,
        }
    }
    (Env::from_entries(entries), p)
}

/// `Γ ⊢ p ⇒ θ·ψ` as a lower bound over the placeholder's own environment:
/// the substitution becomes equations, everything else is quantified.
/// Bindings that neither `p` nor the equations reach are dropped.
pub fn eliminate_delayed_subst(env: &Env, p: &Term, hole: &Hole, psi: &Placeholder) -> Term {
    let scope = psi.scope();
    let mut eqs: Vec<(Name, Term)> = Vec::new();
    let mut same: BTreeSet<Name> = BTreeSet::new();
    // parameters bound to something other than a predicate term keep only their declared type
    let mut loose: Vec<(Name, Type)> = Vec::new();
    let mut opaque: BTreeSet<Name> = BTreeSet::new();
    for (x, t) in psi.env.entries() {
        let e = apply_subst_term(&Term::var(x), &hole.subst);
        if e == Term::var(x) {
            same.insert(x.clone());
        } else if matches!(t, Type::Arrow(..) | Type::Dynamic) {
            // equations between functions say nothing the prover can use
            opaque.insert(x.clone());
        } else if is_predicate_term(&e) {
            eqs.push((x.clone(), e));
        } else {
            let t = if free_vars_type(t).iter().any(|y| !same.contains(y)) { erase(t) } else { t.clone() };
            loose.push((x.clone(), t));
        }
    }
    // Outer bindings sharing a name with a substituted parameter are different variables.
    let mut entries = env.entries().to_vec();
    let mut p = p.clone();
    for i in 0..entries.len() {
        let y = entries[i].0.clone();
        if same.contains(&y) || !scope.contains(&y) {
            continue;
        }
        let y2 = avoid_name(&y, &|n| scope.iter().any(|s| s == n) || entries.iter().any(|(m, _)| m == n));
        for (_, t) in entries.iter_mut().skip(i + 1) {
            *t = rename_type(t, &y, &y2);
        }
        p = rename_term(&p, &y, &y2);
        for (_, e) in eqs.iter_mut() {
            *e = rename_term(e, &y, &y2);
        }
        entries[i].0 = y2;
    }
    // Facts about quantified functions are dropped: the bound only gets weaker.
    let funs: BTreeSet<Name> = entries
        .iter()
        .filter(|(y, t)| !same.contains(y) && matches!(t, Type::Arrow(..) | Type::Dynamic))
        .map(|(y, _)| y.clone())
        .collect();
    let parts: Vec<Term> = eqs
        .iter()
        .map(|(x, e)| Term::eq(Term::var(x), e.clone()))
        .chain(and_parts(&p))
        .filter(|c| free_vars(c).is_disjoint(&funs) && free_vars(c).is_disjoint(&opaque))
        .collect();
    let mut body = Term::and_all(parts);
    for (x, t) in loose.iter().rev() {
        if free_vars(&body).contains(x) {
            body = Term::exists(x, t.clone(), body);
        }
    }
    let entries: Vec<(Name, Type)> = entries
        .into_iter()
        .map(|(y, t)| if free_vars_type(&t).is_disjoint(&funs) { (y, t) } else { (y, erase(&t)) })
        .collect();
    let kept = Env::from_entries(entries).restrict(&free_vars(&body));
    for (y, t) in kept.entries() {
        if same.contains(y) {
            if let Type::Base(z, _, r) = t {
                if !r.is_true() {
                    body = Term::and(rename_term(r, z, y), body);
                }
            }
        }
    }
    for (y, t) in kept.entries().iter().rev() {
        if !same.contains(y) {
            body = Term::exists(y, t.clone(), body);
        }
    }
    body
}

/// Replaces substituted arguments that are not predicate terms by existential
/// variables of the argument's type, so a bound never mentions a whole program.
fn abstract_arguments(g: Option<&BTreeSet<Name>>, p: &Term) -> Term {
    match p {
        Term::Hole(h) if h.subst.0.iter().any(|en| !is_predicate_term(&en.term)) => {
            let mut binders = Vec::new();
            let mut th = h.subst.clone();
            for en in th.0.iter_mut() {
                if !is_predicate_term(&en.term) {
                    let y = fresh_name(&en.name);
                    let ty = abstract_type(g, &en.ty);
                    let known = g.is_none_or(|g| free_vars_type(&ty).iter().all(|v| g.contains(v)));
                    binders.push((y.clone(), if known { ty } else { erase(&ty) }));
                    en.term = Term::var(&y);
                }
            }
            let body = Term::Hole(Box::new(Hole { id: h.id, scope: h.scope.clone(), subst: th }));
            binders.into_iter().rev().fold(body, |acc, (y, t)| Term::exists(&y, t, acc))
        }
        Term::Exists(x, t, b) => {
            let mut g2 = g.cloned();
            if let Some(g2) = g2.as_mut() {
                g2.insert(x.clone());
            }
            Term::Exists(x.clone(), Box::new(abstract_type(g, t)), Box::new(abstract_arguments(g2.as_ref(), b)))
        }
        Term::POr(a, b, n) => {
            Term::POr(Box::new(abstract_arguments(g, a)), Box::new(abstract_arguments(g, b)), *n)
        }
        Term::App(..) => match p.spine() {
            (Term::Prim(op @ (Prim::And | Prim::Or)), args) if args.len() == 2 => {
                Term::prim2(op.clone(), abstract_arguments(g, args[0]), abstract_arguments(g, args[1]))
            }
            _ => p.clone(),
        },
        _ => p.clone(),
    }
}

fn abstract_type(g: Option<&BTreeSet<Name>>, t: &Type) -> Type {
    match t {
        Type::Base(z, b, r) => {
            let mut g = g.cloned();
            if let Some(g) = g.as_mut() {
                g.insert(z.clone());
            }
            Type::Base(z.clone(), *b, Box::new(abstract_arguments(g.as_ref(), r)))
        }
        _ => t.clone(),
    }
}

/// Variables, literals and saturated arithmetic, comparison and measure applications.
fn is_predicate_term(e: &Term) -> bool {
    match e {
        Term::Var(_) => true,
        Term::Ctor(_, args) => args.iter().all(is_predicate_term),
        Term::App(..) => {
            let (h, args) = e.spine();
            match h {
                Term::Prim(p) => {
                    !matches!(p, Prim::If(_) | Prim::Fix(_) | Prim::NewArray)
                        && args.len() == p.arity()
                        && args.iter().all(|a| is_predicate_term(a))
                }
                _ => false,
            }
        }
        _ => false,
    }
}

/// The type with every refinement dropped.
pub fn erase(t: &Type) -> Type {
    match t {
        Type::Base(x, b, _) => Type::Base(x.clone(), *b, Box::new(Term::tt())),
        Type::Arrow(x, s, u) => Type::Arrow(x.clone(), Box::new(erase(s)), Box::new(erase(u))),
        Type::Exists(_, _, u) => erase(u),
        other => other.clone(),
    }
}

fn disjuncts(t: &Term) -> Vec<Term> {
    match t {
        Term::POr(a, b, _) => {
            let mut v = disjuncts(a);
            v.extend(disjuncts(b));
            v
        }
        Term::App(f, b) => match &**f {
            Term::App(g, a) if matches!(&**g, Term::Prim(Prim::Or)) => {
                let mut v = disjuncts(a);
                v.extend(disjuncts(b));
                v
            }
            _ => vec![t.clone()],
        },
        _ => vec![t.clone()],
    }
}

fn is_and(t: &Term) -> Option<(&Term, &Term)> {
    match t {
        Term::PAnd(a, b, _) => Some((a, b)),
        Term::App(f, b) => match &**f {
            Term::App(g, a) if matches!(&**g, Term::Prim(Prim::And)) => Some((a, b)),
            _ => None,
        },
        _ => None,
    }
}

/// `l` has the shape `exists ȳ. ... /\ ψ /\ ...` with `ψ` applied to its own parameters.
/// Such a bound adds nothing to the least solution.
fn self_identity(l: &Term, id: usize, scope: &[Name]) -> bool {
    match l {
        Term::Hole(h) => {
            h.id == id && scope.iter().all(|x| apply_subst_term(&Term::var(x), &h.subst) == Term::var(x))
        }
        Term::Exists(x, _, b) => !scope.contains(x) && self_identity(b, id, scope),
        _ => match is_and(l) {
            Some((a, b)) => self_identity(a, id, scope) || self_identity(b, id, scope),
            None => false,
        },
    }
}

fn inhabited(t: &Type) -> bool {
    match t {
        Type::Arrow(..) | Type::Dynamic => true,
        Type::Base(_, _, p) => p.is_true(),
        _ => false,
    }
}

/// Singleton existentials, constant folding, trivial conjuncts and disjuncts.
pub fn simplify(t: &Term) -> Term {
    let once = simp(&fold_constants(&simp(t)));
    simp(&fold_constants(&once))
}

fn simp(t: &Term) -> Term {
    match t {
        Term::Exists(x, ty, b) => {
            let b = simp(b);
            if let Some(r) = eliminate_singleton(x, ty, &b) {
                return simp(&r);
            }
            if let Some(r) = eliminate_pinned(x, ty, &b) {
                return simp(&r);
            }
            if !free_vars(&b).contains(x) && (inhabited(ty) || b.is_false()) {
                return b;
            }
            Term::Exists(x.clone(), ty.clone(), Box::new(b))
        }
        Term::POr(a, b, n) => {
            let (a, b) = (simp(a), simp(b));
            if a.is_true() || b.is_true() {
                Term::tt()
            } else if a.is_false() || alpha_eq(&a, &b) {
                b
            } else if b.is_false() {
                a
            } else {
                Term::POr(Box::new(a), Box::new(b), *n)
            }
        }
        Term::PAnd(a, b, n) => {
            let (a, b) = (simp(a), simp(b));
            if a.is_false() || b.is_false() {
                Term::ff()
            } else if a.is_true() || alpha_eq(&a, &b) {
                b
            } else if b.is_true() {
                a
            } else {
                Term::PAnd(Box::new(a), Box::new(b), *n)
            }
        }
        Term::App(f, b) => {
            if let Term::App(g, a) = &**f {
                match &**g {
                    Term::Prim(Prim::And) => {
                        let mut parts: Vec<Term> = Vec::new();
                        for c in and_parts(t) {
                            let c = simp(&c);
                            if c.is_false() {
                                return Term::ff();
                            }
                            if !c.is_true() && !parts.iter().any(|q| alpha_eq(q, &c)) {
                                parts.push(c);
                            }
                        }
                        let mut it = parts.into_iter();
                        return match it.next() {
                            None => Term::tt(),
                            Some(first) => it.fold(first, Term::and),
                        };
                    }
                    Term::Prim(Prim::Eq) if alpha_eq(a, b) && !has_hole(a) => return Term::tt(),
                    Term::Prim(Prim::Or) => {
                        let (a, b) = (simp(a), simp(b));
                        return if a.is_true() || b.is_true() {
                            Term::tt()
                        } else if a.is_false() {
                            b
                        } else if b.is_false() || alpha_eq(&a, &b) {
                            a
                        } else {
                            Term::or(a, b)
                        };
                    }
                    _ => {}
                }
            }
            Term::App(Box::new(simp(f)), Box::new(simp(b)))
        }
        Term::Lam(x, ty, b) => Term::Lam(x.clone(), ty.clone(), Box::new(simp(b))),
        _ => t.clone(),
    }
}

/// `exists y:{z:B | r}. (.. /\\ y = e /\\ ..)` with `y ∉ fv(e)` becomes `r[e] /\\ (..)[e]`.
fn eliminate_pinned(y: &str, ty: &Type, body: &Term) -> Option<Term> {
    let Type::Base(z, _, r) = ty else { return None };
    let parts = conjuncts(body);
    let (i, e) = parts.iter().enumerate().find_map(|(i, c)| {
        let (a, b) = as_equation(c)?;
        let e = match (a, b) {
            (Term::Var(v), e) | (e, Term::Var(v)) if v == y => e,
            _ => return None,
        };
        (!free_vars(e).contains(y)).then(|| (i, e.clone()))
    })?;
    let rest = Term::and_all(parts.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, c)| subst_term(c, y, &e)));
    Some(Term::and(subst_term(r, z, &e), rest))
}

fn as_equation(t: &Term) -> Option<(&Term, &Term)> {
    match t {
        Term::App(f, b) => match &**f {
            Term::App(g, a) if matches!(&**g, Term::Prim(Prim::Eq)) => Some((a, b)),
            _ => None,
        },
        _ => None,
    }
}

fn and_parts(t: &Term) -> Vec<Term> {
    match t {
        Term::App(f, b) => match &**f {
            Term::App(g, a) if matches!(&**g, Term::Prim(Prim::And)) => {
                let mut v = and_parts(a);
                v.extend(and_parts(b));
                v
            }
            _ => vec![t.clone()],
        },
        _ => vec![t.clone()],
    }
}

fn por_all(parts: Vec<Term>) -> Term {
    let mut it = parts.into_iter();
    match it.next() {
        None => Term::ff(),
        Some(first) => it.fold(first, Term::por),
    }
}

/// Builds the strongest solution of `ψ` from its lower bounds.
/// Bounds still mentioning `ψ` make it recursive: `fix (λf. λx̄. [ψ ↦ f x̄](l1 \/ ..)) x̄`.
fn strongest(psi: &Placeholder, bounds: &[Term]) -> (Term, bool) {
    let scope = psi.scope();
    let parts: Vec<Term> = bounds
        .iter()
        .flat_map(disjuncts)
        .filter(|l| !self_identity(l, psi.id, &scope))
        .collect();
    let body = simplify(&por_all(parts));
    if !holes_in(&body).contains(&psi.id) {
        return (body, false);
    }
    // only one level of recursion: earlier recursive solutions are weakened away
    let body = without_fixes(&body, true);
    let entries: Vec<(Name, Type)> = psi.env.entries().iter().map(|(x, t)| (x.clone(), erase(t))).collect();
    let fty = entries.iter().rev().fold(Type::bool(), |acc, (x, t)| Type::arrow(x, t.clone(), acc));
    let f = fresh_name("f");
    let call = Term::apps(Term::var(&f), scope.iter().map(|x| Term::var(x)));
    let body = replace_placeholder(&body, psi.id, &call);
    let lams = entries.iter().rev().fold(body, |acc, (x, t)| Term::lam(x, t.clone(), acc));
    let fix = Term::app(Term::Prim(Prim::Fix(Box::new(fty.clone()))), Term::lam(&f, fty, lams));
    (Term::apps(fix, scope.iter().map(|x| Term::var(x))), true)
}

/// Keeps each recursive predicate but weakens the recursive predicates inside it.
fn one_level(t: &Term, pos: bool) -> Term {
    match t {
        Term::Exists(x, ty, b) => Term::exists(x, (**ty).clone(), one_level(b, pos)),
        Term::POr(a, b, n) => Term::POr(Box::new(one_level(a, pos)), Box::new(one_level(b, pos)), *n),
        Term::PAnd(a, b, n) => Term::PAnd(Box::new(one_level(a, pos)), Box::new(one_level(b, pos)), *n),
        Term::App(..) => match t.spine() {
            (Term::Prim(p @ (Prim::And | Prim::Or)), args) if args.len() == 2 => {
                Term::prim2(p.clone(), one_level(args[0], pos), one_level(args[1], pos))
            }
            (Term::Prim(Prim::Imp), args) if args.len() == 2 => {
                Term::prim2(Prim::Imp, one_level(args[0], !pos), one_level(args[1], pos))
            }
            (Term::Prim(Prim::Not), args) if args.len() == 1 => Term::not(one_level(args[0], !pos)),
            (Term::Prim(Prim::Fix(ty)), args) => match args.split_first() {
                Some((Term::Lam(f, fty, lams), rest)) => {
                    let (params, body) = lams.peel_lams();
                    let body = without_fixes(body, pos);
                    let lams = params.iter().rev().fold(body, |acc, (x, xt)| Term::lam(x, (*xt).clone(), acc));
                    let fix = Term::app(Term::Prim(Prim::Fix(ty.clone())), Term::lam(f, (**fty).clone(), lams));
                    Term::apps(fix, rest.iter().map(|a| (*a).clone()))
                }
                _ => t.clone(),
            },
            _ => t.clone(),
        },
        _ => t.clone(),
    }
}

fn without_fixes(t: &Term, pos: bool) -> Term {
    match t {
        Term::Exists(x, ty, b) => Term::exists(x, (**ty).clone(), without_fixes(b, pos)),
        Term::POr(a, b, n) => Term::POr(Box::new(without_fixes(a, pos)), Box::new(without_fixes(b, pos)), *n),
        Term::PAnd(a, b, n) => Term::PAnd(Box::new(without_fixes(a, pos)), Box::new(without_fixes(b, pos)), *n),
        Term::App(..) => match t.spine() {
            (Term::Prim(p @ (Prim::And | Prim::Or)), args) if args.len() == 2 => {
                Term::prim2(p.clone(), without_fixes(args[0], pos), without_fixes(args[1], pos))
            }
            (Term::Prim(Prim::Imp), args) if args.len() == 2 => {
                Term::prim2(Prim::Imp, without_fixes(args[0], !pos), without_fixes(args[1], pos))
            }
            (Term::Prim(Prim::Not), args) if args.len() == 1 => Term::not(without_fixes(args[0], !pos)),
            (Term::Prim(Prim::Fix(_)), _) => Term::bool(pos),
            _ => t.clone(),
        },
        _ => t.clone(),
    }
}

/// Weakens a solution until casts can check it. A positive existential is
/// projected away; a negative one becomes `false`. A fix whose body no longer
/// recurses is unfolded, and one wrapping another fix is dropped.
pub fn checkable(t: &Term) -> Term {
    simplify(&weaken(t, true))
}

fn weaken(t: &Term, pos: bool) -> Term {
    match t {
        Term::Exists(..) if pos => {
            let mut vars = Vec::new();
            let parts = lift_exists(t, &mut vars);
            vars.iter().rev().fold(Term::and_all(parts), |acc, y| project(y, and_parts(&acc)))
        }
        Term::Exists(..) => Term::ff(),
        Term::POr(a, b, n) => Term::POr(Box::new(weaken(a, pos)), Box::new(weaken(b, pos)), *n),
        Term::PAnd(a, b, n) => Term::PAnd(Box::new(weaken(a, pos)), Box::new(weaken(b, pos)), *n),
        Term::App(..) => {
            let (h, args) = t.spine();
            match (h, args.as_slice()) {
                (Term::Prim(p @ (Prim::And | Prim::Or)), [a, b]) => {
                    Term::prim2(p.clone(), weaken(a, pos), weaken(b, pos))
                }
                (Term::Prim(Prim::Imp), [a, b]) => Term::prim2(Prim::Imp, weaken(a, !pos), weaken(b, pos)),
                (Term::Prim(Prim::Not), [a]) => Term::not(weaken(a, !pos)),
                (Term::Prim(Prim::Fix(ty)), [Term::Lam(f, fty, lams), rest @ ..]) => {
                    let mut params = Vec::new();
                    let mut body = &**lams;
                    while let Term::Lam(x, _, b) = body {
                        params.push(x);
                        body = b;
                    }
                    let wrap = |b: Term| {
                        let mut l = b;
                        let mut cur: Vec<(&Name, &Type)> = Vec::new();
                        let mut walk = &**lams;
                        while let Term::Lam(x, xt, b) = walk {
                            cur.push((x, xt));
                            walk = b;
                        }
                        for (x, xt) in cur.into_iter().rev() {
                            l = Term::lam(x, xt.clone(), l);
                        }
                        l
                    };
                    let body = weaken(body, pos);
                    if params.len() == rest.len() && !free_vars(&body).contains(f) {
                        let fresh: Vec<Name> = params.iter().map(|x| fresh_name(x)).collect();
                        let mut b = body;
                        for (x, x2) in params.iter().zip(&fresh) {
                            b = rename_term(&b, x, x2);
                        }
                        for (x2, a) in fresh.iter().zip(rest.iter()) {
                            b = subst_term(&b, x2, a);
                        }
                        return b;
                    }
                    if term_has(&body, &|t| matches!(t, Term::Prim(Prim::Fix(_)))) {
                        // nested recursive predicates grow with every unfolding
                        return Term::bool(pos);
                    }
                    let fix = Term::app(Term::Prim(Prim::Fix(ty.clone())), Term::lam(f, (**fty).clone(), wrap(body)));
                    Term::apps(fix, rest.iter().map(|a| (*a).clone()))
                }
                _ => t.clone(),
            }
        }
        _ => t.clone(),
    }
}

/// The conjuncts under a prefix of positive existentials, whose variables
/// (renamed apart) are pushed outermost first.
fn lift_exists(t: &Term, vars: &mut Vec<Name>) -> Vec<Term> {
    match t {
        Term::Exists(y, ty, body) => {
            let y2 = fresh_name(y);
            vars.push(y2.clone());
            let mut parts = Vec::new();
            if let Type::Base(z, _, r) = &**ty {
                if !r.is_true() {
                    parts.extend(lift_exists(&rename_term(r, z, &y2), vars));
                }
            }
            parts.extend(lift_exists(&rename_term(body, y, &y2), vars));
            parts
        }
        _ => {
            let parts = and_parts(t);
            if parts.len() > 1 {
                parts.iter().flat_map(|c| lift_exists(c, vars)).collect()
            } else {
                vec![weaken(t, true)]
            }
        }
    }
}

fn definition(y: &str, c: &Term) -> Option<Term> {
    let (h, args) = c.spine();
    match (h, args.as_slice()) {
        (Term::Prim(Prim::Eq), [l, r]) => solve_for(y, l, r).or_else(|| solve_for(y, r, l)),
        _ => None,
    }
}

/// Drops `y` from a conjunction, substituting it away when some equation
/// determines it, or splitting on a disjunction that determines it in every case.
fn project(y: &str, mut parts: Vec<Term>) -> Term {
    if let Some((i, s)) = parts.iter().enumerate().find_map(|(i, c)| definition(y, c).map(|s| (i, s))) {
        parts.remove(i);
        parts = parts.iter().map(|c| subst_term(c, y, &s)).collect();
        return Term::and_all(parts.into_iter().map(|c| project_part(y, c)));
    }
    let split = parts.iter().position(|c| {
        let ds = disjuncts(c);
        (2..=8).contains(&ds.len()) && ds.iter().all(|d| and_parts(d).iter().any(|e| definition(y, e).is_some()))
    });
    if let Some(i) = split {
        let c = parts.remove(i);
        let cases = disjuncts(&c).into_iter().map(|d| {
            let mut case = and_parts(&d);
            case.extend(parts.iter().cloned());
            project(y, case)
        });
        return cases.reduce(Term::or).unwrap_or_else(Term::ff);
    }
    Term::and_all(parts.into_iter().map(|c| project_part(y, c)))
}

/// Something implied by `exists y. c` that does not mention `y`.
fn project_part(y: &str, c: Term) -> Term {
    if !free_vars(&c).contains(y) {
        return c;
    }
    let (h, args) = c.spine();
    match (h, args.as_slice()) {
        (Term::Prim(Prim::Or), [a, b]) => Term::or(project(y, and_parts(a)), project(y, and_parts(b))),
        (Term::Prim(Prim::And), _) => project(y, and_parts(&c)),
        _ => match &c {
            Term::POr(a, b, _) => Term::por(project(y, and_parts(a)), project(y, and_parts(b))),
            _ => Term::tt(),
        },
    }
}

/// A predicate term `s` with `l = r` iff `y = s`, when `y` occurs once in `r` under `+` and `-`.
fn solve_for(y: &str, l: &Term, r: &Term) -> Option<Term> {
    if free_vars(l).contains(y) || !is_predicate_term(l) {
        return None;
    }
    if *r == Term::var(y) {
        return Some(l.clone());
    }
    let (h, args) = r.spine();
    let (Term::Prim(p), [a, b]) = (h, args.as_slice()) else { return None };
    let (ina, inb) = (free_vars(a).contains(y), free_vars(b).contains(y));
    let a = (*a).clone();
    let b = (*b).clone();
    match (p, ina, inb) {
        (Prim::Add, true, false) if is_predicate_term(&b) => solve_for(y, &Term::prim2(Prim::Sub, l.clone(), b), &a),
        (Prim::Add, false, true) if is_predicate_term(&a) => solve_for(y, &Term::prim2(Prim::Sub, l.clone(), a), &b),
        (Prim::Sub, true, false) if is_predicate_term(&b) => solve_for(y, &Term::prim2(Prim::Add, l.clone(), b), &a),
        (Prim::Sub, false, true) if is_predicate_term(&a) => solve_for(y, &Term::prim2(Prim::Sub, a, l.clone()), &b),
        _ => None,
    }
}

#[derive(Clone, Debug)]
pub struct SolvedPlaceholder {
    pub id: usize,
    pub env: Env,
    pub lower_bounds: Vec<Term>,
    pub solution: Term,
    pub recursive: bool,
}

#[derive(Clone, Debug)]
pub struct ResidualObligation {
    pub env: Env,
    pub antecedent: Term,
    pub consequent: Term,
    pub certainty: Certainty,
    pub witness: Option<Witness>,
}

impl fmt::Display for ResidualObligation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} |- {} ==> {}  [{:?}]",
            render_env(&self.env),
            print_term(&self.antecedent),
            print_term(&self.consequent),
            self.certainty
        )
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub rho: BTreeMap<usize, Term>,
    pub placeholders: Vec<SolvedPlaceholder>,
    pub residual: Vec<ResidualObligation>,
}

/// Solves every placeholder and checks the implications that remain.
pub fn solve_implications(shapes: &Shapes, prover: &Prover) -> Solution {
    let mut bounds: BTreeMap<usize, Vec<Term>> = shapes.placeholders.keys().map(|k| (*k, Vec::new())).collect();
    let mut ground: Vec<(Env, Term, Term)> = Vec::new();
    for c in &shapes.predicates {
        let Constraint::Imp(g, p, q) = c else { continue };
        match q {
            Term::Hole(h) if shapes.placeholders.contains_key(&h.id) => {
                let mut roots = free_vars(p);
                roots.extend(free_vars(q));
                // Quantifying what the consequent does not mention happens inside.
                let p = abstract_arguments(Some(&g.names().into_iter().collect()), p);
                let g = g.restrict(&roots);
                let lb = abstract_arguments(None, &eliminate_delayed_subst(&g, &p, h, &shapes.placeholders[&h.id]));
                bounds.get_mut(&h.id).expect("known placeholder").push(simplify(&lb));
            }
            _ => ground.push((g.clone(), p.clone(), q.clone())),
        }
    }
    let recorded = bounds.clone();
    let mut rho: BTreeMap<usize, Term> = BTreeMap::new();
    let mut recursive: BTreeSet<usize> = BTreeSet::new();
    let mut order: Vec<usize> = Vec::new();
    while rho.len() < bounds.len() {
        let unsolved: Vec<usize> = bounds.keys().copied().filter(|k| !rho.contains_key(k)).collect();
        let mentions = |k: usize| -> BTreeSet<usize> {
            bounds[&k].iter().flat_map(holes_in).filter(|h| *h != k && !rho.contains_key(h)).collect()
        };
        let pick = unsolved.iter().copied().find(|&k| mentions(k).is_empty()).unwrap_or_else(|| {
            // A cycle: solve forwarding placeholders (all bounds mention others) first.
            *unsolved
                .iter()
                .min_by_key(|&&k| (bounds[&k].iter().any(|l| !has_hole(l)), k))
                .expect("an unsolved placeholder")
        });
        let (sr, rec) = strongest(&shapes.placeholders[&pick], &bounds[&pick]);
        if rec {
            recursive.insert(pick);
        }
        for k in unsolved.iter().filter(|&&k| k != pick) {
            let b = bounds.get_mut(k).expect("known placeholder");
            for l in b.iter_mut() {
                if holes_in(l).contains(&pick) {
                    *l = simplify(&replace_placeholder(l, pick, &sr));
                }
            }
        }
        rho.insert(pick, sr);
        order.push(pick);
    }
    // Each solution mentions only placeholders solved after it.
    let tyvar = |_| None;
    let mut full: BTreeMap<usize, Term> = BTreeMap::new();
    for k in order.iter().rev() {
        let hole = |h: usize| full.get(&h).cloned();
        let r = simplify(&Rewrite { tyvar: &tyvar, hole: &hole, tidy: true, open: false }.term(&rho[k]));
        let r = if rho[k] != r { one_level(&r, true) } else { r };
        full.insert(*k, r);
    }
    let exact = full;
    let hole = |h: usize| exact.get(&h).cloned();
    let rw = Rewrite { tyvar: &tyvar, hole: &hole, tidy: true, open: false };
    let placeholders: Vec<SolvedPlaceholder> = shapes
        .placeholders
        .values()
        .map(|p| SolvedPlaceholder {
            id: p.id,
            env: rw.env(&p.env),
            lower_bounds: recorded[&p.id].iter().map(|l| simplify(&rw.term(l))).collect(),
            solution: simplify(&rw.term(&rho[&p.id])),
            recursive: recursive.contains(&p.id),
        })
        .collect();
    // The program carries the weakened solutions; residual checks use them too.
    let rho: BTreeMap<usize, Term> = exact.iter().map(|(k, t)| (*k, checkable(t))).collect();
    let hole = |h: usize| rho.get(&h).cloned();
    let rw = Rewrite { tyvar: &tyvar, hole: &hole, tidy: true, open: false };
    let residual = ground
        .iter()
        .map(|(g, p, q)| {
            let g = rw.env(g);
            let p = simplify(&rw.term(p));
            let q = simplify(&rw.term(q));
            let (certainty, witness) = prover.implies(&g, &p, &q);
            ResidualObligation { env: g, antecedent: p, consequent: q, certainty, witness }
        })
        .collect();
    Solution { rho, placeholders, residual }
}

// ---------------------------------------------------------------------------
// Whole programs

#[derive(Clone, Debug)]
pub struct ReconReport {
    pub program: SourceProgram,
    pub constraints: Vec<Constraint>,
    pub placeholders: Vec<SolvedPlaceholder>,
    pub residual: Vec<ResidualObligation>,
}

impl ReconReport {
    /// Residual obligations the prover could not settle; the checker inserts casts for them.
    pub fn unresolved(&self) -> impl Iterator<Item = &ResidualObligation> {
        self.residual.iter().filter(|r| r.certainty == Certainty::Maybe)
    }
}

/// Fills every `?` in the program with a refinement type.
pub fn reconstruct(program: &SourceProgram, config: &ProverConfig) -> Result<ReconReport, ReconError> {
    let mut prog = program.clone();
    for b in &mut prog.bindings {
        if b.ty.is_none() {
            b.ty = Some(fresh_tyvar());
        }
    }
    let (_, constraints) = generate_constraints(&Env::new(), &prog.to_term())?;
    let shapes = shape_reconstruct(constraints.clone())?;
    let prover = Prover::new(config.clone());
    let sol = solve_implications(&shapes, &prover);
    if let Some(bad) = sol.residual.iter().find(|r| r.certainty == Certainty::No) {
        return Err(ReconError::ResidualObligationFailed(bad.to_string()));
    }
    let tyvar = |a: usize| shapes.pi.get(&a).cloned();
    let hole = |h: usize| sol.rho.get(&h).cloned();
    let rw = Rewrite { tyvar: &tyvar, hole: &hole, tidy: true, open: true };
    for b in &mut prog.bindings {
        b.ty = b.ty.as_ref().map(|t| rw.ty(t));
        b.term = rw.term(&b.term);
    }
    prog.main = rw.term(&prog.main);
    Ok(ReconReport { program: prog, constraints, placeholders: sol.placeholders, residual: sol.residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prover::implies;
    use crate::surface::{parse_program, parse_term, parse_type, ParseOptions};

    const EXAMPLE: &str = "let id : x:? -> ? = fun (x:?) => x;\n\
                           let w : {n:Int | n = 0} = 0;\n\
                           let y : {n:Int | n > w} = 3;\n\
                           id (id y)";

    fn ty(s: &str) -> Type {
        parse_type(s, &[], ParseOptions::default()).unwrap()
    }

    #[test]
    fn identity_function_constraints() {
        let e = parse_term("fun (x:?) => x", &[], ParseOptions::default()).unwrap();
        let (t, cs) = generate_constraints(&Env::new(), &e).unwrap();
        let Type::Arrow(_, s, u) = &t else { panic!("{t:?}") };
        assert_eq!(s, u);
        assert_eq!(cs.len(), 1);
        assert!(matches!(&cs[0], Constraint::WfTy(g, Type::Var(..)) if g.is_empty()));
    }

    #[test]
    fn application_mints_a_result_variable() {
        let g = Env::from_entries(vec![("f".into(), ty("x:Int -> {v:Int | v = x}")), ("y".into(), ty("Int"))]);
        let e = parse_term("f y", &["f".into(), "y".into()], ParseOptions::default()).unwrap();
        let (t, cs) = generate_constraints(&g, &e).unwrap();
        let Type::Var(th, _) = &t else { panic!() };
        assert_eq!(th.0.len(), 1);
        assert_eq!(th.0[0].term, Term::var("y"));
        assert!(matches!(&cs[0], Constraint::Sub(_, Type::Arrow(..), Type::Arrow(..))));
        assert!(matches!(&cs[1], Constraint::WfTy(g2, _) if g2.len() == 3));

        // a codomain that ignores the argument needs no delayed substitution
        let g = Env::from_entries(vec![("f".into(), ty("Int -> Int")), ("y".into(), ty("Int"))]);
        let (t, cs) = generate_constraints(&g, &e).unwrap();
        let Type::Var(th, _) = &t else { panic!() };
        assert!(th.0.is_empty());
        assert!(matches!(cs.last(), Some(Constraint::WfTy(g2, _)) if g2.len() == 2));
    }

    #[test]
    fn unbound_variable_is_reported() {
        let e = Term::var("nope");
        assert_eq!(generate_constraints(&Env::new(), &e).unwrap_err(), ReconError::UnboundVariable("nope".into()));
    }

    #[test]
    fn occurs_check_fails() {
        let a = fresh_tyvar();
        let c = Constraint::Sub(Env::new(), a.clone(), Type::fun(a, Type::int()));
        assert!(matches!(shape_reconstruct(vec![c]), Err(ReconError::ShapeFail { .. })));
    }

    #[test]
    fn mismatched_shapes_fail() {
        let c = Constraint::Sub(Env::new(), ty("Int"), ty("Int -> Int"));
        assert!(matches!(shape_reconstruct(vec![c]), Err(ReconError::ShapeFail { .. })));
        let c = Constraint::Sub(Env::new(), ty("Int"), ty("Bool"));
        assert!(matches!(shape_reconstruct(vec![c]), Err(ReconError::ShapeFail { .. })));
    }

    #[test]
    fn variable_against_arrow_gets_an_arrow() {
        let a = fresh_tyvar();
        let Type::Var(_, id) = a else { unreachable!() };
        let c = Constraint::Sub(Env::new(), a, ty("{x:Int | x > 0} -> Int"));
        let sh = shape_reconstruct(vec![c]).unwrap();
        let t = sh.resolve_type(&Type::Var(Subst::new(), id));
        assert!(matches!(t, Type::Arrow(..)), "{t:?}");
        // the argument position became a placeholder bounded below by x > 0
        assert!(sh.predicates.iter().any(|c| matches!(c, Constraint::Imp(_, p, Term::Hole(_)) if !has_hole(p))));
    }

    #[test]
    fn free_variable_elimination() {
        let g = Env::from_entries(vec![("a".into(), ty("Int")), ("n".into(), ty("Int"))]);
        let p = parse_term("n > a", &["a".into(), "n".into()], ParseOptions::default()).unwrap();
        let q = parse_term("n > 0", &["n".into()], ParseOptions::default()).unwrap();
        let (g2, p2) = eliminate_free_vars(&g, &p, &q);
        assert_eq!(g2.names(), vec!["n".to_string()]);
        assert!(matches!(p2, Term::Exists(ref x, ..) if x == "a"));
    }

    #[test]
    fn delayed_substitution_becomes_equations() {
        let psi = Placeholder { id: 999_001, env: Env::from_entries(vec![("x".into(), ty("Int")), ("n".into(), ty("Int"))]) };
        let hole = Hole { id: psi.id, scope: psi.scope(), subst: Subst::single("x", Term::var("y"), ty("Int")) };
        let g = Env::from_entries(vec![("y".into(), ty("{y:Int | y > 2}")), ("n".into(), ty("Int"))]);
        let p = parse_term("n = y", &["y".into(), "n".into()], ParseOptions::default()).unwrap();
        let lb = simplify(&eliminate_delayed_subst(&g, &p, &hole, &psi));
        // exists y:{y > 2}. x = y /\ n = y
        let env = psi.env.clone();
        let want = parse_term("x > 2 && n = x", &["x".into(), "n".into()], ParseOptions::default()).unwrap();
        assert_eq!(implies(&env, &lb, &want).0, Certainty::Yes, "{}", print_term(&lb));
        assert_eq!(implies(&env, &want, &lb).0, Certainty::Yes, "{}", print_term(&lb));
    }

    fn refinement_of(t: &Type) -> (Name, Term) {
        match t {
            Type::Base(x, _, p) => (x.clone(), (**p).clone()),
            _ => panic!("not a base type: {}", print_type(t)),
        }
    }

    #[test]
    fn running_example_domain_is_positive() {
        let prog = parse_program(EXAMPLE).unwrap();
        let rep = reconstruct(&prog, &ProverConfig::default()).unwrap();
        let Some(Type::Arrow(_, dom, cod)) = &rep.program.bindings[0].ty else { panic!() };
        for t in [dom, cod] {
            let (x, p) = refinement_of(t);
            let env = Env::from_entries(vec![(x.clone(), Type::int())]);
            let pos = Term::prim2(Prim::Lt, Term::int(0), Term::var(&x));
            assert_eq!(implies(&env, &p, &pos).0, Certainty::Yes, "{}", print_term(&p));
            assert_eq!(implies(&env, &pos, &p).0, Certainty::Yes, "{}", print_term(&p));
        }
        assert!(rep.residual.iter().all(|r| r.certainty == Certainty::Yes));
        assert!(!rep.program.bindings.iter().any(|b| b.ty.as_ref().unwrap().has_tyvar()));
    }

    #[test]
    fn solutions_are_upper_bounds() {
        let prog = parse_program(EXAMPLE).unwrap();
        let rep = reconstruct(&prog, &ProverConfig::default()).unwrap();
        for s in &rep.placeholders {
            for l in &s.lower_bounds {
                assert_eq!(implies(&s.env, l, &s.solution).0, Certainty::Yes, "{} => {}", print_term(l), print_term(&s.solution));
            }
        }
    }

    #[test]
    fn annotated_program_is_unchanged() {
        let prog = parse_program("let f : x:{x:Int | x > 0} -> {y:Int | y > x} = fun (x:{x:Int | x > 0}) => x + 1; f 4").unwrap();
        let rep = reconstruct(&prog, &ProverConfig::default()).unwrap();
        assert!(rep.program.alpha_eq(&prog));
    }

    #[test]
    fn refuted_residual_is_an_error() {
        let prog = parse_program("let f : x:{x:Int | x > 0} -> Int = fun (x:?) => x; f 0").unwrap();
        assert!(matches!(reconstruct(&prog, &ProverConfig::default()), Err(ReconError::ResidualObligationFailed(_))));
    }

    #[test]
    fn unconstrained_variables_default_to_int() {
        let prog = parse_program("let k = fun (x:?) => 1; 0").unwrap();
        let rep = reconstruct(&prog, &ProverConfig::default()).unwrap();
        let t = rep.program.bindings[0].ty.clone().unwrap();
        assert!(!t.has_tyvar());
        assert!(matches!(t, Type::Arrow(_, ref s, _) if s.base_id() == Some(BaseTy::Int)));
    }
}
