//! Core terms and types, binding discipline, substitution and shapes.

use num_bigint::BigInt;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use thiserror::Error;

pub type Name = String;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaseTy {
    Bool,
    Int,
    Unit,
    IntList,
    Bst,
}

impl BaseTy {
    pub fn name(self) -> &'static str {
        match self {
            BaseTy::Bool => "Bool",
            BaseTy::Int => "Int",
            BaseTy::Unit => "Unit",
            BaseTy::IntList => "IntList",
            BaseTy::Bst => "BST",
        }
    }

    pub fn from_name(s: &str) -> Option<BaseTy> {
        Some(match s {
            "Bool" => BaseTy::Bool,
            "Int" => BaseTy::Int,
            "Unit" => BaseTy::Unit,
            "IntList" => BaseTy::IntList,
            "BST" => BaseTy::Bst,
            _ => return None,
        })
    }

    /// Constructors of the base, or `None` for Int (infinitely many literals).
    pub fn ctors(self) -> Option<Vec<Ctor>> {
        match self {
            BaseTy::Bool => Some(vec![Ctor::Bool(true), Ctor::Bool(false)]),
            BaseTy::Int => None,
            BaseTy::Unit => Some(vec![Ctor::Unit]),
            BaseTy::IntList => Some(vec![Ctor::Nil, Ctor::Cons]),
            BaseTy::Bst => Some(vec![Ctor::Empty, Ctor::Node]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Ctor {
    Bool(bool),
    Int(BigInt),
    Unit,
    Nil,
    Cons,
    Empty,
    Node,
}

impl Ctor {
    pub fn arity(&self) -> usize {
        match self {
            Ctor::Bool(_) | Ctor::Int(_) | Ctor::Unit | Ctor::Nil => 0,
            Ctor::Cons | Ctor::Empty => 2,
            Ctor::Node => 5,
        }
    }

    pub fn base(&self) -> BaseTy {
        match self {
            Ctor::Bool(_) => BaseTy::Bool,
            Ctor::Int(_) => BaseTy::Int,
            Ctor::Unit => BaseTy::Unit,
            Ctor::Nil | Ctor::Cons => BaseTy::IntList,
            Ctor::Empty | Ctor::Node => BaseTy::Bst,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Ctor::Bool(b) => b.to_string(),
            Ctor::Int(n) => n.to_string(),
            Ctor::Unit => "unit".into(),
            Ctor::Nil => "nil".into(),
            Ctor::Cons => "cons".into(),
            Ctor::Empty => "empty".into(),
            Ctor::Node => "node".into(),
        }
    }

    pub fn from_name(s: &str) -> Option<Ctor> {
        Some(match s {
            "true" => Ctor::Bool(true),
            "false" => Ctor::Bool(false),
            "unit" => Ctor::Unit,
            "nil" => Ctor::Nil,
            "cons" => Ctor::Cons,
            "empty" => Ctor::Empty,
            "node" => Ctor::Node,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Prim {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    Lt,
    Le,
    And,
    Or,
    Imp,
    Not,
    Min,
    Max,
    Lower,
    Upper,
    Length,
    NewArray,
    If(Box<Type>),
    Fix(Box<Type>),
}

impl Prim {
    pub fn arity(&self) -> usize {
        match self {
            Prim::Not | Prim::Lower | Prim::Upper | Prim::Length | Prim::NewArray | Prim::Fix(_) => 1,
            Prim::If(_) => 3,
            _ => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Prim::Add => "+",
            Prim::Sub => "-",
            Prim::Mul => "*",
            Prim::Div => "div",
            Prim::Mod => "mod",
            Prim::Eq => "=",
            Prim::Lt => "<",
            Prim::Le => "<=",
            Prim::And => "&&",
            Prim::Or => "||",
            Prim::Imp => "=>",
            Prim::Not => "not",
            Prim::Min => "min",
            Prim::Max => "max",
            Prim::Lower => "lower",
            Prim::Upper => "upper",
            Prim::Length => "length",
            Prim::NewArray => "newArray",
            Prim::If(_) => "if",
            Prim::Fix(_) => "fix",
        }
    }

    /// Prims written as plain identifiers in source.
    pub fn from_ident(s: &str) -> Option<Prim> {
        Some(match s {
            "div" => Prim::Div,
            "mod" => Prim::Mod,
            "not" => Prim::Not,
            "min" => Prim::Min,
            "max" => Prim::Max,
            "lower" => Prim::Lower,
            "upper" => Prim::Upper,
            "length" => Prim::Length,
            "newArray" => Prim::NewArray,
            _ => return None,
        })
    }

    pub fn is_infix(&self) -> bool {
        matches!(
            self,
            Prim::Add | Prim::Sub | Prim::Mul | Prim::Eq | Prim::Lt | Prim::Le | Prim::And | Prim::Or | Prim::Imp
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SubstEntry {
    pub name: Name,
    pub term: Term,
    pub ty: Type,
}

/// Ordered substitution. Entry 0 is outermost: entries apply from last to first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Subst(pub Vec<SubstEntry>);

impl Subst {
    pub fn new() -> Subst {
        Subst(Vec::new())
    }

    pub fn single(name: &str, term: Term, ty: Type) -> Subst {
        Subst(vec![SubstEntry { name: name.to_string(), term, ty }])
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `[x:=e] ∘ self`: the new entry applies after the existing ones.
    pub fn prepend(&self, name: &str, term: Term, ty: Type) -> Subst {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.push(SubstEntry { name: name.to_string(), term, ty });
        v.extend(self.0.iter().cloned());
        Subst(v)
    }

    pub fn dom(&self) -> Vec<&str> {
        self.0.iter().map(|e| e.name.as_str()).collect()
    }
}

/// Placeholder occurrence `θ·ψ`. `scope` is the domain of the placeholder's environment.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Hole {
    pub id: usize,
    pub scope: Vec<Name>,
    pub subst: Subst,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Var(Name),
    Prim(Prim),
    Ctor(Ctor, Vec<Term>),
    Lam(Name, Box<Type>, Box<Term>),
    App(Box<Term>, Box<Term>),
    /// Cast from source to target; the label links a run-time failure back to its compile-time judgment.
    Cast(Box<Type>, Box<Type>, Option<usize>),
    Checking {
        target: Box<Type>,
        residual: Box<Term>,
        subject: Box<Term>,
        source: Box<Type>,
        label: Option<usize>,
    },
    Case(Box<Term>, Vec<(Ctor, Term)>),
    /// Parallel or; the counter drives fair alternation.
    POr(Box<Term>, Box<Term>, u32),
    PAnd(Box<Term>, Box<Term>, u32),
    Exists(Name, Box<Type>, Box<Term>),
    Hole(Box<Hole>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Type {
    Base(Name, BaseTy, Box<Term>),
    Arrow(Name, Box<Type>, Box<Type>),
    Exists(Name, Box<Type>, Box<Type>),
    Var(Subst, usize),
    Dynamic,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Shape {
    Base(BaseTy),
    Arrow(Box<Shape>, Box<Shape>),
    Dyn,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Base(b) => write!(f, "{}", b.name()),
            Shape::Arrow(a, b) => match **a {
                Shape::Arrow(..) => write!(f, "({}) -> {}", a, b),
                _ => write!(f, "{} -> {}", a, b),
            },
            Shape::Dyn => write!(f, "Dynamic"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AstError {
    #[error("shape undefined: type contains an unresolved type variable")]
    ShapeUndefined,
}

// ---------------------------------------------------------------------------
// Fresh names

static FRESH: AtomicUsize = AtomicUsize::new(1);

fn next_id() -> usize {
    FRESH.fetch_add(1, Ordering::Relaxed)
}

/// A name not occurring in any source program: the base name with a `'N` suffix.
pub fn fresh_name(base: &str) -> Name {
    let stem = base.split('\'').next().unwrap_or("x");
    let stem = if stem.is_empty() || stem.starts_with('%') { "x" } else { stem };
    format!("{}'{}", stem, next_id())
}

pub fn fresh_tyvar() -> Type {
    Type::Var(Subst::new(), next_id())
}

pub fn fresh_id() -> usize {
    next_id()
}

// ---------------------------------------------------------------------------
// Builders

impl Term {
    pub fn var(x: &str) -> Term {
        Term::Var(x.to_string())
    }

    pub fn int<N: Into<BigInt>>(n: N) -> Term {
        Term::Ctor(Ctor::Int(n.into()), vec![])
    }

    pub fn bool(b: bool) -> Term {
        Term::Ctor(Ctor::Bool(b), vec![])
    }

    pub fn tt() -> Term {
        Term::bool(true)
    }

    pub fn ff() -> Term {
        Term::bool(false)
    }

    pub fn unit() -> Term {
        Term::Ctor(Ctor::Unit, vec![])
    }

    pub fn app(f: Term, a: Term) -> Term {
        Term::App(Box::new(f), Box::new(a))
    }

    pub fn apps(f: Term, args: impl IntoIterator<Item = Term>) -> Term {
        args.into_iter().fold(f, Term::app)
    }

    pub fn prim1(p: Prim, a: Term) -> Term {
        Term::app(Term::Prim(p), a)
    }

    pub fn prim2(p: Prim, a: Term, b: Term) -> Term {
        Term::app(Term::app(Term::Prim(p), a), b)
    }

    pub fn lam(x: &str, t: Type, body: Term) -> Term {
        Term::Lam(x.to_string(), Box::new(t), Box::new(body))
    }

    pub fn cast(s: Type, t: Type) -> Term {
        Term::Cast(Box::new(s), Box::new(t), None)
    }

    pub fn and(a: Term, b: Term) -> Term {
        if a.is_true() {
            return b;
        }
        if b.is_true() {
            return a;
        }
        Term::prim2(Prim::And, a, b)
    }

    pub fn and_all(parts: impl IntoIterator<Item = Term>) -> Term {
        parts.into_iter().fold(Term::tt(), Term::and)
    }

    pub fn or(a: Term, b: Term) -> Term {
        Term::prim2(Prim::Or, a, b)
    }

    pub fn not(a: Term) -> Term {
        Term::prim1(Prim::Not, a)
    }

    pub fn eq(a: Term, b: Term) -> Term {
        Term::prim2(Prim::Eq, a, b)
    }

    pub fn por(a: Term, b: Term) -> Term {
        Term::POr(Box::new(a), Box::new(b), 0)
    }

    pub fn pand(a: Term, b: Term) -> Term {
        Term::PAnd(Box::new(a), Box::new(b), 0)
    }

    pub fn exists(x: &str, t: Type, body: Term) -> Term {
        Term::Exists(x.to_string(), Box::new(t), Box::new(body))
    }

    pub fn is_true(&self) -> bool {
        matches!(self, Term::Ctor(Ctor::Bool(true), a) if a.is_empty())
    }

    pub fn is_false(&self) -> bool {
        matches!(self, Term::Ctor(Ctor::Bool(false), a) if a.is_empty())
    }

    pub fn as_int(&self) -> Option<&BigInt> {
        match self {
            Term::Ctor(Ctor::Int(n), a) if a.is_empty() => Some(n),
            _ => None,
        }
    }

    /// Splits an application spine into head and arguments.
    pub fn spine(&self) -> (&Term, Vec<&Term>) {
        let mut args = Vec::new();
        let mut cur = self;
        while let Term::App(f, a) = cur {
            args.push(&**a);
            cur = f;
        }
        args.reverse();
        (cur, args)
    }

    /// `fun (x1:T1) => ... => body` with the binders peeled.
    pub fn peel_lams(&self) -> (Vec<(&Name, &Type)>, &Term) {
        let mut ps = Vec::new();
        let mut cur = self;
        while let Term::Lam(x, t, b) = cur {
            ps.push((x, &**t));
            cur = b;
        }
        (ps, cur)
    }
}

impl Type {
    pub fn base(b: BaseTy) -> Type {
        Type::Base("v".into(), b, Box::new(Term::tt()))
    }

    pub fn int() -> Type {
        Type::base(BaseTy::Int)
    }

    pub fn bool() -> Type {
        Type::base(BaseTy::Bool)
    }

    pub fn refined(x: &str, b: BaseTy, p: Term) -> Type {
        Type::Base(x.to_string(), b, Box::new(p))
    }

    pub fn arrow(x: &str, s: Type, t: Type) -> Type {
        Type::Arrow(x.to_string(), Box::new(s), Box::new(t))
    }

    /// Non-dependent arrow.
    pub fn fun(s: Type, t: Type) -> Type {
        Type::arrow("_", s, t)
    }

    pub fn exists(x: &str, s: Type, t: Type) -> Type {
        Type::Exists(x.to_string(), Box::new(s), Box::new(t))
    }

    pub fn base_id(&self) -> Option<BaseTy> {
        match self {
            Type::Base(_, b, _) => Some(*b),
            Type::Exists(_, _, t) => t.base_id(),
            _ => None,
        }
    }

    pub fn has_tyvar(&self) -> bool {
        let mut found = false;
        visit_type(self, &mut |t| {
            if let Type::Var(..) = t {
                found = true
            }
        }, &mut |_| {});
        found
    }

    pub fn has_exists(&self) -> bool {
        let found = std::cell::Cell::new(false);
        visit_type(
            self,
            &mut |t| {
                if let Type::Exists(..) = t {
                    found.set(true)
                }
            },
            &mut |e| {
                if let Term::Exists(..) = e {
                    found.set(true)
                }
            },
        );
        found.get()
    }

    pub fn has_dynamic(&self) -> bool {
        let mut found = false;
        visit_type(self, &mut |t| {
            if let Type::Dynamic = t {
                found = true
            }
        }, &mut |_| {});
        found
    }
}

/// Pre-order traversal over every type and term node reachable from `t`.
pub fn visit_type(t: &Type, ft: &mut dyn FnMut(&Type), fe: &mut dyn FnMut(&Term)) {
    ft(t);
    match t {
        Type::Base(_, _, p) => visit_term(p, ft, fe),
        Type::Arrow(_, s, u) | Type::Exists(_, s, u) => {
            visit_type(s, ft, fe);
            visit_type(u, ft, fe);
        }
        Type::Var(th, _) => {
            for en in &th.0 {
                visit_term(&en.term, ft, fe);
                visit_type(&en.ty, ft, fe);
            }
        }
        Type::Dynamic => {}
    }
}

pub fn visit_term(e: &Term, ft: &mut dyn FnMut(&Type), fe: &mut dyn FnMut(&Term)) {
    fe(e);
    match e {
        Term::Var(_) => {}
        Term::Prim(p) => match p {
            Prim::If(t) | Prim::Fix(t) => visit_type(t, ft, fe),
            _ => {}
        },
        Term::Ctor(_, args) => args.iter().for_each(|a| visit_term(a, ft, fe)),
        Term::Lam(_, t, b) | Term::Exists(_, t, b) => {
            visit_type(t, ft, fe);
            visit_term(b, ft, fe);
        }
        Term::App(f, a) => {
            visit_term(f, ft, fe);
            visit_term(a, ft, fe);
        }
        Term::Cast(s, t, _) => {
            visit_type(s, ft, fe);
            visit_type(t, ft, fe);
        }
        Term::Checking { target, residual, subject, source, .. } => {
            visit_type(target, ft, fe);
            visit_term(residual, ft, fe);
            visit_term(subject, ft, fe);
            visit_type(source, ft, fe);
        }
        Term::Case(s, brs) => {
            visit_term(s, ft, fe);
            brs.iter().for_each(|(_, h)| visit_term(h, ft, fe));
        }
        Term::POr(a, b, _) | Term::PAnd(a, b, _) => {
            visit_term(a, ft, fe);
            visit_term(b, ft, fe);
        }
        Term::Hole(h) => {
            for en in &h.subst.0 {
                visit_term(&en.term, ft, fe);
                visit_type(&en.ty, ft, fe);
            }
        }
    }
}

pub fn term_has(e: &Term, pred: &dyn Fn(&Term) -> bool) -> bool {
    let mut found = false;
    visit_term(e, &mut |_| {}, &mut |t| {
        if pred(t) {
            found = true
        }
    });
    found
}

// ---------------------------------------------------------------------------
// Environments

/// Ordered typing environment with pairwise distinct names.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Env {
    entries: Vec<(Name, Type)>,
}

impl Env {
    pub fn new() -> Env {
        Env { entries: Vec::new() }
    }

    pub fn from_entries(entries: Vec<(Name, Type)>) -> Env {
        Env { entries }
    }

    pub fn entries(&self) -> &[(Name, Type)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, x: &str) -> Option<&Type> {
        self.entries.iter().rev().find(|(n, _)| n == x).map(|(_, t)| t)
    }

    pub fn contains(&self, x: &str) -> bool {
        self.entries.iter().any(|(n, _)| n == x)
    }

    pub fn push(&mut self, x: &str, t: Type) {
        debug_assert!(!self.contains(x), "duplicate binding {x}");
        self.entries.push((x.to_string(), t));
    }

    pub fn extended(&self, x: &str, t: Type) -> Env {
        let mut e = self.clone();
        e.push(x, t);
        e
    }

    pub fn names(&self) -> Vec<Name> {
        self.entries.iter().map(|(n, _)| n.clone()).collect()
    }

    /// Restriction to the bindings that `roots` depend on, transitively through binding types.
    pub fn restrict(&self, roots: &BTreeSet<Name>) -> Env {
        let mut need = roots.clone();
        let mut keep = vec![false; self.entries.len()];
        for (i, (n, t)) in self.entries.iter().enumerate().rev() {
            if need.contains(n) {
                keep[i] = true;
                need.extend(free_vars_type(t));
            }
        }
        Env {
            entries: self
                .entries
                .iter()
                .zip(keep)
                .filter(|(_, k)| *k)
                .map(|(e, _)| e.clone())
                .collect(),
        }
    }
}

/// Picks a binder name that avoids `avoid`, renaming only on a clash.
pub fn avoid_name(x: &str, avoid: &dyn Fn(&str) -> bool) -> Name {
    if !avoid(x) && x != "_" {
        return x.to_string();
    }
    loop {
        let n = fresh_name(x);
        if !avoid(&n) {
            return n;
        }
    }
}

// ---------------------------------------------------------------------------
// Free variables

pub fn free_vars(e: &Term) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    fv_term(e, &mut Vec::new(), &mut out);
    out
}

pub fn free_vars_type(t: &Type) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    fv_type(t, &mut Vec::new(), &mut out);
    out
}

fn add_free(x: &str, bound: &[Name], out: &mut BTreeSet<Name>) {
    if !bound.iter().any(|b| b == x) {
        out.insert(x.to_string());
    }
}

/// Free variables of `θ·scope`, applying entries from last to first.
pub fn delayed_fv(scope: Option<&[Name]>, th: &Subst) -> BTreeSet<Name> {
    match scope {
        Some(sc) => {
            let mut s: BTreeSet<Name> = sc.iter().cloned().collect();
            for en in th.0.iter().rev() {
                if s.remove(&en.name) {
                    s.extend(free_vars(&en.term));
                }
            }
            s
        }
        None => {
            let mut s = BTreeSet::new();
            for en in &th.0 {
                s.extend(free_vars(&en.term));
            }
            s
        }
    }
}

fn fv_term(e: &Term, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
    match e {
        Term::Var(x) => add_free(x, bound, out),
        Term::Prim(Prim::If(t)) | Term::Prim(Prim::Fix(t)) => fv_type(t, bound, out),
        Term::Prim(_) => {}
        Term::Ctor(_, args) => args.iter().for_each(|a| fv_term(a, bound, out)),
        Term::Lam(x, t, b) | Term::Exists(x, t, b) => {
            fv_type(t, bound, out);
            bound.push(x.clone());
            fv_term(b, bound, out);
            bound.pop();
        }
        Term::App(f, a) => {
            fv_term(f, bound, out);
            fv_term(a, bound, out);
        }
        Term::Cast(s, t, _) => {
            fv_type(s, bound, out);
            fv_type(t, bound, out);
        }
        Term::Checking { target, residual, subject, source, .. } => {
            fv_type(target, bound, out);
            fv_term(residual, bound, out);
            fv_term(subject, bound, out);
            fv_type(source, bound, out);
        }
        Term::Case(s, brs) => {
            fv_term(s, bound, out);
            brs.iter().for_each(|(_, h)| fv_term(h, bound, out));
        }
        Term::POr(a, b, _) | Term::PAnd(a, b, _) => {
            fv_term(a, bound, out);
            fv_term(b, bound, out);
        }
        Term::Hole(h) => {
            for x in delayed_fv(Some(&h.scope), &h.subst) {
                add_free(&x, bound, out);
            }
        }
    }
}

fn fv_type(t: &Type, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
    match t {
        Type::Base(x, _, p) => {
            bound.push(x.clone());
            fv_term(p, bound, out);
            bound.pop();
        }
        Type::Arrow(x, s, u) | Type::Exists(x, s, u) => {
            fv_type(s, bound, out);
            bound.push(x.clone());
            fv_type(u, bound, out);
            bound.pop();
        }
        Type::Var(th, _) => {
            for x in delayed_fv(None, th) {
                add_free(&x, bound, out);
            }
        }
        Type::Dynamic => {}
    }
}

// ---------------------------------------------------------------------------
// Substitution

/// Capture-avoiding single substitution `e[x := s]` on terms.
pub fn subst_term(e: &Term, x: &str, s: &Term) -> Term {
    let fvs = free_vars(s);
    Subster { x, s, ty: &Type::Dynamic, fvs: &fvs }.term(e)
}

pub fn subst_type(t: &Type, x: &str, s: &Term) -> Type {
    let fvs = free_vars(s);
    Subster { x, s, ty: &Type::Dynamic, fvs: &fvs }.ty(t)
}

/// Substitution that records the annotation type when delayed on a type variable or placeholder.
pub fn subst_type_annot(t: &Type, x: &str, s: &Term, ann: &Type) -> Type {
    let fvs = free_vars(s);
    Subster { x, s, ty: ann, fvs: &fvs }.ty(t)
}

pub fn subst_term_annot(e: &Term, x: &str, s: &Term, ann: &Type) -> Term {
    let fvs = free_vars(s);
    Subster { x, s, ty: ann, fvs: &fvs }.term(e)
}

/// Applies a whole map, last entry first.
pub fn apply_subst_term(e: &Term, th: &Subst) -> Term {
    th.0.iter().rev().fold(e.clone(), |acc, en| subst_term_annot(&acc, &en.name, &en.term, &en.ty))
}

pub fn apply_subst_type(t: &Type, th: &Subst) -> Type {
    th.0.iter().rev().fold(t.clone(), |acc, en| subst_type_annot(&acc, &en.name, &en.term, &en.ty))
}

/// Renames free occurrences of `x` to `y`.
pub fn rename_term(e: &Term, x: &str, y: &str) -> Term {
    subst_term(e, x, &Term::var(y))
}

pub fn rename_type(t: &Type, x: &str, y: &str) -> Type {
    subst_type(t, x, &Term::var(y))
}

struct Subster<'a> {
    x: &'a str,
    s: &'a Term,
    ty: &'a Type,
    fvs: &'a BTreeSet<Name>,
}

impl Subster<'_> {
    /// Returns the binder to use under which substitution continues, or `None` if `x` is shadowed.
    fn binder(&self, y: &str) -> (Name, bool) {
        if y == self.x {
            return (y.to_string(), false);
        }
        if self.fvs.contains(y) {
            (fresh_name(y), true)
        } else {
            (y.to_string(), true)
        }
    }

    fn under_term(&self, y: &str, b: &Term) -> (Name, Term) {
        let (y2, go) = self.binder(y);
        if !go {
            return (y2, b.clone());
        }
        let b = if y2 != y { rename_term(b, y, &y2) } else { b.clone() };
        (y2, self.term(&b))
    }

    fn under_type(&self, y: &str, b: &Type) -> (Name, Type) {
        let (y2, go) = self.binder(y);
        if !go {
            return (y2, b.clone());
        }
        let b = if y2 != y { rename_type(b, y, &y2) } else { b.clone() };
        (y2, self.ty(&b))
    }

    fn term(&self, e: &Term) -> Term {
        match e {
            Term::Var(v) => {
                if v == self.x {
                    self.s.clone()
                } else {
                    e.clone()
                }
            }
            Term::Prim(Prim::If(t)) => Term::Prim(Prim::If(Box::new(self.ty(t)))),
            Term::Prim(Prim::Fix(t)) => Term::Prim(Prim::Fix(Box::new(self.ty(t)))),
            Term::Prim(_) => e.clone(),
            Term::Ctor(c, args) => Term::Ctor(c.clone(), args.iter().map(|a| self.term(a)).collect()),
            Term::Lam(y, t, b) => {
                let t2 = self.ty(t);
                let (y2, b2) = self.under_term(y, b);
                Term::Lam(y2, Box::new(t2), Box::new(b2))
            }
            Term::Exists(y, t, b) => {
                let t2 = self.ty(t);
                let (y2, b2) = self.under_term(y, b);
                Term::Exists(y2, Box::new(t2), Box::new(b2))
            }
            Term::App(f, a) => Term::App(Box::new(self.term(f)), Box::new(self.term(a))),
            Term::Cast(s, t, l) => Term::Cast(Box::new(self.ty(s)), Box::new(self.ty(t)), *l),
            Term::Checking { target, residual, subject, source, label } => Term::Checking {
                target: Box::new(self.ty(target)),
                residual: Box::new(self.term(residual)),
                subject: Box::new(self.term(subject)),
                source: Box::new(self.ty(source)),
                label: *label,
            },
            Term::Case(s, brs) => Term::Case(
                Box::new(self.term(s)),
                brs.iter().map(|(c, h)| (c.clone(), self.term(h))).collect(),
            ),
            Term::POr(a, b, n) => Term::POr(Box::new(self.term(a)), Box::new(self.term(b)), *n),
            Term::PAnd(a, b, n) => Term::PAnd(Box::new(self.term(a)), Box::new(self.term(b)), *n),
            Term::Hole(h) => {
                if delayed_fv(Some(&h.scope), &h.subst).contains(self.x) {
                    Term::Hole(Box::new(Hole {
                        id: h.id,
                        scope: h.scope.clone(),
                        subst: h.subst.prepend(self.x, self.s.clone(), self.ty.clone()),
                    }))
                } else {
                    e.clone()
                }
            }
        }
    }

    fn ty(&self, t: &Type) -> Type {
        match t {
            Type::Base(y, b, p) => {
                let (y2, p2) = self.under_term(y, p);
                Type::Base(y2, *b, Box::new(p2))
            }
            Type::Arrow(y, s, u) => {
                let s2 = self.ty(s);
                let (y2, u2) = self.under_type(y, u);
                Type::Arrow(y2, Box::new(s2), Box::new(u2))
            }
            Type::Exists(y, s, u) => {
                let s2 = self.ty(s);
                let (y2, u2) = self.under_type(y, u);
                Type::Exists(y2, Box::new(s2), Box::new(u2))
            }
            Type::Var(th, a) => Type::Var(th.prepend(self.x, self.s.clone(), self.ty.clone()), *a),
            Type::Dynamic => Type::Dynamic,
        }
    }
}

// ---------------------------------------------------------------------------
// Shapes

pub fn shape_of(t: &Type) -> Result<Shape, AstError> {
    match t {
        Type::Base(_, b, _) => Ok(Shape::Base(*b)),
        Type::Arrow(_, s, u) => Ok(Shape::Arrow(Box::new(shape_of(s)?), Box::new(shape_of(u)?))),
        Type::Exists(_, _, u) => shape_of(u),
        Type::Var(..) => Err(AstError::ShapeUndefined),
        Type::Dynamic => Ok(Shape::Dyn),
    }
}

// ---------------------------------------------------------------------------
// Canonical forms and α-equivalence

/// Renames binders to their nesting depth and normalizes incidental annotations
/// (fairness counters, cast labels, type-variable ids), so α-equivalent inputs coincide.
pub struct Canon {
    scope: Vec<(Name, Name)>,
    tyvars: HashMap<usize, usize>,
}

impl Default for Canon {
    fn default() -> Self {
        Canon::new()
    }
}

impl Canon {
    pub fn new() -> Canon {
        Canon { scope: Vec::new(), tyvars: HashMap::new() }
    }

    /// Pre-binds free names (e.g. environment entries) to fixed canonical names.
    pub fn bind_free(&mut self, x: &str, canon: &str) {
        self.scope.push((x.to_string(), canon.to_string()));
    }

    fn lookup(&self, x: &str) -> Name {
        self.scope
            .iter()
            .rev()
            .find(|(n, _)| n == x)
            .map(|(_, c)| c.clone())
            .unwrap_or_else(|| x.to_string())
    }

    fn push(&mut self, x: &str) -> Name {
        let c = format!("%{}", self.scope.len());
        self.scope.push((x.to_string(), c.clone()));
        c
    }

    fn subst(&mut self, th: &Subst) -> Subst {
        Subst(
            th.0.iter()
                .map(|en| SubstEntry { name: self.lookup(&en.name), term: self.term(&en.term), ty: self.ty(&en.ty) })
                .collect(),
        )
    }

    pub fn term(&mut self, e: &Term) -> Term {
        match e {
            Term::Var(x) => Term::Var(self.lookup(x)),
            Term::Prim(Prim::If(t)) => Term::Prim(Prim::If(Box::new(self.ty(t)))),
            Term::Prim(Prim::Fix(t)) => Term::Prim(Prim::Fix(Box::new(self.ty(t)))),
            Term::Prim(_) => e.clone(),
            Term::Ctor(c, args) => Term::Ctor(c.clone(), args.iter().map(|a| self.term(a)).collect()),
            Term::Lam(x, t, b) | Term::Exists(x, t, b) => {
                let t2 = self.ty(t);
                let c = self.push(x);
                let b2 = self.term(b);
                self.scope.pop();
                if matches!(e, Term::Lam(..)) {
                    Term::Lam(c, Box::new(t2), Box::new(b2))
                } else {
                    Term::Exists(c, Box::new(t2), Box::new(b2))
                }
            }
            Term::App(f, a) => Term::App(Box::new(self.term(f)), Box::new(self.term(a))),
            Term::Cast(s, t, _) => Term::Cast(Box::new(self.ty(s)), Box::new(self.ty(t)), None),
            Term::Checking { target, residual, subject, source, .. } => Term::Checking {
                target: Box::new(self.ty(target)),
                residual: Box::new(self.term(residual)),
                subject: Box::new(self.term(subject)),
                source: Box::new(self.ty(source)),
                label: None,
            },
            Term::Case(s, brs) => Term::Case(
                Box::new(self.term(s)),
                brs.iter().map(|(c, h)| (c.clone(), self.term(h))).collect(),
            ),
            Term::POr(a, b, _) => Term::POr(Box::new(self.term(a)), Box::new(self.term(b)), 0),
            Term::PAnd(a, b, _) => Term::PAnd(Box::new(self.term(a)), Box::new(self.term(b)), 0),
            Term::Hole(h) => Term::Hole(Box::new(Hole {
                id: h.id,
                scope: h.scope.iter().map(|x| self.lookup(x)).collect(),
                subst: self.subst(&h.subst),
            })),
        }
    }

    pub fn ty(&mut self, t: &Type) -> Type {
        match t {
            Type::Base(x, b, p) => {
                let c = self.push(x);
                let p2 = self.term(p);
                self.scope.pop();
                Type::Base(c, *b, Box::new(p2))
            }
            Type::Arrow(x, s, u) | Type::Exists(x, s, u) => {
                let s2 = self.ty(s);
                let c = self.push(x);
                let u2 = self.ty(u);
                self.scope.pop();
                if matches!(t, Type::Arrow(..)) {
                    Type::Arrow(c, Box::new(s2), Box::new(u2))
                } else {
                    Type::Exists(c, Box::new(s2), Box::new(u2))
                }
            }
            Type::Var(th, a) => {
                let n = self.tyvars.len();
                let id = *self.tyvars.entry(*a).or_insert(n);
                let th2 = self.subst(th);
                Type::Var(th2, id)
            }
            Type::Dynamic => Type::Dynamic,
        }
    }
}

pub fn canonical_term(e: &Term) -> Term {
    Canon::new().term(e)
}

pub fn canonical_type(t: &Type) -> Type {
    Canon::new().ty(t)
}

pub fn alpha_eq(a: &Term, b: &Term) -> bool {
    canonical_term(a) == canonical_term(b)
}

pub fn alpha_eq_type(a: &Type, b: &Type) -> bool {
    canonical_type(a) == canonical_type(b)
}

// ---------------------------------------------------------------------------
// Types of constants

fn v(x: &str) -> Term {
    Term::var(x)
}

fn binop_ty(dom: BaseTy, res: BaseTy, p: Prim) -> Type {
    Type::arrow(
        "a",
        Type::base(dom),
        Type::arrow("b", Type::base(dom), Type::refined("z", res, Term::eq(v("z"), Term::prim2(p, v("a"), v("b"))))),
    )
}

fn unop_ty(dom: BaseTy, res: BaseTy, p: Prim) -> Type {
    Type::arrow("a", Type::base(dom), Type::refined("z", res, Term::eq(v("z"), Term::prim1(p, v("a")))))
}

/// The precise type of a primitive.
pub fn prim_type(p: &Prim) -> Type {
    use BaseTy::*;
    match p {
        Prim::Add | Prim::Sub | Prim::Mul | Prim::Div | Prim::Mod | Prim::Min | Prim::Max => binop_ty(Int, Int, p.clone()),
        Prim::Lt | Prim::Le => binop_ty(Int, Bool, p.clone()),
        Prim::And | Prim::Or | Prim::Imp => binop_ty(Bool, Bool, p.clone()),
        Prim::Eq => Type::arrow(
            "a",
            Type::Dynamic,
            Type::arrow("b", Type::Dynamic, Type::refined("z", Bool, Term::eq(v("z"), Term::eq(v("a"), v("b"))))),
        ),
        Prim::Not => unop_ty(Bool, Bool, Prim::Not),
        Prim::Lower | Prim::Upper => unop_ty(Bst, Int, p.clone()),
        Prim::Length => unop_ty(IntList, Int, Prim::Length),
        Prim::NewArray => Type::arrow(
            "n",
            Type::int(),
            Type::refined("a", IntList, Term::eq(Term::prim1(Prim::Length, v("a")), v("n"))),
        ),
        Prim::If(t) => Type::fun(Type::bool(), Type::fun((**t).clone(), Type::fun((**t).clone(), (**t).clone()))),
        Prim::Fix(t) => Type::fun(Type::fun((**t).clone(), (**t).clone()), (**t).clone()),
    }
}

/// The precise type of a constructor (curried over its fields).
pub fn ctor_type(c: &Ctor) -> Type {
    use BaseTy::*;
    let le = |a: Term, b: Term| Term::prim2(Prim::Le, a, b);
    let lt = |a: Term, b: Term| Term::prim2(Prim::Lt, a, b);
    let lower = |a: Term| Term::prim1(Prim::Lower, a);
    let upper = |a: Term| Term::prim1(Prim::Upper, a);
    let tree_result = || {
        Type::refined(
            "t",
            Bst,
            Term::and(
                Term::eq(lower(v("t")), v("lo")),
                Term::eq(upper(v("t")), Term::prim2(Prim::Sub, v("hi"), Term::int(1))),
            ),
        )
    };
    match c {
        Ctor::Bool(true) => Type::refined("b", Bool, v("b")),
        Ctor::Bool(false) => Type::refined("b", Bool, Term::not(v("b"))),
        Ctor::Int(n) => Type::refined("m", Int, Term::eq(v("m"), Term::int(n.clone()))),
        Ctor::Unit => Type::base(Unit),
        Ctor::Nil => Type::refined("l", IntList, Term::eq(Term::prim1(Prim::Length, v("l")), Term::int(0))),
        Ctor::Cons => Type::arrow(
            "h",
            Type::int(),
            Type::arrow(
                "t",
                Type::base(IntList),
                Type::refined(
                    "l",
                    IntList,
                    Term::eq(
                        Term::prim1(Prim::Length, v("l")),
                        Term::prim2(Prim::Add, Term::prim1(Prim::Length, v("t")), Term::int(1)),
                    ),
                ),
            ),
        ),
        Ctor::Empty => Type::arrow("lo", Type::int(), Type::arrow("hi", Type::int(), tree_result())),
        Ctor::Node => Type::arrow(
            "lo",
            Type::int(),
            Type::arrow(
                "hi",
                Type::int(),
                Type::arrow(
                    "v",
                    Type::refined("v", Int, Term::and(le(v("lo"), v("v")), lt(v("v"), v("hi")))),
                    Type::arrow(
                        "l",
                        Type::refined("l", Bst, Term::and(le(v("lo"), lower(v("l"))), lt(upper(v("l")), v("v")))),
                        Type::arrow(
                            "r",
                            Type::refined("r", Bst, Term::and(le(v("v"), lower(v("r"))), lt(upper(v("r")), v("hi")))),
                            tree_result(),
                        ),
                    ),
                ),
            ),
        ),
    }
}

/// Instantiates the remaining arrows of `t` with `args` (dependent application).
pub fn instantiate(t: &Type, args: &[Term]) -> Option<Type> {
    let mut cur = t.clone();
    for a in args {
        match cur {
            Type::Arrow(x, _, u) => cur = subst_type(&u, &x, a),
            _ => return None,
        }
    }
    Some(cur)
}

/// Conjunct list of a predicate, splitting `&&` and `/\`.
pub fn conjuncts(p: &Term) -> Vec<Term> {
    let mut out = Vec::new();
    fn go(p: &Term, out: &mut Vec<Term>) {
        match p {
            Term::PAnd(a, b, _) => {
                go(a, out);
                go(b, out);
            }
            Term::App(f, b) => match &**f {
                Term::App(g, a) if matches!(&**g, Term::Prim(Prim::And)) => {
                    go(a, out);
                    go(b, out);
                }
                _ => out.push(p.clone()),
            },
            _ if p.is_true() => {}
            _ => out.push(p.clone()),
        }
    }
    go(p, &mut out);
    out
}
