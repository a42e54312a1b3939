//! Three-valued implication oracle over refinement predicates.
//!
//! Predicates are folded, translated into linear integer constraints over
//! abstracted atoms, and refuted disjunct by disjunct with Fourier–Motzkin.
//! A `No` answer always carries a witness that has been replayed through the
//! evaluator; when refutation fails the answer is `Maybe`.

use crate::ast::*;
use crate::eval::{eval_bool, evaluate, StepOutcome, FOLD_FUEL};
use crate::surface::print_term;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Certainty {
    No,
    Maybe,
    Yes,
}

impl Certainty {
    /// Greatest lower bound in `No < Maybe < Yes`.
    pub fn meet(self, other: Certainty) -> Certainty {
        self.min(other)
    }
}

pub fn meet(a: Certainty, b: Certainty) -> Certainty {
    a.meet(b)
}

impl fmt::Display for Certainty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Certainty::Yes => "yes",
            Certainty::Maybe => "maybe",
            Certainty::No => "no",
        })
    }
}

/// A closing substitution refuting an implication.
#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub bindings: Vec<(Name, Term)>,
}

impl Witness {
    pub fn get(&self, x: &str) -> Option<&Term> {
        self.bindings.iter().find(|(n, _)| n == x).map(|(_, t)| t)
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.bindings.iter().map(|(n, v)| format!("{} = {}", n, v)).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

#[derive(Clone, Debug)]
pub struct ProverConfig {
    /// When false only syntactic checks run; everything else is `Maybe`.
    pub enabled: bool,
    /// Treat `a * b` and `b * a` as the same atom.
    pub normalize_products: bool,
    pub smtlib_dir: Option<PathBuf>,
    pub leaf_limit: usize,
    pub testing_budget: usize,
}

impl Default for ProverConfig {
    fn default() -> Self {
        ProverConfig { enabled: true, normalize_products: false, smtlib_dir: None, leaf_limit: 20_000, testing_budget: 4096 }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Prover {
    pub config: ProverConfig,
}

/// Convenience entry with the default configuration.
pub fn implies(env: &Env, p: &Term, q: &Term) -> (Certainty, Option<Witness>) {
    Prover::default().implies(env, p, q)
}

// ---------------------------------------------------------------------------
// Linear expressions and formulas

#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
struct Lin {
    c: BTreeMap<usize, BigInt>,
    k: BigInt,
}

impl Lin {
    fn konst(k: BigInt) -> Lin {
        Lin { c: BTreeMap::new(), k }
    }

    fn var(v: usize) -> Lin {
        let mut c = BTreeMap::new();
        c.insert(v, BigInt::one());
        Lin { c, k: BigInt::zero() }
    }

    fn add(&self, o: &Lin) -> Lin {
        let mut r = self.clone();
        for (v, a) in &o.c {
            let e = r.c.entry(*v).or_insert_with(BigInt::zero);
            *e += a;
            if e.is_zero() {
                r.c.remove(v);
            }
        }
        r.k += &o.k;
        r
    }

    fn scale(&self, s: &BigInt) -> Lin {
        if s.is_zero() {
            return Lin::default();
        }
        Lin { c: self.c.iter().map(|(v, a)| (*v, a * s)).collect(), k: &self.k * s }
    }

    fn sub(&self, o: &Lin) -> Lin {
        self.add(&o.scale(&-BigInt::one()))
    }

    fn as_const(&self) -> Option<&BigInt> {
        if self.c.is_empty() {
            Some(&self.k)
        } else {
            None
        }
    }

    fn eval(&self, m: &HashMap<usize, BigInt>) -> BigInt {
        let mut s = self.k.clone();
        for (v, a) in &self.c {
            if let Some(x) = m.get(v) {
                s += a * x;
            }
        }
        s
    }

    /// Replaces `v` by `e`.
    fn subst(&self, v: usize, e: &Lin) -> Lin {
        match self.c.get(&v) {
            None => self.clone(),
            Some(a) => {
                let a = a.clone();
                let mut r = self.clone();
                r.c.remove(&v);
                r.add(&e.scale(&a))
            }
        }
    }
}

#[derive(Clone, Debug)]
enum DTerm {
    Var(usize),
    Ctor(Ctor, Vec<DArg>),
}

#[derive(Clone, Debug)]
enum DArg {
    Int(Lin),
    Data(DTerm),
}

#[derive(Clone, Debug)]
enum Lit {
    /// lin <= 0
    Le(Lin),
    /// lin = 0
    Eq(Lin),
    /// lin != 0
    Ne(Lin),
    B(usize, bool),
    DEq(DTerm, DTerm, bool),
}

#[derive(Clone, Debug)]
enum F {
    T,
    Fa,
    L(Lit),
    And(Vec<F>),
    Or(Vec<F>),
}

fn le(a: Lin, b: Lin) -> F {
    F::L(Lit::Le(a.sub(&b)))
}

fn lt(a: Lin, b: Lin) -> F {
    F::L(Lit::Le(a.sub(&b).add(&Lin::konst(BigInt::one()))))
}

fn eqf(a: Lin, b: Lin) -> F {
    F::L(Lit::Eq(a.sub(&b)))
}

fn neg(f: &F) -> F {
    match f {
        F::T => F::Fa,
        F::Fa => F::T,
        F::And(fs) => F::Or(fs.iter().map(neg).collect()),
        F::Or(fs) => F::And(fs.iter().map(neg).collect()),
        F::L(l) => F::L(match l {
            Lit::Le(e) => Lit::Le(e.scale(&-BigInt::one()).add(&Lin::konst(BigInt::one()))),
            Lit::Eq(e) => Lit::Ne(e.clone()),
            Lit::Ne(e) => Lit::Eq(e.clone()),
            Lit::B(v, b) => Lit::B(*v, !b),
            Lit::DEq(a, b, p) => Lit::DEq(a.clone(), b.clone(), !p),
        }),
    }
}

// ---------------------------------------------------------------------------
// Sorts and the translation context

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Sort {
    Int,
    Bool,
    Unit,
    List,
    Tree,
    Fun,
    Opaque,
}

fn sort_of_base(b: BaseTy) -> Sort {
    match b {
        BaseTy::Int => Sort::Int,
        BaseTy::Bool => Sort::Bool,
        BaseTy::Unit => Sort::Unit,
        BaseTy::IntList => Sort::List,
        BaseTy::Bst => Sort::Tree,
    }
}

fn sort_of_type(t: &Type) -> Sort {
    match t {
        Type::Base(_, b, _) => sort_of_base(*b),
        Type::Arrow(..) => Sort::Fun,
        Type::Exists(_, _, u) => sort_of_type(u),
        Type::Var(..) | Type::Dynamic => Sort::Opaque,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Measure {
    Length,
    Lower,
    Upper,
}

#[derive(Clone, Debug)]
struct VarInfo {
    sort: Sort,
}

struct Tr<'a> {
    cfg: &'a ProverConfig,
    vars: Vec<VarInfo>,
    by_name: HashMap<(String, Sort), usize>,
    sorts: HashMap<String, Sort>,
    arrow_types: HashMap<String, Type>,
    atoms: HashMap<String, usize>,
    partial_atoms: BTreeSet<usize>,
    measures: BTreeMap<(Measure, usize), usize>,
    side: Vec<F>,
    touched: BTreeSet<usize>,
    tainted: bool,
    lossy: bool,
    depth: usize,
}

impl<'a> Tr<'a> {
    fn new(cfg: &'a ProverConfig) -> Tr<'a> {
        Tr {
            cfg,
            vars: Vec::new(),
            by_name: HashMap::new(),
            sorts: HashMap::new(),
            arrow_types: HashMap::new(),
            atoms: HashMap::new(),
            partial_atoms: BTreeSet::new(),
            measures: BTreeMap::new(),
            side: Vec::new(),
            touched: BTreeSet::new(),
            tainted: false,
            lossy: false,
            depth: 0,
        }
    }

    fn new_var(&mut self, sort: Sort) -> usize {
        self.vars.push(VarInfo { sort });
        self.vars.len() - 1
    }

    fn declare(&mut self, x: &str, t: &Type) {
        let s = sort_of_type(t);
        self.sorts.insert(x.to_string(), s);
        if let Type::Arrow(..) = t {
            self.arrow_types.insert(x.to_string(), t.clone());
        }
    }

    /// The solver variable standing for program variable `x` used at sort `want`.
    fn named(&mut self, x: &str, want: Sort) -> usize {
        let declared = self.sorts.get(x).copied().unwrap_or(Sort::Opaque);
        if declared != want {
            self.tainted = true;
            self.lossy = true;
        }
        if let Some(v) = self.by_name.get(&(x.to_string(), want)) {
            return *v;
        }
        let v = self.new_var(want);
        self.by_name.insert((x.to_string(), want), v);
        v
    }

    fn sort_of(&self, t: &Term) -> Option<Sort> {
        match t {
            Term::Var(x) => self.sorts.get(x).copied(),
            Term::Ctor(c, args) => {
                if args.len() == c.arity() {
                    Some(sort_of_base(c.base()))
                } else {
                    Some(Sort::Fun)
                }
            }
            Term::Exists(..) | Term::POr(..) | Term::PAnd(..) => Some(Sort::Bool),
            Term::Lam(..) | Term::Cast(..) | Term::Prim(_) => Some(Sort::Fun),
            Term::Checking { target, .. } => Some(sort_of_type(target)),
            Term::Case(_, brs) => brs.first().and_then(|(c, h)| {
                let (_, body) = h.peel_lams();
                let _ = c;
                self.sort_of(body)
            }),
            Term::Hole(_) => Some(Sort::Bool),
            Term::App(..) => {
                let (head, args) = t.spine();
                match head {
                    Term::Prim(p) => {
                        let ty = prim_type(p);
                        result_sort(&ty, args.len())
                    }
                    Term::Ctor(c, pre) => {
                        if pre.len() + args.len() == c.arity() {
                            Some(sort_of_base(c.base()))
                        } else {
                            Some(Sort::Fun)
                        }
                    }
                    Term::Var(f) => self.arrow_types.get(f).and_then(|ty| result_sort(ty, args.len())),
                    Term::Cast(_, target, _) => result_sort(&Type::fun(Type::Dynamic, (**target).clone()), args.len()),
                    Term::Lam(..) => {
                        let (ps, body) = head.peel_lams();
                        if ps.len() == args.len() {
                            self.sort_of(body)
                        } else {
                            None
                        }
                    }
                    _ => None,
                }
            }
        }
    }

    // -- atoms ---------------------------------------------------------------

    fn atom(&mut self, t: &Term, sort: Sort) -> usize {
        self.lossy = true;
        let key = format!("{:?}|{}", sort, atom_key(t, self.cfg.normalize_products));
        if let Some(v) = self.atoms.get(&key) {
            let v = *v;
            self.touched.insert(v);
            return v;
        }
        let v = self.new_var(sort);
        self.atoms.insert(key, v);
        self.touched.insert(v);
        if is_partial(t) {
            self.partial_atoms.insert(v);
        }
        if self.depth < 4 {
            if let Some(h) = self.typed_hypothesis(t) {
                self.depth += 1;
                let f = self.form(&h);
                self.depth -= 1;
                self.side.push(f);
            }
        }
        v
    }

    /// What the type of an opaque application says about its result.
    fn typed_hypothesis(&self, t: &Term) -> Option<Term> {
        let (head, args) = t.spine();
        let ty = match head {
            Term::Var(f) => self.arrow_types.get(f)?.clone(),
            Term::Cast(_, target, _) if args.len() == 1 => return base_refinement_of(target, t),
            _ => return None,
        };
        let args: Vec<Term> = args.into_iter().cloned().collect();
        let res = instantiate(&ty, &args)?;
        base_refinement_of(&res, t)
    }

    // -- translation -----------------------------------------------------------

    fn form(&mut self, t: &Term) -> F {
        match t {
            _ if t.is_true() => F::T,
            _ if t.is_false() => F::Fa,
            Term::Var(x) => F::L(Lit::B(self.named(x, Sort::Bool), true)),
            Term::POr(a, b, _) => F::Or(vec![self.form(a), self.form(b)]),
            Term::PAnd(a, b, _) => F::And(vec![self.form(a), self.form(b)]),
            Term::Case(s, brs) => match bool_case(s, brs) {
                Some((c, a, b)) => {
                    let fc = self.form(&c);
                    let fa = self.form(&a);
                    let fb = self.form(&b);
                    F::Or(vec![F::And(vec![fc.clone(), fa]), F::And(vec![neg(&fc), fb])])
                }
                None => F::L(Lit::B(self.atom(t, Sort::Bool), true)),
            },
            Term::App(..) => {
                let (head, args) = t.spine();
                match (head, args.as_slice()) {
                    (Term::Prim(Prim::And), [a, b]) => F::And(vec![self.form(a), self.form(b)]),
                    (Term::Prim(Prim::Or), [a, b]) => F::Or(vec![self.form(a), self.form(b)]),
                    (Term::Prim(Prim::Imp), [a, b]) => {
                        let fa = self.form(a);
                        F::Or(vec![neg(&fa), self.form(b)])
                    }
                    (Term::Prim(Prim::Not), [a]) => {
                        let fa = self.form(a);
                        neg(&fa)
                    }
                    (Term::Prim(Prim::Lt), [a, b]) => {
                        let (x, y) = (self.int(a), self.int(b));
                        lt(x, y)
                    }
                    (Term::Prim(Prim::Le), [a, b]) => {
                        let (x, y) = (self.int(a), self.int(b));
                        le(x, y)
                    }
                    (Term::Prim(Prim::Eq), [a, b]) => self.eq_form(t, a, b),
                    (Term::Prim(Prim::If(_)), [c, a, b]) => {
                        let fc = self.form(c);
                        let fa = self.form(a);
                        let fb = self.form(b);
                        F::Or(vec![F::And(vec![fc.clone(), fa]), F::And(vec![neg(&fc), fb])])
                    }
                    (Term::Lam(..), _) => match beta(t) {
                        Some(r) => self.form(&r),
                        None => F::L(Lit::B(self.atom(t, Sort::Bool), true)),
                    },
                    _ => F::L(Lit::B(self.atom(t, Sort::Bool), true)),
                }
            }
            _ => F::L(Lit::B(self.atom(t, Sort::Bool), true)),
        }
    }

    fn eq_form(&mut self, whole: &Term, a: &Term, b: &Term) -> F {
        let s = match (self.sort_of(a), self.sort_of(b)) {
            (Some(s), _) if s != Sort::Opaque && s != Sort::Fun => Some(s),
            (_, Some(s)) if s != Sort::Opaque && s != Sort::Fun => Some(s),
            _ => None,
        };
        match s {
            Some(Sort::Int) => {
                let (x, y) = (self.int(a), self.int(b));
                eqf(x, y)
            }
            Some(Sort::Bool) => {
                let fa = self.form(a);
                let fb = self.form(b);
                F::Or(vec![F::And(vec![fa.clone(), fb.clone()]), F::And(vec![neg(&fa), neg(&fb)])])
            }
            Some(Sort::Unit) => F::T,
            Some(s @ (Sort::List | Sort::Tree)) => {
                let da = self.data(a, s);
                let db = self.data(b, s);
                F::L(Lit::DEq(da, db, true))
            }
            _ => F::L(Lit::B(self.atom(whole, Sort::Bool), true)),
        }
    }

    fn int(&mut self, t: &Term) -> Lin {
        if let Some(n) = t.as_int() {
            return Lin::konst(n.clone());
        }
        match t {
            Term::Var(x) => Lin::var(self.named(x, Sort::Int)),
            Term::Case(s, brs) => match bool_case(s, brs) {
                Some((c, a, b)) => {
                    let z = self.new_var(Sort::Int);
                    let fc = self.form(&c);
                    let la = self.int(&a);
                    let lb = self.int(&b);
                    self.side.push(F::Or(vec![
                        F::And(vec![fc.clone(), eqf(Lin::var(z), la)]),
                        F::And(vec![neg(&fc), eqf(Lin::var(z), lb)]),
                    ]));
                    Lin::var(z)
                }
                None => Lin::var(self.atom(t, Sort::Int)),
            },
            Term::App(..) => {
                let (head, args) = t.spine();
                match (head, args.as_slice()) {
                    (Term::Prim(Prim::Add), [a, b]) => {
                        let x = self.int(a);
                        x.add(&self.int(b))
                    }
                    (Term::Prim(Prim::Sub), [a, b]) => {
                        let x = self.int(a);
                        x.sub(&self.int(b))
                    }
                    (Term::Prim(Prim::Mul), [a, b]) => {
                        let x = self.int(a);
                        let y = self.int(b);
                        if let Some(k) = x.as_const() {
                            y.scale(k)
                        } else if let Some(k) = y.as_const() {
                            x.scale(k)
                        } else {
                            Lin::var(self.atom(t, Sort::Int))
                        }
                    }
                    (Term::Prim(p @ (Prim::Div | Prim::Mod)), [a, b]) => {
                        let x = self.int(a);
                        let y = self.int(b);
                        match y.as_const() {
                            Some(c) if !c.is_zero() => {
                                let c = c.clone();
                                let key = format!("div|{}|{}", atom_key(a, false), c);
                                let q = match self.atoms.get(&key) {
                                    Some(q) => *q,
                                    None => {
                                        let q = self.new_var(Sort::Int);
                                        self.atoms.insert(key, q);
                                        // 0 <= x - c*q <= |c| - 1
                                        let r = x.sub(&Lin::var(q).scale(&c));
                                        self.side.push(le(Lin::default(), r.clone()));
                                        self.side.push(le(r, Lin::konst(c.abs() - 1)));
                                        q
                                    }
                                };
                                if *p == Prim::Div {
                                    Lin::var(q)
                                } else {
                                    x.sub(&Lin::var(q).scale(&c))
                                }
                            }
                            _ => Lin::var(self.atom(t, Sort::Int)),
                        }
                    }
                    (Term::Prim(p @ (Prim::Min | Prim::Max)), [a, b]) => {
                        let key = format!("mm|{}", atom_key(t, false));
                        if let Some(z) = self.atoms.get(&key) {
                            return Lin::var(*z);
                        }
                        let x = self.int(a);
                        let y = self.int(b);
                        let z = self.new_var(Sort::Int);
                        self.atoms.insert(key, z);
                        let first = if *p == Prim::Min { le(x.clone(), y.clone()) } else { le(y.clone(), x.clone()) };
                        self.side.push(F::Or(vec![
                            F::And(vec![first.clone(), eqf(Lin::var(z), x)]),
                            F::And(vec![neg(&first), eqf(Lin::var(z), y)]),
                        ]));
                        Lin::var(z)
                    }
                    (Term::Prim(p @ (Prim::Length | Prim::Lower | Prim::Upper)), [a]) => {
                        let m = match p {
                            Prim::Length => Measure::Length,
                            Prim::Lower => Measure::Lower,
                            _ => Measure::Upper,
                        };
                        let s = if m == Measure::Length { Sort::List } else { Sort::Tree };
                        let d = self.data(a, s);
                        self.measure(m, &d)
                    }
                    (Term::Prim(Prim::If(_)), [c, a, b]) => {
                        let z = self.new_var(Sort::Int);
                        let fc = self.form(c);
                        let la = self.int(a);
                        let lb = self.int(b);
                        self.side.push(F::Or(vec![
                            F::And(vec![fc.clone(), eqf(Lin::var(z), la)]),
                            F::And(vec![neg(&fc), eqf(Lin::var(z), lb)]),
                        ]));
                        Lin::var(z)
                    }
                    (Term::Lam(..), _) => match beta(t) {
                        Some(r) => self.int(&r),
                        None => Lin::var(self.atom(t, Sort::Int)),
                    },
                    _ => Lin::var(self.atom(t, Sort::Int)),
                }
            }
            _ => Lin::var(self.atom(t, Sort::Int)),
        }
    }

    fn measure(&mut self, m: Measure, d: &DTerm) -> Lin {
        match d {
            DTerm::Var(v) => {
                if let Some(x) = self.measures.get(&(m, *v)) {
                    return Lin::var(*x);
                }
                let x = self.new_var(Sort::Int);
                self.measures.insert((m, *v), x);
                if m == Measure::Length {
                    self.side.push(le(Lin::default(), Lin::var(x)));
                }
                Lin::var(x)
            }
            DTerm::Ctor(c, args) => match (m, c) {
                (Measure::Length, Ctor::Nil) => Lin::default(),
                (Measure::Length, Ctor::Cons) => match &args[1] {
                    DArg::Data(t) => self.measure(m, t).add(&Lin::konst(BigInt::one())),
                    DArg::Int(_) => Lin::default(),
                },
                (Measure::Lower, Ctor::Empty | Ctor::Node) => match &args[0] {
                    DArg::Int(l) => l.clone(),
                    _ => Lin::default(),
                },
                (Measure::Upper, Ctor::Empty | Ctor::Node) => match &args[1] {
                    DArg::Int(l) => l.sub(&Lin::konst(BigInt::one())),
                    _ => Lin::default(),
                },
                _ => {
                    // Ill-sorted measure application; keep it opaque.
                    let v = self.new_var(Sort::Int);
                    self.lossy = true;
                    Lin::var(v)
                }
            },
        }
    }

    fn data(&mut self, t: &Term, s: Sort) -> DTerm {
        match t {
            Term::Var(x) => DTerm::Var(self.named(x, s)),
            Term::Ctor(c, args) if args.len() == c.arity() => self.ctor_data(c, &args.iter().collect::<Vec<_>>()),
            Term::App(..) => {
                let (head, args) = t.spine();
                match head {
                    Term::Ctor(c, pre) if pre.len() + args.len() == c.arity() => {
                        let all: Vec<&Term> = pre.iter().chain(args.iter().copied()).collect();
                        self.ctor_data(c, &all)
                    }
                    Term::Lam(..) => match beta(t) {
                        Some(r) => self.data(&r, s),
                        None => DTerm::Var(self.atom(t, s)),
                    },
                    Term::Prim(Prim::NewArray) if args.len() == 1 => {
                        let v = self.atom(t, s);
                        let n = self.int(args[0]);
                        let l = self.measure(Measure::Length, &DTerm::Var(v));
                        self.side.push(eqf(l, n));
                        DTerm::Var(v)
                    }
                    _ => DTerm::Var(self.atom(t, s)),
                }
            }
            _ => DTerm::Var(self.atom(t, s)),
        }
    }

    fn ctor_data(&mut self, c: &Ctor, args: &[&Term]) -> DTerm {
        let fields = field_sorts(c);
        let mut out = Vec::new();
        for (a, fs) in args.iter().zip(fields) {
            out.push(match fs {
                Sort::Int => DArg::Int(self.int(a)),
                s => DArg::Data(self.data(a, s)),
            });
        }
        DTerm::Ctor(c.clone(), out)
    }
}

fn field_sorts(c: &Ctor) -> Vec<Sort> {
    match c {
        Ctor::Cons => vec![Sort::Int, Sort::List],
        Ctor::Empty => vec![Sort::Int, Sort::Int],
        Ctor::Node => vec![Sort::Int, Sort::Int, Sort::Int, Sort::Tree, Sort::Tree],
        _ => vec![],
    }
}

fn result_sort(ty: &Type, nargs: usize) -> Option<Sort> {
    let mut cur = ty;
    for _ in 0..nargs {
        match cur {
            Type::Arrow(_, _, u) => cur = u,
            Type::Dynamic => return Some(Sort::Opaque),
            _ => return None,
        }
    }
    Some(sort_of_type(cur))
}

fn base_refinement_of(ty: &Type, subject: &Term) -> Option<Term> {
    match ty {
        Type::Base(z, _, r) if !r.is_true() => Some(subst_term(r, z, subject)),
        _ => None,
    }
}

fn atom_key(t: &Term, normalize_products: bool) -> String {
    let c = canonical_term(t);
    if normalize_products {
        let (h, args) = c.spine();
        if let (Term::Prim(Prim::Mul), [a, b]) = (h, args.as_slice()) {
            let (x, y) = (print_term(a), print_term(b));
            return if x <= y { format!("{x} * {y}") } else { format!("{y} * {x}") };
        }
    }
    print_term(&c)
}

/// Whether evaluating the term may diverge or fail even on well-typed inputs.
fn is_partial(t: &Term) -> bool {
    let (head, _) = t.spine();
    match head {
        Term::Prim(Prim::NewArray) | Term::Prim(Prim::Fix(_)) => true,
        Term::Prim(_) | Term::Ctor(..) => false,
        _ => true,
    }
}

fn beta(t: &Term) -> Option<Term> {
    if let Term::App(f, a) = t {
        if let Term::Lam(x, _, b) = &**f {
            return Some(subst_term(b, x, a));
        }
        let f2 = beta(f)?;
        return Some(Term::app(f2, (**a).clone()));
    }
    None
}

/// `case c of true => a | false => b` where the handlers ignore the scrutinee binding.
fn bool_case(s: &Term, brs: &[(Ctor, Term)]) -> Option<(Term, Term, Term)> {
    if brs.len() != 2 {
        return None;
    }
    let mut t = None;
    let mut f = None;
    for (c, h) in brs {
        let body = match h {
            Term::Lam(x, _, b) => subst_term(b, x, s),
            _ => return None,
        };
        match c {
            Ctor::Bool(true) => t = Some(body),
            Ctor::Bool(false) => f = Some(body),
            _ => return None,
        }
    }
    Some(((*s).clone(), t?, f?))
}

// ---------------------------------------------------------------------------
// Problem preparation

/// An environment with existential bindings peeled into ordinary ones.
pub fn flatten_env(env: &Env) -> Vec<(Name, Type)> {
    // Renaming is deterministic so a witness can be replayed against a fresh flattening.
    let mut taken: BTreeSet<Name> = BTreeSet::new();
    for (x, t) in env.entries() {
        taken.insert(x.clone());
        taken.extend(free_vars_type(t));
    }
    fn pick(taken: &mut BTreeSet<Name>, y: &str) -> Name {
        let stem = y.split('\'').next().filter(|s| !s.is_empty()).unwrap_or("x");
        let mut k = 0usize;
        let mut cand = y.to_string();
        while taken.contains(&cand) {
            k += 1;
            cand = format!("{stem}'w{k}");
        }
        taken.insert(cand.clone());
        cand
    }
    fn push(out: &mut Vec<(Name, Type)>, taken: &mut BTreeSet<Name>, x: &str, t: &Type) {
        let mut cur = t.clone();
        while let Type::Exists(y, s, u) = cur {
            let y2 = pick(taken, &y);
            push(out, taken, &y2, &s);
            cur = if y2 != y { rename_type(&u, &y, &y2) } else { *u };
        }
        out.push((x.to_string(), cur));
    }
    let mut out: Vec<(Name, Type)> = Vec::new();
    for (x, t) in env.entries() {
        push(&mut out, &mut taken, x, t);
    }
    out
}

/// Folds closed subterms with a small evaluation budget.
pub fn fold_constants(t: &Term) -> Term {
    fn closed(t: &Term) -> bool {
        free_vars(t).is_empty() && !term_has(t, &|e| matches!(e, Term::Hole(_) | Term::Exists(..)))
    }
    fn is_lit(t: &Term) -> bool {
        matches!(t, Term::Ctor(_, a) if a.is_empty())
    }
    fn go(t: &Term) -> Term {
        if !is_lit(t) && matches!(t, Term::App(..)) && closed(t) {
            if let Ok(StepOutcome::Value(v)) = evaluate(t, FOLD_FUEL) {
                if matches!(v, Term::Ctor(..)) {
                    return v;
                }
            }
        }
        match t {
            Term::App(f, a) => Term::app(go(f), go(a)),
            Term::POr(a, b, n) => Term::POr(Box::new(go(a)), Box::new(go(b)), *n),
            Term::PAnd(a, b, n) => Term::PAnd(Box::new(go(a)), Box::new(go(b)), *n),
            Term::Exists(x, ty, b) => Term::Exists(x.clone(), ty.clone(), Box::new(go(b))),
            _ => t.clone(),
        }
    }
    go(t)
}

/// `y = e` conjunct of a refinement, usable to eliminate the binder.
fn singleton_def(y: &str, r: &Term) -> Option<(Term, Term)> {
    let cs = conjuncts(r);
    for (i, c) in cs.iter().enumerate() {
        let (h, args) = c.spine();
        if let (Term::Prim(Prim::Eq), [a, b]) = (h, args.as_slice()) {
            let pick = if matches!(a, Term::Var(v) if v == y) && !free_vars(b).contains(y) {
                Some((*b).clone())
            } else if matches!(b, Term::Var(v) if v == y) && !free_vars(a).contains(y) {
                Some((*a).clone())
            } else {
                None
            };
            if let Some(e) = pick {
                let rest: Vec<Term> = cs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, c)| c.clone()).collect();
                return Some((e, Term::and_all(rest)));
            }
        }
    }
    None
}

/// Bindings fixed by an equation to a literal or an earlier binding, in
/// binding order with chains already resolved.
fn pinned_bindings(flat: &[(Name, Type)]) -> Vec<(Name, Term)> {
    let mut pins: Vec<(Name, Term)> = Vec::new();
    for (i, (x, t)) in flat.iter().enumerate() {
        if let Type::Base(y, _, r) = t {
            if let Some((e, _)) = singleton_def(y, r) {
                let e = unpin(&pins, &e, None);
                let ok = match &e {
                    Term::Var(z) => flat[..i].iter().any(|(n, _)| n == z),
                    Term::Ctor(Ctor::Int(_) | Ctor::Bool(_), _) => true,
                    _ => false,
                };
                if ok {
                    pins.push((x.clone(), e));
                }
            }
        }
    }
    pins
}

fn unpin(pins: &[(Name, Term)], t: &Term, except: Option<&Name>) -> Term {
    pins.iter().filter(|(x, _)| Some(x) != except).fold(t.clone(), |acc, (x, e)| subst_term(&acc, x, e))
}

/// Rewrites an existential whose binder is pinned by an equation: `exists y:{y:B | y = e /\ r}. p` → `r[e] /\ p[e]`.
pub fn eliminate_singleton(x: &str, ty: &Type, body: &Term) -> Option<Term> {
    if let Type::Base(y, _, r) = ty {
        let (e, rest) = singleton_def(y, r)?;
        let rest = subst_term(&rest, y, &e);
        return Some(Term::and(rest, subst_term(body, x, &e)));
    }
    None
}

impl Tr<'_> {
    /// Replaces positively occurring existentials by fresh variables.
    fn skolemize(&mut self, t: &Term, pos: bool) -> Term {
        match t {
            Term::Exists(x, ty, b) => {
                if let Some(r) = eliminate_singleton(x, ty, b) {
                    return self.skolemize(&r, pos);
                }
                if !pos {
                    return t.clone();
                }
                let x2 = fresh_name(x);
                let mut cur = (**ty).clone();
                let mut pre = Vec::new();
                while let Type::Exists(y, s, u) = cur {
                    let y2 = fresh_name(&y);
                    self.declare(&y2, &s);
                    if let Type::Base(z, _, r) = &*s {
                        pre.push(subst_term(r, z, &Term::var(&y2)));
                    }
                    cur = rename_type(&u, &y, &y2);
                }
                self.declare(&x2, &cur);
                if let Type::Base(z, _, r) = &cur {
                    pre.push(subst_term(r, z, &Term::var(&x2)));
                }
                let body = self.skolemize(&rename_term(b, x, &x2), pos);
                pre.push(body);
                Term::and_all(pre)
            }
            Term::POr(a, b, n) => Term::POr(Box::new(self.skolemize(a, pos)), Box::new(self.skolemize(b, pos)), *n),
            Term::PAnd(a, b, n) => Term::PAnd(Box::new(self.skolemize(a, pos)), Box::new(self.skolemize(b, pos)), *n),
            Term::App(..) => {
                let (h, args) = t.spine();
                match (h, args.as_slice()) {
                    (Term::Prim(p @ (Prim::And | Prim::Or)), [a, b]) => {
                        Term::prim2(p.clone(), self.skolemize(a, pos), self.skolemize(b, pos))
                    }
                    (Term::Prim(Prim::Imp), [a, b]) => {
                        Term::prim2(Prim::Imp, self.skolemize(a, !pos), self.skolemize(b, pos))
                    }
                    (Term::Prim(Prim::Not), [a]) => Term::not(self.skolemize(a, !pos)),
                    _ => t.clone(),
                }
            }
            _ => t.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// Fourier–Motzkin with integer tightening

#[derive(Clone, Debug)]
struct Ineq {
    c: BTreeMap<usize, BigInt>,
    k: BigInt,
}

enum Norm {
    True,
    False,
    Keep(Ineq),
}

fn gcd_all<'a>(it: impl Iterator<Item = &'a BigInt>) -> BigInt {
    let mut g = BigInt::zero();
    for a in it {
        g = g.gcd(a);
    }
    g
}

fn norm_ineq(l: &Lin) -> Norm {
    if l.c.is_empty() {
        return if l.k <= BigInt::zero() { Norm::True } else { Norm::False };
    }
    let g = gcd_all(l.c.values());
    let c = l.c.iter().map(|(v, a)| (*v, a / &g)).collect();
    let k = Integer::div_ceil(&l.k, &g);
    Norm::Keep(Ineq { c, k })
}

enum Elim {
    Def(usize, Lin),
    Bounds(usize, Vec<Ineq>),
}

enum Fm {
    Unsat,
    /// Rationally satisfiable; the integer model when one was found.
    Sat(Option<HashMap<usize, BigInt>>),
    Unknown,
}

const FM_LIMIT: usize = 4000;

fn fm(eqs: &[Lin], les: &[Lin]) -> Fm {
    let mut eqs: Vec<Lin> = eqs.to_vec();
    let mut les: Vec<Lin> = les.to_vec();
    let mut elims: Vec<Elim> = Vec::new();
    // Equalities: substitute away unit-coefficient variables.
    while let Some(e) = eqs.pop() {
        if e.c.is_empty() {
            if !e.k.is_zero() {
                return Fm::Unsat;
            }
            continue;
        }
        let g = gcd_all(e.c.values());
        if !(&e.k % &g).is_zero() {
            return Fm::Unsat;
        }
        let e = Lin { c: e.c.iter().map(|(v, a)| (*v, a / &g)).collect(), k: &e.k / &g };
        let unit = e.c.iter().find(|(_, a)| a.abs().is_one()).map(|(v, a)| (*v, a.clone()));
        match unit {
            Some((v, a)) => {
                // a*v + rest = 0  =>  v = -rest / a
                let mut rest = e.clone();
                rest.c.remove(&v);
                let def = rest.scale(&-a);
                for x in eqs.iter_mut() {
                    *x = x.subst(v, &def);
                }
                for x in les.iter_mut() {
                    *x = x.subst(v, &def);
                }
                elims.push(Elim::Def(v, def));
            }
            None => {
                les.push(e.clone());
                les.push(e.scale(&-BigInt::one()));
            }
        }
    }
    let mut set: Vec<Ineq> = Vec::new();
    for l in &les {
        match norm_ineq(l) {
            Norm::True => {}
            Norm::False => return Fm::Unsat,
            Norm::Keep(i) => set.push(i),
        }
    }
    set = dedupe(set);
    loop {
        let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for i in &set {
            for (v, a) in &i.c {
                let e = counts.entry(*v).or_insert((0, 0));
                if a.is_positive() {
                    e.0 += 1
                } else {
                    e.1 += 1
                }
            }
        }
        let pick = counts.iter().min_by_key(|(_, (p, n))| (p * n, p + n)).map(|(v, _)| *v);
        let v = match pick {
            None => break,
            Some(v) => v,
        };
        let (with, without): (Vec<Ineq>, Vec<Ineq>) = set.into_iter().partition(|i| i.c.contains_key(&v));
        let (pos, negs): (Vec<&Ineq>, Vec<&Ineq>) = with.iter().partition(|i| i.c[&v].is_positive());
        let mut next = without;
        for p in &pos {
            for n in &negs {
                let a = p.c[&v].clone();
                let b = -n.c[&v].clone();
                let lp = Lin { c: p.c.clone(), k: p.k.clone() }.scale(&b);
                let ln = Lin { c: n.c.clone(), k: n.k.clone() }.scale(&a);
                match norm_ineq(&lp.add(&ln)) {
                    Norm::True => {}
                    Norm::False => return Fm::Unsat,
                    Norm::Keep(i) => next.push(i),
                }
            }
        }
        if next.len() > FM_LIMIT {
            return Fm::Unknown;
        }
        elims.push(Elim::Bounds(v, with));
        set = dedupe(next);
    }
    Fm::Sat(build_model(&elims))
}

fn dedupe(set: Vec<Ineq>) -> Vec<Ineq> {
    let mut best: BTreeMap<Vec<(usize, BigInt)>, BigInt> = BTreeMap::new();
    for i in set {
        let key: Vec<(usize, BigInt)> = i.c.into_iter().collect();
        let e = best.entry(key).or_insert_with(|| i.k.clone());
        if i.k > *e {
            *e = i.k;
        }
    }
    best.into_iter().map(|(c, k)| Ineq { c: c.into_iter().collect(), k }).collect()
}

fn build_model(elims: &[Elim]) -> Option<HashMap<usize, BigInt>> {
    let mut m: HashMap<usize, BigInt> = HashMap::new();
    for e in elims.iter().rev() {
        match e {
            Elim::Def(v, l) => {
                let val = l.eval(&m);
                m.insert(*v, val);
            }
            Elim::Bounds(v, cons) => {
                let mut lo: Option<BigInt> = None;
                let mut hi: Option<BigInt> = None;
                for i in cons {
                    let a = &i.c[v];
                    let mut rest = Lin { c: i.c.clone(), k: i.k.clone() };
                    rest.c.remove(v);
                    let r = rest.eval(&m);
                    if a.is_positive() {
                        // a*v + r <= 0  =>  v <= floor(-r / a)
                        let b = Integer::div_floor(&-r, a);
                        hi = Some(match hi {
                            Some(h) if h < b => h,
                            _ => b,
                        });
                    } else {
                        let aa = -a;
                        let b = Integer::div_ceil(&r, &aa);
                        lo = Some(match lo {
                            Some(l) if l > b => l,
                            _ => b,
                        });
                    }
                }
                let val = match (lo, hi) {
                    (Some(l), Some(h)) => {
                        if l > h {
                            return None;
                        }
                        if l > BigInt::zero() {
                            l
                        } else if h < BigInt::zero() {
                            h
                        } else {
                            BigInt::zero()
                        }
                    }
                    (Some(l), None) => l.max(BigInt::zero()),
                    (None, Some(h)) => h.min(BigInt::zero()),
                    (None, None) => BigInt::zero(),
                };
                m.insert(*v, val);
            }
        }
    }
    Some(m)
}

/// Adds disequalities by case splitting on violated ones.
fn fm_ne(eqs: &[Lin], les: &[Lin], nes: &[Lin], depth: usize) -> Fm {
    match fm(eqs, les) {
        Fm::Unsat => Fm::Unsat,
        Fm::Unknown => Fm::Unknown,
        Fm::Sat(model) => {
            let violated = match &model {
                Some(m) => nes.iter().position(|l| l.eval(m).is_zero()),
                None => {
                    if nes.is_empty() {
                        None
                    } else {
                        Some(0)
                    }
                }
            };
            let i = match violated {
                None => return Fm::Sat(model),
                Some(i) => i,
            };
            if depth > 12 {
                return Fm::Unknown;
            }
            let l = &nes[i];
            let rest: Vec<Lin> = nes.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| x.clone()).collect();
            let one = Lin::konst(BigInt::one());
            let mut a = les.to_vec();
            a.push(l.add(&one));
            let mut b = les.to_vec();
            b.push(l.scale(&-BigInt::one()).add(&one));
            let ra = fm_ne(eqs, &a, &rest, depth + 1);
            if let Fm::Sat(_) = ra {
                return ra;
            }
            let rb = fm_ne(eqs, &b, &rest, depth + 1);
            match (ra, rb) {
                (_, s @ Fm::Sat(_)) => s,
                (Fm::Unsat, Fm::Unsat) => Fm::Unsat,
                _ => Fm::Unknown,
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Leaf theory check: booleans, data equalities with measures, integers

#[derive(Clone, Debug, Default)]
struct Model {
    ints: HashMap<usize, BigInt>,
    bools: HashMap<usize, bool>,
    data: HashMap<usize, Term>,
}

enum Leaf {
    Unsat,
    Sat(Option<Model>),
    Unknown,
}

#[derive(Clone, Debug)]
enum NodeArg {
    Int(Lin),
    Data(usize),
}

struct Uf {
    parent: Vec<usize>,
    label: Vec<Option<(Ctor, Vec<NodeArg>)>>,
    sort: Vec<Sort>,
}

impl Uf {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let n = self.parent[c];
            self.parent[c] = r;
            c = n;
        }
        r
    }

    fn add(&mut self, label: Option<(Ctor, Vec<NodeArg>)>, sort: Sort) -> usize {
        self.parent.push(self.parent.len());
        self.label.push(label);
        self.sort.push(sort);
        self.parent.len() - 1
    }
}

struct LeafCtx<'a> {
    tr: &'a Tr<'a>,
    uf: Uf,
    var_node: HashMap<usize, usize>,
    eqs: Vec<Lin>,
    next_var: usize,
    class_measure: BTreeMap<(Measure, usize), usize>,
}

impl LeafCtx<'_> {
    fn node(&mut self, d: &DTerm) -> usize {
        match d {
            DTerm::Var(v) => {
                if let Some(n) = self.var_node.get(v) {
                    return *n;
                }
                let s = self.tr.vars[*v].sort;
                let n = self.uf.add(None, s);
                self.var_node.insert(*v, n);
                n
            }
            DTerm::Ctor(c, args) => {
                let mut na = Vec::new();
                for a in args {
                    na.push(match a {
                        DArg::Int(l) => NodeArg::Int(l.clone()),
                        DArg::Data(t) => NodeArg::Data(self.node(t)),
                    });
                }
                self.uf.add(Some((c.clone(), na)), sort_of_base(c.base()))
            }
        }
    }

    /// Returns false on a constructor clash.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let mut work = vec![(a, b)];
        while let Some((a, b)) = work.pop() {
            let (ra, rb) = (self.uf.find(a), self.uf.find(b));
            if ra == rb {
                continue;
            }
            let la = self.uf.label[ra].clone();
            let lb = self.uf.label[rb].clone();
            self.uf.parent[ra] = rb;
            match (la, lb) {
                (Some((c1, a1)), Some((c2, a2))) => {
                    if c1 != c2 {
                        return false;
                    }
                    for (x, y) in a1.iter().zip(a2.iter()) {
                        match (x, y) {
                            (NodeArg::Int(l1), NodeArg::Int(l2)) => self.eqs.push(l1.sub(l2)),
                            (NodeArg::Data(n1), NodeArg::Data(n2)) => work.push((*n1, *n2)),
                            _ => return false,
                        }
                    }
                }
                (Some(l), None) => self.uf.label[rb] = Some(l),
                _ => {}
            }
        }
        true
    }

    fn class_var(&mut self, m: Measure, rep: usize, work: &mut Vec<(Measure, usize)>) -> usize {
        if let Some(v) = self.class_measure.get(&(m, rep)) {
            return *v;
        }
        let v = self.next_var;
        self.next_var += 1;
        self.class_measure.insert((m, rep), v);
        work.push((m, rep));
        v
    }
}

impl<'a> Tr<'a> {
    fn check_leaf(&'a self, lits: &[&Lit]) -> Leaf {
        let mut bools: HashMap<usize, bool> = HashMap::new();
        for l in lits {
            if let Lit::B(v, b) = l {
                if let Some(old) = bools.insert(*v, *b) {
                    if old != *b {
                        return Leaf::Unsat;
                    }
                }
            }
        }
        let mut cx = LeafCtx {
            tr: self,
            uf: Uf { parent: Vec::new(), label: Vec::new(), sort: Vec::new() },
            var_node: HashMap::new(),
            eqs: Vec::new(),
            next_var: self.vars.len(),
            class_measure: BTreeMap::new(),
        };
        let mut les = Vec::new();
        let mut nes = Vec::new();
        let mut diseqs = Vec::new();
        for l in lits {
            match l {
                Lit::Le(x) => les.push(x.clone()),
                Lit::Eq(x) => cx.eqs.push(x.clone()),
                Lit::Ne(x) => nes.push(x.clone()),
                Lit::B(..) => {}
                Lit::DEq(a, b, true) => {
                    let (na, nb) = (cx.node(a), cx.node(b));
                    if !cx.union(na, nb) {
                        return Leaf::Unsat;
                    }
                }
                Lit::DEq(a, b, false) => {
                    let (na, nb) = (cx.node(a), cx.node(b));
                    diseqs.push((na, nb));
                }
            }
        }
        for (a, b) in &diseqs {
            if cx.uf.find(*a) == cx.uf.find(*b) {
                return Leaf::Unsat;
            }
        }
        // Measures: congruence by class plus constructor unfolding.
        let mut work = Vec::new();
        let ms: Vec<((Measure, usize), usize)> = self.measures.iter().map(|(k, v)| (*k, *v)).collect();
        for ((m, dv), iv) in ms {
            let n = cx.node(&DTerm::Var(dv));
            let rep = cx.uf.find(n);
            let cv = cx.class_var(m, rep, &mut work);
            cx.eqs.push(Lin::var(iv).sub(&Lin::var(cv)));
        }
        let mut guard = 0;
        while let Some((m, rep)) = work.pop() {
            guard += 1;
            if guard > 2000 {
                return Leaf::Unknown;
            }
            let cv = cx.class_measure[&(m, rep)];
            if m == Measure::Length {
                les.push(Lin::var(cv).scale(&-BigInt::one()));
            }
            let label = cx.uf.label[rep].clone();
            if let Some((c, args)) = label {
                match (m, &c) {
                    (Measure::Length, Ctor::Nil) => cx.eqs.push(Lin::var(cv)),
                    (Measure::Length, Ctor::Cons) => {
                        if let NodeArg::Data(t) = &args[1] {
                            let tr = cx.uf.find(*t);
                            let tv = cx.class_var(Measure::Length, tr, &mut work);
                            cx.eqs.push(Lin::var(cv).sub(&Lin::var(tv)).sub(&Lin::konst(BigInt::one())));
                        }
                    }
                    (Measure::Lower, Ctor::Empty | Ctor::Node) => {
                        if let NodeArg::Int(l) = &args[0] {
                            cx.eqs.push(Lin::var(cv).sub(l));
                        }
                    }
                    (Measure::Upper, Ctor::Empty | Ctor::Node) => {
                        if let NodeArg::Int(l) = &args[1] {
                            cx.eqs.push(Lin::var(cv).sub(l).add(&Lin::konst(BigInt::one())));
                        }
                    }
                    _ => {}
                }
            }
        }
        match fm_ne(&cx.eqs, &les, &nes, 0) {
            Fm::Unsat => Leaf::Unsat,
            Fm::Unknown => Leaf::Unknown,
            Fm::Sat(None) => Leaf::Sat(None),
            Fm::Sat(Some(ints)) => {
                let mut data = HashMap::new();
                let dvars: Vec<(usize, usize)> = cx.var_node.iter().map(|(v, n)| (*v, *n)).collect();
                for (v, n) in dvars {
                    if let Some(t) = build_data(&mut cx, n, &ints, 0) {
                        data.insert(v, t);
                    }
                }
                Leaf::Sat(Some(Model { ints, bools, data }))
            }
        }
    }
}

fn build_data(cx: &mut LeafCtx, n: usize, ints: &HashMap<usize, BigInt>, depth: usize) -> Option<Term> {
    if depth > 64 {
        return None;
    }
    let rep = cx.uf.find(n);
    let get = |cx: &LeafCtx, m: Measure| cx.class_measure.get(&(m, rep)).and_then(|v| ints.get(v)).cloned();
    match cx.uf.label[rep].clone() {
        Some((c, args)) => {
            let mut out = Vec::new();
            for a in &args {
                out.push(match a {
                    NodeArg::Int(l) => Term::int(l.eval(ints)),
                    NodeArg::Data(d) => build_data(cx, *d, ints, depth + 1)?,
                });
            }
            Some(Term::Ctor(c, out))
        }
        None => match cx.uf.sort[rep] {
            Sort::List => {
                let len = get(cx, Measure::Length).unwrap_or_default();
                let len = len.to_usize().filter(|l| *l <= 10_000)?;
                Some((0..len).fold(Term::Ctor(Ctor::Nil, vec![]), |acc, _| Term::Ctor(Ctor::Cons, vec![Term::int(0), acc])))
            }
            Sort::Tree => {
                let lo = get(cx, Measure::Lower).unwrap_or_default();
                let hi = get(cx, Measure::Upper).unwrap_or_else(|| &lo - 1);
                Some(Term::Ctor(Ctor::Empty, vec![Term::int(lo), Term::int(hi + 1)]))
            }
            Sort::Unit => Some(Term::unit()),
            _ => None,
        },
    }
}

// ---------------------------------------------------------------------------
// DNF search

#[derive(Default)]
struct Search {
    leaves: usize,
    models: Vec<Option<Model>>,
    unknown: bool,
    aborted: bool,
}

impl<'a> Tr<'a> {
    fn search(&'a self, mut stack: Vec<&'a F>, mut lits: Vec<&'a Lit>, st: &mut Search) {
        while let Some(f) = stack.pop() {
            match f {
                F::T => {}
                F::Fa => return,
                F::L(l) => {
                    if let Lit::B(v, b) = l {
                        if lits.iter().any(|x| matches!(x, Lit::B(w, c) if w == v && c != b)) {
                            return;
                        }
                    }
                    lits.push(l)
                }
                F::And(fs) => stack.extend(fs.iter()),
                F::Or(fs) => {
                    for g in fs {
                        let mut s2 = stack.clone();
                        s2.push(g);
                        self.search(s2, lits.clone(), st);
                        if st.aborted || st.models.len() >= 4 {
                            return;
                        }
                    }
                    return;
                }
            }
        }
        st.leaves += 1;
        if st.leaves > self.cfg.leaf_limit {
            st.aborted = true;
            return;
        }
        match self.check_leaf(&lits) {
            Leaf::Unsat => {}
            Leaf::Sat(m) => st.models.push(m),
            Leaf::Unknown => st.unknown = true,
        }
    }
}

// ---------------------------------------------------------------------------
// Replay

/// Checks a candidate refutation: every binding refinement and `p` evaluate to
/// true and `q` to false under the substitution.
fn replay_terms(bindings: &[(Name, Type)], hyps: &[Term], p: &Term, q: &Term, sigma: &[(Name, Term)]) -> bool {
    let close = |t: &Term| -> Option<Term> {
        let mut r = t.clone();
        for (x, v) in sigma.iter().rev() {
            r = subst_term(&r, x, v);
        }
        if free_vars(&r).is_empty() {
            Some(r)
        } else {
            None
        }
    };
    // Values must inhabit the shapes of their bindings.
    for (x, ty) in bindings {
        if let (Type::Base(_, b, _), Some(v)) = (ty, sigma.iter().find(|(n, _)| n == x).map(|(_, v)| v)) {
            match v {
                Term::Ctor(c, args) if c.base() == *b && args.len() == c.arity() => {}
                _ => return false,
            }
        }
    }
    const REPLAY_FUEL: u64 = 20_000;
    for h in hyps.iter().chain(std::iter::once(p)) {
        match close(h) {
            Some(c) if eval_bool(&c, REPLAY_FUEL) == Some(true) => {}
            _ => return false,
        }
    }
    match close(q) {
        Some(c) => eval_bool(&c, REPLAY_FUEL) == Some(false),
        None => false,
    }
}

/// Independent witness check against the original obligation.
pub fn replay(env: &Env, p: &Term, q: &Term, w: &Witness) -> bool {
    let flat = flatten_env(env);
    let mut hyps = Vec::new();
    for (x, t) in &flat {
        if let Type::Base(y, _, r) = t {
            hyps.push(subst_term(r, y, &Term::var(x)));
        }
    }
    let sigma: Vec<(Name, Term)> = flat
        .iter()
        .filter_map(|(x, _)| w.get(x).map(|v| (x.clone(), v.clone())))
        .collect();
    replay_terms(&flat, &hyps, p, q, &sigma)
}

// ---------------------------------------------------------------------------
// The oracle

struct Prepared {
    flat: Vec<(Name, Type)>,
    hyps: Vec<Term>,
    p: Term,
    q: Term,
    /// Extra variables introduced by skolemization.
    skolems: Vec<(Name, Type)>,
}

fn relevant_bindings(flat: &[(Name, Type)], p: &Term, q: &Term) -> Vec<bool> {
    let mut reach: BTreeSet<Name> = free_vars(p);
    reach.extend(free_vars(q));
    let fvs: Vec<BTreeSet<Name>> = flat.iter().map(|(_, t)| free_vars_type(t)).collect();
    let mut keep = vec![false; flat.len()];
    loop {
        let mut changed = false;
        for (i, (x, t)) in flat.iter().enumerate() {
            if keep[i] {
                continue;
            }
            let trivial = matches!(t, Type::Base(_, _, r) if r.is_true()) || matches!(t, Type::Arrow(..));
            let hit = reach.contains(x) || (!trivial && fvs[i].iter().any(|v| reach.contains(v)));
            if hit {
                keep[i] = true;
                reach.insert(x.clone());
                reach.extend(fvs[i].iter().cloned());
                changed = true;
            }
        }
        if !changed {
            return keep;
        }
    }
}

fn conjunct_subset(p: &Term, q: &Term) -> bool {
    let cp: Vec<Term> = conjuncts(p).iter().map(canonical_term).collect();
    conjuncts(q).iter().all(|c| {
        let c = canonical_term(c);
        cp.contains(&c)
    })
}

fn collect_int_consts(t: &Term, out: &mut BTreeSet<BigInt>) {
    visit_term(t, &mut |_| {}, &mut |e| {
        if let Some(n) = e.as_int() {
            out.insert(n.clone());
        }
    });
}

impl Prover {
    pub fn new(config: ProverConfig) -> Prover {
        Prover { config }
    }

    /// Decides `env ⊢ p ⇒ q`.
    pub fn implies(&self, env: &Env, p: &Term, q: &Term) -> (Certainty, Option<Witness>) {
        if q.is_true() || p.is_false() || alpha_eq(p, q) || conjunct_subset(p, q) {
            return (Certainty::Yes, None);
        }
        let (pf, qf) = (fold_constants(p), fold_constants(q));
        if alpha_eq(&pf, &qf) || conjunct_subset(&pf, &qf) {
            return (Certainty::Yes, None);
        }
        if !self.config.enabled {
            return (Certainty::Maybe, None);
        }
        let res = self.decide(env, p, q, true);
        if res.0 == Certainty::No && res.2 {
            // A dropped binding may have an empty type, which makes the implication vacuous.
            let full = self.decide(env, p, q, false);
            return (full.0, full.1);
        }
        (res.0, res.1)
    }

    /// The verdict, its witness, and whether the relevance filter dropped any binding.
    fn decide(&self, env: &Env, p: &Term, q: &Term, filter: bool) -> (Certainty, Option<Witness>, bool) {
        let mut tr = Tr::new(&self.config);
        let flat_all = flatten_env(env);
        let keep = if filter { relevant_bindings(&flat_all, p, q) } else { vec![true; flat_all.len()] };
        let dropped = keep.iter().any(|k| !k);
        let flat: Vec<(Name, Type)> = flat_all.into_iter().zip(keep).filter(|(_, k)| *k).map(|(b, _)| b).collect();
        for (x, t) in &flat {
            tr.declare(x, t);
            if matches!(t, Type::Dynamic | Type::Var(..)) || t.has_dynamic() {
                tr.tainted = true;
            }
        }
        let skolem_start = tr.sorts.clone();
        let pins = pinned_bindings(&flat);
        let mut hyps = Vec::new();
        for (x, t) in &flat {
            if let Type::Base(y, _, r) = t {
                if !r.is_true() {
                    // a binding's own equation is kept so the model still assigns it
                    let h = unpin(&pins, &subst_term(r, y, &Term::var(x)), Some(x));
                    hyps.push(tr.skolemize(&fold_constants(&h), true));
                }
            }
        }
        let p2 = tr.skolemize(&fold_constants(&unpin(&pins, p, None)), true);
        let q2 = tr.skolemize(&fold_constants(&unpin(&pins, q, None)), false);
        let skolems: Vec<(Name, Type)> = tr
            .sorts
            .iter()
            .filter(|(n, _)| !skolem_start.contains_key(*n))
            .map(|(n, s)| (n.clone(), sort_type(*s)))
            .collect();
        let prep = Prepared { flat, hyps, p: p2, q: q2, skolems };

        let mut ante = Vec::new();
        for h in &prep.hyps {
            ante.push(tr.form(h));
        }
        ante.push(tr.form(&prep.p));
        let touched_ante = std::mem::take(&mut tr.touched);
        let fq = tr.form(&prep.q);
        let touched_q = std::mem::take(&mut tr.touched);
        let q_only_partial = touched_q.iter().any(|a| tr.partial_atoms.contains(a) && !touched_ante.contains(a));

        if let Some(dir) = &self.config.smtlib_dir {
            let script = smtlib_script(&tr, &ante, &fq);
            let _ = write_smtlib(dir, &script);
        }

        let mut all = ante.clone();
        all.extend(tr.side.iter().cloned());
        all.push(neg(&fq));
        let root = F::And(all);
        let mut st = Search::default();
        tr.search(vec![&root], Vec::new(), &mut st);

        if st.models.is_empty() && !st.unknown && !st.aborted {
            if q_only_partial {
                return (Certainty::Maybe, None, dropped);
            }
            return (Certainty::Yes, None, dropped);
        }
        if tr.tainted {
            return (Certainty::Maybe, None, dropped);
        }
        for m in st.models.iter().flatten() {
            if let Some(w) = self.witness_from_model(&tr, &prep, m) {
                return (Certainty::No, Some(w), dropped);
            }
        }
        if let Some(w) = self.testing(&prep) {
            return (Certainty::No, Some(w), dropped);
        }
        (Certainty::Maybe, None, dropped)
    }

    fn witness_from_model(&self, tr: &Tr, prep: &Prepared, m: &Model) -> Option<Witness> {
        let mut sigma = Vec::new();
        for (x, t) in prep.flat.iter().chain(prep.skolems.iter()) {
            let s = sort_of_type(t);
            let v = match s {
                Sort::Int => {
                    let id = tr.by_name.get(&(x.clone(), Sort::Int));
                    Term::int(id.and_then(|i| m.ints.get(i)).cloned().unwrap_or_default())
                }
                Sort::Bool => {
                    let id = tr.by_name.get(&(x.clone(), Sort::Bool));
                    Term::bool(id.and_then(|i| m.bools.get(i)).copied().unwrap_or(false))
                }
                Sort::Unit => Term::unit(),
                Sort::List | Sort::Tree => {
                    let id = tr.by_name.get(&(x.clone(), s));
                    match id.and_then(|i| m.data.get(i)) {
                        Some(t) => t.clone(),
                        None => {
                            // Only measures constrain it; build from them.
                            let mv = |me: Measure| {
                                id.and_then(|i| tr.measures.get(&(me, *i))).and_then(|v| m.ints.get(v)).cloned()
                            };
                            if s == Sort::List {
                                let l = mv(Measure::Length).unwrap_or_default().to_usize()?;
                                (0..l).fold(Term::Ctor(Ctor::Nil, vec![]), |acc, _| {
                                    Term::Ctor(Ctor::Cons, vec![Term::int(0), acc])
                                })
                            } else {
                                let lo = mv(Measure::Lower).unwrap_or_default();
                                let hi = mv(Measure::Upper).unwrap_or_else(|| &lo - 1);
                                Term::Ctor(Ctor::Empty, vec![Term::int(lo), Term::int(hi + 1)])
                            }
                        }
                    }
                }
                Sort::Fun | Sort::Opaque => continue,
            };
            sigma.push((x.clone(), v));
        }
        let bindings: Vec<(Name, Type)> = prep.flat.iter().chain(prep.skolems.iter()).cloned().collect();
        if replay_terms(&bindings, &prep.hyps, &prep.p, &prep.q, &sigma) {
            Some(self.report(prep, sigma))
        } else {
            None
        }
    }

    fn report(&self, prep: &Prepared, sigma: Vec<(Name, Term)>) -> Witness {
        let shown: BTreeSet<&Name> = prep.flat.iter().map(|(n, _)| n).collect();
        Witness { bindings: sigma.into_iter().filter(|(n, _)| shown.contains(n)).collect() }
    }

    /// Bounded enumeration of small values for the free variables.
    fn testing(&self, prep: &Prepared) -> Option<Witness> {
        let vars: Vec<(Name, Sort)> = prep
            .flat
            .iter()
            .chain(prep.skolems.iter())
            .map(|(n, t)| (n.clone(), sort_of_type(t)))
            .filter(|(_, s)| !matches!(s, Sort::Fun | Sort::Opaque))
            .collect();
        if vars.len() > 6 {
            return None;
        }
        let mut consts = BTreeSet::new();
        for h in prep.hyps.iter().chain([&prep.p, &prep.q]) {
            collect_int_consts(h, &mut consts);
        }
        let mut ints: Vec<BigInt> = [0, 1, -1, 2, -2, 3, -3].iter().map(|n| BigInt::from(*n)).collect();
        for c in &consts {
            for d in [c - 1, c.clone(), c + 1] {
                if !ints.contains(&d) {
                    ints.push(d);
                }
            }
        }
        let list = |n: usize| (0..n).fold(Term::Ctor(Ctor::Nil, vec![]), |acc, _| Term::Ctor(Ctor::Cons, vec![Term::int(0), acc]));
        let tree = |a: i64, b: i64| Term::Ctor(Ctor::Empty, vec![Term::int(a), Term::int(b)]);
        let cands: Vec<Vec<Term>> = vars
            .iter()
            .map(|(_, s)| match s {
                Sort::Int => ints.iter().map(|n| Term::int(n.clone())).collect(),
                Sort::Bool => vec![Term::ff(), Term::tt()],
                Sort::Unit => vec![Term::unit()],
                Sort::List => (0..5).map(list).collect(),
                _ => vec![tree(0, 0), tree(0, 1), tree(0, 10), tree(1, 0), tree(-1, 1)],
            })
            .collect();
        // Shrink candidate lists until the product fits the budget.
        let mut caps: Vec<usize> = cands.iter().map(|c| c.len()).collect();
        loop {
            let total: f64 = caps.iter().map(|c| *c as f64).product();
            if total <= self.config.testing_budget as f64 {
                break;
            }
            let (i, _) = caps.iter().enumerate().max_by_key(|(_, c)| **c)?;
            if caps[i] <= 2 {
                return None;
            }
            caps[i] -= 1;
        }
        let bindings: Vec<(Name, Type)> = prep.flat.iter().chain(prep.skolems.iter()).cloned().collect();
        let mut idx = vec![0usize; vars.len()];
        loop {
            let sigma: Vec<(Name, Term)> =
                vars.iter().zip(&idx).enumerate().map(|(k, ((n, _), i))| (n.clone(), cands[k][*i].clone())).collect();
            if replay_terms(&bindings, &prep.hyps, &prep.p, &prep.q, &sigma) {
                return Some(self.report(prep, sigma));
            }
            // odometer
            let mut k = 0;
            loop {
                if k == idx.len() {
                    return None;
                }
                idx[k] += 1;
                if idx[k] < caps[k] {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }
}

fn sort_type(s: Sort) -> Type {
    match s {
        Sort::Int => Type::int(),
        Sort::Bool => Type::bool(),
        Sort::Unit => Type::base(BaseTy::Unit),
        Sort::List => Type::base(BaseTy::IntList),
        Sort::Tree => Type::base(BaseTy::Bst),
        Sort::Fun => Type::fun(Type::Dynamic, Type::Dynamic),
        Sort::Opaque => Type::Dynamic,
    }
}

// ---------------------------------------------------------------------------
// SMT-LIB export

fn smt_lin(l: &Lin) -> String {
    let mut parts: Vec<String> = l.c.iter().map(|(v, a)| format!("(* {} v{})", smt_int(a), v)).collect();
    if !l.k.is_zero() || parts.is_empty() {
        parts.push(smt_int(&l.k));
    }
    if parts.len() == 1 {
        parts.pop().unwrap()
    } else {
        format!("(+ {})", parts.join(" "))
    }
}

fn smt_int(n: &BigInt) -> String {
    if n.is_negative() {
        format!("(- {})", -n)
    } else {
        n.to_string()
    }
}

fn smt_data(d: &DTerm) -> String {
    match d {
        DTerm::Var(v) => format!("d{v}"),
        DTerm::Ctor(c, args) => {
            if args.is_empty() {
                return c.name();
            }
            let a: Vec<String> = args
                .iter()
                .map(|a| match a {
                    DArg::Int(l) => smt_lin(l),
                    DArg::Data(t) => smt_data(t),
                })
                .collect();
            format!("({} {})", c.name(), a.join(" "))
        }
    }
}

fn smt_f(f: &F) -> String {
    match f {
        F::T => "true".into(),
        F::Fa => "false".into(),
        F::And(fs) if fs.is_empty() => "true".into(),
        F::Or(fs) if fs.is_empty() => "false".into(),
        F::And(fs) => format!("(and {})", fs.iter().map(smt_f).collect::<Vec<_>>().join(" ")),
        F::Or(fs) => format!("(or {})", fs.iter().map(smt_f).collect::<Vec<_>>().join(" ")),
        F::L(l) => match l {
            Lit::Le(x) => format!("(<= {} 0)", smt_lin(x)),
            Lit::Eq(x) => format!("(= {} 0)", smt_lin(x)),
            Lit::Ne(x) => format!("(not (= {} 0))", smt_lin(x)),
            Lit::B(v, true) => format!("b{v}"),
            Lit::B(v, false) => format!("(not b{v})"),
            Lit::DEq(a, b, true) => format!("(= {} {})", smt_data(a), smt_data(b)),
            Lit::DEq(a, b, false) => format!("(not (= {} {}))", smt_data(a), smt_data(b)),
        },
    }
}

fn smtlib_script(tr: &Tr, ante: &[F], q: &F) -> String {
    let mut s = String::from("(set-logic ALL)\n");
    s.push_str("(declare-datatypes ((IntList 0) (BST 0)) (((nil) (cons (hd Int) (tl IntList))) ((empty (elo Int) (ehi Int)) (node (nlo Int) (nhi Int) (nv Int) (nl BST) (nr BST)))))\n");
    for (i, v) in tr.vars.iter().enumerate() {
        match v.sort {
            Sort::Bool => s.push_str(&format!("(declare-const b{i} Bool)\n")),
            Sort::List => s.push_str(&format!("(declare-const d{i} IntList)\n")),
            Sort::Tree => s.push_str(&format!("(declare-const d{i} BST)\n")),
            _ => s.push_str(&format!("(declare-const v{i} Int)\n")),
        }
    }
    for f in &tr.side {
        s.push_str(&format!("(assert {})\n", smt_f(f)));
    }
    let (hyps, p) = ante.split_at(ante.len() - 1);
    for h in hyps {
        s.push_str(&format!("(assert {})\n", smt_f(h)));
    }
    s.push_str(&format!("(assert (not (=> {} {})))\n(check-sat)\n", smt_f(&p[0]), smt_f(q)));
    s
}

fn write_smtlib(dir: &std::path::Path, script: &str) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let hash = hex::encode(Sha256::digest(script.as_bytes()));
    let path = dir.join(format!("{hash}.smt2"));
    std::fs::write(&path, script)?;
    Ok(path)
}
