//! Random linear formulas, a brute-force oracle over small boxes, and a
//! generator of well-typed refinement programs. Shared by the property suites
//! and the CLI acceptance run.
#![allow(dead_code)]

use hytc::ast::{Ctor, Env, Name, Prim, Term, Type};
use hytc::surface::{parse_term, parse_type, ParseOptions};
use num_traits::ToPrimitive;
use rand::Rng;
use std::collections::HashMap;

pub const VARS: [&str; 3] = ["x", "y", "z"];

/// `sum coeffs[i] * var_i + k`
#[derive(Clone, Debug)]
pub struct Lin {
    pub coeffs: Vec<i64>,
    pub k: i64,
}

#[derive(Clone, Debug)]
pub enum F {
    Le(Lin, Lin),
    Lt(Lin, Lin),
    Eq(Lin, Lin),
    And(Box<F>, Box<F>),
    Or(Box<F>, Box<F>),
    Not(Box<F>),
}

impl Lin {
    pub fn eval(&self, vals: &[i64]) -> i64 {
        self.coeffs.iter().zip(vals).map(|(c, v)| c * v).sum::<i64>() + self.k
    }

    pub fn render(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        for (c, v) in self.coeffs.iter().zip(VARS) {
            match *c {
                0 => {}
                1 => parts.push(v.to_string()),
                c if c < 0 => parts.push(format!("(0 - {}) * {v}", -c)),
                c => parts.push(format!("{c} * {v}")),
            }
        }
        if self.k != 0 || parts.is_empty() {
            parts.push(if self.k < 0 { format!("(0 - {})", -self.k) } else { self.k.to_string() });
        }
        parts.join(" + ")
    }
}

impl F {
    pub fn eval(&self, vals: &[i64]) -> bool {
        match self {
            F::Le(a, b) => a.eval(vals) <= b.eval(vals),
            F::Lt(a, b) => a.eval(vals) < b.eval(vals),
            F::Eq(a, b) => a.eval(vals) == b.eval(vals),
            F::And(a, b) => a.eval(vals) && b.eval(vals),
            F::Or(a, b) => a.eval(vals) || b.eval(vals),
            F::Not(a) => !a.eval(vals),
        }
    }

    pub fn render(&self) -> String {
        match self {
            F::Le(a, b) => format!("({} <= {})", a.render(), b.render()),
            F::Lt(a, b) => format!("({} < {})", a.render(), b.render()),
            F::Eq(a, b) => format!("({} = {})", a.render(), b.render()),
            F::And(a, b) => format!("({} && {})", a.render(), b.render()),
            F::Or(a, b) => format!("({} || {})", a.render(), b.render()),
            F::Not(a) => format!("(not {})", a.render()),
        }
    }

    pub fn uses(&self, i: usize) -> bool {
        match self {
            F::Le(a, b) | F::Lt(a, b) | F::Eq(a, b) => a.coeffs[i] != 0 || b.coeffs[i] != 0,
            F::And(a, b) | F::Or(a, b) => a.uses(i) || b.uses(i),
            F::Not(a) => a.uses(i),
        }
    }
}

/// A linear term over the first `live` variables (others get coefficient 0).
pub fn gen_lin(rng: &mut impl Rng, n: usize, live: usize) -> Lin {
    let mut coeffs = vec![0; n];
    for c in coeffs.iter_mut().take(live) {
        if rng.gen_bool(0.6) {
            *c = rng.gen_range(-3..=3);
        }
    }
    Lin { coeffs, k: rng.gen_range(-6..=6) }
}

fn gen_atom(rng: &mut impl Rng, n: usize, live: usize) -> F {
    let (a, b) = (gen_lin(rng, n, live), gen_lin(rng, n, live));
    match rng.gen_range(0..3) {
        0 => F::Le(a, b),
        1 => F::Lt(a, b),
        _ => F::Eq(a, b),
    }
}

pub fn gen_formula(rng: &mut impl Rng, n: usize, live: usize, depth: u32) -> F {
    if depth == 0 || rng.gen_bool(0.45) {
        return gen_atom(rng, n, live);
    }
    match rng.gen_range(0..4) {
        0 | 1 => F::And(Box::new(gen_formula(rng, n, live, depth - 1)), Box::new(gen_formula(rng, n, live, depth - 1))),
        2 => F::Or(Box::new(gen_formula(rng, n, live, depth - 1)), Box::new(gen_formula(rng, n, live, depth - 1))),
        _ => F::Not(Box::new(gen_formula(rng, n, live, depth - 1))),
    }
}

/// `x1:{x1:Int | r1}, ..., xn:{xn:Int | rn} ⊢ p ⇒ q`, each refinement over earlier variables and itself.
#[derive(Clone, Debug)]
pub struct Obligation {
    pub n: usize,
    pub refinements: Vec<Option<F>>,
    pub p: F,
    pub q: F,
}

pub fn gen_obligation(rng: &mut impl Rng) -> Obligation {
    let n = rng.gen_range(1..=3);
    let refinements = (0..n).map(|i| rng.gen_bool(0.4).then(|| gen_formula(rng, n, i + 1, 1))).collect();
    let p = gen_formula(rng, n, n, 2);
    let q = gen_formula(rng, n, n, 2);
    Obligation { n, refinements, p, q }
}

pub fn opts() -> ParseOptions {
    ParseOptions { allow_exists: true }
}

impl Obligation {
    pub fn scope(&self) -> Vec<Name> {
        VARS[..self.n].iter().map(|s| s.to_string()).collect()
    }

    pub fn env(&self) -> Env {
        let mut env = Env::new();
        for (i, r) in self.refinements.iter().enumerate() {
            let v = VARS[i];
            let ty = match r {
                Some(f) => format!("{{{v}:Int | {}}}", f.render()),
                None => "Int".to_string(),
            };
            let scope: Vec<Name> = VARS[..i].iter().map(|s| s.to_string()).collect();
            env.push(v, parse_type(&ty, &scope, opts()).expect("generated type parses"));
        }
        env
    }

    pub fn terms(&self) -> (Term, Term) {
        let s = self.scope();
        (
            parse_term(&self.p.render(), &s, opts()).expect("generated formula parses"),
            parse_term(&self.q.render(), &s, opts()).expect("generated formula parses"),
        )
    }

    fn hyps(&self, vals: &[i64]) -> bool {
        self.refinements.iter().all(|r| r.as_ref().is_none_or(|f| f.eval(vals)))
    }

    /// A point of `[-r, r]^n` satisfying the environment and `p` but not `q`.
    pub fn counterexample(&self, r: i64) -> Option<Vec<i64>> {
        let mut vals = vec![-r; self.n];
        loop {
            if self.hyps(&vals) && self.p.eval(&vals) && !self.q.eval(&vals) {
                return Some(vals);
            }
            let mut i = 0;
            loop {
                if i == self.n {
                    return None;
                }
                if vals[i] < r {
                    vals[i] += 1;
                    break;
                }
                vals[i] = -r;
                i += 1;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Term oracle: evaluates integer/boolean predicates directly, existentials by
// enumeration over a box.

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum V {
    I(i64),
    B(bool),
}

pub fn oracle(t: &Term, env: &HashMap<Name, i64>, r: i64) -> Option<V> {
    match t {
        Term::Var(x) => env.get(x).map(|v| V::I(*v)),
        Term::Ctor(Ctor::Int(n), _) => n.to_i64().map(V::I),
        Term::Ctor(Ctor::Bool(b), _) => Some(V::B(*b)),
        Term::Exists(x, ty, body) => {
            let (y, p) = match &**ty {
                Type::Base(y, _, p) => (y.clone(), (**p).clone()),
                _ => return None,
            };
            for v in -r..=r {
                let mut e2 = env.clone();
                e2.insert(y.clone(), v);
                if oracle(&p, &e2, r)? != V::B(true) {
                    continue;
                }
                let mut e3 = env.clone();
                e3.insert(x.clone(), v);
                if oracle(body, &e3, r)? == V::B(true) {
                    return Some(V::B(true));
                }
            }
            Some(V::B(false))
        }
        Term::POr(a, b, _) => Some(V::B(oracle(a, env, r)? == V::B(true) || oracle(b, env, r)? == V::B(true))),
        Term::PAnd(a, b, _) => Some(V::B(oracle(a, env, r)? == V::B(true) && oracle(b, env, r)? == V::B(true))),
        Term::App(..) => {
            let (h, args) = t.spine();
            let Term::Prim(p) = h else { return None };
            let vs: Option<Vec<V>> = args.iter().map(|a| oracle(a, env, r)).collect();
            let vs = vs?;
            Some(match (p, vs.as_slice()) {
                (Prim::Add, [V::I(a), V::I(b)]) => V::I(a.checked_add(*b)?),
                (Prim::Sub, [V::I(a), V::I(b)]) => V::I(a.checked_sub(*b)?),
                (Prim::Mul, [V::I(a), V::I(b)]) => V::I(a.checked_mul(*b)?),
                (Prim::Le, [V::I(a), V::I(b)]) => V::B(a <= b),
                (Prim::Lt, [V::I(a), V::I(b)]) => V::B(a < b),
                (Prim::Eq, [a, b]) => V::B(a == b),
                (Prim::And, [V::B(a), V::B(b)]) => V::B(*a && *b),
                (Prim::Or, [V::B(a), V::B(b)]) => V::B(*a || *b),
                (Prim::Imp, [V::B(a), V::B(b)]) => V::B(!*a || *b),
                (Prim::Not, [V::B(a)]) => V::B(!*a),
                _ => return None,
            })
        }
        _ => None,
    }
}

/// Whether `env ⊢ p ⇒ q` holds for every assignment of `[-r, r]` to the environment.
pub fn valid_in_box(env: &Env, p: &Term, q: &Term, r: i64) -> Option<bool> {
    let entries = env.entries();
    let mut vals = vec![-r; entries.len()];
    loop {
        let mut m = HashMap::new();
        let mut hyps = true;
        for ((x, t), v) in entries.iter().zip(&vals) {
            m.insert(x.clone(), *v);
            if let Type::Base(y, _, rf) = t {
                let mut m2 = m.clone();
                m2.insert(y.clone(), *v);
                if oracle(rf, &m2, r)? != V::B(true) {
                    hyps = false;
                }
            }
        }
        if hyps && oracle(p, &m, r)? == V::B(true) && oracle(q, &m, r)? != V::B(true) {
            return Some(false);
        }
        let mut i = 0;
        loop {
            if i == vals.len() {
                return Some(true);
            }
            if vals[i] < r {
                vals[i] += 1;
                break;
            }
            vals[i] = -r;
            i += 1;
        }
    }
}

// ---------------------------------------------------------------------------
// Well-typed program fuzzer. Every function takes `x:{x:Int | A <= x}` and
// maybe `y:Int`; declared results come from interval analysis, so they hold.

#[derive(Clone, Copy, Debug)]
struct Iv(Option<i64>, Option<i64>);

impl Iv {
    fn add(self, o: Iv) -> Iv {
        Iv(self.0.zip(o.0).map(|(a, b)| a + b), self.1.zip(o.1).map(|(a, b)| a + b))
    }
    fn neg(self) -> Iv {
        Iv(self.1.map(|b| -b), self.0.map(|a| -a))
    }
    fn scale(self, k: i64) -> Iv {
        if k >= 0 {
            Iv(self.0.map(|a| a * k), self.1.map(|b| b * k))
        } else {
            self.neg().scale(-k)
        }
    }
    fn join(self, o: Iv) -> Iv {
        Iv(self.0.zip(o.0).map(|(a, b)| a.min(b)), self.1.zip(o.1).map(|(a, b)| a.max(b)))
    }
}

struct Fun {
    name: String,
    lower: i64,
    two: bool,
    result: Iv,
}

#[derive(Clone, Debug)]
pub struct FuzzProgram {
    pub text: String,
    /// Lower bound on the entry point's first argument.
    pub lower: i64,
    /// Whether the entry point takes a second, unrefined argument.
    pub two: bool,
}

impl FuzzProgram {
    /// Random arguments satisfying the entry point's domain.
    pub fn inputs(&self, rng: &mut impl Rng) -> Vec<i64> {
        let mut v = vec![self.lower + rng.gen_range(0..=15)];
        if self.two {
            v.push(rng.gen_range(-15..=15));
        }
        v
    }
}

struct Gen<'a, R: Rng> {
    rng: &'a mut R,
    funs: Vec<Fun>,
    fresh: usize,
}

impl<R: Rng> Gen<'_, R> {
    fn expr(&mut self, depth: u32, vars: &[(String, Iv)]) -> (String, Iv) {
        let pick = if depth == 0 { self.rng.gen_range(0..2) } else { self.rng.gen_range(0..9) };
        match pick {
            0 => {
                let (v, iv) = &vars[self.rng.gen_range(0..vars.len())];
                (v.clone(), *iv)
            }
            1 => {
                let k = self.rng.gen_range(-5..=5);
                (lit(k), Iv(Some(k), Some(k)))
            }
            2 => {
                let (a, ia) = self.expr(depth - 1, vars);
                let (b, ib) = self.expr(depth - 1, vars);
                (format!("({a} + {b})"), ia.add(ib))
            }
            3 => {
                let (a, ia) = self.expr(depth - 1, vars);
                let (b, ib) = self.expr(depth - 1, vars);
                (format!("({a} - {b})"), ia.add(ib.neg()))
            }
            4 => {
                let k = self.rng.gen_range(-3..=3);
                let (a, ia) = self.expr(depth - 1, vars);
                (format!("({} * {a})", lit(k)), ia.scale(k))
            }
            5 | 6 => {
                let (c1, _) = self.expr(depth - 1, vars);
                let (c2, _) = self.expr(depth - 1, vars);
                let op = if self.rng.gen_bool(0.5) { "<" } else { "<=" };
                let (a, ia) = self.expr(depth - 1, vars);
                let (b, ib) = self.expr(depth - 1, vars);
                (format!("(if {c1} {op} {c2} then {a} else {b})"), ia.join(ib))
            }
            7 => {
                self.fresh += 1;
                let v = format!("t{}", self.fresh);
                let (a, ia) = self.expr(depth - 1, vars);
                let mut inner = vars.to_vec();
                inner.push((v.clone(), ia));
                let (b, ib) = self.expr(depth - 1, &inner);
                (format!("(let {v} = {a} in {b})"), ib)
            }
            _ => {
                if self.funs.is_empty() {
                    return self.expr(depth - 1, vars);
                }
                let j = self.rng.gen_range(0..self.funs.len());
                let (lower, two, result, name) =
                    (self.funs[j].lower, self.funs[j].two, self.funs[j].result, self.funs[j].name.clone());
                let mut arg = None;
                for _ in 0..3 {
                    let (a, ia) = self.expr(depth - 1, vars);
                    if ia.0.is_some_and(|l| l >= lower) {
                        arg = Some(a);
                        break;
                    }
                }
                let arg = arg.unwrap_or_else(|| lit(lower + self.rng.gen_range(0..3)));
                let call = if two {
                    let (b, _) = self.expr(depth - 1, vars);
                    format!("({name} {arg} {b})")
                } else {
                    format!("({name} {arg})")
                };
                (call, result)
            }
        }
    }
}

fn lit(k: i64) -> String {
    if k < 0 {
        format!("(0 - {})", -k)
    } else {
        k.to_string()
    }
}

fn refinement(iv: Iv) -> String {
    match iv {
        Iv(Some(l), Some(h)) => format!("{{r:Int | {} <= r && r <= {}}}", lit(l), lit(h)),
        Iv(Some(l), None) => format!("{{r:Int | {} <= r}}", lit(l)),
        Iv(None, Some(h)) => format!("{{r:Int | r <= {}}}", lit(h)),
        Iv(None, None) => "Int".to_string(),
    }
}

/// A program of 1 to 4 functions; the last one is `main`.
pub fn gen_program(rng: &mut impl Rng) -> FuzzProgram {
    let nfun = rng.gen_range(1..=4);
    let mut g = Gen { rng, funs: Vec::new(), fresh: 0 };
    let mut text = String::new();
    for i in 0..nfun {
        let lower = g.rng.gen_range(-4..=4);
        let two = g.rng.gen_bool(0.5);
        let mut vars = vec![("x".to_string(), Iv(Some(lower), None))];
        if two {
            vars.push(("y".to_string(), Iv(None, None)));
        }
        let depth = g.rng.gen_range(1..=3);
        let (body, iv) = g.expr(depth, &vars);
        let name = format!("f{i}");
        let params = if two {
            format!("(x:{{x:Int | {} <= x}}) (y:Int)", lit(lower))
        } else {
            format!("(x:{{x:Int | {} <= x}})", lit(lower))
        };
        // `+ 0` gives the body a fresh result type instead of a variable's own type
        text.push_str(&format!("let {name} {params} : {} = {body} + 0;\n", refinement(iv)));
        g.funs.push(Fun { name, lower, two, result: iv });
    }
    let last = g.funs.last().expect("at least one function");
    text.push_str(&last.name);
    FuzzProgram { text, lower: last.lower, two: last.two }
}

/// Same program with every declared result type replaced by `?`.
pub fn erase_results(text: &str) -> String {
    text.lines()
        .map(|l| match l.find(") : ") {
            Some(a) if l.starts_with("let ") => match l[a..].find(" = ") {
                Some(b) => format!("{}) : ?{}", &l[..a], &l[a + b..]),
                None => l.to_string(),
            },
            _ => l.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}
