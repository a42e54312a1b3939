//! Small-step call-by-value evaluation with casts, case and fair parallel connectives.

use crate::ast::*;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

pub const RUN_FUEL: u64 = 100_000;
pub const FOLD_FUEL: u64 = 64;

/// A cast whose residual check reached a value other than `true`.
#[derive(Clone, Debug, PartialEq)]
pub struct CastFailure {
    /// The `Checking` node at the point of failure.
    pub check: Term,
    pub witness: Term,
    pub source: Type,
    pub target: Type,
    pub label: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepOutcome {
    Value(Term),
    Stepped(Term),
    FailedCast(CastFailure),
    OutOfFuel(Term),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("existential predicate reached evaluation: {0}")]
    ExistentialAtRuntime(String),
    #[error("stuck term: {0}")]
    StuckTerm(String),
    #[error("primitive application undefined: {0}")]
    DeltaUndefined(String),
}

enum Step {
    Value,
    Next(Term),
    Fail(CastFailure),
}

pub fn is_function_value(t: &Term) -> bool {
    match t {
        Term::Lam(..) | Term::Cast(..) | Term::Prim(_) => true,
        Term::Ctor(c, args) => args.len() < c.arity() && args.iter().all(is_value),
        Term::App(..) => is_value(t),
        _ => false,
    }
}

pub fn is_value(t: &Term) -> bool {
    match t {
        Term::Lam(..) | Term::Cast(..) | Term::Prim(_) => true,
        Term::Ctor(c, args) => args.len() <= c.arity() && args.iter().all(is_value),
        Term::App(..) => {
            let (head, args) = t.spine();
            if !args.iter().all(|a| is_value(a)) {
                return false;
            }
            match head {
                Term::Prim(Prim::Fix(_)) => args.len() == 1,
                Term::Prim(p) => args.len() < p.arity(),
                Term::Cast(_, target, _) => {
                    args.len() == 1 && matches!(**target, Type::Arrow(..)) && is_function_value(args[0])
                }
                _ => false,
            }
        }
        _ => false,
    }
}

/// Performs one reduction step on a closed term.
pub fn step(e: &Term) -> Result<StepOutcome, EvalError> {
    Ok(match step_in(e)? {
        Step::Value => StepOutcome::Value(e.clone()),
        Step::Next(t) => StepOutcome::Stepped(t),
        Step::Fail(f) => StepOutcome::FailedCast(f),
    })
}

/// Iterates `step` at most `fuel` times.
pub fn evaluate(e: &Term, fuel: u64) -> Result<StepOutcome, EvalError> {
    let mut cur = e.clone();
    let mut n = 0u64;
    loop {
        match step_in(&cur)? {
            Step::Value => return Ok(StepOutcome::Value(cur)),
            Step::Fail(f) => return Ok(StepOutcome::FailedCast(f)),
            Step::Next(t) => {
                if n >= fuel {
                    return Ok(StepOutcome::OutOfFuel(cur));
                }
                n += 1;
                cur = t;
            }
        }
    }
}

/// Evaluates a closed boolean term; `None` when it does not reach a boolean within `fuel`.
pub fn eval_bool(e: &Term, fuel: u64) -> Option<bool> {
    match evaluate(e, fuel) {
        Ok(StepOutcome::Value(v)) if v.is_true() => Some(true),
        Ok(StepOutcome::Value(v)) if v.is_false() => Some(false),
        _ => None,
    }
}

fn wrap1(s: Step, f: impl FnOnce(Term) -> Term) -> Step {
    match s {
        Step::Next(t) => Step::Next(f(t)),
        other => other,
    }
}

fn step_in(e: &Term) -> Result<Step, EvalError> {
    match e {
        Term::Var(x) => Err(EvalError::StuckTerm(format!("free variable {x}"))),
        Term::Hole(_) => Err(EvalError::StuckTerm("refinement placeholder".into())),
        Term::Exists(..) => Err(EvalError::ExistentialAtRuntime(e.to_string())),
        Term::Lam(..) | Term::Cast(..) | Term::Prim(_) => Ok(Step::Value),
        Term::Ctor(c, args) => {
            for (i, a) in args.iter().enumerate() {
                if !is_value(a) {
                    let s = step_in(a)?;
                    return Ok(wrap1(s, |a2| {
                        let mut v = args.clone();
                        v[i] = a2;
                        Term::Ctor(c.clone(), v)
                    }));
                }
            }
            if args.len() > c.arity() {
                return Err(EvalError::StuckTerm(format!("over-applied constructor {}", c.name())));
            }
            Ok(Step::Value)
        }
        Term::App(f, a) => {
            if !is_value(f) {
                let s = step_in(f)?;
                return Ok(wrap1(s, |f2| Term::app(f2, (**a).clone())));
            }
            if !is_value(a) {
                let s = step_in(a)?;
                return Ok(wrap1(s, |a2| Term::app((**f).clone(), a2)));
            }
            if is_value(e) {
                return Ok(Step::Value);
            }
            apply(f, a)
        }
        Term::Checking { target, residual, subject, source, label } => {
            if !is_value(residual) {
                let s = step_in(residual)?;
                return Ok(wrap1(s, |r| Term::Checking {
                    target: target.clone(),
                    residual: Box::new(r),
                    subject: subject.clone(),
                    source: source.clone(),
                    label: *label,
                }));
            }
            if residual.is_true() {
                Ok(Step::Next((**subject).clone()))
            } else {
                Ok(Step::Fail(CastFailure {
                    check: e.clone(),
                    witness: (**subject).clone(),
                    source: (**source).clone(),
                    target: (**target).clone(),
                    label: *label,
                }))
            }
        }
        Term::Case(s, brs) => {
            if !is_value(s) {
                let st = step_in(s)?;
                return Ok(wrap1(st, |s2| Term::Case(Box::new(s2), brs.clone())));
            }
            let (c, args) = match &**s {
                Term::Ctor(c, args) if args.len() == c.arity() => (c, args),
                _ => return Err(EvalError::StuckTerm(format!("case on non-constructor {s}"))),
            };
            let h = brs
                .iter()
                .find(|(bc, _)| bc == c)
                .map(|(_, h)| h)
                .ok_or_else(|| EvalError::StuckTerm(format!("no branch for {}", c.name())))?;
            let mut t = h.clone();
            for a in args {
                t = Term::app(t, a.clone());
            }
            Ok(Step::Next(Term::app(t, (**s).clone())))
        }
        Term::POr(l, r, n) => parallel(l, r, *n, true),
        Term::PAnd(l, r, n) => parallel(l, r, *n, false),
    }
}

/// Fair scheduling: the left side moves on even counts, the right on odd ones.
fn parallel(l: &Term, r: &Term, n: u32, is_or: bool) -> Result<Step, EvalError> {
    let absorbing = |t: &Term| if is_or { t.is_true() } else { t.is_false() };
    let neutral = |t: &Term| if is_or { t.is_false() } else { t.is_true() };
    if absorbing(l) || absorbing(r) {
        return Ok(Step::Next(Term::bool(is_or)));
    }
    // a finished neutral side drops out, so chains of unfoldings stay shallow
    if neutral(l) {
        return Ok(Step::Next(r.clone()));
    }
    if neutral(r) {
        return Ok(Step::Next(l.clone()));
    }
    let rebuild = |a: Term, b: Term| {
        if is_or {
            Term::POr(Box::new(a), Box::new(b), n.wrapping_add(1))
        } else {
            Term::PAnd(Box::new(a), Box::new(b), n.wrapping_add(1))
        }
    };
    let left_first = n % 2 == 0;
    let l_done = is_value(l);
    let r_done = is_value(r);
    if (left_first && !l_done) || r_done {
        if l_done {
            return Err(EvalError::StuckTerm("non-boolean operand of parallel connective".into()));
        }
        let s = step_in(l)?;
        return Ok(wrap1(s, |l2| rebuild(l2, r.clone())));
    }
    let s = step_in(r)?;
    Ok(wrap1(s, |r2| rebuild(l.clone(), r2)))
}

fn apply(f: &Term, a: &Term) -> Result<Step, EvalError> {
    match f {
        Term::Lam(x, _, body) => Ok(Step::Next(subst_term(body, x, a))),
        Term::Cast(s, t, l) => cast_value(s, t, *l, a),
        Term::Ctor(c, args) => {
            let mut v = args.clone();
            v.push(a.clone());
            Ok(Step::Next(Term::Ctor(c.clone(), v)))
        }
        _ => {
            let (head, args) = f.spine();
            match head {
                Term::Prim(Prim::Fix(_)) => {
                    // fix g v  ->  g (fix g) v
                    let g = args[0].clone();
                    Ok(Step::Next(Term::app(Term::app(g, f.clone()), a.clone())))
                }
                Term::Prim(p) => {
                    let mut all: Vec<Term> = args.into_iter().cloned().collect();
                    all.push(a.clone());
                    Ok(Step::Next(delta(p, &all)?))
                }
                Term::Cast(s, t, l) => {
                    let fun = args[0].clone();
                    Ok(Step::Next(unwrap_arrow_cast(s, t, *l, fun, a.clone())))
                }
                _ => Err(EvalError::StuckTerm(format!("application of non-function {f}"))),
            }
        }
    }
}

/// `(<S1->S2 => T1->T2> f) v  ->  <S2[x:=<T1=>S1> v] => T2[y:=v]> (f (<T1=>S1> v))`.
fn unwrap_arrow_cast(s: &Type, t: &Type, label: Option<usize>, f: Term, v: Term) -> Term {
    let dyn_arrow = Type::arrow("_", Type::Dynamic, Type::Dynamic);
    let s = if matches!(s, Type::Dynamic) { &dyn_arrow } else { s };
    let (x, s1, s2) = match s {
        Type::Arrow(x, a, b) => (x, a, b),
        _ => unreachable!("source of a function cast is an arrow"),
    };
    let (y, t1, t2) = match t {
        Type::Arrow(y, a, b) => (y, a, b),
        _ => unreachable!("function cast target is an arrow"),
    };
    let arg = Term::app(Term::Cast(t1.clone(), s1.clone(), label), v.clone());
    let src = subst_type(s2, x, &arg);
    let tgt = subst_type(t2, y, &v);
    Term::app(Term::Cast(Box::new(src), Box::new(tgt), label), Term::app(f, arg))
}

fn cast_value(s: &Type, t: &Type, label: Option<usize>, v: &Term) -> Result<Step, EvalError> {
    let fail = |target: &Type| {
        Step::Fail(CastFailure {
            check: Term::Checking {
                target: Box::new(target.clone()),
                residual: Box::new(Term::ff()),
                subject: Box::new(v.clone()),
                source: Box::new(s.clone()),
                label,
            },
            witness: v.clone(),
            source: s.clone(),
            target: target.clone(),
            label,
        })
    };
    match t {
        Type::Dynamic => Ok(Step::Next(v.clone())),
        Type::Base(x, b, p) => match v {
            Term::Ctor(c, args) if c.base() == *b && args.len() == c.arity() => Ok(Step::Next(Term::Checking {
                target: Box::new(t.clone()),
                residual: Box::new(subst_term(p, x, v)),
                subject: Box::new(v.clone()),
                source: Box::new(s.clone()),
                label,
            })),
            _ => Ok(fail(t)),
        },
        // A function cast applied to a non-function value.
        Type::Arrow(..) => Ok(fail(t)),
        Type::Exists(..) | Type::Var(..) => {
            Err(EvalError::StuckTerm(format!("cast to a type that cannot be checked: {t}")))
        }
    }
}

fn int_arg(p: &Prim, t: &Term) -> Result<BigInt, EvalError> {
    t.as_int().cloned().ok_or_else(|| EvalError::DeltaUndefined(format!("{} applied to {}", p.name(), t)))
}

fn bool_arg(p: &Prim, t: &Term) -> Result<bool, EvalError> {
    if t.is_true() {
        Ok(true)
    } else if t.is_false() {
        Ok(false)
    } else {
        Err(EvalError::DeltaUndefined(format!("{} applied to {}", p.name(), t)))
    }
}

/// Euclidean division; division by zero yields 0.
pub fn euclid_div(a: &BigInt, b: &BigInt) -> BigInt {
    if b.is_zero() {
        return BigInt::zero();
    }
    let r = euclid_mod(a, b);
    (a - r) / b
}

/// Euclidean remainder in `[0, |b|)`; `a mod 0 = a`.
pub fn euclid_mod(a: &BigInt, b: &BigInt) -> BigInt {
    if b.is_zero() {
        return a.clone();
    }
    a.mod_floor(&b.abs())
}

fn structural_eq(a: &Term, b: &Term) -> Result<bool, EvalError> {
    match (a, b) {
        (Term::Ctor(c1, a1), Term::Ctor(c2, a2)) => {
            if c1 != c2 || a1.len() != a2.len() {
                return Ok(false);
            }
            for (x, y) in a1.iter().zip(a2) {
                if !structural_eq(x, y)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        _ => Err(EvalError::DeltaUndefined(format!("equality on non-constructor values {a} and {b}"))),
    }
}

fn omega() -> Term {
    let w = Term::lam("x", Type::Dynamic, Term::app(Term::var("x"), Term::var("x")));
    Term::app(w.clone(), w)
}

/// The meaning of a saturated primitive application.
pub fn delta(p: &Prim, args: &[Term]) -> Result<Term, EvalError> {
    let i = |k: usize| int_arg(p, &args[k]);
    let b = |k: usize| bool_arg(p, &args[k]);
    Ok(match p {
        Prim::Add => Term::int(i(0)? + i(1)?),
        Prim::Sub => Term::int(i(0)? - i(1)?),
        Prim::Mul => Term::int(i(0)? * i(1)?),
        Prim::Div => Term::int(euclid_div(&i(0)?, &i(1)?)),
        Prim::Mod => Term::int(euclid_mod(&i(0)?, &i(1)?)),
        Prim::Min => Term::int(i(0)?.min(i(1)?)),
        Prim::Max => Term::int(i(0)?.max(i(1)?)),
        Prim::Lt => Term::bool(i(0)? < i(1)?),
        Prim::Le => Term::bool(i(0)? <= i(1)?),
        Prim::Eq => Term::bool(structural_eq(&args[0], &args[1])?),
        Prim::And => Term::bool(b(0)? && b(1)?),
        Prim::Or => Term::bool(b(0)? || b(1)?),
        Prim::Imp => Term::bool(!b(0)? || b(1)?),
        Prim::Not => Term::bool(!b(0)?),
        Prim::Lower | Prim::Upper => match &args[0] {
            Term::Ctor(Ctor::Empty | Ctor::Node, fs) if fs.len() >= 2 => {
                if *p == Prim::Lower {
                    fs[0].clone()
                } else {
                    Term::int(int_arg(p, &fs[1])? - 1)
                }
            }
            t => return Err(EvalError::DeltaUndefined(format!("{} applied to {}", p.name(), t))),
        },
        Prim::Length => {
            let mut n = 0u64;
            let mut cur = &args[0];
            loop {
                match cur {
                    Term::Ctor(Ctor::Nil, _) => break,
                    Term::Ctor(Ctor::Cons, fs) if fs.len() == 2 => {
                        n += 1;
                        cur = &fs[1];
                    }
                    t => return Err(EvalError::DeltaUndefined(format!("length applied to {t}"))),
                }
            }
            Term::int(n)
        }
        Prim::NewArray => {
            let n = i(0)?;
            if n.is_negative() {
                omega()
            } else {
                let k = n.to_usize().ok_or_else(|| EvalError::DeltaUndefined("newArray size too large".into()))?;
                (0..k).fold(Term::Ctor(Ctor::Nil, vec![]), |acc, _| Term::Ctor(Ctor::Cons, vec![Term::int(0), acc]))
            }
        }
        Prim::If(t) => {
            let sel = if b(0)? { "x" } else { "y" };
            let sel = Term::lam("x", (**t).clone(), Term::lam("y", (**t).clone(), Term::var(sel)));
            args[1..].iter().fold(sel, |acc, a| Term::app(acc, a.clone()))
        }
        Prim::Fix(_) => Term::app(args[0].clone(), Term::app(Term::Prim(p.clone()), args[0].clone())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{parse_term, ParseOptions};

    fn t(s: &str) -> Term {
        parse_term(s, &[], ParseOptions::default()).unwrap()
    }

    #[test]
    fn beta_then_delta() {
        let e = t("(fun (x:Int) => x + 1) 4");
        let s1 = match step(&e).unwrap() {
            StepOutcome::Stepped(s) => s,
            o => panic!("{o:?}"),
        };
        let s2 = match step(&s1).unwrap() {
            StepOutcome::Stepped(s) => s,
            o => panic!("{o:?}"),
        };
        assert_eq!(s2, Term::int(5));
        assert_eq!(step(&s2).unwrap(), StepOutcome::Value(Term::int(5)));
    }

    #[test]
    fn base_cast_checks_then_returns() {
        let e = t("<Int => {x:Int | x > 0}> 3");
        let s1 = match step(&e).unwrap() {
            StepOutcome::Stepped(s) => s,
            o => panic!("{o:?}"),
        };
        assert!(matches!(s1, Term::Checking { .. }));
        assert_eq!(evaluate(&e, 10).unwrap(), StepOutcome::Value(Term::int(3)));
    }

    #[test]
    fn failing_cast_reports_witness() {
        let e = t("<Int => {x:Int | x > 0}> 0");
        match evaluate(&e, 10).unwrap() {
            StepOutcome::FailedCast(f) => assert_eq!(f.witness, Term::int(0)),
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn function_cast_wraps_lazily() {
        let e = t("<(x:Int -> Int) => (y:{y:Int | y > 0} -> {z:Int | z > 0})> (fun (x:Int) => x)");
        assert!(is_value(&e));
        assert_eq!(evaluate(&Term::app(e.clone(), Term::int(2)), 100).unwrap(), StepOutcome::Value(Term::int(2)));
        assert!(matches!(evaluate(&Term::app(e, Term::int(-1)), 100).unwrap(), StepOutcome::FailedCast(_)));
    }

    #[test]
    fn case_passes_fields_and_self() {
        let e = t("case cons(1, nil) of nil => 0 | cons(h, t, s) => h + length s");
        assert_eq!(evaluate(&e, 100).unwrap(), StepOutcome::Value(Term::int(2)));
    }

    #[test]
    fn factorial_by_fix() {
        let e = t("(fix (f:Int -> Int) => fun (n:Int) => if n = 0 then 1 else n * f (n - 1)) 3");
        assert_eq!(evaluate(&e, 1000).unwrap(), StepOutcome::Value(Term::int(6)));
    }

    #[test]
    fn omega_runs_out_of_fuel() {
        assert!(matches!(evaluate(&omega(), 100).unwrap(), StepOutcome::OutOfFuel(_)));
    }

    #[test]
    fn parallel_or_is_fair() {
        let l = Term::por(Term::tt(), omega());
        let r = Term::por(omega(), Term::tt());
        assert_eq!(evaluate(&l, 4).unwrap(), StepOutcome::Value(Term::tt()));
        assert_eq!(evaluate(&r, 4).unwrap(), StepOutcome::Value(Term::tt()));
    }

    #[test]
    fn delta_table() {
        assert_eq!(delta(&Prim::Add, &[Term::int(3), Term::int(7)]).unwrap(), Term::int(10));
        let sel = delta(&Prim::If(Box::new(Type::int())), &[Term::tt()]).unwrap();
        assert!(alpha_eq(&sel, &t("fun (x:Int) => fun (y:Int) => x")));
        let g = t("fun (f:Int -> Int) => f");
        let fx = delta(&Prim::Fix(Box::new(Type::fun(Type::int(), Type::int()))), &[g.clone()]).unwrap();
        assert!(matches!(fx, Term::App(..)));
        assert_eq!(delta(&Prim::Mod, &[Term::int(-4), Term::int(6)]).unwrap(), Term::int(2));
        assert_eq!(delta(&Prim::Mod, &[Term::int(5), Term::int(0)]).unwrap(), Term::int(5));
    }

    #[test]
    fn existential_is_rejected_at_runtime() {
        let e = Term::exists("x", Type::int(), Term::tt());
        assert!(matches!(evaluate(&e, 10), Err(EvalError::ExistentialAtRuntime(_))));
    }
}
