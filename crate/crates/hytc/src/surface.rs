//! Concrete syntax: lexer, parser and printer for `.lh` programs.
//!
//! The printer is deterministic and reparses to an α-equivalent tree for every
//! node except the run-time only forms (`Checking`, placeholders, delayed maps).

use crate::ast::*;
use num_bigint::BigInt;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SyntaxError {
    #[error("parse error at {line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("unknown identifier `{name}` at {line}:{col}")]
    UnknownIdentifier { name: String, line: usize, col: usize },
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ParseOptions {
    /// Accept `exists` in types and predicates.
    pub allow_exists: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopBinding {
    pub name: Name,
    pub ty: Option<Type>,
    pub term: Term,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceProgram {
    pub bindings: Vec<TopBinding>,
    pub main: Term,
}

impl SourceProgram {
    /// The program as one term of nested lets.
    pub fn to_term(&self) -> Term {
        let mut acc = self.main.clone();
        for b in self.bindings.iter().rev() {
            let ty = b.ty.clone().unwrap_or_else(fresh_tyvar);
            acc = Term::app(Term::lam(&b.name, ty, acc), b.term.clone());
        }
        acc
    }

    pub fn alpha_eq(&self, other: &SourceProgram) -> bool {
        if self.bindings.len() != other.bindings.len() {
            return false;
        }
        let strip = |p: &SourceProgram| {
            let mut acc = p.main.clone();
            for b in p.bindings.iter().rev() {
                let ty = b.ty.clone().unwrap_or(Type::Dynamic);
                acc = Term::app(Term::lam(&b.name, ty, acc), b.term.clone());
            }
            acc
        };
        let names_match = self.bindings.iter().zip(&other.bindings).all(|(a, b)| a.ty.is_some() == b.ty.is_some());
        names_match && alpha_eq(&strip(self), &strip(other))
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(BigInt),
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
    start: usize,
    end: usize,
}

const SYMBOLS: &[&str] = &[
    "->", "=>", "<=", ">=", "&&", "||", "\\/", "/\\", "(", ")", "{", "}", "[", "]", ":", ",", "|", ".", "<", ">",
    "=", "+", "-", "*", ";", "?",
];

const KEYWORDS: &[&str] = &[
    "fun", "let", "rec", "in", "if", "then", "else", "case", "of", "fix", "exists", "not", "true", "false", "unit", "nil",
    "cons", "empty", "node", "Dynamic", "Int", "Bool", "Unit", "IntList", "BST",
];

fn lex(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let adv = |i: &mut usize, line: &mut usize, col: &mut usize, n: usize| {
        for k in 0..n {
            if bytes[*i + k] == b'\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
        }
        *i += n;
    };
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            adv(&mut i, &mut line, &mut col, 1);
            continue;
        }
        if c == b'-' && bytes.get(i + 1) == Some(&b'-') {
            while i < bytes.len() && bytes[i] != b'\n' {
                adv(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        let (sl, sc, start) = (line, col, i);
        if c.is_ascii_digit() {
            let mut j = i;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            let n: BigInt = src[i..j].parse().expect("digits");
            adv(&mut i, &mut line, &mut col, j - start);
            out.push(Token { tok: Tok::Int(n), line: sl, col: sc, start, end: i });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let mut j = i;
            while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_' || bytes[j] == b'\'') {
                j += 1;
            }
            let s = src[i..j].to_string();
            adv(&mut i, &mut line, &mut col, j - start);
            out.push(Token { tok: Tok::Ident(s), line: sl, col: sc, start, end: i });
            continue;
        }
        let sym = SYMBOLS.iter().find(|s| src[i..].starts_with(**s));
        match sym {
            Some(s) => {
                adv(&mut i, &mut line, &mut col, s.len());
                out.push(Token { tok: Tok::Sym(s), line: sl, col: sc, start, end: i });
            }
            None => {
                return Err(SyntaxError::Parse {
                    line,
                    col,
                    msg: format!("unexpected character `{}`", src[i..].chars().next().unwrap_or('?')),
                })
            }
        }
    }
    out.push(Token { tok: Tok::Eof, line, col, start: i, end: i });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    scope: Vec<Name>,
    opts: ParseOptions,
}

type PResult<T> = Result<T, SyntaxError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let t = &self.toks[self.pos];
        Err(SyntaxError::Parse { line: t.line, col: t.col, msg: msg.into() })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, s: &str) -> bool {
        if self.is_kw(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected `{}`, found {}", s, describe(self.peek())))
        }
    }

    fn expect_kw(&mut self, s: &str) -> PResult<()> {
        if self.eat_kw(s) {
            Ok(())
        } else {
            self.err(format!("expected `{}`, found {}", s, describe(self.peek())))
        }
    }

    fn binder(&mut self) -> PResult<Name> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            t => self.err(format!("expected a name, found {}", describe(&t))),
        }
    }

    fn with_bound<T>(&mut self, names: &[Name], f: impl FnOnce(&mut Self) -> PResult<T>) -> PResult<T> {
        let n = self.scope.len();
        self.scope.extend(names.iter().cloned());
        let r = f(self);
        self.scope.truncate(n);
        r
    }

    // -- types --------------------------------------------------------------

    fn ty(&mut self) -> PResult<Type> {
        if self.is_kw("exists") {
            if !self.opts.allow_exists {
                return self.err("existential types require --allow-exists");
            }
            self.bump();
            let x = self.binder()?;
            self.expect_sym(":")?;
            let s = self.ty()?;
            self.expect_sym(".")?;
            let t = self.with_bound(&[x.clone()], |p| p.ty())?;
            return Ok(Type::exists(&x, s, t));
        }
        if let (Tok::Ident(x), Tok::Sym(":")) = (self.peek().clone(), self.peek_at(1).clone()) {
            if !KEYWORDS.contains(&x.as_str()) {
                self.bump();
                self.bump();
                let s = self.ty_atom()?;
                self.expect_sym("->")?;
                let t = self.with_bound(&[x.clone()], |p| p.ty())?;
                return Ok(Type::arrow(&x, s, t));
            }
        }
        let s = self.ty_atom()?;
        if self.eat_sym("->") {
            let t = self.ty()?;
            return Ok(Type::fun(s, t));
        }
        Ok(s)
    }

    fn ty_atom(&mut self) -> PResult<Type> {
        if self.eat_sym("?") {
            return Ok(fresh_tyvar());
        }
        if self.eat_sym("(") {
            let t = self.ty()?;
            self.expect_sym(")")?;
            return Ok(t);
        }
        if self.eat_sym("{") {
            let x = self.binder()?;
            self.expect_sym(":")?;
            let b = self.base_name()?;
            self.expect_sym("|")?;
            let p = self.with_bound(&[x.clone()], |p| p.expr())?;
            self.expect_sym("}")?;
            return Ok(Type::refined(&x, b, p));
        }
        if self.eat_kw("Dynamic") {
            return Ok(Type::Dynamic);
        }
        let b = self.base_name()?;
        Ok(Type::base(b))
    }

    fn base_name(&mut self) -> PResult<BaseTy> {
        if let Tok::Ident(s) = self.peek().clone() {
            if let Some(b) = BaseTy::from_name(&s) {
                self.bump();
                return Ok(b);
            }
        }
        self.err(format!("expected a type, found {}", describe(self.peek())))
    }

    // -- terms --------------------------------------------------------------

    fn expr(&mut self) -> PResult<Term> {
        self.imp()
    }

    fn imp(&mut self) -> PResult<Term> {
        let a = self.or_()?;
        if self.eat_sym("=>") {
            let b = self.imp()?;
            return Ok(Term::prim2(Prim::Imp, a, b));
        }
        Ok(a)
    }

    fn or_(&mut self) -> PResult<Term> {
        let mut a = self.and_()?;
        loop {
            if self.eat_sym("||") {
                let b = self.and_()?;
                a = Term::prim2(Prim::Or, a, b);
            } else if self.eat_sym("\\/") {
                let b = self.and_()?;
                a = Term::por(a, b);
            } else {
                return Ok(a);
            }
        }
    }

    fn and_(&mut self) -> PResult<Term> {
        let mut a = self.not_()?;
        loop {
            if self.eat_sym("&&") {
                let b = self.not_()?;
                a = Term::prim2(Prim::And, a, b);
            } else if self.eat_sym("/\\") {
                let b = self.not_()?;
                a = Term::pand(a, b);
            } else {
                return Ok(a);
            }
        }
    }

    fn not_(&mut self) -> PResult<Term> {
        if self.is_kw("not") && self.starts_atom_at(1) && !self.scope.iter().any(|n| n == "not") {
            self.bump();
            let a = self.not_()?;
            return Ok(Term::not(a));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> PResult<Term> {
        let a = self.add()?;
        let op = match self.peek() {
            Tok::Sym("=") => "=",
            Tok::Sym("<") => "<",
            Tok::Sym("<=") => "<=",
            Tok::Sym(">") => ">",
            Tok::Sym(">=") => ">=",
            _ => return Ok(a),
        };
        self.bump();
        let b = self.add()?;
        Ok(match op {
            "=" => Term::prim2(Prim::Eq, a, b),
            "<" => Term::prim2(Prim::Lt, a, b),
            "<=" => Term::prim2(Prim::Le, a, b),
            ">" => Term::prim2(Prim::Lt, b, a),
            _ => Term::prim2(Prim::Le, b, a),
        })
    }

    fn add(&mut self) -> PResult<Term> {
        let mut a = self.mul()?;
        loop {
            if self.eat_sym("+") {
                let b = self.mul()?;
                a = Term::prim2(Prim::Add, a, b);
            } else if self.eat_sym("-") {
                let b = self.mul()?;
                a = Term::prim2(Prim::Sub, a, b);
            } else {
                return Ok(a);
            }
        }
    }

    fn mul(&mut self) -> PResult<Term> {
        let mut a = self.app()?;
        while self.eat_sym("*") {
            let b = self.app()?;
            a = Term::prim2(Prim::Mul, a, b);
        }
        Ok(a)
    }

    fn is_prefix_form(&self) -> bool {
        match self.peek() {
            Tok::Ident(s) => match s.as_str() {
                "fun" | "let" | "case" => true,
                "exists" => self.opts.allow_exists,
                "if" | "fix" => !matches!(self.peek_at(1), Tok::Sym("[")),
                _ => false,
            },
            _ => false,
        }
    }

    /// Can the token `k` ahead begin an application argument?
    fn starts_atom_at(&self, k: usize) -> bool {
        match self.peek_at(k) {
            Tok::Int(_) => true,
            Tok::Sym("(") => true,
            Tok::Ident(s) => match s.as_str() {
                "in" | "then" | "else" | "of" | "rec" | "Int" | "Bool" | "Unit" | "IntList" | "BST" | "Dynamic" => false,
                _ => true,
            },
            _ => false,
        }
    }

    fn app(&mut self) -> PResult<Term> {
        if self.is_prefix_form() {
            return self.prefix_form();
        }
        let mut f = self.atom()?;
        loop {
            if self.is_prefix_form() {
                let a = self.prefix_form()?;
                return Ok(Term::app(f, a));
            }
            if !self.starts_atom_at(0) {
                return Ok(f);
            }
            let a = self.atom()?;
            f = Term::app(f, a);
        }
    }

    fn params(&mut self) -> PResult<Vec<(Name, Type)>> {
        let mut ps = Vec::new();
        while self.is_sym("(") {
            self.bump();
            let x = self.binder()?;
            self.expect_sym(":")?;
            let names: Vec<Name> = ps.iter().map(|(n, _): &(Name, Type)| n.clone()).collect();
            let t = self.with_bound(&names, |p| p.ty())?;
            self.expect_sym(")")?;
            ps.push((x, t));
        }
        Ok(ps)
    }

    /// `let [rec] f params [: U] = d`, returning (name, annotation, bound term).
    fn let_header(&mut self) -> PResult<(Name, Option<Type>, Term)> {
        let rec = self.eat_kw("rec");
        let name = self.binder()?;
        let ps = self.params()?;
        let pnames: Vec<Name> = ps.iter().map(|(n, _)| n.clone()).collect();
        let ret = if self.eat_sym(":") { Some(self.with_bound(&pnames, |p| p.ty())?) } else { None };
        self.expect_sym("=")?;
        if ps.is_empty() {
            if rec {
                return self.err("`let rec` needs at least one parameter");
            }
            let d = self.expr()?;
            return Ok((name, ret, d));
        }
        let ret_ty = match (&ret, rec) {
            (Some(t), _) => t.clone(),
            (None, false) => fresh_tyvar(),
            (None, true) => return self.err("`let rec` needs a result type"),
        };
        let full = ps.iter().rev().fold(ret_ty, |acc, (x, t)| Type::arrow(x, t.clone(), acc));
        let mut bound = Vec::new();
        if rec {
            bound.push(name.clone());
        }
        bound.extend(pnames.iter().cloned());
        let body = self.with_bound(&bound, |p| p.expr())?;
        let lam = ps.iter().rev().fold(body, |acc, (x, t)| Term::lam(x, t.clone(), acc));
        let term = if rec {
            Term::app(Term::Prim(Prim::Fix(Box::new(full.clone()))), Term::lam(&name, full.clone(), lam))
        } else {
            lam
        };
        Ok((name, Some(full), term))
    }

    fn prefix_form(&mut self) -> PResult<Term> {
        let kw = match self.peek() {
            Tok::Ident(s) => s.clone(),
            _ => unreachable!(),
        };
        self.bump();
        match kw.as_str() {
            "fun" => {
                let ps = self.params()?;
                if ps.is_empty() {
                    return self.err("`fun` needs a parameter `(x:T)`");
                }
                self.expect_sym("=>")?;
                let names: Vec<Name> = ps.iter().map(|(n, _)| n.clone()).collect();
                let body = self.with_bound(&names, |p| p.expr())?;
                Ok(ps.iter().rev().fold(body, |acc, (x, t)| Term::lam(x, t.clone(), acc)))
            }
            "let" => {
                let (name, ty, d) = self.let_header()?;
                self.expect_kw("in")?;
                let body = self.with_bound(&[name.clone()], |p| p.expr())?;
                Ok(Term::app(Term::lam(&name, ty.unwrap_or_else(fresh_tyvar), body), d))
            }
            "if" => {
                let c = self.expr()?;
                self.expect_kw("then")?;
                let a = self.expr()?;
                self.expect_kw("else")?;
                let b = self.expr()?;
                Ok(if_term(c, a, b))
            }
            "fix" => {
                self.expect_sym("(")?;
                let f = self.binder()?;
                self.expect_sym(":")?;
                let t = self.ty()?;
                self.expect_sym(")")?;
                self.expect_sym("=>")?;
                let body = self.with_bound(&[f.clone()], |p| p.expr())?;
                Ok(Term::app(Term::Prim(Prim::Fix(Box::new(t.clone()))), Term::lam(&f, t, body)))
            }
            "exists" => {
                let x = self.binder()?;
                self.expect_sym(":")?;
                let t = self.ty()?;
                self.expect_sym(".")?;
                let body = self.with_bound(&[x.clone()], |p| p.expr())?;
                Ok(Term::exists(&x, t, body))
            }
            "case" => {
                let s = self.expr()?;
                self.expect_kw("of")?;
                self.eat_sym("|");
                let mut brs = Vec::new();
                loop {
                    brs.push(self.branch()?);
                    if !self.eat_sym("|") {
                        break;
                    }
                }
                Ok(Term::Case(Box::new(s), brs))
            }
            _ => unreachable!(),
        }
    }

    fn branch(&mut self) -> PResult<(Ctor, Term)> {
        let c = match self.peek().clone() {
            Tok::Ident(s) => match Ctor::from_name(&s) {
                Some(c) => c,
                None => return self.err(format!("expected a constructor pattern, found `{s}`")),
            },
            Tok::Int(n) => Ctor::Int(n),
            t => return self.err(format!("expected a constructor pattern, found {}", describe(&t))),
        };
        self.bump();
        let mut names = Vec::new();
        if self.eat_sym("(") {
            if !self.is_sym(")") {
                loop {
                    names.push(self.binder()?);
                    if !self.eat_sym(",") {
                        break;
                    }
                }
            }
            self.expect_sym(")")?;
        }
        let ar = c.arity();
        if names.len() == ar {
            names.push("_".into());
        } else if names.len() != ar + 1 {
            return self.err(format!("constructor `{}` binds {} or {} names", c.name(), ar, ar + 1));
        }
        self.expect_sym("=>")?;
        let body = self.with_bound(&names, |p| p.expr())?;
        Ok((c.clone(), handler(&c, &names, body)))
    }

    fn atom(&mut self) -> PResult<Term> {
        let t = self.toks[self.pos].clone();
        match t.tok {
            Tok::Int(n) => {
                self.bump();
                Ok(Term::int(n))
            }
            Tok::Sym("-") => {
                self.bump();
                match self.bump() {
                    Tok::Int(n) => Ok(Term::int(-n)),
                    _ => self.err("expected an integer after unary `-`"),
                }
            }
            Tok::Sym("<") => {
                self.bump();
                let s = self.ty()?;
                self.expect_sym("=>")?;
                let tt = self.ty()?;
                self.expect_sym(">")?;
                Ok(Term::cast(s, tt))
            }
            Tok::Sym("(") => {
                self.bump();
                let op = match self.peek() {
                    Tok::Sym(s) if matches!(*s, "+" | "-" | "*" | "=" | "<" | "<=" | "&&" | "||" | "=>")
                        && matches!(self.peek_at(1), Tok::Sym(")")) =>
                    {
                        Some(*s)
                    }
                    _ => None,
                };
                if let Some(op) = op {
                    self.bump();
                    self.bump();
                    return Ok(Term::Prim(infix_prim(op)));
                }
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(ref s) => {
                let s = s.clone();
                if self.scope.iter().any(|n| *n == s) {
                    self.bump();
                    return Ok(Term::Var(s));
                }
                if s == "if" || s == "fix" {
                    self.bump();
                    self.expect_sym("[")?;
                    let ty = self.ty()?;
                    self.expect_sym("]")?;
                    let p = if s == "if" { Prim::If(Box::new(ty)) } else { Prim::Fix(Box::new(ty)) };
                    return Ok(Term::Prim(p));
                }
                if let Some(c) = Ctor::from_name(&s) {
                    self.bump();
                    let adjacent = self.is_sym("(") && self.toks[self.pos].start == t.end;
                    if adjacent {
                        self.bump();
                        let mut args = Vec::new();
                        if !self.is_sym(")") {
                            loop {
                                args.push(self.expr()?);
                                if !self.eat_sym(",") {
                                    break;
                                }
                            }
                        }
                        self.expect_sym(")")?;
                        if args.len() != c.arity() {
                            return self.err(format!("constructor `{}` takes {} arguments", c.name(), c.arity()));
                        }
                        return Ok(Term::Ctor(c, args));
                    }
                    return Ok(Term::Ctor(c, vec![]));
                }
                if let Some(p) = Prim::from_ident(&s) {
                    self.bump();
                    return Ok(Term::Prim(p));
                }
                if KEYWORDS.contains(&s.as_str()) {
                    return self.err(format!("unexpected keyword `{s}`"));
                }
                Err(SyntaxError::UnknownIdentifier { name: s, line: t.line, col: t.col })
            }
            ref other => self.err(format!("expected an expression, found {}", describe(other))),
        }
    }

    fn program(&mut self) -> PResult<SourceProgram> {
        let mut bindings = Vec::new();
        loop {
            if self.is_kw("let") {
                let save = self.pos;
                self.bump();
                let (name, ty, d) = self.let_header()?;
                if self.eat_sym(";") {
                    if bindings.iter().any(|b: &TopBinding| b.name == name) {
                        return self.err(format!("duplicate top-level binding `{name}`"));
                    }
                    self.scope.push(name.clone());
                    bindings.push(TopBinding { name, ty, term: d });
                    continue;
                }
                self.pos = save;
            }
            break;
        }
        let main = if matches!(self.peek(), Tok::Eof) { Term::unit() } else { self.expr()? };
        if !matches!(self.peek(), Tok::Eof) {
            return self.err(format!("unexpected {} after the main expression", describe(self.peek())));
        }
        Ok(SourceProgram { bindings, main })
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(n) => format!("`{n}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Eof => "end of input".into(),
    }
}

fn infix_prim(op: &str) -> Prim {
    match op {
        "+" => Prim::Add,
        "-" => Prim::Sub,
        "*" => Prim::Mul,
        "=" => Prim::Eq,
        "<" => Prim::Lt,
        "<=" => Prim::Le,
        "&&" => Prim::And,
        "||" => Prim::Or,
        _ => Prim::Imp,
    }
}

/// Unrefined field types of a constructor followed by its own base (the self binder).
pub fn handler_param_types(c: &Ctor) -> Vec<Type> {
    let mut out = Vec::new();
    let mut t = ctor_type(c);
    while let Type::Arrow(_, s, u) = t {
        out.push(Type::base(s.base_id().unwrap_or(BaseTy::Int)));
        t = *u;
    }
    out.push(Type::base(c.base()));
    out
}

/// Builds the handler `fun (x1:B1) .. (self:B) => body` for a case branch.
pub fn handler(c: &Ctor, names: &[Name], body: Term) -> Term {
    let tys = handler_param_types(c);
    names.iter().zip(tys).rev().fold(body, |acc, (x, t)| Term::lam(x, t, acc))
}

/// `if c then a else b` as a Bool case.
pub fn if_term(c: Term, a: Term, b: Term) -> Term {
    let t = Ctor::Bool(true);
    let f = Ctor::Bool(false);
    Term::Case(
        Box::new(c),
        vec![(t.clone(), handler(&t, &["_".into()], a)), (f.clone(), handler(&f, &["_".into()], b))],
    )
}

fn parser(text: &str, opts: ParseOptions, scope: &[Name]) -> Result<Parser, SyntaxError> {
    Ok(Parser { toks: lex(text)?, pos: 0, scope: scope.to_vec(), opts })
}

pub fn parse_program(text: &str) -> Result<SourceProgram, SyntaxError> {
    parse_program_with(text, ParseOptions::default())
}

pub fn parse_program_with(text: &str, opts: ParseOptions) -> Result<SourceProgram, SyntaxError> {
    parser(text, opts, &[])?.program()
}

/// Parses a single term with the given names in scope.
pub fn parse_term(text: &str, scope: &[Name], opts: ParseOptions) -> Result<Term, SyntaxError> {
    let mut p = parser(text, opts, scope)?;
    let e = p.expr()?;
    if !matches!(p.peek(), Tok::Eof) {
        return p.err(format!("unexpected {}", describe(p.peek())));
    }
    Ok(e)
}

pub fn parse_type(text: &str, scope: &[Name], opts: ParseOptions) -> Result<Type, SyntaxError> {
    let mut p = parser(text, opts, scope)?;
    let t = p.ty()?;
    if !matches!(p.peek(), Tok::Eof) {
        return p.err(format!("unexpected {}", describe(p.peek())));
    }
    Ok(t)
}

// ---------------------------------------------------------------------------
// Printer

const P_OPEN: u8 = 0;
const P_IMP: u8 = 1;
const P_OR: u8 = 2;
const P_AND: u8 = 3;
const P_NOT: u8 = 4;
const P_CMP: u8 = 5;
const P_ADD: u8 = 6;
const P_MUL: u8 = 7;
const P_APP: u8 = 8;
const P_ATOM: u8 = 9;

fn paren(s: String, own: u8, ctx: u8) -> String {
    if own < ctx {
        format!("({s})")
    } else {
        s
    }
}

pub fn print_term(e: &Term) -> String {
    pr(e, P_OPEN)
}

pub fn print_type(t: &Type) -> String {
    pt(t, false)
}

fn pr(e: &Term, ctx: u8) -> String {
    match e {
        Term::Var(x) => x.clone(),
        Term::Prim(p) => match p {
            Prim::If(t) => format!("if[{}]", pt(t, false)),
            Prim::Fix(t) => format!("fix[{}]", pt(t, false)),
            p if p.is_infix() => format!("({})", p.name()),
            p => p.name().to_string(),
        },
        Term::Ctor(Ctor::Int(n), args) if args.is_empty() => {
            if n.sign() == num_bigint::Sign::Minus {
                format!("({n})")
            } else {
                n.to_string()
            }
        }
        Term::Ctor(c, args) if args.is_empty() => c.name(),
        Term::Ctor(c, args) if args.len() == c.arity() => {
            let a: Vec<String> = args.iter().map(|a| pr(a, P_OPEN)).collect();
            format!("{}({})", c.name(), a.join(", "))
        }
        Term::Ctor(c, args) => {
            let mut s = c.name();
            for a in args {
                s.push(' ');
                s.push_str(&pr(a, P_ATOM));
            }
            paren(s, P_APP, ctx)
        }
        Term::Lam(..) => {
            let (ps, body) = e.peel_lams();
            let mut s = String::from("fun");
            for (x, t) in ps {
                s.push_str(&format!(" ({}:{})", x, pt(t, false)));
            }
            s.push_str(" => ");
            s.push_str(&pr(body, P_OPEN));
            paren(s, P_OPEN, ctx)
        }
        Term::App(f, a) => pr_app(e, f, a, ctx),
        Term::Cast(s, t, _) => paren(format!("<{} => {}>", pt(s, false), pt(t, false)), P_APP, ctx),
        Term::Checking { target, residual, subject, .. } => {
            format!("<<{}, {}, {}>>", pt(target, false), pr(residual, P_OPEN), pr(subject, P_OPEN))
        }
        Term::Case(s, brs) => pr_case(s, brs, ctx),
        Term::POr(a, b, _) => paren(format!("{} \\/ {}", pr(a, P_OR), pr(b, P_AND)), P_OR, ctx),
        Term::PAnd(a, b, _) => paren(format!("{} /\\ {}", pr(a, P_AND), pr(b, P_NOT)), P_AND, ctx),
        Term::Exists(x, t, b) => paren(format!("exists {}:{}. {}", x, pt(t, false), pr(b, P_OPEN)), P_OPEN, ctx),
        Term::Hole(h) => {
            let mut s = String::new();
            for en in &h.subst.0 {
                s.push_str(&format!("[{}:={}]", en.name, pr(&en.term, P_OPEN)));
            }
            format!("{}?psi{}", s, h.id)
        }
    }
}

fn pr_app(e: &Term, f: &Term, a: &Term, ctx: u8) -> String {
    // let
    if let Term::Lam(x, t, body) = f {
        let head = match &**t {
            Type::Var(th, _) if th.is_empty() => format!("let {x} = "),
            t => format!("let {} : {} = ", x, pt(t, false)),
        };
        return paren(format!("{}{} in {}", head, pr(a, P_OPEN), pr(body, P_OPEN)), P_OPEN, ctx);
    }
    // fix
    if let (Term::Prim(Prim::Fix(t)), Term::Lam(g, t2, body)) = (f, a) {
        if alpha_eq_type(t, t2) {
            return paren(format!("fix ({}:{}) => {}", g, pt(t, false), pr(body, P_OPEN)), P_OPEN, ctx);
        }
    }
    let (head, args) = e.spine();
    if let Term::Prim(p) = head {
        if p.is_infix() && args.len() == 2 {
            let (own, l, r) = match p {
                Prim::Imp => (P_IMP, P_OR, P_IMP),
                Prim::Or => (P_OR, P_OR, P_AND),
                Prim::And => (P_AND, P_AND, P_NOT),
                Prim::Eq | Prim::Lt | Prim::Le => (P_CMP, P_ADD, P_ADD),
                Prim::Add | Prim::Sub => (P_ADD, P_ADD, P_MUL),
                _ => (P_MUL, P_MUL, P_APP),
            };
            let s = format!("{} {} {}", pr(args[0], l), p.name(), pr(args[1], r));
            return paren(s, own, ctx);
        }
        if *p == Prim::Not && args.len() == 1 {
            return paren(format!("not {}", pr(args[0], P_NOT)), P_NOT, ctx);
        }
    }
    let s = format!("{} {}", pr(f, P_APP), pr(a, P_ATOM));
    paren(s, P_APP, ctx)
}

fn pr_case(s: &Term, brs: &[(Ctor, Term)], ctx: u8) -> String {
    // if-then-else
    if brs.len() == 2 && brs[0].0 == Ctor::Bool(true) && brs[1].0 == Ctor::Bool(false) {
        let unused = |h: &Term| match h {
            Term::Lam(x, _, b) => !free_vars(b).contains(x),
            _ => false,
        };
        if unused(&brs[0].1) && unused(&brs[1].1) {
            let body = |h: &Term| match h {
                Term::Lam(_, _, b) => (**b).clone(),
                _ => unreachable!(),
            };
            let st = format!(
                "if {} then {} else {}",
                pr(s, P_OPEN),
                pr(&body(&brs[0].1), P_OPEN),
                pr(&body(&brs[1].1), P_OPEN)
            );
            return paren(st, P_OPEN, ctx);
        }
    }
    let mut out = format!("case {} of ", pr(s, P_OPEN));
    for (i, (c, h)) in brs.iter().enumerate() {
        if i > 0 {
            out.push_str(" | ");
        }
        let ar = c.arity();
        let (ps, body) = h.peel_lams();
        let (names, body): (Vec<Name>, Term) = if ps.len() >= ar + 1 {
            let names: Vec<Name> = ps[..ar + 1].iter().map(|(n, _)| (*n).clone()).collect();
            // re-wrap any extra lambdas into the body
            let mut b = body.clone();
            for (x, t) in ps[ar + 1..].iter().rev() {
                b = Term::lam(x, (*t).clone(), b);
            }
            (names, b)
        } else {
            let names: Vec<Name> = (0..=ar).map(|_| fresh_name("y")).collect();
            let b = Term::apps(h.clone(), names.iter().map(|n| Term::var(n)));
            (names, b)
        };
        let self_used = free_vars(&body).contains(&names[ar]);
        let shown: Vec<&Name> = if self_used { names.iter().collect() } else { names[..ar].iter().collect() };
        let pat = if shown.is_empty() {
            c.name()
        } else {
            format!("{}({})", c.name(), shown.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "))
        };
        let last = i + 1 == brs.len();
        let btxt = pr(&body, if last { P_OPEN } else { P_IMP });
        out.push_str(&format!("{pat} => {btxt}"));
    }
    paren(out, P_OPEN, ctx)
}

/// `dom` is true when printing in an arrow-domain position.
fn pt(t: &Type, dom: bool) -> String {
    match t {
        Type::Base(x, b, p) => {
            if p.is_true() {
                b.name().to_string()
            } else {
                format!("{{{}:{} | {}}}", x, b.name(), pr(p, P_OPEN))
            }
        }
        Type::Arrow(x, s, u) => {
            let body = if free_vars_type(u).contains(x) {
                format!("{}:{} -> {}", x, pt(s, true), pt(u, false))
            } else {
                format!("{} -> {}", pt(s, true), pt(u, false))
            };
            if dom {
                format!("({body})")
            } else {
                body
            }
        }
        Type::Exists(x, s, u) => {
            let body = format!("exists {}:{}. {}", x, pt(s, false), pt(u, false));
            if dom {
                format!("({body})")
            } else {
                body
            }
        }
        Type::Var(th, _) if th.is_empty() => "?".into(),
        Type::Var(th, id) => {
            let mut s = String::new();
            for en in &th.0 {
                s.push_str(&format!("[{}:={}]", en.name, pr(&en.term, P_OPEN)));
            }
            format!("{s}?{id}")
        }
        Type::Dynamic => "Dynamic".into(),
    }
}

pub fn print_binding(b: &TopBinding) -> String {
    match &b.ty {
        Some(t) => format!("let {} : {} =\n  {};", b.name, pt(t, false), pr(&b.term, P_OPEN)),
        None => format!("let {} =\n  {};", b.name, pr(&b.term, P_OPEN)),
    }
}

pub fn print_program(p: &SourceProgram) -> String {
    let mut out = String::new();
    for b in &p.bindings {
        out.push_str(&print_binding(b));
        out.push_str("\n\n");
    }
    out.push_str(&pr(&p.main, P_OPEN));
    out.push('\n');
    out
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_term(self))
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_type(self))
    }
}

impl fmt::Display for SourceProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_program(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Term {
        parse_term(s, &[], ParseOptions::default()).unwrap()
    }

    #[test]
    fn lambda_parses_to_unrefined_annotation() {
        let e = t("fun (x:Int) => x + 1");
        let want = Term::lam("x", Type::int(), Term::prim2(Prim::Add, Term::var("x"), Term::int(1)));
        assert!(alpha_eq(&e, &want));
    }

    #[test]
    fn refinement_type_parses() {
        let ty = parse_type("{x:Int | lo <= x && x < hi}", &["lo".into(), "hi".into()], ParseOptions::default()).unwrap();
        assert_eq!(print_type(&ty), "{x:Int | lo <= x && x < hi}");
    }

    #[test]
    fn let_desugars_to_application() {
        let e = t("let w : {n:Int|n=0} = 0 in w");
        match e {
            Term::App(f, a) => {
                assert!(matches!(*f, Term::Lam(ref x, _, _) if x == "w"));
                assert_eq!(*a, Term::int(0));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn unknown_identifier_is_reported() {
        let r = parse_term("fun (x:Int) => y", &[], ParseOptions::default());
        assert!(matches!(r, Err(SyntaxError::UnknownIdentifier { ref name, .. }) if name == "y"));
    }

    #[test]
    fn exists_needs_flag() {
        assert!(parse_type("exists x:Int. {y:Int | y = x}", &[], ParseOptions::default()).is_err());
        let ty = parse_type("exists x:Int. {y:Int | y = x}", &[], ParseOptions { allow_exists: true }).unwrap();
        assert_eq!(print_type(&ty), "exists x:Int. {y:Int | y = x}");
    }

    #[test]
    fn casts_print_with_angle_brackets() {
        let e = t("<Int => {x:Int | x > 0}> 3");
        assert_eq!(print_term(&e), "<Int => {x:Int | 0 < x}> 3");
    }

    #[test]
    fn round_trip_examples() {
        for s in [
            "fun (f:x:Int -> {y:Int | y = x}) => f 3",
            "case cons(1, nil) of nil => 0 | cons(h, t) => h",
            "if 1 < 2 then true else false",
            "let x = 3 in x * x - 1",
            "fix (f:Int -> Int) => fun (n:Int) => if n = 0 then 1 else n * f (n - 1)",
            "true \\/ false /\\ true",
            "not (1 = 2) || 3 <= 4 => false",
            "(-3) + 2",
            "node(0, 10, 5, empty(0, 5), empty(5, 10))",
            "cons 1",
            "(+) 1",
        ] {
            let e = t(s);
            let p = print_term(&e);
            let e2 = t(&p);
            assert!(alpha_eq(&e, &e2), "{s} -> {p}");
        }
    }
}
