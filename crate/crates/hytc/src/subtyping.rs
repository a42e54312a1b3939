//! Three-valued algorithmic subtyping with `Dynamic`.

use crate::ast::*;
use crate::cexdb::CexStore;
use crate::prover::{Certainty, Prover, Witness};
use crate::surface::{print_term, print_type};
use serde::{Deserialize, Serialize};

/// One prover query, as written to `--dump-obligations`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObligationRecord {
    pub env: String,
    pub antecedent: String,
    pub consequent: String,
    pub result: Certainty,
}

pub fn render_env(env: &Env) -> String {
    env.entries().iter().map(|(x, t)| format!("{x}:{}", print_type(t))).collect::<Vec<_>>().join(", ")
}

#[derive(Clone, Debug)]
pub struct Verdict {
    pub certainty: Certainty,
    pub witness: Option<Witness>,
    /// The refutation came from the counterexample database.
    pub from_db: bool,
    /// The implication `env ⊢ p ⇒ q` a witness refutes, for replay.
    pub refuted: Option<(Env, Term, Term)>,
}

impl Verdict {
    fn of(c: Certainty) -> Verdict {
        Verdict { certainty: c, witness: None, from_db: false, refuted: None }
    }
}

pub struct Subtyper<'a> {
    pub prover: Prover,
    pub db: Option<&'a CexStore>,
    pub log: Vec<ObligationRecord>,
}

impl<'a> Subtyper<'a> {
    pub fn new(prover: Prover, db: Option<&'a CexStore>) -> Subtyper<'a> {
        Subtyper { prover, db, log: Vec::new() }
    }

    /// Logged implication query.
    pub fn implies(&mut self, env: &Env, p: &Term, q: &Term) -> (Certainty, Option<Witness>) {
        let (c, w) = self.prover.implies(env, p, q);
        self.log.push(ObligationRecord {
            env: render_env(env),
            antecedent: print_term(p),
            consequent: print_term(q),
            result: c,
        });
        (c, w)
    }

    pub fn subtype(&mut self, env: &Env, s: &Type, t: &Type) -> Verdict {
        if let Some(db) = self.db {
            if db.refuted(env, s, t) {
                return Verdict { certainty: Certainty::No, witness: None, from_db: true, refuted: None };
            }
        }
        self.structural(env, s, t)
    }

    fn structural(&mut self, env: &Env, s: &Type, t: &Type) -> Verdict {
        if alpha_eq_type(s, t) {
            return Verdict::of(Certainty::Yes);
        }
        match (s, t) {
            (_, Type::Dynamic) => Verdict::of(Certainty::Yes),
            (Type::Dynamic, _) => Verdict::of(Certainty::Maybe),
            (Type::Var(..), _) | (_, Type::Var(..)) => Verdict::of(Certainty::Maybe),
            (Type::Exists(x, s1, u), _) => {
                let x2 = avoid_name(x, &|n| env.contains(n) || free_vars_type(t).contains(n));
                let u = if x2 != *x { rename_type(u, x, &x2) } else { (**u).clone() };
                let env2 = env.extended(&x2, (**s1).clone());
                self.structural(&env2, &u, t)
            }
            (_, Type::Exists(..)) => Verdict::of(Certainty::Maybe),
            (Type::Base(x, b1, p), Type::Base(y, b2, q)) => {
                if b1 != b2 {
                    return Verdict::of(Certainty::No);
                }
                let z = avoid_name(x, &|n| env.contains(n) || free_vars(q).contains(n) || free_vars(p).contains(n));
                let p = subst_term(p, x, &Term::var(&z));
                let q = subst_term(q, y, &Term::var(&z));
                let env2 = env.extended(&z, Type::base(*b1));
                let (c, w) = self.implies(&env2, &p, &q);
                let refuted = (c == Certainty::No).then(|| (env2, p, q));
                Verdict { certainty: c, witness: w, from_db: false, refuted }
            }
            (Type::Arrow(x, s1, s2), Type::Arrow(y, t1, t2)) => {
                let dom = self.subtype(env, t1, s1);
                if dom.certainty == Certainty::No {
                    return dom;
                }
                let z = avoid_name(x, &|n| env.contains(n) || free_vars_type(t2).contains(n) && n != y);
                let s2 = rename_type(s2, x, &z);
                let t2 = rename_type(t2, y, &z);
                let env2 = env.extended(&z, (**t1).clone());
                let cod = self.subtype(&env2, &s2, &t2);
                let c = dom.certainty.meet(cod.certainty);
                if cod.certainty == Certainty::No {
                    return Verdict { certainty: c, ..cod };
                }
                Verdict::of(c)
            }
            _ => Verdict::of(Certainty::No),
        }
    }
}

/// Subtyping with a default prover and no database.
pub fn subtype(env: &Env, s: &Type, t: &Type) -> Certainty {
    Subtyper::new(Prover::default(), None).subtype(env, s, t).certainty
}
