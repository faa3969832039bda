//! Formulas about runs: action predicates, knowledge, freshness, honesty,
//! temporal order, quantifiers over threads and terms, and modal triples
//! `pre [program]_X post`.

mod eval;
mod parser;
pub mod reference;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::engine::{ActionKind, ThreadId};
use crate::term::{apply_raw, Name, Substitution, Term};

pub use eval::{
    axiom_instances, counterexample, eval_atom, eval_computes_dh, eval_computes_hash,
    eval_formula, satisfying, term_domain, Env, Evaluator, Instance,
};
pub use parser::{parse_action_pattern, parse_formula, parse_schema, parse_schemas};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    /// An honest thread of the run.
    Thread,
    /// Any thread, the intruder included; written `thread*`.
    AnyThread,
    Agent,
    Term,
}

impl VarKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VarKind::Thread => "thread",
            VarKind::AnyThread => "thread*",
            VarKind::Agent => "agent",
            VarKind::Term => "term",
        }
    }

    pub fn is_thread(self) -> bool {
        matches!(self, VarKind::Thread | VarKind::AnyThread)
    }
}

impl fmt::Display for VarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Binder {
    pub name: Name,
    pub kind: VarKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ThreadRef {
    Var(Name),
    /// A concrete thread of a run; `#0` is the intruder.
    Id(ThreadId),
}

impl fmt::Display for ThreadRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThreadRef::Var(n) => f.write_str(n),
            ThreadRef::Id(id) => write!(f, "#{id}"),
        }
    }
}

/// Which definition of `Computes` applies; `Any` picks one from the
/// shape of the term once it is ground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ComputesKind {
    Any,
    Dh,
    Hash,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Atom {
    Action(ActionKind, ThreadRef, Term),
    Has(ThreadRef, Term),
    Fresh(ThreadRef, Term),
    Computes(ComputesKind, ThreadRef, Term),
    Honest(Term),
    Contains(Term, Term),
    Eq(Term, Term),
    /// Both atoms have witnessing events, the first strictly earlier.
    Order(Box<Atom>, Box<Atom>),
}

/// One step of a modal program.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ProgramStep {
    Send(Term),
    Receive(Term),
    New(Term),
    Enc { out: Term, payload: Term, key: Term },
    Dec { out: Term, cipher: Term, key: Term },
    Sign { out: Term, payload: Term, signer: Term },
    Verify { sig: Term, payload: Term, signer: Term },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Modal {
    pub pre: Formula,
    pub program: Vec<ProgramStep>,
    pub thread: ThreadRef,
    pub post: Formula,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Atom(Atom),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Exists(Binder, Box<Formula>),
    Forall(Binder, Box<Formula>),
    Modal(Box<Modal>),
}

impl Formula {
    pub fn atom(a: Atom) -> Formula {
        Formula::Atom(a)
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    /// Free variable names in first-occurrence order. A hat `^X` counts as
    /// an occurrence of `X`.
    pub fn free_vars(&self) -> Vec<Name> {
        let mut out = Vec::new();
        free_in_formula(self, &mut Vec::new(), &mut out);
        out
    }

    /// Replaces free thread variables by thread ids and free term and
    /// agent variables by their values. Hats of bound threads become the
    /// executing agent, which `env` is expected to carry under `^X`.
    pub fn close(&self, threads: &BTreeMap<Name, ThreadId>, terms: &Substitution) -> Formula {
        close_formula(self, threads, terms)
    }
}

impl Atom {
    /// Free variable names, hats counted as their thread.
    pub fn free_vars(&self) -> Vec<Name> {
        let mut out = Vec::new();
        free_in_atom(self, &[], &mut out);
        out
    }
}

/// A named, universally closed formula.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub kind: SchemaKind,
    pub name: String,
    pub vars: Vec<Binder>,
    pub body: Formula,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaKind {
    Axiom,
    Invariant,
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kw = match self.kind {
            SchemaKind::Axiom => "axiom",
            SchemaKind::Invariant => "invariant",
        };
        write!(f, "{kw} {} [", self.name)?;
        for (i, b) in self.vars.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}:{}", b.name, b.kind)?;
        }
        write!(f, "] : {};", self.body)
    }
}

pub(crate) fn hat_name(thread: &str) -> String {
    format!("^{thread}")
}

fn term_free(t: &Term, bound: &[Name], out: &mut Vec<Name>) {
    for v in t.vars() {
        let n: Name = match v.name.strip_prefix('^') {
            Some(x) => x.into(),
            None => v.name.clone(),
        };
        if !bound.contains(&n) && !out.contains(&n) {
            out.push(n);
        }
    }
}

fn thread_free(r: &ThreadRef, bound: &[Name], out: &mut Vec<Name>) {
    if let ThreadRef::Var(n) = r {
        if !bound.contains(n) && !out.contains(n) {
            out.push(n.clone());
        }
    }
}

fn free_in_atom(a: &Atom, bound: &[Name], out: &mut Vec<Name>) {
    match a {
        Atom::Action(_, x, t) | Atom::Has(x, t) | Atom::Fresh(x, t) | Atom::Computes(_, x, t) => {
            thread_free(x, bound, out);
            term_free(t, bound, out);
        }
        Atom::Honest(t) => term_free(t, bound, out),
        Atom::Contains(a, b) | Atom::Eq(a, b) => {
            term_free(a, bound, out);
            term_free(b, bound, out);
        }
        Atom::Order(a, b) => {
            free_in_atom(a, bound, out);
            free_in_atom(b, bound, out);
        }
    }
}

fn free_in_formula(f: &Formula, bound: &mut Vec<Name>, out: &mut Vec<Name>) {
    match f {
        Formula::True | Formula::False => {}
        Formula::Atom(a) => free_in_atom(a, bound, out),
        Formula::Not(g) => free_in_formula(g, bound, out),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            free_in_formula(a, bound, out);
            free_in_formula(b, bound, out);
        }
        Formula::Exists(b, g) | Formula::Forall(b, g) => {
            bound.push(b.name.clone());
            free_in_formula(g, bound, out);
            bound.pop();
        }
        Formula::Modal(m) => {
            thread_free(&m.thread, bound, out);
            for s in &m.program {
                for t in s.terms() {
                    term_free(t, bound, out);
                }
            }
            free_in_formula(&m.pre, bound, out);
            free_in_formula(&m.post, bound, out);
        }
    }
}

impl ProgramStep {
    pub fn terms(&self) -> Vec<&Term> {
        match self {
            ProgramStep::Send(t) | ProgramStep::Receive(t) | ProgramStep::New(t) => vec![t],
            ProgramStep::Enc { out, payload, key } => vec![out, payload, key],
            ProgramStep::Dec { out, cipher, key } => vec![out, cipher, key],
            ProgramStep::Sign { out, payload, signer } => vec![out, payload, signer],
            ProgramStep::Verify { sig, payload, signer } => vec![sig, payload, signer],
        }
    }

    fn map(&self, f: impl Fn(&Term) -> Term) -> ProgramStep {
        match self {
            ProgramStep::Send(t) => ProgramStep::Send(f(t)),
            ProgramStep::Receive(t) => ProgramStep::Receive(f(t)),
            ProgramStep::New(t) => ProgramStep::New(f(t)),
            ProgramStep::Enc { out, payload, key } => ProgramStep::Enc {
                out: f(out),
                payload: f(payload),
                key: f(key),
            },
            ProgramStep::Dec { out, cipher, key } => ProgramStep::Dec {
                out: f(out),
                cipher: f(cipher),
                key: f(key),
            },
            ProgramStep::Sign { out, payload, signer } => ProgramStep::Sign {
                out: f(out),
                payload: f(payload),
                signer: f(signer),
            },
            ProgramStep::Verify { sig, payload, signer } => ProgramStep::Verify {
                sig: f(sig),
                payload: f(payload),
                signer: f(signer),
            },
        }
    }
}

struct Closer {
    threads: BTreeMap<Name, ThreadId>,
    terms: Substitution,
}

impl Closer {
    fn shadow(&self, name: &Name) -> Closer {
        let mut threads = self.threads.clone();
        let mut terms = self.terms.clone();
        threads.remove(name);
        terms.remove(name);
        terms.remove(&hat_name(name));
        Closer { threads, terms }
    }

    fn term(&self, t: &Term) -> Term {
        apply_raw(&self.terms, t, false).unwrap_or_else(|_| t.clone())
    }

    fn thread(&self, r: &ThreadRef) -> ThreadRef {
        match r {
            ThreadRef::Var(n) => match self.threads.get(n) {
                Some(id) => ThreadRef::Id(*id),
                None => r.clone(),
            },
            ThreadRef::Id(_) => r.clone(),
        }
    }

    fn atom(&self, a: &Atom) -> Atom {
        match a {
            Atom::Action(k, x, t) => Atom::Action(*k, self.thread(x), self.term(t)),
            Atom::Has(x, t) => Atom::Has(self.thread(x), self.term(t)),
            Atom::Fresh(x, t) => Atom::Fresh(self.thread(x), self.term(t)),
            Atom::Computes(k, x, t) => Atom::Computes(*k, self.thread(x), self.term(t)),
            Atom::Honest(t) => Atom::Honest(self.term(t)),
            Atom::Contains(a, b) => Atom::Contains(self.term(a), self.term(b)),
            Atom::Eq(a, b) => Atom::Eq(self.term(a), self.term(b)),
            Atom::Order(a, b) => Atom::Order(Box::new(self.atom(a)), Box::new(self.atom(b))),
        }
    }

    fn formula(&self, f: &Formula) -> Formula {
        match f {
            Formula::True | Formula::False => f.clone(),
            Formula::Atom(a) => Formula::Atom(self.atom(a)),
            Formula::Not(g) => Formula::not(self.formula(g)),
            Formula::And(a, b) => Formula::and(self.formula(a), self.formula(b)),
            Formula::Or(a, b) => Formula::or(self.formula(a), self.formula(b)),
            Formula::Implies(a, b) => Formula::implies(self.formula(a), self.formula(b)),
            Formula::Exists(b, g) => Formula::Exists(b.clone(), Box::new(self.shadow(&b.name).formula(g))),
            Formula::Forall(b, g) => Formula::Forall(b.clone(), Box::new(self.shadow(&b.name).formula(g))),
            Formula::Modal(m) => Formula::Modal(Box::new(Modal {
                pre: self.formula(&m.pre),
                program: m.program.iter().map(|s| s.map(|t| self.term(t))).collect(),
                thread: self.thread(&m.thread),
                post: self.formula(&m.post),
            })),
        }
    }
}

fn close_formula(f: &Formula, threads: &BTreeMap<Name, ThreadId>, terms: &Substitution) -> Formula {
    Closer {
        threads: threads.clone(),
        terms: terms.clone(),
    }
    .formula(f)
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Action(k, x, t) => write!(f, "{}({x}, {t})", k.as_str()),
            Atom::Has(x, t) => write!(f, "Has({x}, {t})"),
            Atom::Fresh(x, t) => write!(f, "Fresh({x}, {t})"),
            Atom::Computes(_, x, t) => write!(f, "Computes({x}, {t})"),
            Atom::Honest(t) => write!(f, "Honest({t})"),
            Atom::Contains(a, b) => write!(f, "Contains({a}, {b})"),
            Atom::Eq(a, b) => write!(f, "{a} = {b}"),
            Atom::Order(a, b) => write!(f, "{a} < {b}"),
        }
    }
}

impl fmt::Display for ProgramStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProgramStep::Send(t) => write!(f, "send {t}"),
            ProgramStep::Receive(t) => write!(f, "receive {t}"),
            ProgramStep::New(t) => write!(f, "new {t}"),
            ProgramStep::Enc { out, payload, key } => write!(f, "{out} := enc {payload}, {key}"),
            ProgramStep::Dec { out, cipher, key } => write!(f, "{out} := dec {cipher}, {key}"),
            ProgramStep::Sign { out, payload, signer } => {
                write!(f, "{out} := sign {payload}, {signer}")
            }
            ProgramStep::Verify { sig, payload, signer } => {
                write!(f, "verify {sig}, {payload}, {signer}")
            }
        }
    }
}

/// Binding strength used when printing: higher binds tighter.
fn level(f: &Formula) -> u8 {
    match f {
        Formula::Implies(..) => 1,
        Formula::Or(..) => 2,
        Formula::And(..) => 3,
        Formula::Exists(..) | Formula::Forall(..) | Formula::Modal(..) => 0,
        _ => 4,
    }
}

fn write_at(f: &mut fmt::Formatter<'_>, g: &Formula, min: u8) -> fmt::Result {
    if level(g) < min {
        write!(f, "({g})")
    } else {
        write!(f, "{g}")
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => f.write_str("true"),
            Formula::False => f.write_str("false"),
            Formula::Atom(a @ Atom::Order(..)) => write!(f, "({a})"),
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::Not(g) => match &**g {
                Formula::Atom(Atom::Eq(a, b)) => write!(f, "{a} != {b}"),
                _ => {
                    f.write_str("~")?;
                    write_at(f, g, 4)
                }
            },
            Formula::And(a, b) => {
                write_at(f, a, 3)?;
                f.write_str(" & ")?;
                write_at(f, b, 4)
            }
            Formula::Or(a, b) => {
                write_at(f, a, 2)?;
                f.write_str(" | ")?;
                write_at(f, b, 3)
            }
            Formula::Implies(a, b) => {
                write_at(f, a, 2)?;
                f.write_str(" => ")?;
                write_at(f, b, 1)
            }
            Formula::Exists(b, g) | Formula::Forall(b, g) => {
                let q = if matches!(self, Formula::Exists(..)) { "exists" } else { "forall" };
                write!(f, "{q} {} {}. {g}", b.kind, b.name)
            }
            Formula::Modal(m) => {
                if m.pre != Formula::True {
                    write_at(f, &m.pre, 4)?;
                    f.write_str(" ")?;
                }
                f.write_str("[")?;
                for (i, s) in m.program.iter().enumerate() {
                    if i > 0 {
                        f.write_str("; ")?;
                    }
                    write!(f, "{s}")?;
                }
                write!(f, "]_{} ", m.thread)?;
                write_at(f, &m.post, 4)
            }
        }
    }
}
