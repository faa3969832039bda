//! Symbolic message algebra: sorts, terms, substitutions, the syntactic
//! subterm relation, matching, and Diffie-Hellman normal forms.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::config::SemanticsConfig;
use crate::error::{Error, Result};

pub type Name = Arc<str>;

pub fn name(s: &str) -> Name {
    Arc::from(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sort {
    Agent,
    Nonce,
    SymKey,
    AsymKey,
    DhPriv,
    DhPub,
    DhShared,
    HashVal,
    SigVal,
    Ciphertext,
    Tuple,
    Message,
}

impl Sort {
    pub const ALL: [Sort; 12] = [
        Sort::Agent,
        Sort::Nonce,
        Sort::SymKey,
        Sort::AsymKey,
        Sort::DhPriv,
        Sort::DhPub,
        Sort::DhShared,
        Sort::HashVal,
        Sort::SigVal,
        Sort::Ciphertext,
        Sort::Tuple,
        Sort::Message,
    ];

    /// `message` is the top sort; there are no other subsort relations.
    pub fn is_subsort_of(self, other: Sort) -> bool {
        self == other || other == Sort::Message
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sort::Agent => "agent",
            Sort::Nonce => "nonce",
            Sort::SymKey => "symkey",
            Sort::AsymKey => "asymkey",
            Sort::DhPriv => "dhpriv",
            Sort::DhPub => "dhpub",
            Sort::DhShared => "dhshared",
            Sort::HashVal => "hashval",
            Sort::SigVal => "sigval",
            Sort::Ciphertext => "ciphertext",
            Sort::Tuple => "tuple",
            Sort::Message => "message",
        }
    }

    pub fn parse(s: &str) -> Option<Sort> {
        Sort::ALL.into_iter().find(|sort| sort.as_str() == s)
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var {
    pub name: Name,
    pub sort: Sort,
}

impl Var {
    pub fn new(n: &str, sort: Sort) -> Self {
        Var { name: name(n), sort }
    }
}

/// A fresh value. `thread` is `None` for the intruder's own values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Nonce {
    pub label: Name,
    pub thread: Option<u32>,
    pub sort: Sort,
}

/// Terms are immutable trees with shared children.
///
/// The derived `Ord` compares by constructor tag, then children, then atom
/// names; it is the canonical order used for Diffie-Hellman normal forms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Agent(Name),
    Nonce(Nonce),
    Const(Name, Sort),
    Var(Var),
    /// Long-term symmetric key shared by two agents, `k(A,B)`.
    SymKey(Arc<Term>, Arc<Term>),
    PubKey(Arc<Term>),
    PrivKey(Arc<Term>),
    /// Pairs; n-ary tuples nest to the right.
    Tuple(Arc<Term>, Arc<Term>),
    Enc(Arc<Term>, Arc<Term>),
    /// Payload and signing agent.
    Sig(Arc<Term>, Arc<Term>),
    Hash(Arc<Term>, Arc<Term>),
    /// `g(a)`
    DhG(Arc<Term>),
    /// `h(a,b)`
    DhH(Arc<Term>, Arc<Term>),
}

impl Term {
    pub fn agent(n: &str) -> Term {
        Term::Agent(name(n))
    }

    pub fn nonce(label: &str, thread: Option<u32>, sort: Sort) -> Term {
        Term::Nonce(Nonce {
            label: name(label),
            thread,
            sort,
        })
    }

    pub fn constant(n: &str, sort: Sort) -> Term {
        Term::Const(name(n), sort)
    }

    pub fn var(n: &str, sort: Sort) -> Term {
        Term::Var(Var::new(n, sort))
    }

    pub fn sym_key(a: Term, b: Term) -> Term {
        Term::SymKey(Arc::new(a), Arc::new(b))
    }

    pub fn pk(a: Term) -> Term {
        Term::PubKey(Arc::new(a))
    }

    pub fn sk(a: Term) -> Term {
        Term::PrivKey(Arc::new(a))
    }

    pub fn pair(a: Term, b: Term) -> Term {
        Term::Tuple(Arc::new(a), Arc::new(b))
    }

    /// Builds a right-nested tuple; a single element is returned as is.
    pub fn tuple(mut items: Vec<Term>) -> Term {
        assert!(!items.is_empty(), "empty tuple");
        let mut acc = items.pop().unwrap();
        while let Some(t) = items.pop() {
            acc = Term::pair(t, acc);
        }
        acc
    }

    pub fn enc(payload: Term, key: Term) -> Term {
        Term::Enc(Arc::new(payload), Arc::new(key))
    }

    pub fn sig(payload: Term, signer: Term) -> Term {
        Term::Sig(Arc::new(payload), Arc::new(signer))
    }

    pub fn hash(payload: Term, key: Term) -> Term {
        Term::Hash(Arc::new(payload), Arc::new(key))
    }

    pub fn g(a: Term) -> Term {
        Term::DhG(Arc::new(a))
    }

    pub fn h(a: Term, b: Term) -> Term {
        Term::DhH(Arc::new(a), Arc::new(b))
    }

    /// Sort of a ground term (variables report their declared sort).
    pub fn sort(&self) -> Sort {
        match self {
            Term::Agent(_) => Sort::Agent,
            Term::Nonce(n) => n.sort,
            Term::Const(_, s) => *s,
            Term::Var(v) => v.sort,
            Term::SymKey(..) => Sort::SymKey,
            Term::PubKey(_) | Term::PrivKey(_) => Sort::AsymKey,
            Term::Tuple(..) => Sort::Tuple,
            Term::Enc(..) => Sort::Ciphertext,
            Term::Sig(..) => Sort::SigVal,
            Term::Hash(..) => Sort::HashVal,
            Term::DhG(_) => Sort::DhPub,
            Term::DhH(..) => Sort::DhShared,
        }
    }

    pub fn children(&self) -> Vec<&Term> {
        match self {
            Term::Agent(_) | Term::Nonce(_) | Term::Const(..) | Term::Var(_) => vec![],
            Term::PubKey(a) | Term::PrivKey(a) | Term::DhG(a) => vec![a],
            Term::SymKey(a, b)
            | Term::Tuple(a, b)
            | Term::Enc(a, b)
            | Term::Sig(a, b)
            | Term::Hash(a, b)
            | Term::DhH(a, b) => vec![a, b],
        }
    }

    fn rebuild(&self, mut f: impl FnMut(&Term) -> Term) -> Term {
        let a = |t: &Arc<Term>, f: &mut dyn FnMut(&Term) -> Term| Arc::new(f(t));
        match self {
            Term::Agent(_) | Term::Nonce(_) | Term::Const(..) | Term::Var(_) => self.clone(),
            Term::PubKey(x) => Term::PubKey(a(x, &mut f)),
            Term::PrivKey(x) => Term::PrivKey(a(x, &mut f)),
            Term::DhG(x) => Term::DhG(a(x, &mut f)),
            Term::SymKey(x, y) => Term::SymKey(a(x, &mut f), a(y, &mut f)),
            Term::Tuple(x, y) => Term::Tuple(a(x, &mut f), a(y, &mut f)),
            Term::Enc(x, y) => Term::Enc(a(x, &mut f), a(y, &mut f)),
            Term::Sig(x, y) => Term::Sig(a(x, &mut f), a(y, &mut f)),
            Term::Hash(x, y) => Term::Hash(a(x, &mut f), a(y, &mut f)),
            Term::DhH(x, y) => Term::DhH(a(x, &mut f), a(y, &mut f)),
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            _ => self.children().into_iter().all(Term::is_ground),
        }
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        if let Term::Var(v) = self {
            if !out.contains(v) {
                out.push(v.clone());
            }
        }
        for c in self.children() {
            c.collect_vars(out);
        }
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        1 + self.children().into_iter().map(Term::size).sum::<usize>()
    }

    /// Height of the tree; atoms have depth 0.
    pub fn depth(&self) -> usize {
        self.children()
            .into_iter()
            .map(|c| c.depth() + 1)
            .max()
            .unwrap_or(0)
    }

    /// All subterms, pre-order, the term itself first.
    pub fn subterms(&self) -> Vec<&Term> {
        let mut out = vec![self];
        let mut i = 0;
        while i < out.len() {
            let t = out[i];
            out.extend(t.children());
            i += 1;
        }
        out
    }

    /// Flattened view of a right-nested tuple.
    pub fn tuple_items(&self) -> Vec<&Term> {
        let mut items = Vec::new();
        let mut cur = self;
        while let Term::Tuple(a, b) = cur {
            items.push(&**a);
            cur = b;
        }
        items.push(cur);
        items
    }

    pub fn is_atomic(&self) -> bool {
        matches!(
            self,
            Term::Agent(_) | Term::Nonce(_) | Term::Const(..) | Term::Var(_)
        )
    }
}

fn fmt_key(t: &Term, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if matches!(t, Term::Tuple(..)) {
        write!(f, "({t})")
    } else {
        write!(f, "{t}")
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Agent(n) | Term::Const(n, _) => f.write_str(n),
            Term::Var(v) => f.write_str(&v.name),
            Term::Nonce(n) => match n.thread {
                Some(t) => write!(f, "{}#{}", n.label, t),
                None => write!(f, "{}#I", n.label),
            },
            Term::SymKey(a, b) => write!(f, "k({a},{b})"),
            Term::PubKey(a) => write!(f, "pk({a})"),
            Term::PrivKey(a) => write!(f, "sk({a})"),
            Term::Tuple(..) => {
                f.write_str("(")?;
                for (i, item) in self.tuple_items().into_iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
            Term::Enc(m, k) => {
                write!(f, "enc{{{m}}}")?;
                fmt_key(k, f)
            }
            Term::Sig(m, k) => {
                write!(f, "sig{{{m}}}")?;
                fmt_key(k, f)
            }
            Term::Hash(m, k) => {
                write!(f, "hash{{{m}}}")?;
                fmt_key(k, f)
            }
            Term::DhG(a) => write!(f, "g({a})"),
            Term::DhH(a, b) => write!(f, "h({a},{b})"),
        }
    }
}

impl Serialize for Term {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Finite map from variable names to ground terms.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Substitution(BTreeMap<Name, Term>);

impl Substitution {
    pub fn new() -> Self {
        Substitution(BTreeMap::new())
    }

    pub fn get(&self, var: &str) -> Option<&Term> {
        self.0.get(var)
    }

    pub fn contains(&self, var: &str) -> bool {
        self.0.contains_key(var)
    }

    pub fn bind(&mut self, var: Name, value: Term) {
        self.0.insert(var, value);
    }

    pub fn with(mut self, var: &str, value: Term) -> Self {
        self.0.insert(name(var), value);
        self
    }

    pub fn remove(&mut self, var: &str) {
        self.0.remove(var);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &Term)> {
        self.0.iter()
    }

    pub fn values(&self) -> impl Iterator<Item = &Term> {
        self.0.values()
    }
}

impl FromIterator<(Name, Term)> for Substitution {
    fn from_iter<I: IntoIterator<Item = (Name, Term)>>(iter: I) -> Self {
        Substitution(iter.into_iter().collect())
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k} -> {v}")?;
        }
        f.write_str("}")
    }
}

fn require_ground(t: &Term) -> Result<()> {
    if t.is_ground() {
        Ok(())
    } else {
        Err(Error::NotGround(t.to_string()))
    }
}

/// Rewrites every `h(x,y)` so its arguments appear in canonical order.
/// The identity when the theory is off.
pub fn normalize_dh(t: &Term, config: &SemanticsConfig) -> Term {
    if !config.dh_theory {
        return t.clone();
    }
    normalize(t)
}

fn normalize(t: &Term) -> Term {
    match t {
        Term::DhH(a, b) => {
            let (a, b) = (normalize(a), normalize(b));
            if b < a {
                Term::h(b, a)
            } else {
                Term::h(a, b)
            }
        }
        _ if t.is_atomic() => t.clone(),
        _ => t.rebuild(normalize),
    }
}

/// Syntactic subterm relation, descending through key positions as well.
pub fn contains(outer: &Term, inner: &Term, config: &SemanticsConfig) -> Result<bool> {
    require_ground(outer)?;
    require_ground(inner)?;
    let outer = normalize_dh(outer, config);
    let inner = normalize_dh(inner, config);
    Ok(contains_raw(&outer, &inner))
}

/// `contains` on terms already in normal form.
pub(crate) fn contains_raw(outer: &Term, inner: &Term) -> bool {
    outer == inner || outer.children().into_iter().any(|c| contains_raw(c, inner))
}

pub fn equal_mod_theory(t1: &Term, t2: &Term, config: &SemanticsConfig) -> bool {
    if config.dh_theory {
        normalize(t1) == normalize(t2)
    } else {
        t1 == t2
    }
}

/// Extends `partial` so that `pattern` instantiated equals `ground`
/// modulo the active theory. Returns the first solution.
pub fn match_term(
    pattern: &Term,
    ground: &Term,
    partial: &Substitution,
    config: &SemanticsConfig,
) -> Result<Option<Substitution>> {
    require_ground(ground)?;
    let ground = normalize_dh(ground, config);
    Ok(match_all(pattern, &ground, partial, config.typed, config.dh_theory)
        .into_iter()
        .next())
}

/// Every extension of `partial` matching `pattern` against `ground`.
///
/// `ground` must already be in normal form when `dh` is set. Solutions are
/// deduplicated and returned in deterministic order, canonical `h`
/// orientation first.
pub fn match_all(
    pattern: &Term,
    ground: &Term,
    partial: &Substitution,
    typed: bool,
    dh: bool,
) -> Vec<Substitution> {
    let mut out = Vec::new();
    match_into(pattern, ground, partial.clone(), typed, dh, &mut out);
    if out.len() > 1 {
        let mut seen = std::collections::HashSet::new();
        out.retain(|s| seen.insert(s.clone()));
    }
    out
}

fn match_into(
    pattern: &Term,
    ground: &Term,
    sub: Substitution,
    typed: bool,
    dh: bool,
    out: &mut Vec<Substitution>,
) {
    match (pattern, ground) {
        (Term::Var(v), _) => {
            if let Some(bound) = sub.get(&v.name) {
                let same = if dh {
                    normalize(bound) == *ground
                } else {
                    bound == ground
                };
                if same {
                    out.push(sub);
                }
            } else if !typed || ground.sort().is_subsort_of(v.sort) {
                let mut sub = sub;
                sub.bind(v.name.clone(), ground.clone());
                out.push(sub);
            }
        }
        (Term::DhH(p1, p2), Term::DhH(g1, g2)) if dh => {
            match_pair(p1, p2, g1, g2, sub.clone(), typed, dh, out);
            match_pair(p1, p2, g2, g1, sub, typed, dh, out);
        }
        _ if pattern.is_atomic() => {
            if pattern == ground {
                out.push(sub);
            }
        }
        _ => {
            if std::mem::discriminant(pattern) != std::mem::discriminant(ground) {
                return;
            }
            let pc = pattern.children();
            let gc = ground.children();
            match (pc.len(), gc.len()) {
                (1, 1) => match_into(pc[0], gc[0], sub, typed, dh, out),
                (2, 2) => match_pair(pc[0], pc[1], gc[0], gc[1], sub, typed, dh, out),
                _ => {}
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn match_pair(
    p1: &Term,
    p2: &Term,
    g1: &Term,
    g2: &Term,
    sub: Substitution,
    typed: bool,
    dh: bool,
    out: &mut Vec<Substitution>,
) {
    let mut firsts = Vec::new();
    match_into(p1, g1, sub, typed, dh, &mut firsts);
    for s in firsts {
        match_into(p2, g2, s, typed, dh, out);
    }
}

/// Homomorphic replacement of bound variables; the result is normalized
/// under the active theory. With `full` set, an unbound variable is an
/// error; otherwise it is left in place.
pub fn apply(subst: &Substitution, t: &Term, config: &SemanticsConfig, full: bool) -> Result<Term> {
    let out = apply_raw(subst, t, full)?;
    Ok(normalize_dh(&out, config))
}

pub(crate) fn apply_raw(subst: &Substitution, t: &Term, full: bool) -> Result<Term> {
    match t {
        Term::Var(v) => match subst.get(&v.name) {
            Some(value) => Ok(value.clone()),
            None if full => Err(Error::UnboundVariable(v.name.to_string())),
            None => Ok(t.clone()),
        },
        _ if t.is_atomic() || t.is_ground() => Ok(t.clone()),
        _ => {
            let mut err = None;
            let out = t.rebuild(|c| match apply_raw(subst, c, full) {
                Ok(x) => x,
                Err(e) => {
                    err.get_or_insert(e);
                    c.clone()
                }
            });
            match err {
                Some(e) => Err(e),
                None => Ok(out),
            }
        }
    }
}
