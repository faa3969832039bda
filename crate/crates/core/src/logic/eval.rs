//! Formula evaluation over runs.
//!
//! Besides plain evaluation, the evaluator can enumerate the bindings of
//! free variables under which a formula takes a given truth value
//! ([`Evaluator::solve`]). Action atoms, `Contains` with a known outer
//! term, `Has`, `Computes` and modal programs propose bindings by
//! matching against the run; everything else falls back to the finite
//! domains: the run's threads, the protocol's agents, and every subterm
//! occurring in the run.

use std::cell::{OnceCell, RefCell};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::rc::Rc;

use indexmap::IndexSet;
use serde::Serialize;

use crate::engine::{intruder_agent, ActionKind, GroundAction, Knowledge, Run, ThreadId, INTRUDER};
use crate::error::{Error, Result};
use crate::term::{apply, contains_raw, match_all, name, normalize_dh, Name, Sort, Substitution, Term};

use super::{hat_name, Atom, Binder, ComputesKind, Formula, Modal, ProgramStep, Schema, ThreadRef, VarKind};

/// Values of free variables: thread variables map to thread ids, term
/// and agent variables to ground terms. Binding thread `X` also binds
/// `^X` to its agent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Env {
    pub threads: BTreeMap<Name, ThreadId>,
    pub terms: Substitution,
}

impl Env {
    pub fn new() -> Self {
        Env::default()
    }

    fn has(&self, n: &str) -> bool {
        self.threads.contains_key(n) || self.terms.contains(n)
    }

    fn unbind(&mut self, n: &str) {
        self.threads.remove(n);
        self.terms.remove(n);
        self.terms.remove(&hat_name(n));
    }

    /// Restores `n` to its value in `outer`, if any.
    fn restore(&mut self, n: &str, outer: &Env) {
        self.unbind(n);
        if let Some(t) = outer.threads.get(n) {
            self.threads.insert(name(n), *t);
        }
        for key in [n.to_string(), hat_name(n)] {
            if let Some(v) = outer.terms.get(&key) {
                self.terms.bind(name(&key), v.clone());
            }
        }
    }
}

impl Serialize for Env {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(None)?;
        for (k, v) in &self.threads {
            m.serialize_entry(&**k, &format!("#{v}"))?;
        }
        for (k, v) in self.terms.iter() {
            if !k.starts_with('^') {
                m.serialize_entry(&**k, &v.to_string())?;
            }
        }
        m.end()
    }
}

/// A schema instance: the bindings and the closed formula they produce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub env: Env,
    pub formula: Formula,
}

type Kinds = BTreeMap<Name, VarKind>;
type Cache<K, V> = RefCell<HashMap<K, Rc<V>>>;

/// Evaluation context for one run, with per-run caches.
pub struct Evaluator<'r> {
    run: &'r Run,
    domain: OnceCell<Vec<Term>>,
    domain_set: OnceCell<HashSet<Term>>,
    knowledge: Cache<(ThreadId, usize), Knowledge>,
    derivable: Cache<(ThreadId, usize), Vec<Term>>,
    virtuals: Cache<usize, Vec<(usize, Term)>>,
}

fn dedup(v: impl IntoIterator<Item = Env>) -> Vec<Env> {
    v.into_iter().collect::<IndexSet<_>>().into_iter().collect()
}

fn payload_of(addressed: &Term) -> Term {
    let items = addressed.tuple_items();
    Term::tuple(items[2..].iter().map(|t| (*t).clone()).collect())
}

/// Occurrence of `t` in `outer` other than below `g(.)` or `h(.,.)`.
fn occurs_exposed(outer: &Term, t: &Term) -> bool {
    outer == t
        || match outer {
            Term::DhG(_) | Term::DhH(..) => false,
            _ => outer.children().into_iter().any(|c| occurs_exposed(c, t)),
        }
}

fn unbound_error(n: &str) -> Error {
    Error::UnboundVariable(n.trim_start_matches('^').to_string())
}

impl<'r> Evaluator<'r> {
    pub fn new(run: &'r Run) -> Self {
        Evaluator {
            run,
            domain: OnceCell::new(),
            domain_set: OnceCell::new(),
            knowledge: RefCell::new(HashMap::new()),
            derivable: RefCell::new(HashMap::new()),
            virtuals: RefCell::new(HashMap::new()),
        }
    }

    pub fn run(&self) -> &Run {
        self.run
    }

    /// Every subterm of the run's events, the intruder's initial knowledge
    /// and the threads' initial knowledge, in first-seen order.
    pub fn domain(&self) -> &[Term] {
        self.domain.get_or_init(|| term_domain(self.run))
    }

    fn knowledge(&self, tid: ThreadId, end: usize) -> Rc<Knowledge> {
        self.knowledge
            .borrow_mut()
            .entry((tid, end))
            .or_insert_with(|| Rc::new(self.run.thread_knowledge(tid, end)))
            .clone()
    }

    fn derivable(&self, tid: ThreadId, end: usize) -> Rc<Vec<Term>> {
        if let Some(d) = self.derivable.borrow().get(&(tid, end)) {
            return d.clone();
        }
        let kn = self.knowledge(tid, end);
        let d: Rc<Vec<Term>> = Rc::new(
            self.domain()
                .iter()
                .filter(|t| kn.derive(t, kn.depth()))
                .cloned()
                .collect(),
        );
        self.derivable.borrow_mut().insert((tid, end), d.clone());
        d
    }

    fn virtuals(&self, end: usize) -> Rc<Vec<(usize, Term)>> {
        self.virtuals
            .borrow_mut()
            .entry(end)
            .or_insert_with(|| Rc::new(self.run.virtual_sends(end)))
            .clone()
    }

    fn has(&self, tid: ThreadId, t: &Term, end: usize) -> bool {
        let kn = self.knowledge(tid, end);
        kn.derive(t, kn.depth())
    }

    fn agent_of(&self, tid: ThreadId) -> Term {
        match self.run.thread(tid) {
            Some(t) => Term::Agent(t.agent.clone()),
            None => Term::Agent(intruder_agent()),
        }
    }

    fn bind_thread(&self, env: &Env, n: &Name, tid: ThreadId) -> Option<Env> {
        let hat = hat_name(n);
        let agent = self.agent_of(tid);
        if let Some(existing) = env.terms.get(&hat) {
            if *existing != agent {
                return None;
            }
        }
        if let Some(existing) = env.threads.get(n) {
            return (*existing == tid).then(|| env.clone());
        }
        let mut e = env.clone();
        e.threads.insert(n.clone(), tid);
        e.terms.bind(name(&hat), agent);
        Some(e)
    }

    fn threads_of(&self, kind: VarKind) -> Vec<ThreadId> {
        let mut out = Vec::new();
        if kind == VarKind::AnyThread {
            out.push(INTRUDER);
        }
        out.extend(self.run.threads.iter().map(|t| t.id));
        out
    }

    /// Whether every term or agent variable that `e` binds beyond `before`
    /// takes a value its quantifier ranges over.
    fn within_domains(&self, e: &Env, before: &Env, kinds: &Kinds) -> bool {
        e.terms.iter().all(|(k, v)| {
            if k.starts_with('^') || before.terms.contains(k) {
                return true;
            }
            match kinds.get(k) {
                Some(VarKind::Agent) => matches!(v, Term::Agent(a) if self.run.protocol.agents().contains(a)),
                Some(VarKind::Term) => self.domain_set().contains(&normalize_dh(v, &self.run.config)),
                _ => true,
            }
        })
    }

    fn domain_set(&self) -> &HashSet<Term> {
        self.domain_set.get_or_init(|| self.domain().iter().cloned().collect())
    }

    fn kind_of(&self, n: &str, kinds: &Kinds) -> Result<VarKind> {
        kinds.get(n).copied().ok_or_else(|| unbound_error(n))
    }

    fn thread_choices(&self, r: &ThreadRef, env: &Env, kinds: &Kinds) -> Result<Vec<(ThreadId, Env)>> {
        match r {
            ThreadRef::Id(t) => Ok(vec![(*t, env.clone())]),
            ThreadRef::Var(n) => {
                if let Some(t) = env.threads.get(n) {
                    return Ok(vec![(*t, env.clone())]);
                }
                let kind = self.kind_of(n, kinds)?;
                Ok(self
                    .threads_of(kind)
                    .into_iter()
                    .filter_map(|t| self.bind_thread(env, n, t).map(|e| (t, e)))
                    .collect())
            }
        }
    }

    fn thread_id(&self, r: &ThreadRef, env: &Env) -> Result<ThreadId> {
        match r {
            ThreadRef::Id(t) => Ok(*t),
            ThreadRef::Var(n) => env.threads.get(n).copied().ok_or_else(|| unbound_error(n)),
        }
    }

    fn ground(&self, t: &Term, env: &Env) -> Result<Term> {
        apply(&env.terms, t, &self.run.config, true).map_err(|e| match e {
            Error::UnboundVariable(n) => unbound_error(&n),
            other => other,
        })
    }

    fn pattern(&self, t: &Term, env: &Env) -> Term {
        apply(&env.terms, t, &self.run.config, false).unwrap_or_else(|_| t.clone())
    }

    fn matches(&self, pattern: &Term, ground: &Term, sub: &Substitution) -> Vec<Substitution> {
        let g = normalize_dh(ground, &self.run.config);
        match_all(pattern, &g, sub, true, self.run.config.dh_theory)
    }

    /// Events witnessing `kind(x, t)` among the first `end` events, with
    /// the bindings each one induces. Positions order real events and the
    /// intruder's virtual sends, which sit just before their receive.
    fn action_witnesses(
        &self,
        kind: ActionKind,
        x: &ThreadRef,
        t: &Term,
        env: &Env,
        kinds: &Kinds,
        end: usize,
    ) -> Result<Vec<(Env, usize)>> {
        let mut out = Vec::new();
        for (tid, env1) in self.thread_choices(x, env, kinds)? {
            let pat = self.pattern(t, &env1);
            if tid == INTRUDER {
                if kind != ActionKind::Send {
                    continue;
                }
                for (i, m) in self.virtuals(end).iter() {
                    for w in [payload_of(m), m.clone()] {
                        for s in self.matches(&pat, &w, &env1.terms) {
                            out.push((Env { threads: env1.threads.clone(), terms: s }, 2 * i));
                        }
                    }
                }
                continue;
            }
            let end = end.min(self.run.events.len());
            for e in self.run.events[..end].iter().filter(|e| e.thread == tid) {
                for w in kind.witnessed(&e.action) {
                    for s in self.matches(&pat, &w, &env1.terms) {
                        out.push((Env { threads: env1.threads.clone(), terms: s }, 2 * e.index + 1));
                    }
                }
            }
        }
        Ok(out)
    }

    fn order_witnesses(&self, a: &Atom, b: &Atom, env: &Env, kinds: &Kinds, end: usize) -> Result<Vec<Env>> {
        let (Atom::Action(ka, xa, ta), Atom::Action(kb, xb, tb)) = (a, b) else {
            return Err(Error::IllFormed("`<` orders action predicates only".into()));
        };
        let mut out = Vec::new();
        for (e1, p1) in self.action_witnesses(*ka, xa, ta, env, kinds, end)? {
            for (e2, p2) in self.action_witnesses(*kb, xb, tb, &e1, kinds, end)? {
                if p1 < p2 {
                    out.push(e2);
                }
            }
        }
        Ok(dedup(out))
    }

    fn fresh(&self, tid: ThreadId, t: &Term, end: usize) -> bool {
        if let Term::DhG(a) = t {
            return self.fresh(tid, a, end);
        }
        if tid == INTRUDER {
            return false;
        }
        let events = &self.run.events[..end.min(self.run.events.len())];
        let mine = || events.iter().filter(|e| e.thread == tid);
        let generated = mine().any(|e| matches!(&e.action, GroundAction::New { value, .. } if value == t));
        generated
            && !mine().any(|e| match &e.action {
                GroundAction::Send { .. } => occurs_exposed(&e.action.addressed().unwrap(), t),
                _ => false,
            })
    }

    fn honest(&self, agent: &Term, end: usize) -> bool {
        let Term::Agent(a) = agent else {
            return false;
        };
        self.run.protocol.is_honest(a)
            && self
                .run
                .threads
                .iter()
                .filter(|t| t.agent == *a)
                .all(|t| self.run.at_boundary(t.id, end))
    }

    fn computes_dh(&self, tid: ThreadId, a: &Term, b: &Term, end: usize) -> bool {
        let cfg = &self.run.config;
        let g = |x: &Term| normalize_dh(&Term::g(x.clone()), cfg);
        (self.has(tid, a, end) && self.has(tid, &g(b), end)) || (self.has(tid, b, end) && self.has(tid, &g(a), end))
    }

    fn computes_hash(&self, tid: ThreadId, m: &Term, k: &Term, end: usize) -> bool {
        self.has(tid, m, end) && self.has(tid, k, end)
    }

    fn eval_atom_at(&self, a: &Atom, env: &Env, kinds: &Kinds, end: usize) -> Result<bool> {
        Ok(match a {
            Atom::Action(k, x, t) => {
                let tid = self.thread_id(x, env)?;
                let t = self.ground(t, env)?;
                !self
                    .action_witnesses(*k, &ThreadRef::Id(tid), &t, env, kinds, end)?
                    .is_empty()
            }
            Atom::Has(x, t) => {
                let tid = self.thread_id(x, env)?;
                self.has(tid, &self.ground(t, env)?, end)
            }
            Atom::Fresh(x, t) => {
                let tid = self.thread_id(x, env)?;
                self.fresh(tid, &self.ground(t, env)?, end)
            }
            Atom::Computes(kind, x, t) => {
                let tid = self.thread_id(x, env)?;
                let t = self.ground(t, env)?;
                match (kind, &t) {
                    (ComputesKind::Dh | ComputesKind::Any, Term::DhH(a, b)) => self.computes_dh(tid, a, b, end),
                    (ComputesKind::Hash | ComputesKind::Any, Term::Hash(m, k)) => {
                        self.computes_hash(tid, m, k, end)
                    }
                    (ComputesKind::Any, _) => false,
                    (ComputesKind::Dh, other) => {
                        return Err(Error::WrongTermShape {
                            expected: "h(a,b)",
                            found: other.to_string(),
                        })
                    }
                    (ComputesKind::Hash, other) => {
                        return Err(Error::WrongTermShape {
                            expected: "hash{m}K",
                            found: other.to_string(),
                        })
                    }
                }
            }
            Atom::Honest(t) => self.honest(&self.ground(t, env)?, end),
            Atom::Contains(o, i) => contains_raw(&self.ground(o, env)?, &self.ground(i, env)?),
            Atom::Eq(a, b) => self.ground(a, env)? == self.ground(b, env)?,
            Atom::Order(a, b) => !self.order_witnesses(a, b, env, kinds, end)?.is_empty(),
        })
    }

    /// Bindings of the variables of `pattern` under which thread `tid`
    /// has the instantiated term, drawn from its analyzed knowledge and
    /// from the derivable part of the domain.
    fn has_subs(&self, p: &Term, sub: Substitution, tid: ThreadId, end: usize, out: &mut Vec<Substitution>) {
        let cfg = &self.run.config;
        let q = apply(&sub, p, cfg, false).unwrap_or_else(|_| p.clone());
        let kn = self.knowledge(tid, end);
        if q.is_ground() {
            if kn.derive(&q, kn.depth()) {
                out.push(sub);
            }
            return;
        }
        if let Term::Var(v) = &q {
            for d in self.derivable(tid, end).iter() {
                if v.sort == Sort::Agent && !matches!(d, Term::Agent(_)) {
                    continue;
                }
                let mut s = sub.clone();
                s.bind(v.name.clone(), d.clone());
                out.push(s);
            }
            return;
        }
        for it in kn.items() {
            out.extend(match_all(&q, it, &sub, true, cfg.dh_theory));
        }
        let groups: Vec<Vec<Term>> = match &q {
            Term::Tuple(a, b) | Term::Enc(a, b) | Term::Hash(a, b) | Term::Sig(a, b) => {
                vec![vec![(**a).clone(), (**b).clone()]]
            }
            Term::DhG(a) => vec![vec![(**a).clone()]],
            Term::DhH(a, b) => {
                let mut g = vec![vec![(**a).clone(), Term::g((**b).clone())]];
                if cfg.dh_theory {
                    g.push(vec![(**b).clone(), Term::g((**a).clone())]);
                }
                g
            }
            _ => vec![],
        };
        for group in groups {
            let mut partial = vec![sub.clone()];
            for child in &group {
                let mut next = Vec::new();
                for s in partial {
                    self.has_subs(child, s, tid, end, &mut next);
                }
                partial = next;
            }
            for s in partial {
                if let Ok(full) = apply(&s, &q, cfg, true) {
                    if kn.derive(&full, kn.depth()) {
                        out.push(s);
                    }
                }
            }
        }
    }

    fn has_envs(&self, tid: ThreadId, p: &Term, env: &Env, end: usize) -> Vec<Env> {
        let mut subs = Vec::new();
        self.has_subs(p, env.terms.clone(), tid, end, &mut subs);
        dedup(subs.into_iter().map(|terms| Env {
            threads: env.threads.clone(),
            terms,
        }))
    }

    /// Every extension of `env` binding the listed variables that are
    /// still free, over their full domains.
    fn extend_all(&self, names: &[Name], env: &Env, kinds: &Kinds) -> Result<Vec<Env>> {
        let mut envs = vec![env.clone()];
        for n in names {
            if env.has(n) {
                continue;
            }
            let kind = self.kind_of(n, kinds)?;
            let mut next = Vec::new();
            for e in envs {
                if e.has(n) {
                    next.push(e);
                    continue;
                }
                match kind {
                    VarKind::Thread | VarKind::AnyThread => {
                        for t in self.threads_of(kind) {
                            next.extend(self.bind_thread(&e, n, t));
                        }
                    }
                    VarKind::Agent => {
                        for a in self.run.protocol.agents() {
                            let mut e2 = e.clone();
                            e2.terms.bind(n.clone(), Term::Agent(a));
                            next.push(e2);
                        }
                    }
                    VarKind::Term => {
                        for d in self.domain() {
                            let mut e2 = e.clone();
                            e2.terms.bind(n.clone(), d.clone());
                            next.push(e2);
                        }
                    }
                }
            }
            envs = next;
        }
        Ok(envs)
    }

    fn solve_atom(&self, a: &Atom, pol: bool, env: &Env, kinds: &Kinds, end: usize) -> Result<Vec<Env>> {
        let vars = a.free_vars();
        if vars.iter().all(|n| env.has(n)) {
            let v = self.eval_atom_at(a, env, kinds, end)?;
            return Ok(if v == pol { vec![env.clone()] } else { vec![] });
        }
        let proposals: Vec<Env> = if !pol {
            vec![env.clone()]
        } else {
            match a {
                Atom::Action(k, x, t) => self
                    .action_witnesses(*k, x, t, env, kinds, end)?
                    .into_iter()
                    .map(|(e, _)| e)
                    .collect(),
                Atom::Order(x, y) => self.order_witnesses(x, y, env, kinds, end)?,
                Atom::Has(x, t) => {
                    let mut out = Vec::new();
                    for (tid, e1) in self.thread_choices(x, env, kinds)? {
                        out.extend(self.has_envs(tid, t, &e1, end));
                    }
                    out
                }
                Atom::Computes(kind, x, t) => {
                    let mut out = Vec::new();
                    for (tid, e1) in self.thread_choices(x, env, kinds)? {
                        let parts: Vec<(Term, Term)> = match (kind, self.pattern(t, &e1)) {
                            (ComputesKind::Dh | ComputesKind::Any, Term::DhH(p, q)) => vec![
                                ((*p).clone(), Term::g((*q).clone())),
                                ((*q).clone(), Term::g((*p).clone())),
                            ],
                            (ComputesKind::Hash | ComputesKind::Any, Term::Hash(m, k)) => {
                                vec![((*m).clone(), (*k).clone())]
                            }
                            _ => {
                                out.push(e1);
                                continue;
                            }
                        };
                        for (first, second) in parts {
                            for e2 in self.has_envs(tid, &first, &e1, end) {
                                out.extend(self.has_envs(tid, &second, &e2, end));
                            }
                        }
                    }
                    out
                }
                Atom::Contains(o, i) if self.pattern(o, env).is_ground() => {
                    let outer = self.pattern(o, env);
                    let inner = self.pattern(i, env);
                    let mut out = Vec::new();
                    for sub in outer.subterms() {
                        for s in match_all(&inner, sub, &env.terms, true, self.run.config.dh_theory) {
                            out.push(Env {
                                threads: env.threads.clone(),
                                terms: s,
                            });
                        }
                    }
                    out
                }
                Atom::Eq(l, r) => {
                    let (l, r) = (self.pattern(l, env), self.pattern(r, env));
                    match (&l, &r) {
                        (Term::Var(v), g) | (g, Term::Var(v)) if g.is_ground() && !v.name.starts_with('^') => {
                            let mut e = env.clone();
                            e.terms.bind(v.name.clone(), g.clone());
                            vec![e]
                        }
                        _ => vec![env.clone()],
                    }
                }
                _ => vec![env.clone()],
            }
        };
        let mut out = Vec::new();
        for p in dedup(proposals) {
            if !self.within_domains(&p, env, kinds) {
                continue;
            }
            for e in self.extend_all(&vars, &p, kinds)? {
                if self.eval_atom_at(a, &e, kinds, end)? == pol {
                    out.push(e);
                }
            }
        }
        Ok(dedup(out))
    }

    fn step_match(&self, step: &ProgramStep, action: &GroundAction) -> Option<(Term, Vec<Term>)> {
        let t3 = |a: &Term, b: &Term, c: &Term| Term::tuple(vec![a.clone(), b.clone(), c.clone()]);
        Some(match (step, action) {
            (ProgramStep::Send(t), GroundAction::Send { msg, .. })
            | (ProgramStep::Receive(t), GroundAction::Receive { msg, .. }) => {
                (t.clone(), vec![msg.clone(), action.addressed().unwrap()])
            }
            (ProgramStep::New(t), GroundAction::New { value, .. }) => (t.clone(), vec![value.clone()]),
            (ProgramStep::Enc { out, payload, key }, GroundAction::Enc { payload: p, key: k, value, .. }) => {
                (t3(out, payload, key), vec![t3(value, p, k)])
            }
            (ProgramStep::Dec { out, cipher, key }, GroundAction::Dec { cipher: c, key: k, value, .. }) => {
                (t3(out, cipher, key), vec![t3(value, c, k)])
            }
            (
                ProgramStep::Sign { out, payload, signer },
                GroundAction::Sign { payload: p, signer: s, value, .. },
            ) => (t3(out, payload, signer), vec![t3(value, p, s)]),
            (ProgramStep::Verify { sig, payload, signer }, GroundAction::Verify { sig: g, payload: p, signer: s }) => {
                (t3(sig, payload, signer), vec![t3(g, p, s)])
            }
            _ => return None,
        })
    }

    /// Contiguous stretches of one thread's events matching the program,
    /// as (bindings, index of the first event, index after the last).
    fn program_matches(&self, m: &Modal, env: &Env, kinds: &Kinds, end: usize) -> Result<Vec<(Env, usize, usize)>> {
        let mut out = Vec::new();
        let end = end.min(self.run.events.len());
        for (tid, e1) in self.thread_choices(&m.thread, env, kinds)? {
            if tid == INTRUDER {
                continue;
            }
            let evs: Vec<_> = self.run.events[..end].iter().filter(|e| e.thread == tid).collect();
            let n = m.program.len();
            for start in 0..evs.len() {
                if start + n > evs.len() {
                    break;
                }
                let mut subs = vec![e1.terms.clone()];
                for (k, step) in m.program.iter().enumerate() {
                    let Some((pat, grounds)) = self.step_match(step, &evs[start + k].action) else {
                        subs.clear();
                        break;
                    };
                    let mut next = Vec::new();
                    for s in &subs {
                        let p = self.pattern(&pat, &Env { threads: BTreeMap::new(), terms: s.clone() });
                        for g in &grounds {
                            next.extend(self.matches(&p, g, s));
                        }
                    }
                    subs = next;
                    if subs.is_empty() {
                        break;
                    }
                }
                let (first, last) = (evs[start].index, evs[start + n - 1].index + 1);
                for s in subs {
                    out.push((
                        Env {
                            threads: e1.threads.clone(),
                            terms: s,
                        },
                        first,
                        last,
                    ));
                }
            }
        }
        Ok(out)
    }

    fn eval_modal(&self, m: &Modal, env: &Env, kinds: &Kinds, end: usize) -> Result<bool> {
        for (e, first, last) in self.program_matches(m, env, kinds, end)? {
            if self.eval_at(&m.pre, &e, kinds, first)? && !self.eval_at(&m.post, &e, kinds, last)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Truth value of `f` after the first `end` events, all free
    /// variables bound by `env`.
    pub fn eval_at(&self, f: &Formula, env: &Env, kinds: &Kinds, end: usize) -> Result<bool> {
        Ok(match f {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(a) => self.eval_atom_at(a, env, kinds, end)?,
            Formula::Not(g) => !self.eval_at(g, env, kinds, end)?,
            Formula::And(a, b) => self.eval_at(a, env, kinds, end)? && self.eval_at(b, env, kinds, end)?,
            Formula::Or(a, b) => self.eval_at(a, env, kinds, end)? || self.eval_at(b, env, kinds, end)?,
            Formula::Implies(a, b) => !self.eval_at(a, env, kinds, end)? || self.eval_at(b, env, kinds, end)?,
            Formula::Exists(b, g) => {
                let (inner, k2) = self.enter(b, env, kinds);
                self.solve(g, true, &inner, &k2, end)?.iter().any(|e| self.completes(b, e))
            }
            Formula::Forall(b, g) => {
                let (inner, k2) = self.enter(b, env, kinds);
                !self.solve(g, false, &inner, &k2, end)?.iter().any(|e| self.completes(b, e))
            }
            Formula::Modal(m) => self.eval_modal(m, env, kinds, end)?,
        })
    }

    /// Whether a partial solution has at least one value for `b`: it
    /// binds `b` already or `b`'s domain is non-empty.
    fn completes(&self, b: &Binder, e: &Env) -> bool {
        e.has(&b.name)
            || match b.kind {
                VarKind::Thread | VarKind::AnyThread => !self.threads_of(b.kind).is_empty(),
                VarKind::Agent => !self.run.protocol.agents().is_empty(),
                VarKind::Term => !self.domain().is_empty(),
            }
    }

    fn enter(&self, b: &Binder, env: &Env, kinds: &Kinds) -> (Env, Kinds) {
        let mut inner = env.clone();
        inner.unbind(&b.name);
        let mut k2 = kinds.clone();
        k2.insert(b.name.clone(), b.kind);
        (inner, k2)
    }

    /// Extensions of `env` under which `f` has truth value `pol` after
    /// the first `end` events.
    ///
    /// Every returned environment makes `f` take that value however its
    /// remaining free variables are chosen, and every total assignment
    /// that does extends one of them. Variables not in `env` must have a
    /// kind in `kinds`.
    pub fn solve(&self, f: &Formula, pol: bool, env: &Env, kinds: &Kinds, end: usize) -> Result<Vec<Env>> {
        match f {
            Formula::True | Formula::False => {
                Ok(if (*f == Formula::True) == pol { vec![env.clone()] } else { vec![] })
            }
            Formula::Atom(a) => self.solve_atom(a, pol, env, kinds, end),
            Formula::Not(g) => self.solve(g, !pol, env, kinds, end),
            Formula::And(a, b) if pol => self.chain(a, true, b, true, env, kinds, end),
            Formula::Or(a, b) if !pol => self.chain(a, false, b, false, env, kinds, end),
            Formula::Implies(a, b) if !pol => self.chain(a, true, b, false, env, kinds, end),
            Formula::And(a, b) | Formula::Or(a, b) => {
                let mut out = self.solve(a, pol, env, kinds, end)?;
                out.extend(self.solve(b, pol, env, kinds, end)?);
                Ok(dedup(out))
            }
            Formula::Implies(a, b) => {
                let mut out = self.solve(a, false, env, kinds, end)?;
                out.extend(self.solve(b, true, env, kinds, end)?);
                Ok(dedup(out))
            }
            Formula::Exists(b, g) | Formula::Forall(b, g) if pol == matches!(f, Formula::Exists(..)) => {
                let (inner, k2) = self.enter(b, env, kinds);
                let mut out = Vec::new();
                for mut e in self.solve(g, pol, &inner, &k2, end)? {
                    if !self.completes(b, &e) {
                        continue;
                    }
                    e.restore(&b.name, env);
                    out.push(e);
                }
                Ok(dedup(out))
            }
            Formula::Modal(m) if !pol => {
                let mut out = Vec::new();
                for (e, first, last) in self.program_matches(m, env, kinds, end)? {
                    for e2 in self.solve(&m.pre, true, &e, kinds, first)? {
                        out.extend(self.solve(&m.post, false, &e2, kinds, last)?);
                    }
                }
                Ok(dedup(out))
            }
            _ => {
                let mut out = Vec::new();
                for e in self.extend_all(&f.free_vars(), env, kinds)? {
                    if self.eval_at(f, &e, kinds, end)? == pol {
                        out.push(e);
                    }
                }
                Ok(out)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn chain(
        &self,
        a: &Formula,
        pa: bool,
        b: &Formula,
        pb: bool,
        env: &Env,
        kinds: &Kinds,
        end: usize,
    ) -> Result<Vec<Env>> {
        let mut out = Vec::new();
        for e in self.solve(a, pa, env, kinds, end)? {
            out.extend(self.solve(b, pb, &e, kinds, end)?);
        }
        Ok(dedup(out))
    }

    /// Evaluates a formula at the end of the run.
    pub fn eval(&self, f: &Formula, env: &Env) -> Result<bool> {
        self.eval_at(f, env, &Kinds::new(), self.run.len())
    }

    fn schema_kinds(vars: &[Binder]) -> Kinds {
        vars.iter().map(|b| (b.name.clone(), b.kind)).collect()
    }

    /// Complete instances of `vars` (in declaration order) extending the
    /// given partial environments.
    fn complete(&self, vars: &[Binder], partial: Vec<Env>) -> Result<Vec<Env>> {
        let kinds = Self::schema_kinds(vars);
        let names: Vec<Name> = vars.iter().map(|b| b.name.clone()).collect();
        let mut out = Vec::new();
        for p in partial {
            out.extend(self.extend_all(&names, &p, &kinds)?);
        }
        Ok(dedup(out))
    }

    /// First instance of the schema that is false on the run, in a
    /// deterministic order.
    pub fn counterexample(&self, schema: &Schema) -> Result<Option<Instance>> {
        let kinds = Self::schema_kinds(&schema.vars);
        let sols = self.solve(&schema.body, false, &Env::new(), &kinds, self.run.len())?;
        for s in sols {
            if let Some(env) = self.complete(&schema.vars, vec![s])?.into_iter().next() {
                let formula = schema.body.close(&env.threads, &env.terms);
                return Ok(Some(Instance { env, formula }));
            }
        }
        Ok(None)
    }
}

/// Every subterm occurring in the run: events, the intruder's initial
/// knowledge and each thread's initial knowledge.
pub fn term_domain(run: &Run) -> Vec<Term> {
    let mut set: IndexSet<Term> = IndexSet::new();
    let cfg = &run.config;
    let mut add = |t: &Term| {
        for s in normalize_dh(t, cfg).subterms() {
            set.insert(s.clone());
        }
    };
    for t in run.initial_intruder.iter() {
        add(t);
    }
    for th in &run.threads {
        add(&Term::Agent(th.agent.clone()));
        for t in run.thread_initial_knowledge(th.id) {
            add(&t);
        }
    }
    for e in &run.events {
        for t in e.action.terms() {
            add(t);
        }
        if let Some(m) = e.action.addressed() {
            add(&m);
        }
    }
    set.into_iter().collect()
}

/// Evaluates a closed formula at the end of the run.
pub fn eval_formula(run: &Run, f: &Formula) -> Result<bool> {
    Evaluator::new(run).eval(f, &Env::new())
}

/// Evaluates one atom at the end of the run; `env` must bind its variables.
pub fn eval_atom(run: &Run, atom: &Atom, env: &Env) -> Result<bool> {
    Evaluator::new(run).eval_atom_at(atom, env, &Kinds::new(), run.len())
}

/// `Computes(X, h(a,b))`: the thread holds one exponent and the other
/// side's public value.
pub fn eval_computes_dh(run: &Run, thread: ThreadId, term: &Term) -> Result<bool> {
    match term {
        Term::DhH(a, b) => Ok(Evaluator::new(run).computes_dh(thread, a, b, run.len())),
        other => Err(Error::WrongTermShape {
            expected: "h(a,b)",
            found: other.to_string(),
        }),
    }
}

/// `Computes(X, hash{m}K)`: the thread holds both the payload and the key.
pub fn eval_computes_hash(run: &Run, thread: ThreadId, term: &Term) -> Result<bool> {
    match term {
        Term::Hash(m, k) => Ok(Evaluator::new(run).computes_hash(thread, m, k, run.len())),
        other => Err(Error::WrongTermShape {
            expected: "hash{m}K",
            found: other.to_string(),
        }),
    }
}

/// All instances of the schema over the run's domains, in declaration
/// order of the variables.
pub fn axiom_instances(run: &Run, schema: &Schema) -> Vec<Formula> {
    let ev = Evaluator::new(run);
    ev.complete(&schema.vars, vec![Env::new()])
        .unwrap_or_default()
        .into_iter()
        .map(|e| schema.body.close(&e.threads, &e.terms))
        .collect()
}

/// First false instance of the schema on the run.
pub fn counterexample(run: &Run, schema: &Schema) -> Result<Option<Instance>> {
    Evaluator::new(run).counterexample(schema)
}

/// Complete assignments of `vars` under which `f` holds at the end of
/// the run.
pub fn satisfying(run: &Run, vars: &[Binder], f: &Formula) -> Result<Vec<Env>> {
    let ev = Evaluator::new(run);
    let kinds = Evaluator::schema_kinds(vars);
    let sols = ev.solve(f, true, &Env::new(), &kinds, run.len())?;
    ev.complete(vars, sols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Bounds, SemanticsConfig};
    use crate::engine::enumerate_runs;
    use crate::logic::{parse_formula, parse_schema};
    use crate::protocol::{parse_protocol, Protocol};

    fn fixture(src: &str) -> Protocol {
        parse_protocol(src).unwrap()
    }

    /// The first run in which every role has a thread and all threads
    /// finished their role.
    fn complete_run(p: &Protocol, config: SemanticsConfig) -> Run {
        enumerate_runs(p, Bounds::new(1, 14, 4), config)
            .unwrap()
            .find(|r| {
                r.threads.len() == p.roles.len()
                    && r.threads.iter().all(|t| t.pc == r.role_of(t).body.len())
            })
            .expect("a complete run exists")
    }

    fn thread_of(run: &Run, role: &str) -> ThreadId {
        run.threads.iter().find(|t| &*t.role == role).unwrap().id
    }

    fn env_with(run: &Run, tid: ThreadId, names: &[&str]) -> Env {
        let th = run.thread(tid).unwrap();
        let mut env = Env::new();
        for n in names {
            env.terms.bind(name(n), th.subst.get(n).unwrap().clone());
        }
        env
    }

    fn term_var(n: &str) -> Binder {
        Binder { name: name(n), kind: VarKind::Term }
    }

    const HASH3: &str = include_str!("../../../../fixtures/hash3.pcl");
    const CR: &str = include_str!("../../../../fixtures/cr.pcl");
    const DH: &str = include_str!("../../../../fixtures/dh_min.pcl");

    #[test]
    fn actions_and_keyed_hash_computation() {
        let p = fixture(HASH3);
        let run = complete_run(&p, SemanticsConfig::default());
        let (init, resp) = (thread_of(&run, "Init"), thread_of(&run, "Resp"));
        let env = env_with(&run, init, &["m"]);
        let vars = [term_var("m")];
        let f = |src: &str| parse_formula(&src.replace("INIT", &format!("#{init}")).replace("RESP", &format!("#{resp}")), &vars, Some(&p)).unwrap();
        let ev = Evaluator::new(&run);
        assert!(ev.eval(&f("Receive(INIT, hash{m}K)"), &env).unwrap());
        assert!(ev.eval(&f("Send(RESP, hash{m}K)"), &env).unwrap());
        assert!(!ev.eval(&f("Send(INIT, hash{m}K)"), &env).unwrap());
        assert!(ev.eval(&f("Send(INIT, enc{hash{m}K}k(A,B))"), &env).unwrap());
        assert!(ev.eval(&f("Has(RESP, hash{m}K) & ~Has(RESP, m)"), &env).unwrap());
        let h = Term::hash(env.terms.get("m").unwrap().clone(), Term::constant("K", Sort::SymKey));
        assert!(eval_computes_hash(&run, init, &h).unwrap());
        assert!(!eval_computes_hash(&run, resp, &h).unwrap());
        assert!(matches!(
            eval_computes_hash(&run, init, &Term::agent("A")),
            Err(Error::WrongTermShape { .. })
        ));
    }

    #[test]
    fn hash3_run_falsifies_hash3_only() {
        let p = fixture(HASH3);
        let run = complete_run(&p, SemanticsConfig::default());
        let schema = |src: &str| parse_schema(src, Some(&p)).unwrap();
        let h3 = schema(
            "axiom HASH3 [X:thread, x:term, K:term] : Receive(X, hash{x}K) => exists thread Y. Computes(Y, hash{x}K) & Send(Y, hash{x}K);",
        );
        let inst = counterexample(&run, &h3).unwrap().expect("HASH3 fails on the complete run");
        assert!(!eval_formula(&run, &inst.formula).unwrap());
        let h2 = schema("axiom HASH2 [X:thread, x:term, K:term] : Computes(X, hash{x}K) => Has(X, hash{x}K);");
        assert!(counterexample(&run, &h2).unwrap().is_none());
    }

    #[test]
    fn quantifiers_over_an_empty_run() {
        let p = fixture(CR);
        let run = enumerate_runs(&p, Bounds::new(1, 14, 4), SemanticsConfig::default()).unwrap().next().unwrap();
        assert!(run.is_empty());
        let f = |s: &str| parse_formula(s, &[], None).unwrap();
        assert!(eval_formula(&run, &f("forall thread X. false")).unwrap());
        assert!(!eval_formula(&run, &f("exists thread X. true")).unwrap());
        assert!(eval_formula(&run, &f("exists thread* X. true")).unwrap());
    }

    #[test]
    fn shared_secret_needs_the_theory_in_reverse_order() {
        let p = fixture(DH);
        for dh in [false, true] {
            let cfg = SemanticsConfig::default().with_dh_theory(dh);
            let run = enumerate_runs(&p, Bounds::new(1, 14, 4), cfg)
                .unwrap()
                .find(|r| {
                    // Init done, with its peer's exponent coming from a responder.
                    let resp_b = r.threads.iter().find(|t| &*t.role == "Resp").and_then(|t| t.subst.get("b"));
                    r.threads.iter().any(|t| &*t.role == "Init" && t.pc == 4 && t.subst.get("b") == resp_b)
                })
                .unwrap();
            let init = thread_of(&run, "Init");
            let th = run.thread(init).unwrap();
            let (a, b) = (th.subst.get("a").unwrap().clone(), th.subst.get("b").unwrap().clone());
            assert!(eval_computes_dh(&run, init, &Term::h(a.clone(), b.clone())).unwrap());
            let env = env_with(&run, init, &["a", "b"]);
            let has = parse_formula(&format!("Has(#{init}, h(b,a))"), &[term_var("a"), term_var("b")], None).unwrap();
            assert_eq!(Evaluator::new(&run).eval(&has, &env).unwrap(), dh);
            assert!(matches!(eval_computes_dh(&run, init, &a), Err(Error::WrongTermShape { .. })));
        }
    }

    #[test]
    fn freshness_ends_with_exposure_but_not_under_g() {
        let dh = fixture(DH);
        let cfg = SemanticsConfig::default().with_dh_theory(true);
        let run = complete_run(&dh, cfg);
        let init = thread_of(&run, "Init");
        let env = env_with(&run, init, &["a"]);
        let vars = [term_var("a")];
        let f = parse_formula(&format!("Fresh(#{init}, a) & Fresh(#{init}, g(a))"), &vars, None).unwrap();
        assert!(Evaluator::new(&run).eval(&f, &env).unwrap());

        let cr = fixture(CR);
        let run = complete_run(&cr, SemanticsConfig::default());
        let init = thread_of(&run, "Init");
        let env = env_with(&run, init, &["m"]);
        let f = parse_formula(&format!("Fresh(#{init}, m)"), &[term_var("m")], None).unwrap();
        assert!(!Evaluator::new(&run).eval(&f, &env).unwrap());
        let first = run.prefix(1);
        assert!(Evaluator::new(&first).eval(&f, &env).unwrap());
    }

    #[test]
    fn signatures_verified_by_an_initiator_were_produced_by_a_thread() {
        let p = fixture(CR);
        let auth = parse_formula(
            "forall thread X. forall term s. Verify(X, s) => exists thread Y. Sign(Y, s) & ^Y != ^X",
            &[],
            None,
        )
        .unwrap();
        let mut verified = 0;
        for run in enumerate_runs(&p, Bounds::new(1, 14, 4), SemanticsConfig::default()).unwrap() {
            verified += usize::from(run.events.iter().any(|e| e.action.keyword() == "verify"));
            assert!(eval_formula(&run, &auth).unwrap(), "{}", run.trace());
        }
        assert!(verified > 0);
    }

    #[test]
    fn instances_follow_declaration_order() {
        let p = fixture(HASH3);
        let run = complete_run(&p, SemanticsConfig::default());
        let closed = parse_schema("axiom T : true;", None).unwrap();
        assert_eq!(axiom_instances(&run, &closed), vec![Formula::True]);
        let s = parse_schema("axiom R [X:thread, t:term] : Receive(X, t);", None).unwrap();
        let all = axiom_instances(&run, &s);
        assert_eq!(all.len(), run.threads.len() * term_domain(&run).len());
        let sat = satisfying(&run, &s.vars, &s.body).unwrap();
        let receives = run.events.iter().filter(|e| e.action.keyword() == "receive").count();
        // Each receive witnesses its payload and its addressed form.
        assert_eq!(sat.len(), 2 * receives);
    }
}
