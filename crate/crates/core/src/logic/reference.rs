//! A deliberately naive evaluator: quantifiers range over whole domains,
//! nothing is cached, and every atom is checked by scanning the run. It
//! exists to cross-check [`super::Evaluator`].

use std::collections::BTreeMap;

use crate::engine::{intruder_agent, GroundAction, Run, ThreadId, INTRUDER};
use crate::error::{Error, Result};
use crate::term::{apply, contains, equal_mod_theory, Name, Substitution, Term};

use super::{hat_name, Atom, ComputesKind, Formula, ProgramStep, ThreadRef, VarKind};

struct Naive<'r> {
    run: &'r Run,
    domain: Vec<Term>,
}

#[derive(Clone, Default)]
struct Scope {
    threads: BTreeMap<Name, ThreadId>,
    terms: Substitution,
}

/// Evaluates a closed formula at the end of the run. Modal programs must
/// be ground once the formula's quantified variables are bound.
pub fn eval_reference(run: &Run, f: &Formula) -> Result<bool> {
    let n = Naive {
        run,
        domain: super::term_domain(run),
    };
    n.eval(f, &Scope::default(), run.len())
}

impl Naive<'_> {
    fn ground(&self, t: &Term, s: &Scope) -> Result<Term> {
        apply(&s.terms, t, &self.run.config, true)
    }

    fn thread(&self, r: &ThreadRef, s: &Scope) -> Result<ThreadId> {
        match r {
            ThreadRef::Id(t) => Ok(*t),
            ThreadRef::Var(n) => s
                .threads
                .get(n)
                .copied()
                .ok_or_else(|| Error::UnboundVariable(n.to_string())),
        }
    }

    /// Positions of events by `tid` witnessing `kind` with term `t`;
    /// intruder sends sit at odd half-steps before their receive.
    fn positions(&self, kind: crate::engine::ActionKind, tid: ThreadId, t: &Term, end: usize) -> Vec<usize> {
        let cfg = &self.run.config;
        let mut out = Vec::new();
        if tid == INTRUDER {
            if kind == crate::engine::ActionKind::Send {
                for (i, m) in self.run.virtual_sends(end) {
                    let items = m.tuple_items();
                    let payload = Term::tuple(items[2..].iter().map(|x| (*x).clone()).collect());
                    if equal_mod_theory(&m, t, cfg) || equal_mod_theory(&payload, t, cfg) {
                        out.push(2 * i);
                    }
                }
            }
            return out;
        }
        for e in self.run.events.iter().take(end) {
            if e.thread == tid && kind.witnessed(&e.action).iter().any(|w| equal_mod_theory(w, t, cfg)) {
                out.push(2 * e.index + 1);
            }
        }
        out
    }

    fn has(&self, tid: ThreadId, t: &Term, end: usize) -> bool {
        let k = self.run.thread_knowledge(tid, end);
        k.derive(t, k.depth())
    }

    fn exposed(outer: &Term, t: &Term) -> bool {
        if outer == t {
            return true;
        }
        if matches!(outer, Term::DhG(_) | Term::DhH(..)) {
            return false;
        }
        outer.children().into_iter().any(|c| Self::exposed(c, t))
    }

    fn fresh(&self, tid: ThreadId, t: &Term, end: usize) -> bool {
        if let Term::DhG(a) = t {
            return self.fresh(tid, a, end);
        }
        let mut generated = false;
        for e in self.run.events.iter().take(end).filter(|e| e.thread == tid) {
            match &e.action {
                GroundAction::New { value, .. } if value == t => generated = true,
                GroundAction::Send { .. } if Self::exposed(&e.action.addressed().unwrap(), t) => return false,
                _ => {}
            }
        }
        tid != INTRUDER && generated
    }

    fn atom(&self, a: &Atom, s: &Scope, end: usize) -> Result<bool> {
        let cfg = &self.run.config;
        Ok(match a {
            Atom::Action(k, x, t) => !self.positions(*k, self.thread(x, s)?, &self.ground(t, s)?, end).is_empty(),
            Atom::Has(x, t) => self.has(self.thread(x, s)?, &self.ground(t, s)?, end),
            Atom::Fresh(x, t) => self.fresh(self.thread(x, s)?, &self.ground(t, s)?, end),
            Atom::Computes(kind, x, t) => {
                let tid = self.thread(x, s)?;
                match (kind, self.ground(t, s)?) {
                    (ComputesKind::Dh | ComputesKind::Any, Term::DhH(a, b)) => {
                        (self.has(tid, &a, end) && self.has(tid, &Term::g((*b).clone()), end))
                            || (self.has(tid, &b, end) && self.has(tid, &Term::g((*a).clone()), end))
                    }
                    (ComputesKind::Hash | ComputesKind::Any, Term::Hash(m, k)) => {
                        self.has(tid, &m, end) && self.has(tid, &k, end)
                    }
                    (ComputesKind::Any, _) => false,
                    (_, other) => {
                        return Err(Error::WrongTermShape {
                            expected: "a DH or hash term",
                            found: other.to_string(),
                        })
                    }
                }
            }
            Atom::Honest(t) => match self.ground(t, s)? {
                Term::Agent(n) => {
                    self.run.protocol.is_honest(&n)
                        && self
                            .run
                            .threads
                            .iter()
                            .filter(|th| th.agent == n)
                            .all(|th| self.run.at_boundary(th.id, end))
                }
                _ => false,
            },
            Atom::Contains(o, i) => contains(&self.ground(o, s)?, &self.ground(i, s)?, cfg)?,
            Atom::Eq(l, r) => equal_mod_theory(&self.ground(l, s)?, &self.ground(r, s)?, cfg),
            Atom::Order(x, y) => {
                let (Atom::Action(ka, xa, ta), Atom::Action(kb, xb, tb)) = (&**x, &**y) else {
                    return Err(Error::IllFormed("`<` orders action predicates only".into()));
                };
                let pa = self.positions(*ka, self.thread(xa, s)?, &self.ground(ta, s)?, end);
                let pb = self.positions(*kb, self.thread(xb, s)?, &self.ground(tb, s)?, end);
                pa.iter().any(|p| pb.iter().any(|q| p < q))
            }
        })
    }

    fn step_holds(&self, step: &ProgramStep, action: &GroundAction, s: &Scope) -> Result<bool> {
        let cfg = &self.run.config;
        let eq = |a: &Term, b: &Term| -> Result<bool> { Ok(equal_mod_theory(&self.ground(a, s)?, b, cfg)) };
        Ok(match (step, action) {
            (ProgramStep::Send(t), GroundAction::Send { msg, .. })
            | (ProgramStep::Receive(t), GroundAction::Receive { msg, .. }) => {
                eq(t, msg)? || eq(t, &action.addressed().unwrap())?
            }
            (ProgramStep::New(t), GroundAction::New { value, .. }) => eq(t, value)?,
            (ProgramStep::Enc { out, payload, key }, GroundAction::Enc { payload: p, key: k, value, .. }) => {
                eq(out, value)? && eq(payload, p)? && eq(key, k)?
            }
            (ProgramStep::Dec { out, cipher, key }, GroundAction::Dec { cipher: c, key: k, value, .. }) => {
                eq(out, value)? && eq(cipher, c)? && eq(key, k)?
            }
            (ProgramStep::Sign { out, payload, signer }, GroundAction::Sign { payload: p, signer: g, value, .. }) => {
                eq(out, value)? && eq(payload, p)? && eq(signer, g)?
            }
            (ProgramStep::Verify { sig, payload, signer }, GroundAction::Verify { sig: g, payload: p, signer: r }) => {
                eq(sig, g)? && eq(payload, p)? && eq(signer, r)?
            }
            _ => false,
        })
    }

    fn eval(&self, f: &Formula, s: &Scope, end: usize) -> Result<bool> {
        Ok(match f {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(a) => self.atom(a, s, end)?,
            Formula::Not(g) => !self.eval(g, s, end)?,
            Formula::And(a, b) => self.eval(a, s, end)? & self.eval(b, s, end)?,
            Formula::Or(a, b) => self.eval(a, s, end)? | self.eval(b, s, end)?,
            Formula::Implies(a, b) => !self.eval(a, s, end)? | self.eval(b, s, end)?,
            Formula::Exists(b, g) | Formula::Forall(b, g) => {
                let exists = matches!(f, Formula::Exists(..));
                let mut scopes = Vec::new();
                match b.kind {
                    VarKind::Thread | VarKind::AnyThread => {
                        let mut ids: Vec<ThreadId> = self.run.threads.iter().map(|t| t.id).collect();
                        if b.kind == VarKind::AnyThread {
                            ids.insert(0, INTRUDER);
                        }
                        for id in ids {
                            let agent = match self.run.thread(id) {
                                Some(t) => Term::Agent(t.agent.clone()),
                                None => Term::Agent(intruder_agent()),
                            };
                            let mut s2 = s.clone();
                            s2.threads.insert(b.name.clone(), id);
                            s2.terms.bind(hat_name(&b.name).into(), agent);
                            scopes.push(s2);
                        }
                    }
                    VarKind::Agent => {
                        for a in self.run.protocol.agents() {
                            let mut s2 = s.clone();
                            s2.terms.bind(b.name.clone(), Term::Agent(a));
                            scopes.push(s2);
                        }
                    }
                    VarKind::Term => {
                        for d in &self.domain {
                            let mut s2 = s.clone();
                            s2.terms.bind(b.name.clone(), d.clone());
                            scopes.push(s2);
                        }
                    }
                }
                let mut acc = !exists;
                for s2 in scopes {
                    let v = self.eval(g, &s2, end)?;
                    acc = if exists { acc | v } else { acc & v };
                }
                acc
            }
            Formula::Modal(m) => {
                let tid = self.thread(&m.thread, s)?;
                let evs: Vec<_> = self.run.events.iter().take(end).filter(|e| e.thread == tid).collect();
                let n = m.program.len();
                let mut ok = true;
                for start in 0..evs.len() {
                    if start + n > evs.len() {
                        break;
                    }
                    let mut all = true;
                    for (k, step) in m.program.iter().enumerate() {
                        all &= self.step_holds(step, &evs[start + k].action, s)?;
                    }
                    if all {
                        let first = evs[start].index;
                        let last = evs[start + n - 1].index + 1;
                        if self.eval(&m.pre, s, first)? && !self.eval(&m.post, s, last)? {
                            ok = false;
                        }
                    }
                }
                ok
            }
        })
    }
}
