//! Bounded depth-first enumeration of runs.
//!
//! Local actions (everything except receive) run eagerly as soon as they
//! are enabled, lowest thread id first, so branching happens only at
//! thread starts and receives. States are identified by their threads'
//! positions and bindings; a state reached again through a different
//! interleaving is not expanded twice.

use std::collections::HashSet;
use std::sync::Arc;

use indexmap::IndexSet;

use crate::config::{Bounds, SemanticsConfig};
use crate::error::Result;
use crate::protocol::{Action, Protocol};
use crate::term::{
    apply, equal_mod_theory, match_all, normalize_dh, Name, Substitution, Term, Var,
};

use super::derive::{decryption_key, Knowledge};
use super::run::{Event, GroundAction, Run, ThreadId};

/// Grounds and checks the next non-receive action of a thread. `None`
/// means its guard fails.
fn step_local(run: &Run, tid: ThreadId) -> Option<(GroundAction, Substitution)> {
    let t = run.thread(tid)?;
    let action = run.role_of(t).body.get(t.pc)?;
    let cfg = &run.config;
    let ground = |x: &Term| apply(&t.subst, x, cfg, true).ok();
    let bind = |v: &Var, value: &Term| Substitution::new().with(&v.name, value.clone());
    match action {
        Action::Receive { .. } => None,
        Action::New(v) => {
            let value = Term::nonce(&v.name, Some(tid), v.sort);
            Some((
                GroundAction::New {
                    var: v.name.clone(),
                    value: value.clone(),
                },
                bind(v, &value),
            ))
        }
        Action::Send { from, to, msg } => Some((
            GroundAction::Send {
                from: ground(from)?,
                to: ground(to)?,
                msg: ground(msg)?,
            },
            Substitution::new(),
        )),
        Action::Enc { out, payload, key } => {
            let (payload, key) = (ground(payload)?, ground(key)?);
            let value = normalize_dh(&Term::enc(payload.clone(), key.clone()), cfg);
            if cfg.typed && !value.sort().is_subsort_of(out.sort) {
                return None;
            }
            Some((
                GroundAction::Enc {
                    var: out.name.clone(),
                    payload,
                    key,
                    value: value.clone(),
                },
                bind(out, &value),
            ))
        }
        Action::Dec { out, cipher, key } => {
            let (cipher, key) = (ground(cipher)?, ground(key)?);
            let Term::Enc(payload, used) = &cipher else {
                return None;
            };
            if !equal_mod_theory(used, &key, cfg) {
                return None;
            }
            let dk = decryption_key(&key, cfg.key_scheme);
            let knows = run.thread_knowledge(tid, run.len());
            if !knows.derive(&dk, knows.depth()) {
                return None;
            }
            let value = (**payload).clone();
            if cfg.typed && !value.sort().is_subsort_of(out.sort) {
                return None;
            }
            Some((
                GroundAction::Dec {
                    var: out.name.clone(),
                    cipher: cipher.clone(),
                    key,
                    value: value.clone(),
                },
                bind(out, &value),
            ))
        }
        Action::Sign { out, payload, signer } => {
            let (payload, signer) = (ground(payload)?, ground(signer)?);
            let knows = run.thread_knowledge(tid, run.len());
            if !knows.holds(&Term::sk(signer.clone())) {
                return None;
            }
            let value = normalize_dh(&Term::sig(payload.clone(), signer.clone()), cfg);
            Some((
                GroundAction::Sign {
                    var: out.name.clone(),
                    payload,
                    signer,
                    value: value.clone(),
                },
                bind(out, &value),
            ))
        }
        Action::Verify { sig, payload, signer } => {
            let (sig, payload, signer) = (ground(sig)?, ground(payload)?, ground(signer)?);
            let expected = Term::sig(payload.clone(), signer.clone());
            if !equal_mod_theory(&sig, &expected, cfg) {
                return None;
            }
            Some((GroundAction::Verify { sig, payload, signer }, Substitution::new()))
        }
    }
}

/// Candidate ground messages for a pattern: every way of matching it
/// against terms the intruder holds, or of building it from such terms.
fn gen(p: &Term, sub: Substitution, items: &[Term], typed: bool, dh: bool, out: &mut Vec<Substitution>) {
    match p {
        Term::Var(v) => {
            if sub.contains(&v.name) {
                out.push(sub);
                return;
            }
            for it in items {
                if !typed || it.sort().is_subsort_of(v.sort) {
                    let mut s = sub.clone();
                    s.bind(v.name.clone(), it.clone());
                    out.push(s);
                }
            }
        }
        _ if p.is_ground() => out.push(sub),
        _ => {
            for it in items {
                if std::mem::discriminant(it) == std::mem::discriminant(p) {
                    out.extend(match_all(p, it, &sub, typed, dh));
                }
            }
            let mut partial = vec![sub];
            for child in p.children() {
                let mut next = Vec::new();
                for s in partial {
                    gen(child, s, items, typed, dh, &mut next);
                }
                partial = next;
            }
            out.extend(partial);
        }
    }
}

/// Extra shapes for receive variables that a later verify or decrypt in
/// the same basic sequence pins down.
fn hints(run: &Run, tid: ThreadId, pattern_vars: &[Var]) -> Substitution {
    let t = run.thread(tid).unwrap();
    let body = &run.role_of(t).body;
    let mut out = Substitution::new();
    for action in body.iter().skip(t.pc + 1).take_while(|a| !a.is_receive()) {
        let (var, shape) = match action {
            Action::Verify {
                sig: Term::Var(s),
                payload,
                signer,
            } => (s, Term::sig(payload.clone(), signer.clone())),
            Action::Dec {
                cipher: Term::Var(c),
                key,
                ..
            } => (
                c,
                Term::enc(Term::var(&format!("?{}", c.name), crate::term::Sort::Message), key.clone()),
            ),
            _ => continue,
        };
        if !pattern_vars.contains(var) || out.contains(&var.name) {
            continue;
        }
        if run.config.typed && !shape.sort().is_subsort_of(var.sort) {
            continue;
        }
        if let Ok(shape) = apply(&t.subst, &shape, &run.config, false) {
            out.bind(var.name.clone(), shape);
        }
    }
    out
}

/// Whether delivering a message with bindings `sigma` would make a later
/// verify or decrypt of the same basic sequence fail. Only actions whose
/// terms are already ground are checked.
fn dooms_sequence(run: &Run, tid: ThreadId, sigma: &Substitution) -> bool {
    let t = run.thread(tid).unwrap();
    let cfg = &run.config;
    let mut sub = t.subst.clone();
    for (k, v) in sigma.iter() {
        sub.bind(k.clone(), v.clone());
    }
    let body = &run.role_of(t).body;
    for action in body.iter().skip(t.pc + 1).take_while(|a| !a.is_receive()) {
        match action {
            Action::Verify { sig, payload, signer } => {
                let expected = Term::sig(payload.clone(), signer.clone());
                if let (Ok(s), Ok(e)) = (apply(&sub, sig, cfg, true), apply(&sub, &expected, cfg, true)) {
                    if s != e {
                        return true;
                    }
                }
            }
            Action::Dec { cipher, key, .. } => {
                if let (Ok(c), Ok(k)) = (apply(&sub, cipher, cfg, true), apply(&sub, key, cfg, true)) {
                    match &c {
                        Term::Enc(_, used) if equal_mod_theory(used, &k, cfg) => {}
                        _ => return true,
                    }
                }
            }
            _ => {}
        }
    }
    false
}

/// Receive events available to a thread waiting at a receive.
pub fn receive_candidates(run: &Run, tid: ThreadId, intruder: &Knowledge) -> Vec<(GroundAction, Substitution)> {
    candidates(run, tid, intruder, false)
}

fn candidates(
    run: &Run,
    tid: ThreadId,
    intruder: &Knowledge,
    lookahead: bool,
) -> Vec<(GroundAction, Substitution)> {
    let Some(t) = run.thread(tid) else {
        return vec![];
    };
    let Some(Action::Receive { from, to, pattern }) = run.role_of(t).body.get(t.pc) else {
        return vec![];
    };
    let cfg = &run.config;
    let full = Term::tuple(vec![from.clone(), to.clone(), pattern.clone()]);
    let Ok(full) = apply(&t.subst, &full, cfg, false) else {
        return vec![];
    };
    let vars = full.vars();
    let items: Vec<Term> = intruder.items().iter().cloned().collect();
    let mut shapes = vec![full.clone()];
    let h = hints(run, tid, &vars);
    if !h.is_empty() {
        if let Ok(hinted) = crate::term::apply_raw(&h, &full, false) {
            // Under lookahead every other shape fails the later verify or
            // decrypt, so the hinted shape alone is enough.
            if lookahead {
                shapes.clear();
            }
            shapes.push(hinted);
        }
    }
    let mut messages: IndexSet<Term> = IndexSet::new();
    for shape in &shapes {
        let mut subs = Vec::new();
        gen(shape, Substitution::new(), &items, cfg.typed, cfg.dh_theory, &mut subs);
        for s in subs {
            if let Ok(m) = apply(&s, shape, cfg, true) {
                messages.insert(m);
            }
        }
    }
    let mut out = Vec::new();
    for m in messages {
        if !intruder.derive(&m, run.bounds.max_intruder_depth) {
            continue;
        }
        let items = m.tuple_items();
        let (mf, mt) = (items[0].clone(), items[1].clone());
        let msg = Term::tuple(items[2..].iter().map(|x| (*x).clone()).collect());
        for sigma in match_all(&full, &m, &Substitution::new(), cfg.typed, cfg.dh_theory) {
            if lookahead && dooms_sequence(run, tid, &sigma) {
                continue;
            }
            out.push((
                GroundAction::Receive {
                    from: mf.clone(),
                    to: mt.clone(),
                    msg: msg.clone(),
                },
                sigma,
            ));
        }
    }
    out
}

/// Next events of every live thread in a partial run: one grounded local
/// action, or one receive per derivable matching message.
pub fn enabled_events(run: &Run) -> Vec<Event> {
    let intruder = run.intruder_knowledge(run.len());
    let mut out = Vec::new();
    for t in &run.threads {
        if t.blocked || t.pc >= run.role_of(t).body.len() {
            continue;
        }
        let moves = if run.role_of(t).body[t.pc].is_receive() {
            receive_candidates(run, t.id, &intruder)
        } else {
            step_local(run, t.id).into_iter().collect()
        };
        for (action, bindings) in moves {
            out.push(Event {
                index: run.len(),
                thread: t.id,
                pc: t.pc,
                action,
                bindings,
            });
        }
    }
    out
}

#[derive(Clone)]
struct Node {
    run: Run,
    intruder: Knowledge,
}

impl Node {
    /// Runs pending local actions until every thread waits at a receive,
    /// has finished, or is blocked.
    fn settle(&mut self) {
        while self.run.len() < self.run.bounds.max_run_length {
            let next = self.run.threads.iter().find(|t| {
                !t.blocked
                    && self
                        .run
                        .role_of(t)
                        .body
                        .get(t.pc)
                        .is_some_and(|a| !a.is_receive())
            });
            let Some(tid) = next.map(|t| t.id) else {
                break;
            };
            match step_local(&self.run, tid) {
                Some((action, bindings)) => {
                    if let GroundAction::Send { .. } = action {
                        self.intruder.add(&action.addressed().unwrap());
                    }
                    self.run.push_event(tid, action, bindings);
                }
                None => self.run.threads[tid as usize - 1].blocked = true,
            }
        }
    }

    fn key(&self) -> Vec<(usize, usize, bool, Substitution)> {
        self.run
            .threads
            .iter()
            .map(|t| (t.role_index, t.pc, t.blocked, t.subst.clone()))
            .collect()
    }
}

#[derive(Clone)]
enum Move {
    Spawn {
        role: usize,
        agents: Vec<Name>,
        free: Vec<Term>,
    },
    Receive {
        /// `None` for a thread spawned by this very move.
        thread: Option<ThreadId>,
        spawn: Option<(usize, Vec<Name>, Vec<Term>)>,
        action: GroundAction,
        bindings: Substitution,
    },
}

enum Pending {
    Root,
    Child(Arc<Node>, Box<Move>),
}

/// Iterator over the runs of a protocol within bounds.
pub struct RunIter {
    protocol: Arc<Protocol>,
    config: SemanticsConfig,
    bounds: Bounds,
    stack: Vec<Pending>,
    seen: HashSet<Vec<(usize, usize, bool, Substitution)>>,
    states: usize,
}

pub fn enumerate_runs(protocol: &Protocol, bounds: Bounds, config: SemanticsConfig) -> Result<RunIter> {
    enumerate_shared(Arc::new(protocol.clone()), bounds, config)
}

pub fn enumerate_shared(protocol: Arc<Protocol>, bounds: Bounds, config: SemanticsConfig) -> Result<RunIter> {
    bounds.validate()?;
    protocol.validate()?;
    Ok(RunIter {
        protocol,
        config,
        bounds,
        stack: vec![Pending::Root],
        seen: HashSet::new(),
        states: 0,
    })
}

impl RunIter {
    /// Distinct states expanded so far.
    pub fn states(&self) -> usize {
        self.states
    }

    fn agent_assignments(&self, role: usize) -> Vec<Vec<Name>> {
        let p = &self.protocol;
        let pool = p.agents();
        let arity = p.roles[role].params.len();
        let mut out: Vec<Vec<Name>> = p.setup.honest.iter().map(|a| vec![a.clone()]).collect();
        for _ in 1..arity {
            let mut next = Vec::new();
            for partial in out {
                for a in &pool {
                    if !partial.contains(a) {
                        let mut v = partial.clone();
                        v.push(a.clone());
                        next.push(v);
                    }
                }
            }
            out = next;
        }
        out
    }

    fn free_assignments(&self, role: usize, node: &Node) -> Vec<Vec<Term>> {
        let mut out = vec![vec![]];
        for v in &self.protocol.roles[role].free {
            let domain: Vec<&Term> = node
                .intruder
                .items()
                .iter()
                .filter(|t| !self.config.typed || t.sort().is_subsort_of(v.sort))
                .collect();
            out = out
                .into_iter()
                .flat_map(|partial| {
                    domain.iter().map(move |d| {
                        let mut p = partial.clone();
                        p.push((*d).clone());
                        p
                    })
                })
                .collect();
        }
        out
    }

    fn moves(&self, node: &Node) -> Vec<Move> {
        let run = &node.run;
        let mut out = Vec::new();
        if run.len() >= self.bounds.max_run_length {
            return out;
        }
        for (ri, role) in self.protocol.roles.iter().enumerate() {
            let count = run.threads.iter().filter(|t| t.role_index == ri).count();
            if count >= self.bounds.max_threads_per_role || role.body.is_empty() {
                continue;
            }
            for agents in self.agent_assignments(ri) {
                for free in self.free_assignments(ri, node) {
                    if role.body[0].is_receive() {
                        let mut probe = run.clone();
                        let Ok(tid) = probe.spawn(ri, &agents, &free) else {
                            continue;
                        };
                        for (action, bindings) in candidates(&probe, tid, &node.intruder, true) {
                            out.push(Move::Receive {
                                thread: None,
                                spawn: Some((ri, agents.clone(), free.clone())),
                                action,
                                bindings,
                            });
                        }
                    } else {
                        out.push(Move::Spawn {
                            role: ri,
                            agents: agents.clone(),
                            free: free.clone(),
                        });
                    }
                }
            }
        }
        for t in &run.threads {
            let waiting = !t.blocked && run.role_of(t).body.get(t.pc).is_some_and(Action::is_receive);
            if waiting {
                for (action, bindings) in candidates(run, t.id, &node.intruder, true) {
                    out.push(Move::Receive {
                        thread: Some(t.id),
                        spawn: None,
                        action,
                        bindings,
                    });
                }
            }
        }
        out
    }

    fn materialize(&self, parent: &Node, mv: Move) -> Option<Node> {
        let mut node = parent.clone();
        let receiver = match mv {
            Move::Spawn { role, agents, free } => {
                node.run.spawn(role, &agents, &free).ok()?;
                None
            }
            Move::Receive {
                thread,
                spawn,
                action,
                bindings,
            } => {
                let tid = match (thread, spawn) {
                    (Some(t), _) => t,
                    (None, Some((role, agents, free))) => node.run.spawn(role, &agents, &free).ok()?,
                    (None, None) => return None,
                };
                node.run.push_event(tid, action, bindings);
                Some(tid)
            }
        };
        node.settle();
        if let Some(tid) = receiver {
            // A message that makes the rest of its basic sequence fail is
            // not worth delivering.
            if node.run.threads[tid as usize - 1].blocked {
                return None;
            }
        }
        Some(node)
    }
}

impl Iterator for RunIter {
    type Item = Run;

    fn next(&mut self) -> Option<Run> {
        while let Some(pending) = self.stack.pop() {
            let node = match pending {
                Pending::Root => {
                    let run = Run::new(self.protocol.clone(), self.config, self.bounds);
                    let intruder = Knowledge::from_terms(
                        run.initial_intruder.iter(),
                        self.config,
                        self.bounds.max_intruder_depth,
                    );
                    let mut node = Node { run, intruder };
                    node.settle();
                    node
                }
                Pending::Child(parent, mv) => match self.materialize(&parent, *mv) {
                    Some(n) => n,
                    None => continue,
                },
            };
            if !self.seen.insert(node.key()) {
                continue;
            }
            self.states += 1;
            let moves = self.moves(&node);
            let run = node.run.clone();
            let node = Arc::new(node);
            for mv in moves.into_iter().rev() {
                self.stack.push(Pending::Child(node.clone(), Box::new(mv)));
            }
            return Some(run);
        }
        None
    }
}
