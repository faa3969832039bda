use std::fmt;
use std::sync::Arc;

use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};

use crate::config::{Bounds, SemanticsConfig};
use crate::error::{Error, Result};
use crate::protocol::{boundaries, Protocol, Role};
use crate::term::{apply, name, Name, Sort, Substitution, Term};

use super::derive::Knowledge;

pub type ThreadId = u32;

/// Pseudo-thread standing for the network adversary.
pub const INTRUDER: ThreadId = 0;

/// Fresh values available to the intruder from the start.
pub fn intruder_fresh() -> Vec<Term> {
    vec![
        Term::nonce("ni", None, Sort::Nonce),
        Term::nonce("ei", None, Sort::DhPriv),
    ]
}

/// A role action with every term ground; computed values are recorded.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GroundAction {
    Send { from: Term, to: Term, msg: Term },
    Receive { from: Term, to: Term, msg: Term },
    New { var: Name, value: Term },
    Enc { var: Name, payload: Term, key: Term, value: Term },
    Dec { var: Name, cipher: Term, key: Term, value: Term },
    Sign { var: Name, payload: Term, signer: Term, value: Term },
    Verify { sig: Term, payload: Term, signer: Term },
}

impl GroundAction {
    pub fn keyword(&self) -> &'static str {
        match self {
            GroundAction::Send { .. } => "send",
            GroundAction::Receive { .. } => "receive",
            GroundAction::New { .. } => "new",
            GroundAction::Enc { .. } => "enc",
            GroundAction::Dec { .. } => "dec",
            GroundAction::Sign { .. } => "sign",
            GroundAction::Verify { .. } => "verify",
        }
    }

    /// `(from,to,msg)` for sends and receives.
    pub fn addressed(&self) -> Option<Term> {
        match self {
            GroundAction::Send { from, to, msg } | GroundAction::Receive { from, to, msg } => {
                Some(Term::tuple(vec![from.clone(), to.clone(), msg.clone()]))
            }
            _ => None,
        }
    }

    /// Every ground term mentioned by the action.
    pub fn terms(&self) -> Vec<&Term> {
        match self {
            GroundAction::Send { from, to, msg } | GroundAction::Receive { from, to, msg } => {
                vec![from, to, msg]
            }
            GroundAction::New { value, .. } => vec![value],
            GroundAction::Enc { payload, key, value, .. } => vec![payload, key, value],
            GroundAction::Dec { cipher, key, value, .. } => vec![cipher, key, value],
            GroundAction::Sign { payload, signer, value, .. } => vec![payload, signer, value],
            GroundAction::Verify { sig, payload, signer } => vec![sig, payload, signer],
        }
    }

    /// Value computed or generated by the action, if any.
    pub fn value(&self) -> Option<&Term> {
        match self {
            GroundAction::New { value, .. }
            | GroundAction::Enc { value, .. }
            | GroundAction::Dec { value, .. }
            | GroundAction::Sign { value, .. } => Some(value),
            _ => None,
        }
    }
}

impl fmt::Display for GroundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroundAction::Send { from, to, msg } => write!(f, "send {from},{to},{msg}"),
            GroundAction::Receive { from, to, msg } => write!(f, "receive {from},{to},{msg}"),
            GroundAction::New { var, value } => write!(f, "new {var} = {value}"),
            GroundAction::Enc { var, payload, key, value } => {
                write!(f, "{var} := enc {payload},{key} = {value}")
            }
            GroundAction::Dec { var, cipher, key, value } => {
                write!(f, "{var} := dec {cipher},{key} = {value}")
            }
            GroundAction::Sign { var, payload, signer, value } => {
                write!(f, "{var} := sign {payload},{signer} = {value}")
            }
            GroundAction::Verify { sig, payload, signer } => {
                write!(f, "verify {sig},{payload},{signer}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Event {
    pub index: usize,
    pub thread: ThreadId,
    /// Position of the action in the thread's role body.
    pub pc: usize,
    pub action: GroundAction,
    /// Variables bound by this event.
    pub bindings: Substitution,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Thread {
    pub id: ThreadId,
    pub role: Name,
    pub role_index: usize,
    pub agent: Name,
    pub honest: bool,
    /// Agent parameters plus any free parameters.
    pub params: Substitution,
    /// Every binding made so far, parameters included.
    pub subst: Substitution,
    pub pc: usize,
    /// The next action's guard failed; the thread will not move again.
    pub blocked: bool,
    /// Number of events in the run when the thread started.
    pub started_at: usize,
}

/// One interleaved execution history.
#[derive(Debug, Clone)]
pub struct Run {
    pub protocol: Arc<Protocol>,
    pub config: SemanticsConfig,
    pub bounds: Bounds,
    /// Indexed by thread id minus one.
    pub threads: Vec<Thread>,
    pub events: Vec<Event>,
    pub initial_intruder: Arc<Vec<Term>>,
}

impl Run {
    pub fn new(protocol: Arc<Protocol>, config: SemanticsConfig, bounds: Bounds) -> Self {
        let initial = initial_intruder_knowledge(&protocol, &config);
        Run {
            protocol,
            config,
            bounds,
            threads: Vec::new(),
            events: Vec::new(),
            initial_intruder: Arc::new(initial),
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn thread(&self, id: ThreadId) -> Option<&Thread> {
        if id == INTRUDER {
            return None;
        }
        self.threads.get(id as usize - 1)
    }

    pub fn role_of(&self, t: &Thread) -> &Role {
        &self.protocol.roles[t.role_index]
    }

    /// Starts a thread of `role_index` with the given agent parameters
    /// (self first) and free-parameter values.
    pub fn spawn(&mut self, role_index: usize, agents: &[Name], free: &[Term]) -> Result<ThreadId> {
        let role = self
            .protocol
            .roles
            .get(role_index)
            .ok_or_else(|| Error::UnknownRole(format!("#{role_index}")))?;
        if agents.len() != role.params.len() || free.len() != role.free.len() {
            return Err(Error::Bounds(format!(
                "role `{}` takes {} agents and {} free values",
                role.name,
                role.params.len(),
                role.free.len()
            )));
        }
        let mut params = Substitution::new();
        for (p, a) in role.params.iter().zip(agents) {
            params.bind(p.name.clone(), Term::Agent(a.clone()));
        }
        for (p, v) in role.free.iter().zip(free) {
            params.bind(p.name.clone(), v.clone());
        }
        let id = self.threads.len() as ThreadId + 1;
        let agent = agents[0].clone();
        self.threads.push(Thread {
            id,
            role: role.name.clone(),
            role_index,
            honest: self.protocol.is_honest(&agent),
            agent,
            subst: params.clone(),
            params,
            pc: 0,
            blocked: false,
            started_at: self.events.len(),
        });
        Ok(id)
    }

    pub(crate) fn push_event(&mut self, thread: ThreadId, action: GroundAction, bindings: Substitution) {
        let t = &mut self.threads[thread as usize - 1];
        for (k, v) in bindings.iter() {
            t.subst.bind(k.clone(), v.clone());
        }
        let pc = t.pc;
        t.pc += 1;
        self.events.push(Event {
            index: self.events.len(),
            thread,
            pc,
            action,
            bindings,
        });
    }

    /// The run truncated to its first `n` events; threads started later
    /// are dropped.
    pub fn prefix(&self, n: usize) -> Run {
        let n = n.min(self.events.len());
        let events = self.events[..n].to_vec();
        let mut threads: Vec<Thread> = self
            .threads
            .iter()
            .filter(|t| t.started_at <= n)
            .cloned()
            .collect();
        for t in &mut threads {
            let own: Vec<&Event> = events.iter().filter(|e| e.thread == t.id).collect();
            if own.len() != t.pc {
                t.pc = own.len();
                t.blocked = false;
                t.subst = t.params.clone();
                for e in own {
                    for (k, v) in e.bindings.iter() {
                        t.subst.bind(k.clone(), v.clone());
                    }
                }
            }
        }
        Run {
            protocol: self.protocol.clone(),
            config: self.config,
            bounds: self.bounds,
            threads,
            events,
            initial_intruder: self.initial_intruder.clone(),
        }
    }

    pub fn thread_events(&self, id: ThreadId) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.thread == id)
    }

    /// Number of events of `id` among the first `end` events.
    pub fn position_at(&self, id: ThreadId, end: usize) -> usize {
        self.events[..end.min(self.events.len())]
            .iter()
            .filter(|e| e.thread == id)
            .count()
    }

    /// Whether the thread sits between basic sequences after `end` events.
    pub fn at_boundary(&self, id: ThreadId, end: usize) -> bool {
        match self.thread(id) {
            Some(t) => boundaries(self.role_of(t)).contains(&self.position_at(id, end)),
            None => true,
        }
    }

    /// Intruder knowledge after the first `end` events.
    pub fn intruder_knowledge(&self, end: usize) -> Knowledge {
        let mut k = Knowledge::from_terms(
            self.initial_intruder.iter(),
            self.config,
            self.bounds.max_intruder_depth,
        );
        for e in &self.events[..end.min(self.events.len())] {
            if let Some(m) = sent_message(e) {
                k.add(&m);
            }
        }
        k
    }

    /// What a thread knows before executing anything.
    pub fn thread_initial_knowledge(&self, id: ThreadId) -> Vec<Term> {
        let Some(t) = self.thread(id) else {
            return self.initial_intruder.to_vec();
        };
        let mut out: Vec<Term> = Vec::new();
        let mut push = |x: Term| {
            if !out.contains(&x) {
                out.push(x);
            }
        };
        for a in self.protocol.agents() {
            push(Term::Agent(a.clone()));
            push(Term::pk(Term::Agent(a)));
        }
        push(Term::sk(Term::Agent(t.agent.clone())));
        for v in t.params.values() {
            push(v.clone());
        }
        let role = self.role_of(t);
        for action in &role.body {
            for term in action.terms() {
                let Ok(inst) = apply(&t.params, term, &self.config, false) else {
                    continue;
                };
                for sub in inst.subterms() {
                    if sub.is_ground()
                        && matches!(sub, Term::SymKey(..) | Term::Const(..) | Term::PubKey(_))
                    {
                        push(sub.clone());
                    }
                }
            }
        }
        out
    }

    /// A thread's knowledge after the first `end` events: initial terms,
    /// generated and computed values, and received and sent messages.
    pub fn thread_knowledge(&self, id: ThreadId, end: usize) -> Knowledge {
        if id == INTRUDER {
            return self.intruder_knowledge(end);
        }
        let mut k = Knowledge::from_terms(
            self.thread_initial_knowledge(id).iter(),
            self.config,
            self.bounds.max_intruder_depth,
        );
        for e in self.events[..end.min(self.events.len())]
            .iter()
            .filter(|e| e.thread == id)
        {
            match &e.action {
                GroundAction::Receive { .. } | GroundAction::Send { .. } => {
                    k.add(&e.action.addressed().unwrap());
                }
                other => {
                    if let Some(v) = other.value() {
                        k.add(v);
                    }
                }
            }
        }
        k
    }

    /// Sends attributed to the intruder: for each receive among the first
    /// `end` events whose message no honest thread sent earlier, a virtual
    /// send placed just before that receive. Pairs are (receive index, message).
    pub fn virtual_sends(&self, end: usize) -> Vec<(usize, Term)> {
        let mut out = Vec::new();
        let events = &self.events[..end.min(self.events.len())];
        for (i, e) in events.iter().enumerate() {
            if let GroundAction::Receive { .. } = e.action {
                let m = e.action.addressed().unwrap();
                let honest = events[..i].iter().any(|p| sent_message(p).as_ref() == Some(&m));
                if !honest {
                    out.push((i, m));
                }
            }
        }
        out
    }

    pub fn trace(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let t = &self.threads[e.thread as usize - 1];
            out.push_str(&format!(
                "#{}  T{}({},{})  {}\n",
                e.index, e.thread, t.role, t.agent, e.action
            ));
        }
        out
    }
}

pub(crate) fn sent_message(e: &Event) -> Option<Term> {
    match &e.action {
        GroundAction::Send { .. } => e.action.addressed(),
        _ => None,
    }
}

/// All agent names, all public keys, setup leaks, and the intruder's own
/// fresh values.
pub fn initial_intruder_knowledge(protocol: &Protocol, config: &SemanticsConfig) -> Vec<Term> {
    let mut out = Vec::new();
    for a in protocol.agents() {
        out.push(Term::Agent(a.clone()));
        out.push(Term::pk(Term::Agent(a)));
    }
    for t in &protocol.setup.intruder_knows {
        out.push(crate::term::normalize_dh(t, config));
    }
    out.extend(intruder_fresh());
    out.dedup();
    out
}

impl fmt::Display for Run {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.trace())
    }
}

struct EventView<'a>(&'a Run, &'a Event);

impl Serialize for EventView<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (run, e) = (self.0, self.1);
        let t = &run.threads[e.thread as usize - 1];
        let mut st = s.serialize_struct("Event", 7)?;
        st.serialize_field("index", &e.index)?;
        st.serialize_field("thread", &e.thread)?;
        st.serialize_field("role", &*t.role)?;
        st.serialize_field("agent", &*t.agent)?;
        st.serialize_field("kind", e.action.keyword())?;
        st.serialize_field("action", &e.action.to_string())?;
        st.serialize_field("bindings", &SubstView(&e.bindings))?;
        st.end()
    }
}

pub(crate) struct SubstView<'a>(pub &'a Substitution);

impl Serialize for SubstView<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0.iter() {
            m.serialize_entry(&**k, &v.to_string())?;
        }
        m.end()
    }
}

struct ThreadView<'a>(&'a Thread);

impl Serialize for ThreadView<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let t = self.0;
        let mut st = s.serialize_struct("Thread", 7)?;
        st.serialize_field("id", &t.id)?;
        st.serialize_field("role", &*t.role)?;
        st.serialize_field("agent", &*t.agent)?;
        st.serialize_field("honest", &t.honest)?;
        st.serialize_field("params", &SubstView(&t.params))?;
        st.serialize_field("pc", &t.pc)?;
        st.serialize_field("blocked", &t.blocked)?;
        st.end()
    }
}

impl Serialize for Run {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Run", 4)?;
        st.serialize_field("protocol", &*self.protocol.name)?;
        let threads: Vec<ThreadView> = self.threads.iter().map(ThreadView).collect();
        st.serialize_field("threads", &threads)?;
        let events: Vec<EventView> = self.events.iter().map(|e| EventView(self, e)).collect();
        st.serialize_field("events", &events)?;
        let virt: Vec<(usize, String)> = self
            .virtual_sends(self.events.len())
            .into_iter()
            .map(|(i, m)| (i, m.to_string()))
            .collect();
        st.serialize_field("intruder_sends", &virt)?;
        st.end()
    }
}

/// Placeholder agent name used for `^Z` when `Z` is the intruder.
pub fn intruder_agent() -> Name {
    name("intruder")
}
