//! Static protocol descriptions: roles as action lists, the setup block,
//! and the decomposition of roles into basic sequences.

mod parser;
mod print;

use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

pub use parser::parse_protocol;

use crate::error::{Error, Pos, Result};
use crate::term::{Name, Sort, Term, Var};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Action {
    Send { from: Term, to: Term, msg: Term },
    /// Receive and pattern-match in one step.
    Receive { from: Term, to: Term, pattern: Term },
    New(Var),
    Enc { out: Var, payload: Term, key: Term },
    Dec { out: Var, cipher: Term, key: Term },
    Sign { out: Var, payload: Term, signer: Term },
    Verify { sig: Term, payload: Term, signer: Term },
}

impl Action {
    pub fn is_receive(&self) -> bool {
        matches!(self, Action::Receive { .. })
    }

    pub fn keyword(&self) -> &'static str {
        match self {
            Action::Send { .. } => "send",
            Action::Receive { .. } => "receive",
            Action::New(_) => "new",
            Action::Enc { .. } => "enc",
            Action::Dec { .. } => "dec",
            Action::Sign { .. } => "sign",
            Action::Verify { .. } => "verify",
        }
    }

    /// Terms read by the action (for a receive, the whole pattern).
    pub fn terms(&self) -> Vec<&Term> {
        match self {
            Action::Send { from, to, msg } => vec![from, to, msg],
            Action::Receive { from, to, pattern } => vec![from, to, pattern],
            Action::New(_) => vec![],
            Action::Enc { payload, key, .. } => vec![payload, key],
            Action::Dec { cipher, key, .. } => vec![cipher, key],
            Action::Sign { payload, signer, .. } => vec![payload, signer],
            Action::Verify { sig, payload, signer } => vec![sig, payload, signer],
        }
    }

    pub fn out_var(&self) -> Option<&Var> {
        match self {
            Action::New(v)
            | Action::Enc { out: v, .. }
            | Action::Dec { out: v, .. }
            | Action::Sign { out: v, .. } => Some(v),
            _ => None,
        }
    }

    /// Full addressed message pattern of a send or receive.
    pub fn addressed(&self) -> Option<Term> {
        match self {
            Action::Send { from, to, msg } | Action::Receive { from, to, pattern: msg } => {
                Some(Term::tuple(vec![from.clone(), to.clone(), msg.clone()]))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Role {
    pub name: Name,
    /// Agent parameters; the first is the executing agent.
    pub params: Vec<Var>,
    /// Extra non-agent parameters, chosen when a thread starts.
    pub free: Vec<Var>,
    pub body: Vec<Action>,
}

impl Role {
    pub fn self_param(&self) -> &Var {
        &self.params[0]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Setup {
    pub honest: Vec<Name>,
    pub dishonest: Vec<Name>,
    pub consts: Vec<(Name, Sort)>,
    pub intruder_knows: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Protocol {
    pub name: Name,
    pub setup: Setup,
    pub roles: Vec<Role>,
}

impl Protocol {
    /// Agent pool: honest agents first, then dishonest ones.
    pub fn agents(&self) -> Vec<Name> {
        self.setup
            .honest
            .iter()
            .chain(&self.setup.dishonest)
            .cloned()
            .collect()
    }

    pub fn is_honest(&self, agent: &str) -> bool {
        self.setup.honest.iter().any(|a| &**a == agent)
    }

    pub fn role(&self, name: &str) -> Option<&Role> {
        self.roles.iter().find(|r| &*r.name == name)
    }

    /// Checks role-name uniqueness, setup references, and that every
    /// variable is bound before use.
    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for r in &self.roles {
            if !names.insert(r.name.clone()) {
                return Err(semantic(format!("duplicate role `{}`", r.name)));
            }
        }
        let agents = self.agents();
        let mut seen = HashSet::new();
        for a in &agents {
            if !seen.insert(a.clone()) {
                return Err(semantic(format!("agent `{a}` declared twice")));
            }
        }
        for t in &self.setup.intruder_knows {
            for sub in t.subterms() {
                match sub {
                    Term::Agent(a) if !agents.contains(a) => {
                        return Err(semantic(format!("setup mentions undeclared agent `{a}`")))
                    }
                    Term::Const(c, _) if !self.setup.consts.iter().any(|(n, _)| n == c) => {
                        return Err(semantic(format!("setup mentions undeclared constant `{c}`")))
                    }
                    Term::Var(v) => {
                        return Err(semantic(format!("setup term mentions variable `{}`", v.name)))
                    }
                    _ => {}
                }
            }
        }
        self.roles.iter().try_for_each(validate_role)
    }
}

fn semantic(message: String) -> Error {
    Error::Semantic {
        pos: Pos { line: 0, col: 0 },
        message,
    }
}

/// Binding discipline for one role.
pub fn validate_role(role: &Role) -> Result<()> {
    if role.params.is_empty() {
        return Err(semantic(format!("role `{}` has no parameters", role.name)));
    }
    let mut bound: HashSet<Name> = HashSet::new();
    for p in role.params.iter().chain(&role.free) {
        if !bound.insert(p.name.clone()) {
            return Err(semantic(format!(
                "parameter `{}` of role `{}` is not distinct",
                p.name, role.name
            )));
        }
    }
    for action in &role.body {
        let reads: Vec<&Term> = match action {
            Action::Receive { .. } => vec![],
            other => other.terms(),
        };
        for t in reads {
            if let Some(v) = t.vars().into_iter().find(|v| !bound.contains(&v.name)) {
                return Err(Error::UnboundVariable(v.name.to_string()));
            }
        }
        if let Action::Receive { .. } = action {
            for t in action.terms() {
                for v in t.vars() {
                    bound.insert(v.name);
                }
            }
        }
        if let Some(out) = action.out_var() {
            if !bound.insert(out.name.clone()) {
                return Err(semantic(format!("variable `{}` is bound twice", out.name)));
            }
        }
    }
    Ok(())
}

/// Contiguous slice of a role starting at its first action or a receive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BasicSequence {
    pub role: String,
    pub index: usize,
    /// Offset of the first action within the role body.
    pub start: usize,
    #[serde(serialize_with = "serialize_actions")]
    pub actions: Vec<Action>,
}

impl BasicSequence {
    pub fn label(&self) -> String {
        format!("{}.BS{}", self.role, self.index + 1)
    }
}

fn serialize_actions<S: serde::Serializer>(
    actions: &[Action],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(actions.iter().map(|a| a.to_string()))
}

pub fn basic_sequences(role: &Role) -> Vec<BasicSequence> {
    let mut out: Vec<BasicSequence> = Vec::new();
    for (i, action) in role.body.iter().enumerate() {
        if i == 0 || action.is_receive() {
            out.push(BasicSequence {
                role: role.name.to_string(),
                index: out.len(),
                start: i,
                actions: vec![],
            });
        }
        out.last_mut().unwrap().actions.push(action.clone());
    }
    if out.is_empty() {
        out.push(BasicSequence {
            role: role.name.to_string(),
            index: 0,
            start: 0,
            actions: vec![],
        });
    }
    out
}

/// Index of the basic sequence containing body position `pc`.
pub fn sequence_of(role: &Role, pc: usize) -> usize {
    role.body
        .iter()
        .take(pc + 1)
        .enumerate()
        .filter(|(i, a)| *i > 0 && a.is_receive())
        .count()
}

/// Positions at which a thread of `role` is between basic sequences.
pub fn boundaries(role: &Role) -> Vec<usize> {
    let mut b: Vec<usize> = basic_sequences(role).iter().map(|bs| bs.start).collect();
    b.push(role.body.len());
    b
}

/// Reorders the basic sequences of one role; `permutation[i]` is the
/// (0-based) index of the sequence placed at position `i`.
pub fn permute_basic_sequences(
    protocol: &Protocol,
    role_name: &str,
    permutation: &[usize],
) -> Result<Protocol> {
    let idx = protocol
        .roles
        .iter()
        .position(|r| &*r.name == role_name)
        .ok_or_else(|| Error::UnknownRole(role_name.to_string()))?;
    let seqs = basic_sequences(&protocol.roles[idx]);
    let mut sorted = permutation.to_vec();
    sorted.sort_unstable();
    if sorted != (0..seqs.len()).collect::<Vec<_>>() {
        return Err(Error::InvalidPermutation(format!(
            "{permutation:?} is not a permutation of the {} basic sequences of `{role_name}`",
            seqs.len()
        )));
    }
    let mut out = protocol.clone();
    out.roles[idx].body = permutation
        .iter()
        .flat_map(|&i| seqs[i].actions.iter().cloned())
        .collect();
    validate_role(&out.roles[idx])?;
    Ok(out)
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print::print_protocol(self))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print::print_action(self, None))
    }
}
