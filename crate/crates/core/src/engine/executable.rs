//! Searching the run space for an ordered pattern of actions.

use std::collections::BTreeMap;

use crate::config::{Bounds, SemanticsConfig};
use crate::error::Result;
use crate::protocol::Protocol;
use crate::term::{match_all, normalize_dh, Name, Substitution, Term};

use super::enumerate::enumerate_runs;
use super::run::{GroundAction, Run, ThreadId};

/// Kinds of thread actions that predicates talk about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionKind {
    Send,
    Receive,
    Gen,
    Encrypt,
    Decrypt,
    Verify,
    Sign,
}

impl ActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Send => "Send",
            ActionKind::Receive => "Receive",
            ActionKind::Gen => "Gen",
            ActionKind::Encrypt => "Encrypt",
            ActionKind::Decrypt => "Decrypt",
            ActionKind::Verify => "Verify",
            ActionKind::Sign => "Sign",
        }
    }

    pub fn parse(s: &str) -> Option<ActionKind> {
        [
            ActionKind::Send,
            ActionKind::Receive,
            ActionKind::Gen,
            ActionKind::Encrypt,
            ActionKind::Decrypt,
            ActionKind::Verify,
            ActionKind::Sign,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }

    /// Terms an event of this kind can witness: for sends and receives
    /// both the bare payload and the addressed message; for the others,
    /// the generated value, the produced ciphertext, the decrypted
    /// ciphertext, the checked signature, or the produced signature.
    pub fn witnessed(self, action: &GroundAction) -> Vec<Term> {
        match (self, action) {
            (ActionKind::Send, GroundAction::Send { msg, .. })
            | (ActionKind::Receive, GroundAction::Receive { msg, .. }) => {
                vec![msg.clone(), action.addressed().unwrap()]
            }
            (ActionKind::Gen, GroundAction::New { value, .. })
            | (ActionKind::Encrypt, GroundAction::Enc { value, .. })
            | (ActionKind::Decrypt, GroundAction::Dec { cipher: value, .. })
            | (ActionKind::Verify, GroundAction::Verify { sig: value, .. })
            | (ActionKind::Sign, GroundAction::Sign { value, .. }) => vec![value.clone()],
            _ => vec![],
        }
    }
}

/// One step of an action pattern: `kind(thread, term)`, where the thread
/// is named by a variable and the term may contain variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionPattern {
    pub kind: ActionKind,
    pub thread: Name,
    pub term: Term,
}

/// Searches for a run containing events that match `pattern` in order,
/// with consistent thread and term bindings.
pub fn executable(
    protocol: &Protocol,
    pattern: &[ActionPattern],
    bounds: Bounds,
    config: SemanticsConfig,
) -> Result<Option<Run>> {
    for run in enumerate_runs(protocol, bounds, config)? {
        if matches_in_order(&run, pattern) {
            return Ok(Some(run));
        }
    }
    Ok(None)
}

/// Whether the run exhibits the pattern.
pub fn matches_in_order(run: &Run, pattern: &[ActionPattern]) -> bool {
    search(run, pattern, 0, &BTreeMap::new(), &Substitution::new())
}

fn search(
    run: &Run,
    pattern: &[ActionPattern],
    from: usize,
    threads: &BTreeMap<Name, ThreadId>,
    sub: &Substitution,
) -> bool {
    let Some((step, rest)) = pattern.split_first() else {
        return true;
    };
    let term = normalize_dh(&step.term, &run.config);
    for e in &run.events[from.min(run.events.len())..] {
        if threads.get(&step.thread).is_some_and(|t| *t != e.thread) {
            continue;
        }
        for w in step.kind.witnessed(&e.action) {
            for s in match_all(&term, &w, sub, false, run.config.dh_theory) {
                let mut th = threads.clone();
                th.insert(step.thread.clone(), e.thread);
                if search(run, rest, e.index + 1, &th, &s) {
                    return true;
                }
            }
        }
    }
    false
}
