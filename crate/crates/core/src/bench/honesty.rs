//! Checking an invariant one basic sequence at a time: a violation is
//! charged to the sequence whose execution turns the invariant from true
//! to false.
//!
//! Without the precedence rule every basic sequence becomes a role of its
//! own, so it may start from any state in which the intruder can supply
//! the values bound by the sequences before it. With the precedence rule
//! the original roles run, and a sequence only starts after its
//! predecessors in the same thread.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::config::{Bounds, SemanticsConfig};
use crate::engine::{enumerate_shared, Run};
use crate::error::Result;
use crate::logic::{Evaluator, Instance, Schema};
use crate::protocol::{basic_sequences, sequence_of, Action, Protocol, Role};
use crate::term::{name, Var};

use super::{witness, Outcome, Stats, Verdict};

#[derive(Debug, Clone, Serialize)]
pub struct HonestyReport {
    pub invariant: String,
    pub protocol: String,
    pub precedence: bool,
    /// One verdict per basic sequence label such as `Init.BS2`.
    pub sequences: BTreeMap<String, Verdict>,
    pub stats: Stats,
}

impl HonestyReport {
    pub fn outcomes(&self) -> Vec<Outcome> {
        let mut v: Vec<Outcome> = self.sequences.values().map(|v| v.outcome).collect();
        v.sort();
        v
    }

    pub fn render_text(&self) -> String {
        let mut s = format!(
            "{} on {} by basic sequence (precedence {}; {} runs, {} ms)\n",
            self.invariant,
            self.protocol,
            if self.precedence { "on" } else { "off" },
            self.stats.runs_explored,
            self.stats.elapsed_ms
        );
        for (label, v) in &self.sequences {
            s.push_str(&format!("  {label}: {}\n", v.outcome.as_str()));
            if let Some(w) = &v.witness {
                s.push_str(&format!("    instance: {}\n", w.instance));
                for line in w.run.trace().lines() {
                    s.push_str(&format!("      {line}\n"));
                }
            }
        }
        s
    }
}

fn bound_by(action: &Action, bound: &HashSet<String>) -> Vec<Var> {
    let mut out = Vec::new();
    if let Action::Receive { pattern, .. } = action {
        out.extend(pattern.vars().into_iter().filter(|v| !bound.contains(&*v.name)));
    }
    out.extend(action.out_var().cloned());
    out
}

/// Splits every role into one role per basic sequence, named
/// `{Role}_BS{i}`. Variables bound by earlier sequences become free
/// parameters. Returns the protocol and the label of each new role.
pub fn honesty_protocol(protocol: &Protocol) -> Result<(Protocol, Vec<String>)> {
    let mut roles = Vec::new();
    let mut labels = Vec::new();
    for role in &protocol.roles {
        let params: HashSet<String> = role.params.iter().map(|v| v.name.to_string()).collect();
        let mut bound: HashSet<String> = params.clone();
        let mut earlier: Vec<Var> = role.free.clone();
        bound.extend(role.free.iter().map(|v| v.name.to_string()));
        for bs in basic_sequences(role) {
            let mut free: Vec<Var> = Vec::new();
            for action in &bs.actions {
                for t in action.terms() {
                    for v in t.vars() {
                        let prior = earlier.iter().any(|e| e.name == v.name);
                        if prior && !free.iter().any(|f| f.name == v.name) {
                            free.push(v);
                        }
                    }
                }
            }
            for action in &bs.actions {
                for v in bound_by(action, &bound) {
                    bound.insert(v.name.to_string());
                    earlier.push(v);
                }
            }
            labels.push(bs.label());
            roles.push(Role {
                name: name(&format!("{}_BS{}", role.name, bs.index + 1)),
                params: role.params.clone(),
                free,
                body: bs.actions,
            });
        }
    }
    let out = Protocol {
        name: protocol.name.clone(),
        setup: protocol.setup.clone(),
        roles,
    };
    out.validate()?;
    Ok((out, labels))
}

/// Checks an invariant per basic sequence. A run counts against the
/// sequence executed last when the invariant held just before that
/// sequence started and fails after it.
pub fn check_invariant_honesty_mode(
    protocol: &Protocol,
    schema: &Schema,
    bounds: Bounds,
    config: SemanticsConfig,
) -> Result<HonestyReport> {
    let started = Instant::now();
    let precedence = config.precedence_rule;
    let (target, split_labels) = if precedence {
        (protocol.clone(), Vec::new())
    } else {
        honesty_protocol(protocol)?
    };
    let all_labels: Vec<String> = protocol
        .roles
        .iter()
        .flat_map(|r| basic_sequences(r).into_iter().map(|bs| bs.label()))
        .collect();
    let mut found: BTreeMap<String, (usize, Run, Instance)> = BTreeMap::new();
    let mut explored = 0;
    for (i, run) in enumerate_shared(Arc::new(target), bounds, config)?.enumerate() {
        explored = i + 1;
        let Some(last) = run.events.last() else {
            continue;
        };
        let th = run.thread(last.thread).expect("events belong to threads");
        let (label, start) = if precedence {
            let role = run.role_of(th);
            let bs = &basic_sequences(role)[sequence_of(role, last.pc)];
            let start = run
                .thread_events(th.id)
                .find(|e| e.pc >= bs.start)
                .map_or(last.index, |e| e.index);
            (bs.label(), start)
        } else {
            let start = run.thread_events(th.id).next().map_or(last.index, |e| e.index);
            (split_labels[th.role_index].clone(), start)
        };
        if found.contains_key(&label) {
            continue;
        }
        let Some(inst) = Evaluator::new(&run).counterexample(schema)? else {
            continue;
        };
        let before = run.prefix(start);
        if Evaluator::new(&before).counterexample(schema)?.is_none() {
            found.insert(label, (i, run, inst));
            if found.len() == all_labels.len() {
                break;
            }
        }
    }
    let stats = Stats {
        runs_explored: explored,
        elapsed_ms: started.elapsed().as_millis() as u64,
    };
    let sequences = all_labels
        .into_iter()
        .map(|label| {
            let hit = found.remove(&label);
            let v = Verdict {
                subject: format!("{} @ {label}", schema.name),
                protocol: protocol.name.to_string(),
                outcome: if hit.is_some() {
                    Outcome::Counterexample
                } else {
                    Outcome::HoldsWithinBounds
                },
                config,
                bounds,
                witness: hit.map(|(i, run, inst)| witness(i, run, inst, Some(label.clone()))),
                stats,
            };
            (label, v)
        })
        .collect();
    Ok(HonestyReport {
        invariant: schema.name.clone(),
        protocol: protocol.name.to_string(),
        precedence,
        sequences,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::parse_protocol;

    #[test]
    fn split_roles_take_earlier_bindings_as_parameters() {
        let cr = parse_protocol(include_str!("../../../../fixtures/cr.pcl")).unwrap();
        let (p, labels) = honesty_protocol(&cr).unwrap();
        assert_eq!(labels, ["Init.BS1", "Init.BS2", "Resp.BS1"]);
        let bs2 = p.role("Init_BS2").unwrap();
        let free: Vec<&str> = bs2.free.iter().map(|v| &*v.name).collect();
        assert_eq!(free, ["m"]);
        assert!(p.role("Init_BS1").unwrap().free.is_empty());
        assert_eq!(p.role("Resp_BS1").unwrap().body.len(), 4);
    }
}
