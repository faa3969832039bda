//! Checking catalogue axioms and invariants against every run of a
//! protocol within bounds.

mod catalogue;
mod honesty;
mod repro;

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Bounds, SemanticsConfig};
use crate::engine::{enumerate_shared, Run};
use crate::error::{Error, Result};
use crate::logic::{Atom, Env, Evaluator, Formula, Instance, Schema, ThreadRef};
use crate::protocol::Protocol;
use crate::term::equal_mod_theory;

pub use catalogue::{catalogue, lookup, AxiomEntry};
pub use honesty::{check_invariant_honesty_mode, honesty_protocol, HonestyReport};
pub use repro::{case_names, reproduce, Report, ReproOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    HoldsWithinBounds,
    Counterexample,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::HoldsWithinBounds => "holds-within-bounds",
            Outcome::Counterexample => "counterexample",
        }
    }
}

/// A run falsifying an instance of the checked formula.
#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    /// Position of the run in enumeration order.
    pub run_index: usize,
    pub run: Run,
    pub instance: String,
    pub bindings: Env,
    /// Events witnessing the action predicates of the instance.
    pub events: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basic_sequence: Option<String>,
    #[serde(skip)]
    pub formula: Formula,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Stats {
    pub runs_explored: usize,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub subject: String,
    pub protocol: String,
    pub outcome: Outcome,
    pub config: SemanticsConfig,
    pub bounds: Bounds,
    pub witness: Option<Witness>,
    pub stats: Stats,
}

impl Verdict {
    pub fn holds(&self) -> bool {
        self.outcome == Outcome::HoldsWithinBounds
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let b = &self.bounds;
        let _ = writeln!(s, "{} on {}: {}", self.subject, self.protocol, self.outcome.as_str());
        let _ = writeln!(
            s,
            "  bounds: threads/role={} length={} depth={}; runs explored: {} ({} ms)",
            b.max_threads_per_role, b.max_run_length, b.max_intruder_depth, self.stats.runs_explored, self.stats.elapsed_ms
        );
        if let Some(w) = &self.witness {
            if let Some(bs) = &w.basic_sequence {
                let _ = writeln!(s, "  violated by basic sequence {bs}");
            }
            let _ = writeln!(s, "  instance: {}", w.instance);
            let _ = writeln!(s, "  witnessing events: {:?}", w.events);
            let _ = writeln!(s, "  run #{}:", w.run_index);
            for line in w.run.trace().lines() {
                let _ = writeln!(s, "    {line}");
            }
        }
        s
    }
}

/// Indices of events that witness the ground action atoms of a closed
/// formula (atoms under quantifiers are skipped).
pub fn witnessing_events(run: &Run, f: &Formula) -> Vec<usize> {
    fn atoms<'a>(f: &'a Formula, out: &mut Vec<&'a Atom>) {
        match f {
            Formula::Atom(Atom::Order(a, b)) => {
                out.push(a);
                out.push(b);
            }
            Formula::Atom(a) => out.push(a),
            Formula::Not(g) => atoms(g, out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                atoms(a, out);
                atoms(b, out);
            }
            Formula::Modal(m) => {
                atoms(&m.pre, out);
                atoms(&m.post, out);
            }
            _ => {}
        }
    }
    let mut found = Vec::new();
    atoms(f, &mut found);
    let mut out = Vec::new();
    for a in found {
        let Atom::Action(kind, ThreadRef::Id(tid), t) = a else {
            continue;
        };
        if !t.is_ground() {
            continue;
        }
        if let Some(e) = run.events.iter().find(|e| {
            e.thread == *tid && kind.witnessed(&e.action).iter().any(|w| equal_mod_theory(w, t, &run.config))
        }) {
            out.push(e.index);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

pub(crate) fn witness(run_index: usize, run: Run, inst: Instance, basic_sequence: Option<String>) -> Witness {
    Witness {
        run_index,
        events: witnessing_events(&run, &inst.formula),
        instance: inst.formula.to_string(),
        bindings: inst.env,
        basic_sequence,
        formula: inst.formula,
        run,
    }
}

const CHUNK: usize = 512;

/// A falsifying run with its enumeration index and failing instance.
type Hit = (usize, Run, Instance);

/// First run (in enumeration order) falsifying the schema, with the
/// number of runs examined. Runs are evaluated in parallel chunks when
/// `workers > 1`; the answer does not depend on the worker count.
fn first_counterexample(
    protocol: &Protocol,
    schema: &Schema,
    bounds: Bounds,
    config: SemanticsConfig,
    workers: usize,
) -> Result<(Option<Hit>, usize)> {
    let runs = enumerate_shared(Arc::new(protocol.clone()), bounds, config)?;
    if workers <= 1 {
        let mut n = 0;
        for run in runs {
            n += 1;
            if let Some(inst) = Evaluator::new(&run).counterexample(schema)? {
                return Ok((Some((n - 1, run, inst)), n));
            }
        }
        return Ok((None, n));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Bounds(format!("cannot start worker pool: {e}")))?;
    let mut runs = runs.peekable();
    let mut seen = 0;
    while runs.peek().is_some() {
        let chunk: Vec<Run> = runs.by_ref().take(CHUNK).collect();
        let hit = pool.install(|| {
            chunk
                .par_iter()
                .enumerate()
                .map(|(i, run)| Evaluator::new(run).counterexample(schema).map(|r| r.map(|inst| (i, inst))))
                .find_map_first(|r| match r {
                    Ok(None) => None,
                    other => Some(other),
                })
        });
        match hit {
            Some(Err(e)) => return Err(e),
            Some(Ok(Some((i, inst)))) => {
                let run = chunk.into_iter().nth(i).expect("index within chunk");
                return Ok((Some((seen + i, run, inst)), seen + i + 1));
            }
            _ => seen += chunk.len(),
        }
    }
    Ok((None, seen))
}

/// Checks a schema against every run within bounds.
pub fn check_schema(
    protocol: &Protocol,
    schema: &Schema,
    bounds: Bounds,
    config: SemanticsConfig,
    workers: usize,
) -> Result<Verdict> {
    let started = Instant::now();
    let (hit, runs) = first_counterexample(protocol, schema, bounds, config, workers)?;
    let outcome = if hit.is_some() {
        Outcome::Counterexample
    } else {
        Outcome::HoldsWithinBounds
    };
    Ok(Verdict {
        subject: schema.name.clone(),
        protocol: protocol.name.to_string(),
        outcome,
        config,
        bounds,
        witness: hit.map(|(i, run, inst)| witness(i, run, inst, None)),
        stats: Stats {
            runs_explored: runs,
            elapsed_ms: started.elapsed().as_millis() as u64,
        },
    })
}

/// Checks a catalogue entry, refusing configurations it is not meant for.
pub fn check(
    protocol: &Protocol,
    entry: &AxiomEntry,
    bounds: Bounds,
    config: SemanticsConfig,
    workers: usize,
) -> Result<Verdict> {
    entry.check_features(&config)?;
    check_schema(protocol, entry.schema(), bounds, config, workers)
}
