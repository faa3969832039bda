//! Named experiments that pit an axiom or invariant against a fixture
//! protocol and compare the outcome with the expected one.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Bounds, KeyScheme, SemanticsConfig};
use crate::engine::{enumerate_shared, executable, ActionKind, Run};
use crate::error::{Error, Result};
use crate::logic::{parse_action_pattern, parse_formula, satisfying, Atom, Binder, Formula, VarKind};
use crate::protocol::{parse_protocol, permute_basic_sequences, Protocol};
use crate::term::{name, Term};

use super::{check, check_invariant_honesty_mode, lookup, HonestyReport, Outcome, Verdict};

const CR: &str = include_str!("../../../../fixtures/cr.pcl");
const Q_PRIME: &str = include_str!("../../../../fixtures/q_prime.pcl");
const HASH3: &str = include_str!("../../../../fixtures/hash3.pcl");
const HASH_TYPICAL: &str = include_str!("../../../../fixtures/hash_typical.pcl");
const DH_MIN: &str = include_str!("../../../../fixtures/dh_min.pcl");
const SEC_SHARED: &str = include_str!("../../../../fixtures/sec_shared.pcl");
const PERM: &str = include_str!("../../../../fixtures/perm.pcl");

const CASES: &[(&str, &str)] = &[
    ("hash3", "HASH3 has a counterexample: a keyed hash received in the clear was never sent in the clear"),
    ("gamma1-untyped", "without types the signing invariant fails because a responder accepts a signature (possibly inside a tuple) as its nonce"),
    ("gamma1-typed", "with types the signing invariant holds on the challenge-response protocol"),
    ("dh-formula2", "the shared-secret exchange only completes once h(a,b) = h(b,a) is part of the theory"),
    ("sec-symmetric", "SEC holds when every key has a single owner and fails when keys are symmetric"),
    ("hash4-collapse", "honest holders of a keyed hash can compute it on typical protocols but not on every protocol"),
    ("q-prime", "a run-level violation on Q' is invisible to per-sequence checking, which treats Q' and CR alike"),
    ("permutation", "reordering basic sequences is invisible without the precedence rule and visible with it"),
];

/// Names of the built-in experiments with what each is expected to show.
pub fn case_names() -> &'static [(&'static str, &'static str)] {
    CASES
}

/// Result of one experiment.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub case: String,
    pub expected: String,
    pub observed: String,
    pub agrees: bool,
    pub verdicts: Vec<Verdict>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub honesty: Vec<HonestyReport>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub measurements: BTreeMap<String, Value>,
    pub elapsed_ms: u64,
}

impl Report {
    fn new(case: &str) -> Self {
        let expected = CASES.iter().find(|(n, _)| *n == case).map_or("", |(_, e)| e);
        Report {
            case: case.to_string(),
            expected: expected.to_string(),
            observed: String::new(),
            agrees: false,
            verdicts: Vec::new(),
            honesty: Vec::new(),
            measurements: BTreeMap::new(),
            elapsed_ms: 0,
        }
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "case {}: {}", self.case, if self.agrees { "AGREES" } else { "DISAGREES" });
        let _ = writeln!(s, "  expected: {}", self.expected);
        let _ = writeln!(s, "  observed: {}", self.observed);
        for (k, v) in &self.measurements {
            let _ = writeln!(s, "  {k}: {v}");
        }
        for v in &self.verdicts {
            for line in v.render_text().lines() {
                let _ = writeln!(s, "  {line}");
            }
        }
        for h in &self.honesty {
            for line in h.render_text().lines() {
                let _ = writeln!(s, "  {line}");
            }
        }
        s
    }
}

/// Settings shared by every experiment; `bounds` overrides the
/// per-case defaults. Cases default to two threads per role, except
/// `hash3` and `permutation`, which need only one.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReproOptions {
    pub bounds: Option<Bounds>,
    pub workers: usize,
}

fn fixture(src: &str) -> Protocol {
    parse_protocol(src).expect("bundled fixtures parse")
}

/// Runs the named experiment.
pub fn reproduce(case: &str, opts: ReproOptions) -> Result<Report> {
    let started = Instant::now();
    let bounds = |default: Bounds| opts.bounds.unwrap_or(default);
    let workers = opts.workers.max(1);
    let typed = SemanticsConfig::default();
    let mut r = Report::new(case);
    match case {
        "hash3" => {
            let p = fixture(HASH3);
            let v = check(&p, lookup("HASH3")?, bounds(Bounds::new(1, 14, 4)), typed, workers)?;
            let via_receive = v.witness.as_ref().is_some_and(|w| {
                matches!(&w.formula, Formula::Implies(a, _)
                    if matches!(&**a, Formula::Atom(Atom::Action(ActionKind::Receive, _, Term::Hash(..)))))
            });
            r.agrees = v.outcome == Outcome::Counterexample && via_receive;
            r.observed = match &v.witness {
                Some(w) => format!("counterexample: {}", w.instance),
                None => "no counterexample within bounds".into(),
            };
            r.verdicts.push(v);
        }
        "gamma1-untyped" | "gamma1-typed" => {
            let untyped = case == "gamma1-untyped";
            let cfg = if untyped { typed.untyped() } else { typed };
            let p = fixture(CR);
            let v = check(&p, lookup("GAMMA1")?, bounds(Bounds::default()), cfg, workers)?;
            if untyped {
                let confusion = v.witness.as_ref().and_then(|w| signature_as_nonce(&w.run));
                r.agrees = v.outcome == Outcome::Counterexample && confusion.is_some();
                r.observed = match (&v.witness, confusion) {
                    (Some(w), Some(c)) => format!("counterexample ({c}): {}", w.instance),
                    (Some(w), None) => format!("counterexample without a type confusion: {}", w.instance),
                    (None, _) => "no counterexample within bounds".into(),
                };
            } else {
                r.agrees = v.holds();
                r.observed = format!("{} over {} runs", v.outcome.as_str(), v.stats.runs_explored);
            }
            r.verdicts.push(v);
        }
        "dh-formula2" => {
            let p = fixture(DH_MIN);
            let pattern = parse_action_pattern("Send(X, h(a,b)) < Receive(Y, h(b,a))")?;
            let b = bounds(Bounds::default());
            let off = executable(&p, &pattern, b, typed)?;
            let on = executable(&p, &pattern, b, typed.with_dh_theory(true))?;
            r.measurements.insert("executable_without_theory".into(), json!(off.is_some()));
            r.measurements.insert("executable_with_theory".into(), json!(on.is_some()));
            if let Some(run) = &on {
                r.measurements.insert("witness_run".into(), json!(run.trace()));
            }
            r.agrees = off.is_none() && on.is_some();
            r.observed = format!(
                "pattern {} without the theory, {} with it",
                if off.is_some() { "executable" } else { "not executable" },
                if on.is_some() { "executable" } else { "not executable" }
            );
        }
        "sec-symmetric" => {
            let p = fixture(SEC_SHARED);
            let sec = lookup("SEC")?;
            let b = bounds(Bounds::default());
            let asym = check(&p, sec, b, typed.with_keys(KeyScheme::AsymmetricOnly), workers)?;
            let sym = check(&p, sec, b, typed.with_keys(KeyScheme::SymmetricOnly), workers)?;
            r.agrees = asym.holds() && sym.outcome == Outcome::Counterexample;
            r.observed = format!(
                "asymmetric keys: {}; symmetric keys: {}",
                asym.outcome.as_str(),
                sym.outcome.as_str()
            );
            r.verdicts.push(asym);
            r.verdicts.push(sym);
        }
        "hash4-collapse" => {
            let b = bounds(Bounds::default());
            let typical = computes_share(&fixture(HASH_TYPICAL), b)?;
            let hash3 = computes_share(&fixture(HASH3), b)?;
            for (label, (yes, all)) in [("hash_typical", typical), ("hash3", hash3)] {
                r.measurements.insert(
                    label.into(),
                    json!({ "honest_holders": all, "also_compute": yes, "percent": percent(yes, all) }),
                );
            }
            r.agrees = typical.1 > 0 && typical.0 == typical.1 && hash3.0 < hash3.1;
            r.observed = format!(
                "honest holders that can compute: {:.1}% on the typical protocol, {:.1}% on Hash3",
                percent(typical.0, typical.1),
                percent(hash3.0, hash3.1)
            );
        }
        "q-prime" => {
            let b = bounds(Bounds::default());
            let cr = fixture(CR);
            let q = fixture(Q_PRIME);
            let gamma = lookup("GAMMA1")?;
            let run_level = check(&q, gamma, b, typed, workers)?;
            let honesty_cr = check_invariant_honesty_mode(&cr, gamma.schema(), b, typed)?;
            let honesty_q = check_invariant_honesty_mode(&q, gamma.schema(), b, typed)?;
            let bs2 = |h: &HonestyReport| h.sequences.get("Init.BS2").map(|v| v.outcome);
            let same = bs2(&honesty_cr).is_some() && bs2(&honesty_cr) == bs2(&honesty_q);
            r.agrees = run_level.outcome == Outcome::Counterexample && same;
            r.observed = format!(
                "run-level check of Q': {}; per-sequence check of Init.BS2: {} on CR, {} on Q'",
                run_level.outcome.as_str(),
                bs2(&honesty_cr).map_or("missing", Outcome::as_str),
                bs2(&honesty_q).map_or("missing", Outcome::as_str)
            );
            r.verdicts.push(run_level);
            r.honesty.push(honesty_cr);
            r.honesty.push(honesty_q);
        }
        "permutation" => {
            let b = bounds(Bounds::new(1, 14, 4));
            let p1 = fixture(PERM);
            let p2 = permute_basic_sequences(&p1, "P", &[2, 1, 0])?;
            let inv = lookup("PAIR_GEN")?.schema();
            let mut rows = Vec::new();
            for precedence in [false, true] {
                let cfg = typed.with_precedence(precedence);
                let h1 = check_invariant_honesty_mode(&p1, inv, b, cfg)?;
                let h2 = check_invariant_honesty_mode(&p2, inv, b, cfg)?;
                rows.push(h1.outcomes() == h2.outcomes());
                r.honesty.push(h1);
                r.honesty.push(h2);
            }
            r.agrees = rows[0] && !rows[1];
            r.observed = format!(
                "outcome multisets {} without precedence and {} with it",
                if rows[0] { "coincide" } else { "differ" },
                if rows[1] { "coincide" } else { "differ" }
            );
        }
        other => return Err(Error::UnknownCase(other.to_string())),
    }
    r.elapsed_ms = started.elapsed().as_millis() as u64;
    Ok(r)
}

fn percent(yes: usize, all: usize) -> f64 {
    if all == 0 {
        100.0
    } else {
        100.0 * yes as f64 / all as f64
    }
}

/// A responder thread whose nonce variable is bound to a term carrying a
/// signature.
fn signature_as_nonce(run: &Run) -> Option<String> {
    run.threads.iter().find_map(|t| {
        let x = t.subst.get("x")?;
        let carries_sig = x.subterms().iter().any(|s| matches!(s, Term::Sig(..)));
        (&*t.role == "Resp" && carries_sig).then(|| format!("thread #{} took x = {x}", t.id))
    })
}

/// Over all runs: instances of `Honest(^X) & Has(X, hash{m}K)` and how
/// many of them also satisfy `Computes(X, hash{m}K)`.
fn computes_share(p: &Protocol, bounds: Bounds) -> Result<(usize, usize)> {
    let vars = [
        Binder { name: name("X"), kind: VarKind::Thread },
        Binder { name: name("m"), kind: VarKind::Term },
        Binder { name: name("K"), kind: VarKind::Term },
    ];
    let holder = parse_formula("Honest(^X) & Has(X, hash{m}K)", &vars, None)?;
    let computes = parse_formula("Computes(X, hash{m}K)", &vars, None)?;
    let (mut yes, mut all) = (0, 0);
    for run in enumerate_shared(Arc::new(p.clone()), bounds, SemanticsConfig::default())? {
        for env in satisfying(&run, &vars, &holder)? {
            all += 1;
            let closed = computes.close(&env.threads, &env.terms);
            if crate::logic::eval_formula(&run, &closed)? {
                yes += 1;
            }
        }
    }
    Ok((yes, all))
}
