//! Algebraic laws of the term layer and structural invariants of
//! enumerated runs. Each check panics on failure.

use std::collections::HashSet;

use pcl_core::bench::{catalogue, check, check_invariant_honesty_mode, lookup};
use pcl_core::engine::{enumerate_runs, Knowledge, Run};
use pcl_core::logic::eval_formula;
use pcl_core::logic::reference::eval_reference;
use pcl_core::protocol::{parse_protocol, Action};
use pcl_core::term::{apply, contains, equal_mod_theory, normalize_dh};
use pcl_core::{Bounds, SemanticsConfig, Sort, Substitution, Term};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

const CR: &str = include_str!("../../../../fixtures/cr.pcl");
const HASH3: &str = include_str!("../../../../fixtures/hash3.pcl");
const Q_PRIME: &str = include_str!("../../../../fixtures/q_prime.pcl");
const DH: &str = include_str!("../../../../fixtures/dh_min.pcl");
const SEC: &str = include_str!("../../../../fixtures/sec_shared.pcl");
const TYPICAL: &str = include_str!("../../../../fixtures/hash_typical.pcl");

fn atoms() -> Vec<Term> {
    vec![
        Term::nonce("a", Some(1), Sort::Nonce),
        Term::nonce("b", Some(2), Sort::DhPriv),
        Term::constant("k", Sort::SymKey),
    ]
}

#[derive(Clone, Copy)]
enum Ctor {
    Pair,
    Enc,
    Hash,
    H,
    G,
}

/// All terms with one more constructor level than `below`.
fn grow(below: &[Term], ctors: &[Ctor]) -> Vec<Term> {
    let mut out = below.to_vec();
    for c in ctors {
        for x in below {
            if let Ctor::G = c {
                out.push(Term::g(x.clone()));
                continue;
            }
            for y in below {
                let (x, y) = (x.clone(), y.clone());
                out.push(match c {
                    Ctor::Pair => Term::pair(x, y),
                    Ctor::Enc => Term::enc(x, y),
                    Ctor::Hash => Term::hash(x, y),
                    Ctor::H => Term::h(x, y),
                    Ctor::G => unreachable!(),
                });
            }
        }
    }
    let mut seen = HashSet::new();
    out.retain(|t| seen.insert(t.clone()));
    out
}

fn universe(levels: usize, ctors: &[Ctor]) -> Vec<Term> {
    (0..levels).fold(atoms(), |u, _| grow(&u, ctors))
}

fn dh_on() -> SemanticsConfig {
    SemanticsConfig::default().with_dh_theory(true)
}

pub fn normalization_is_idempotent_and_size_preserving() {
    let cfg = dh_on();
    let terms = universe(3, &[Ctor::Pair, Ctor::H, Ctor::G]);
    assert!(terms.len() > 1_000_000);
    for t in &terms {
        let n = normalize_dh(t, &cfg);
        assert_eq!(normalize_dh(&n, &cfg), n, "{t}");
        assert_eq!(n.size(), t.size(), "{t}");
        assert_eq!(normalize_dh(t, &SemanticsConfig::default()), *t);
    }
}

pub fn contains_is_reflexive_on_every_small_term() {
    let cfg = dh_on();
    for t in universe(3, &[Ctor::Pair, Ctor::H, Ctor::G]) {
        assert!(contains(&t, &t, &cfg).unwrap(), "{t}");
    }
}

/// Transitivity over every pair of premises in a universe, computed from
/// the full containment matrix.
fn assert_transitive(terms: &[Term], cfg: &SemanticsConfig) {
    let n = terms.len();
    let words = n.div_ceil(64);
    let mut rows = vec![vec![0u64; words]; n];
    for (i, t1) in terms.iter().enumerate() {
        for (j, t2) in terms.iter().enumerate() {
            if contains(t1, t2, cfg).unwrap() {
                rows[i][j / 64] |= 1 << (j % 64);
            }
        }
    }
    for i in 0..n {
        assert!(rows[i][i / 64] & (1 << (i % 64)) != 0);
        for j in 0..n {
            if rows[i][j / 64] & (1 << (j % 64)) == 0 {
                continue;
            }
            for (inner, outer) in rows[j].iter().zip(&rows[i]) {
                assert_eq!(
                    inner & !outer,
                    0,
                    "{} contains {} but not everything it contains",
                    terms[i],
                    terms[j]
                );
            }
        }
    }
}

pub fn contains_is_transitive() {
    assert_transitive(&universe(2, &[Ctor::Pair, Ctor::Enc, Ctor::G]), &SemanticsConfig::default());
    assert_transitive(&universe(2, &[Ctor::Pair, Ctor::H, Ctor::G]), &dh_on());
}

pub fn equal_mod_theory_is_syntactic_without_the_theory() {
    let terms = universe(2, &[Ctor::H, Ctor::Hash]);
    let off = SemanticsConfig::default();
    let on = dh_on();
    for x in &terms {
        for y in &terms {
            assert_eq!(equal_mod_theory(x, y, &off), x == y);
            let e = equal_mod_theory(x, y, &on);
            assert_eq!(e, equal_mod_theory(y, x, &on));
            assert_eq!(e, normalize_dh(x, &on) == normalize_dh(y, &on));
        }
    }
}

fn arb_term() -> impl Strategy<Value = Term> {
    let leaf = prop::sample::select(atoms());
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::pair(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::enc(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::hash(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::h(a, b)),
            inner.prop_map(Term::g),
        ]
    })
}

fn pick_subterm(t: &Term, i: usize) -> Term {
    let subs = t.subterms();
    subs[i % subs.len()].clone()
}

fn run_cases<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) {
    let mut runner = TestRunner::new(Config {
        failure_persistence: None,
        ..Config::default()
    });
    if let Err(e) = runner.run(&strategy, test) {
        panic!("{e}");
    }
}

pub fn contains_chains_through_deeper_terms() {
    run_cases((arb_term(), any::<usize>(), any::<usize>(), any::<bool>()), |(t1, i, j, dh)| {
        let cfg = SemanticsConfig::default().with_dh_theory(dh);
        let t2 = pick_subterm(&t1, i);
        let t3 = pick_subterm(&t2, j);
        prop_assert!(contains(&t1, &t2, &cfg).unwrap());
        prop_assert!(contains(&t2, &t3, &cfg).unwrap());
        prop_assert!(contains(&t1, &t3, &cfg).unwrap());
        Ok(())
    });
}

pub fn equal_mod_theory_is_transitive() {
    run_cases((arb_term(), arb_term(), arb_term()), |(x, y, z)| {
        let cfg = dh_on();
        // Swapping h arguments gives a related term, so the premises hold often.
        let swapped = swap_h(&x);
        prop_assert!(equal_mod_theory(&x, &swapped, &cfg));
        if equal_mod_theory(&x, &y, &cfg) && equal_mod_theory(&y, &z, &cfg) {
            prop_assert!(equal_mod_theory(&x, &z, &cfg));
        }
        if equal_mod_theory(&swapped, &y, &cfg) {
            prop_assert!(equal_mod_theory(&x, &y, &cfg));
        }
        Ok(())
    });
}

pub fn derivation_is_monotone() {
    let sets = (
        prop::collection::vec(arb_term(), 0..4),
        prop::collection::vec(arb_term(), 0..3),
        arb_term(),
    );
    run_cases(sets, |(base, extra, goal)| {
        let cfg = SemanticsConfig::default();
        let small = Knowledge::from_terms(&base, cfg, 3);
        let mut all = base.clone();
        all.extend(extra);
        let large = Knowledge::from_terms(&all, cfg, 3);
        if small.derive(&goal, 3) {
            prop_assert!(large.derive(&goal, 3));
        }
        Ok(())
    });
}

fn swap_h(t: &Term) -> Term {
    match t {
        Term::DhH(a, b) => Term::h(swap_h(b), swap_h(a)),
        Term::Tuple(a, b) => Term::pair(swap_h(a), swap_h(b)),
        Term::Enc(a, b) => Term::enc(swap_h(a), swap_h(b)),
        Term::Hash(a, b) => Term::hash(swap_h(a), swap_h(b)),
        Term::DhG(a) => Term::g(swap_h(a)),
        _ => t.clone(),
    }
}

fn runs(src: &str, bounds: Bounds, cfg: SemanticsConfig) -> Vec<Run> {
    enumerate_runs(&parse_protocol(src).unwrap(), bounds, cfg).unwrap().collect()
}

/// Runs of several shapes, at least `n` in total.
fn run_sample(n: usize) -> Vec<Run> {
    let mut out = Vec::new();
    let small = Bounds::new(1, 14, 4);
    out.extend(runs(HASH3, small, SemanticsConfig::default()));
    out.extend(runs(DH, small, dh_on()));
    out.extend(runs(SEC, small, SemanticsConfig::default()));
    out.extend(runs(Q_PRIME, small, SemanticsConfig::default()));
    out.extend(runs(TYPICAL, small, SemanticsConfig::default()));
    let cr = parse_protocol(CR).unwrap();
    let rest = n.saturating_sub(out.len());
    out.extend(
        enumerate_runs(&cr, Bounds::default(), SemanticsConfig::default().untyped())
            .unwrap()
            .take(rest.max(200)),
    );
    assert!(out.len() >= n);
    out
}

/// Role action instantiated with a thread's final substitution, in the
/// form the matching event should carry.
fn expected_action(a: &Action, s: &Substitution, cfg: &SemanticsConfig) -> String {
    let g = |t: &Term| apply(s, t, cfg, true).unwrap().to_string();
    let val = |v: &pcl_core::Var| g(&Term::Var(v.clone()));
    match a {
        Action::Send { from, to, msg } => format!("send {},{},{}", g(from), g(to), g(msg)),
        Action::Receive { from, to, pattern } => format!("receive {},{},{}", g(from), g(to), g(pattern)),
        Action::New(v) => format!("new {} = {}", v.name, val(v)),
        Action::Enc { out, payload, key } => format!("{} := enc {},{} = {}", out.name, g(payload), g(key), val(out)),
        Action::Dec { out, cipher, key } => format!("{} := dec {},{} = {}", out.name, g(cipher), g(key), val(out)),
        Action::Sign { out, payload, signer } => {
            format!("{} := sign {},{} = {}", out.name, g(payload), g(signer), val(out))
        }
        Action::Verify { sig, payload, signer } => format!("verify {},{},{}", g(sig), g(payload), g(signer)),
    }
}

fn normalized_event(e: &pcl_core::engine::Event, cfg: &SemanticsConfig) -> String {
    use pcl_core::engine::GroundAction as G;
    let n = |t: &Term| normalize_dh(t, cfg).to_string();
    match &e.action {
        G::Send { from, to, msg } => format!("send {},{},{}", n(from), n(to), n(msg)),
        G::Receive { from, to, msg } => format!("receive {},{},{}", n(from), n(to), n(msg)),
        G::New { var, value } => format!("new {var} = {}", n(value)),
        G::Enc { var, payload, key, value } => format!("{var} := enc {},{} = {}", n(payload), n(key), n(value)),
        G::Dec { var, cipher, key, value } => format!("{var} := dec {},{} = {}", n(cipher), n(key), n(value)),
        G::Sign { var, payload, signer, value } => {
            format!("{var} := sign {},{} = {}", n(payload), n(signer), n(value))
        }
        G::Verify { sig, payload, signer } => format!("verify {},{},{}", n(sig), n(payload), n(signer)),
    }
}

pub fn honest_threads_follow_their_role_body() {
    let sample = run_sample(1000);
    let mut checked = 0;
    for run in &sample {
        for t in run.threads.iter().filter(|t| t.honest) {
            let role = run.role_of(t);
            let own: Vec<_> = run.thread_events(t.id).collect();
            assert_eq!(own.len(), t.pc, "{}", run.trace());
            for (i, e) in own.iter().enumerate() {
                assert_eq!(e.pc, i, "thread {} skips an action in\n{}", t.id, run.trace());
                assert_eq!(
                    normalized_event(e, &run.config),
                    expected_action(&role.body[i], &t.subst, &run.config),
                    "thread {} in\n{}",
                    t.id,
                    run.trace()
                );
            }
            checked += 1;
        }
    }
    assert!(checked >= 1000);
}

pub fn every_received_message_was_derivable() {
    for run in run_sample(1000) {
        for e in &run.events {
            if let Some(m) = e.action.addressed().filter(|_| e.action.keyword() == "receive") {
                let k = run.intruder_knowledge(e.index);
                assert!(k.derive(&m, run.bounds.max_intruder_depth), "event {} of\n{}", e.index, run.trace());
            }
        }
    }
}

fn trace_set(src: &str, bounds: Bounds, cfg: SemanticsConfig) -> HashSet<String> {
    runs(src, bounds, cfg).iter().map(Run::trace).collect()
}

pub fn typed_runs_are_untyped_runs() {
    let small = Bounds::new(1, 14, 4);
    for (src, cfg) in [
        (CR, SemanticsConfig::default()),
        (HASH3, SemanticsConfig::default()),
        (Q_PRIME, SemanticsConfig::default()),
        (DH, dh_on()),
    ] {
        let typed = trace_set(src, small, cfg);
        let untyped = trace_set(src, small, cfg.untyped());
        assert!(typed.is_subset(&untyped));
        assert!(!typed.is_empty());
    }
    let typed = trace_set(CR, Bounds::default(), SemanticsConfig::default());
    let untyped = trace_set(CR, Bounds::default(), SemanticsConfig::default().untyped());
    assert!(typed.is_subset(&untyped));
    assert!(typed.len() < untyped.len());
}

fn assert_replays(run: &Run, formula: &pcl_core::logic::Formula) {
    assert!(!eval_formula(run, formula).unwrap(), "{formula}");
    assert!(!eval_reference(run, formula).unwrap(), "{formula}");
}

pub fn counterexample_witnesses_replay_false() {
    let small = Bounds::new(1, 14, 4);
    let mut replayed = 0;
    for (src, cfg) in [
        (CR, SemanticsConfig::default().untyped()),
        (HASH3, SemanticsConfig::default()),
        (SEC, SemanticsConfig::default().with_keys(pcl_core::KeyScheme::SymmetricOnly)),
        (DH, dh_on()),
        (Q_PRIME, SemanticsConfig::default()),
    ] {
        let p = parse_protocol(src).unwrap();
        for entry in catalogue() {
            if entry.requires_dh && !cfg.dh_theory {
                continue;
            }
            let v = check(&p, entry, small, cfg, 1).unwrap();
            if let Some(w) = &v.witness {
                assert_replays(&w.run, &w.formula);
                replayed += 1;
            }
        }
    }
    let report = check_invariant_honesty_mode(
        &parse_protocol(Q_PRIME).unwrap(),
        lookup("GAMMA1").unwrap().schema(),
        Bounds::default(),
        SemanticsConfig::default(),
    )
    .unwrap();
    for v in report.sequences.values() {
        if let Some(w) = &v.witness {
            assert_replays(&w.run, &w.formula);
            replayed += 1;
        }
    }
    assert!(replayed >= 5, "only {replayed} witnesses");
}

pub fn received_messages_were_sent() {
    let ar1 = lookup("AR1").unwrap();
    for run in run_sample(1000) {
        let inst = pcl_core::logic::counterexample(&run, ar1.schema()).unwrap();
        assert!(inst.is_none(), "AR1 fails on\n{}", run.trace());
    }
}
