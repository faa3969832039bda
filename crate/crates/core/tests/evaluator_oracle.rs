//! The guided evaluator must agree with the naive reference evaluator,
//! both on random closed formulas and on every catalogue schema.

use std::sync::OnceLock;

use pcl_core::bench::catalogue;
use pcl_core::engine::{enumerate_runs, ActionKind, Run};
use pcl_core::logic::reference::eval_reference;
use pcl_core::logic::{
    axiom_instances, counterexample, eval_formula, term_domain, Atom, Binder, Formula, ThreadRef, VarKind,
};
use pcl_core::protocol::parse_protocol;
use pcl_core::term::name;
use pcl_core::{Bounds, SemanticsConfig, Sort, Term};
use proptest::prelude::*;

fn runs_of(src: &str, config: SemanticsConfig, bounds: Bounds) -> Vec<Run> {
    let p = parse_protocol(src).unwrap();
    enumerate_runs(&p, bounds, config).unwrap().collect()
}

/// A handful of runs of different shapes: the longest run of each fixture
/// plus a short prefix-like one.
fn sample_runs() -> &'static [Run] {
    static RUNS: OnceLock<Vec<Run>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let small = Bounds::new(1, 14, 4);
        let fixtures = [
            (include_str!("../../../fixtures/hash3.pcl"), SemanticsConfig::default()),
            (include_str!("../../../fixtures/cr.pcl"), SemanticsConfig::default()),
            (include_str!("../../../fixtures/q_prime.pcl"), SemanticsConfig::default()),
            (include_str!("../../../fixtures/dh_min.pcl"), SemanticsConfig::default().with_dh_theory(true)),
            (include_str!("../../../fixtures/sec_shared.pcl"), SemanticsConfig::default()),
        ];
        let mut out = Vec::new();
        for (src, cfg) in fixtures {
            let runs = runs_of(src, cfg, small);
            let longest = runs.iter().max_by_key(|r| r.len()).unwrap().clone();
            let mid = runs[runs.len() / 2].clone();
            out.push(longest);
            out.push(mid);
        }
        out
    })
}

/// Builds a random closed formula from a stream of choices.
struct Gen<'a> {
    choices: &'a [u32],
    at: usize,
    run: &'a Run,
    domain: Vec<Term>,
    scope: Vec<(String, VarKind)>,
    fresh: usize,
}

impl Gen<'_> {
    fn pick(&mut self, n: usize) -> usize {
        let c = self.choices[self.at % self.choices.len()];
        self.at += 1;
        c as usize % n.max(1)
    }

    fn thread(&mut self) -> ThreadRef {
        let vars: Vec<String> = self.scope.iter().filter(|(_, k)| k.is_thread()).map(|(n, _)| n.clone()).collect();
        if !vars.is_empty() && self.pick(4) != 0 {
            let i = self.pick(vars.len());
            return ThreadRef::Var(name(&vars[i]));
        }
        ThreadRef::Id(1 + self.pick(self.run.threads.len().max(1)) as u32)
    }

    fn term(&mut self) -> Term {
        let vars: Vec<(String, VarKind)> = self.scope.clone();
        match self.pick(3) {
            0 if !vars.is_empty() => {
                let i = self.pick(vars.len());
                let (n, k) = &vars[i];
                match k {
                    VarKind::Term => Term::var(n, Sort::Message),
                    VarKind::Agent => Term::var(n, Sort::Agent),
                    _ => Term::var(&format!("^{n}"), Sort::Agent),
                }
            }
            _ => {
                let i = self.pick(self.domain.len());
                self.domain[i].clone()
            }
        }
    }

    fn action(&mut self) -> Atom {
        let kinds = [ActionKind::Send, ActionKind::Receive, ActionKind::Gen, ActionKind::Verify, ActionKind::Sign];
        let k = kinds[self.pick(kinds.len())];
        Atom::Action(k, self.thread(), self.term())
    }

    fn atom(&mut self) -> Atom {
        match self.pick(8) {
            0 | 1 => self.action(),
            2 => Atom::Has(self.thread(), self.term()),
            3 => Atom::Fresh(self.thread(), self.term()),
            4 => Atom::Contains(self.term(), self.term()),
            5 => Atom::Eq(self.term(), self.term()),
            6 => Atom::Order(Box::new(self.action()), Box::new(self.action())),
            _ => Atom::Honest(self.term()),
        }
    }

    fn formula(&mut self, depth: usize) -> Formula {
        if depth == 0 {
            return Formula::Atom(self.atom());
        }
        match self.pick(9) {
            0 => Formula::Atom(self.atom()),
            1 => Formula::not(self.formula(depth - 1)),
            2 => Formula::and(self.formula(depth - 1), self.formula(depth - 1)),
            3 => Formula::or(self.formula(depth - 1), self.formula(depth - 1)),
            4 => Formula::implies(self.formula(depth - 1), self.formula(depth - 1)),
            _ => {
                let kinds = [VarKind::Thread, VarKind::AnyThread, VarKind::Term, VarKind::Agent];
                let kind = kinds[self.pick(kinds.len())];
                self.fresh += 1;
                let n = format!("v{}", self.fresh);
                self.scope.push((n.clone(), kind));
                let body = self.formula(depth - 1);
                self.scope.pop();
                let b = Binder { name: name(&n), kind };
                if self.pick(2) == 0 {
                    Formula::Exists(b, Box::new(body))
                } else {
                    Formula::Forall(b, Box::new(body))
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn guided_evaluation_matches_reference(which in 0usize..10, choices in prop::collection::vec(any::<u32>(), 24..64)) {
        let runs = sample_runs();
        let run = &runs[which % runs.len()];
        let mut g = Gen { choices: &choices, at: 0, run, domain: term_domain(run), scope: vec![], fresh: 0 };
        let f = g.formula(4);
        let fast = eval_formula(run, &f);
        let slow = eval_reference(run, &f);
        match (fast, slow) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b, "formula {} on\n{}", f, run.trace()),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{f}: evaluator {a:?}, reference {b:?}"),
        }
    }
}

#[test]
fn catalogue_counterexamples_match_reference() {
    let mut compared = 0;
    for run in sample_runs() {
        let domain = term_domain(run).len();
        for entry in catalogue() {
            if entry.requires_dh && !run.config.dh_theory {
                continue;
            }
            let schema = entry.schema();
            let size: usize = schema
                .vars
                .iter()
                .map(|b| match b.kind {
                    VarKind::Term => domain,
                    _ => run.threads.len() + 2,
                })
                .product();
            if size > 40_000 {
                continue;
            }
            let expected = axiom_instances(run, schema)
                .iter()
                .any(|inst| !eval_reference(run, inst).unwrap());
            let found = counterexample(run, schema).unwrap();
            assert_eq!(found.is_some(), expected, "{} on\n{}", entry.name, run.trace());
            if let Some(inst) = found {
                assert!(!eval_reference(run, &inst.formula).unwrap(), "witness of {} replays false", entry.name);
            }
            compared += 1;
        }
    }
    assert!(compared > 20, "only {compared} comparisons");
}
