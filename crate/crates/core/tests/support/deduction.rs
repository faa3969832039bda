//! Exhaustive comparison of intruder deduction with a brute-force
//! fixpoint: every knowledge set of at most four terms built from three
//! atoms, against every goal of nesting depth at most two, with the
//! intruder's construction bound at three.

use std::collections::{HashMap, HashSet};

use pcl_core::engine::Knowledge;
use pcl_core::{SemanticsConfig, Sort, Term};

fn atoms() -> Vec<Term> {
    vec![
        Term::nonce("a", Some(1), Sort::Nonce),
        Term::nonce("b", Some(2), Sort::Nonce),
        Term::constant("k", Sort::SymKey),
    ]
}

/// Terms one constructor above `below`, plus `below` itself.
fn grow(below: &[Term]) -> Vec<Term> {
    let mut out = below.to_vec();
    for x in below {
        for y in below {
            out.push(Term::pair(x.clone(), y.clone()));
            out.push(Term::enc(x.clone(), y.clone()));
            out.push(Term::hash(x.clone(), y.clone()));
        }
    }
    let mut seen = HashSet::new();
    out.retain(|t| seen.insert(t.clone()));
    out
}

/// Analysis by naive iteration: split pairs, open ciphertexts whose key
/// is already known, until nothing changes.
fn analyze(knowledge: &[Term]) -> HashSet<Term> {
    let mut s: HashSet<Term> = knowledge.iter().cloned().collect();
    loop {
        let mut next = s.clone();
        for t in &s {
            match t {
                Term::Tuple(x, y) => {
                    next.insert((**x).clone());
                    next.insert((**y).clone());
                }
                Term::Enc(p, k) if s.contains(k) => {
                    next.insert((**p).clone());
                }
                _ => {}
            }
        }
        if next.len() == s.len() {
            return s;
        }
        s = next;
    }
}

/// The goal universe with each composite term's children resolved to
/// indices; subterms come before the terms built from them.
struct Universe {
    terms: Vec<Term>,
    index: HashMap<Term, usize>,
    children: Vec<Option<(usize, usize)>>,
    tuple: Vec<bool>,
}

impl Universe {
    fn new(mut terms: Vec<Term>) -> Self {
        terms.sort_by_key(|t| t.depth());
        let index: HashMap<Term, usize> = terms.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        let children = terms
            .iter()
            .map(|t| match t {
                Term::Tuple(x, y) | Term::Enc(x, y) | Term::Hash(x, y) => Some((index[&**x], index[&**y])),
                _ => None,
            })
            .collect();
        let tuple = terms.iter().map(|t| matches!(t, Term::Tuple(..))).collect();
        Universe { terms, index, children, tuple }
    }

    /// Fewest nested constructor applications needed to build each
    /// universe member from the analyzed set, `None` when impossible. A
    /// right-nested tuple is built in a single application.
    fn costs(&self, analyzed: &HashSet<Term>) -> Vec<Option<usize>> {
        let mut c = vec![None; self.terms.len()];
        for t in analyzed {
            if let Some(&i) = self.index.get(t) {
                c[i] = Some(0);
            }
        }
        for i in 0..c.len() {
            if c[i].is_some() {
                continue;
            }
            if let Some((x, y)) = self.children[i] {
                if let (Some(cx), Some(cy)) = (c[x], c[y]) {
                    let right = if self.tuple[i] && self.tuple[y] { cy.max(1) } else { cy + 1 };
                    c[i] = Some(right.max(cx + 1));
                }
            }
        }
        c
    }
}

fn subsets(items: &[Term], max: usize) -> Vec<Vec<Term>> {
    let mut out = vec![vec![]];
    fn go(items: &[Term], start: usize, cur: &mut Vec<Term>, max: usize, out: &mut Vec<Vec<Term>>) {
        for i in start..items.len() {
            cur.push(items[i].clone());
            out.push(cur.clone());
            if cur.len() < max {
                go(items, i + 1, cur, max, out);
            }
            cur.pop();
        }
    }
    go(items, 0, &mut Vec::new(), max, &mut out);
    out
}

/// Every goal is checked at the intruder depth bound of three, and every
/// derivable composite goal is also checked exactly at and just below its
/// construction cost.
pub fn deduction_matches_brute_force_closure() {
    let level1 = grow(&atoms());
    let goals = Universe::new(grow(&level1));
    let cfg = SemanticsConfig::default();
    let sets = subsets(&level1, 4);
    assert_eq!(sets.len(), 1 + 30 + 435 + 4060 + 27405);
    let mut positives = 0usize;
    for set in &sets {
        let costs = goals.costs(&analyze(set));
        let k = Knowledge::from_terms(set, cfg, 3);
        for (g, cost) in goals.terms.iter().zip(costs) {
            let got = k.derive(g, 3);
            assert_eq!(got, cost.is_some_and(|c| c <= 3), "knowledge {set:?}, goal {g}");
            if let Some(c) = cost.filter(|&c| c > 0) {
                assert!(k.derive(g, c), "knowledge {set:?}, goal {g} at depth {c}");
                assert!(!k.derive(g, c - 1), "knowledge {set:?}, goal {g} below depth {c}");
                positives += 1;
            }
        }
    }
    assert!(positives > 0);
}
