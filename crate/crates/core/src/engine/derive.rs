//! Dolev-Yao deduction: an analyzed knowledge set plus goal-directed
//! synthesis with a construction-depth bound.

use indexmap::IndexSet;
use rustc_hash::FxBuildHasher;

use crate::config::{KeyScheme, SemanticsConfig};
use crate::term::{normalize_dh, Sort, Term};

/// Key that opens a ciphertext built with `key` under the given scheme.
pub fn decryption_key(key: &Term, scheme: KeyScheme) -> Term {
    match scheme {
        KeyScheme::SymmetricOnly => key.clone(),
        KeyScheme::Split => match key {
            Term::PubKey(a) => Term::sk((**a).clone()),
            Term::PrivKey(a) => Term::pk((**a).clone()),
            Term::Agent(_) => Term::sk(key.clone()),
            _ => key.clone(),
        },
        KeyScheme::AsymmetricOnly => match key {
            Term::PubKey(a) => Term::sk((**a).clone()),
            Term::PrivKey(a) => Term::pk((**a).clone()),
            Term::Agent(_) => Term::sk(key.clone()),
            // A shared key belongs to the first agent it names.
            Term::SymKey(owner, _) => Term::sk((**owner).clone()),
            other => Term::constant(&format!("inv({other})"), Sort::AsymKey),
        },
    }
}

/// Closure of a term set under projection, decryption with a derivable
/// key, and (optionally) signature payload extraction. Synthesis is done
/// on demand by [`Knowledge::derive`].
#[derive(Debug, Clone)]
pub struct Knowledge {
    config: SemanticsConfig,
    depth: usize,
    items: IndexSet<Term, FxBuildHasher>,
    /// Ciphertexts whose key is not derivable yet.
    pending: Vec<Term>,
}

impl Knowledge {
    pub fn new(config: SemanticsConfig, depth: usize) -> Self {
        Knowledge {
            config,
            depth,
            items: IndexSet::default(),
            pending: Vec::new(),
        }
    }

    pub fn from_terms<'a>(
        terms: impl IntoIterator<Item = &'a Term>,
        config: SemanticsConfig,
        depth: usize,
    ) -> Self {
        let mut k = Knowledge::new(config, depth);
        for t in terms {
            k.add(t);
        }
        k
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Analyzed terms in insertion order.
    pub fn items(&self) -> &IndexSet<Term, FxBuildHasher> {
        &self.items
    }

    pub fn holds(&self, t: &Term) -> bool {
        self.items.contains(&normalize_dh(t, &self.config))
    }

    pub fn add(&mut self, t: &Term) {
        let t = normalize_dh(t, &self.config);
        if self.items.contains(&t) {
            return;
        }
        self.analyze(t);
        loop {
            let before = self.items.len();
            let pending = std::mem::take(&mut self.pending);
            for c in pending {
                match &c {
                    Term::Enc(p, k) if self.can_open(k) => self.analyze((**p).clone()),
                    _ => self.pending.push(c),
                }
            }
            if self.items.len() == before {
                break;
            }
        }
    }

    fn can_open(&self, key: &Term) -> bool {
        let dk = normalize_dh(&decryption_key(key, self.config.key_scheme), &self.config);
        self.synth(&dk, self.depth)
    }

    fn analyze(&mut self, t: Term) {
        if !self.items.insert(t.clone()) {
            return;
        }
        match &t {
            Term::Tuple(a, b) => {
                self.analyze((**a).clone());
                self.analyze((**b).clone());
            }
            Term::Sig(p, _) if self.config.sig_reveals_payload => self.analyze((**p).clone()),
            Term::Enc(p, k) => {
                if self.can_open(k) {
                    self.analyze((**p).clone());
                } else {
                    self.pending.push(t.clone());
                }
            }
            _ => {}
        }
    }

    /// Whether `goal` can be built from the analyzed set using at most
    /// `depth` nested constructor applications.
    pub fn derive(&self, goal: &Term, depth: usize) -> bool {
        if self.config.dh_theory {
            self.synth(&normalize_dh(goal, &self.config), depth)
        } else {
            self.synth(goal, depth)
        }
    }

    fn synth(&self, goal: &Term, depth: usize) -> bool {
        if self.items.contains(goal) {
            return true;
        }
        if depth == 0 {
            return false;
        }
        let d = depth - 1;
        match goal {
            // A whole tuple counts as one constructor application.
            Term::Tuple(a, b) => {
                self.synth(a, d) && if matches!(**b, Term::Tuple(..)) { self.synth(b, depth) } else { self.synth(b, d) }
            }
            Term::Enc(a, b) | Term::Hash(a, b) => self.synth(a, d) && self.synth(b, d),
            Term::Sig(p, signer) => {
                self.items.contains(&Term::sk((**signer).clone())) && self.synth(p, d)
            }
            Term::DhG(a) => self.synth(a, d),
            Term::DhH(x, y) => {
                let gy = normalize_dh(&Term::g((**y).clone()), &self.config);
                let gx = normalize_dh(&Term::g((**x).clone()), &self.config);
                (self.synth(x, d) && self.synth(&gy, d))
                    || (self.config.dh_theory && self.synth(y, d) && self.synth(&gx, d))
            }
            _ => false,
        }
    }
}

/// One-shot form of [`Knowledge::derive`].
pub fn derive(knowledge: &[Term], goal: &Term, config: &SemanticsConfig, depth: usize) -> bool {
    Knowledge::from_terms(knowledge, *config, depth).derive(goal, depth)
}
