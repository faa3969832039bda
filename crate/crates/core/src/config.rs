//! Semantic toggles and search limits shared by every layer.

use serde::Serialize;

use crate::error::{Error, Result};

/// How encryption keys are interpreted when decrypting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyScheme {
    /// One key set; every key decrypts what it encrypts.
    SymmetricOnly,
    /// One key set; every key has a single owner who alone holds its inverse.
    AsymmetricOnly,
    /// `pk`/`sk` pairs are asymmetric, `k(A,B)` and constants are symmetric.
    Split,
}

impl KeyScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            KeyScheme::SymmetricOnly => "sym",
            KeyScheme::AsymmetricOnly => "asym",
            KeyScheme::Split => "split",
        }
    }
}

impl std::str::FromStr for KeyScheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sym" | "symmetric" | "symmetric-only" => Ok(KeyScheme::SymmetricOnly),
            "asym" | "asymmetric" | "asymmetric-only" => Ok(KeyScheme::AsymmetricOnly),
            "split" => Ok(KeyScheme::Split),
            other => Err(format!("unknown key scheme `{other}` (sym|asym|split)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct SemanticsConfig {
    /// Enforce variable sorts during matching.
    pub typed: bool,
    /// Quotient terms by `h(a,b) = h(b,a)`.
    pub dh_theory: bool,
    pub key_scheme: KeyScheme,
    /// Anyone holding a signature can read its payload.
    pub sig_reveals_payload: bool,
    /// Honesty-mode checking prepends each basic sequence's role prefix.
    pub precedence_rule: bool,
}

impl Default for SemanticsConfig {
    fn default() -> Self {
        SemanticsConfig {
            typed: true,
            dh_theory: false,
            key_scheme: KeyScheme::Split,
            sig_reveals_payload: true,
            precedence_rule: false,
        }
    }
}

impl SemanticsConfig {
    pub fn untyped(self) -> Self {
        SemanticsConfig { typed: false, ..self }
    }

    pub fn with_dh_theory(self, on: bool) -> Self {
        SemanticsConfig { dh_theory: on, ..self }
    }

    pub fn with_keys(self, key_scheme: KeyScheme) -> Self {
        SemanticsConfig { key_scheme, ..self }
    }

    pub fn with_precedence(self, on: bool) -> Self {
        SemanticsConfig {
            precedence_rule: on,
            ..self
        }
    }
}

/// Search limits for run enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Bounds {
    pub max_threads_per_role: usize,
    pub max_run_length: usize,
    pub max_intruder_depth: usize,
}

impl Bounds {
    pub fn new(threads: usize, length: usize, depth: usize) -> Self {
        Bounds {
            max_threads_per_role: threads,
            max_run_length: length,
            max_intruder_depth: depth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let zero = [
            ("max_threads_per_role", self.max_threads_per_role),
            ("max_run_length", self.max_run_length),
            ("max_intruder_depth", self.max_intruder_depth),
        ]
        .into_iter()
        .find(|(_, v)| *v == 0);
        match zero {
            Some((name, _)) => Err(Error::Bounds(format!("{name} must be at least 1"))),
            None => Ok(()),
        }
    }
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds::new(2, 14, 4)
    }
}
