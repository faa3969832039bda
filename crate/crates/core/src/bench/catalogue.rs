use std::sync::OnceLock;

use crate::config::SemanticsConfig;
use crate::error::{Error, Result};
use crate::logic::{parse_schema, Schema, SchemaKind};

/// One axiom or invariant of the catalogue.
#[derive(Debug, Clone)]
pub struct AxiomEntry {
    pub name: &'static str,
    pub source: &'static str,
    /// Only meaningful with the `h(a,b) = h(b,a)` theory enabled.
    pub requires_dh: bool,
    /// What the formula claims, in words.
    pub summary: &'static str,
    schema: Schema,
}

impl AxiomEntry {
    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn kind(&self) -> SchemaKind {
        self.schema.kind
    }

    pub fn check_features(&self, config: &SemanticsConfig) -> Result<()> {
        if self.requires_dh && !config.dh_theory {
            return Err(Error::FeatureMismatch {
                axiom: self.name.to_string(),
                feature: "the Diffie-Hellman theory (--dh-theory on)".into(),
            });
        }
        Ok(())
    }
}

const ENTRIES: &[(&str, bool, &str)] = &[
    (
        "axiom VER [Y:thread, x:term, A:agent] :
           Honest(A) & Verify(Y, sig{x}A) & A != ^Y =>
           exists thread X. ^X = A & exists term m. Send(X, m) & Contains(m, sig{x}A);",
        false,
        "a verified signature of an honest agent was sent by one of that agent's threads",
    ),
    (
        "axiom SEC [Y:thread, x:term, A:agent, B:agent] :
           Honest(A) & (Decrypt(Y, enc{x}A) | Decrypt(Y, enc{x}pk(A)) | Decrypt(Y, enc{x}k(A,B)))
           => ^Y = A;",
        false,
        "only the owner of a key decrypts what was encrypted for it",
    ),
    (
        "axiom AR1 [X:thread, t:term] : [receive t]_X exists thread* Z. Send(Z, t);",
        false,
        "every received message was sent by someone, the intruder included",
    ),
    (
        "axiom AR3 [X:thread, x:term, y:term, K:term] :
           Receive(X, x) [y := dec x, K]_X Receive(X, enc{y}K);",
        false,
        "decrypting a received ciphertext means the ciphertext was received",
    ),
    (
        "axiom DH1 [X:thread, a:term, b:term] : Computes(X, h(a,b)) => Has(X, h(a,b));",
        true,
        "a thread that computes a shared secret has it",
    ),
    (
        "axiom DH2 [X:thread, a:term, b:term] :
           Has(X, h(a,b)) => Computes(X, h(a,b)) | exists term m. Receive(X, m) & Contains(m, h(a,b));",
        true,
        "a shared secret is held because it was computed or received",
    ),
    (
        "axiom DH3 [X:thread, m:term, a:term, b:term] :
           Receive(X, m) & Contains(m, h(a,b)) =>
           exists thread Y. exists term n. Computes(Y, h(a,b)) & Send(Y, n) & Contains(n, h(a,b));",
        true,
        "a received shared secret was computed and sent by some thread",
    ),
    (
        "axiom DH4 [X:thread, a:term] : Fresh(X, a) => Fresh(X, g(a));",
        true,
        "freshness of an exponent carries over to its public value",
    ),
    (
        "axiom HASH1 [X:thread, x:term, K:term] : Computes(X, hash{x}K) => Has(X, x) & Has(X, K);",
        false,
        "computing a keyed hash requires its components",
    ),
    (
        "axiom HASH2 [X:thread, x:term, K:term] : Computes(X, hash{x}K) => Has(X, hash{x}K);",
        false,
        "a computed keyed hash is held",
    ),
    (
        "axiom HASH3 [X:thread, x:term, K:term] :
           Receive(X, hash{x}K) => exists thread Y. Computes(Y, hash{x}K) & Send(Y, hash{x}K);",
        false,
        "a received keyed hash was sent in the clear by a thread able to compute it",
    ),
    (
        "axiom HASH4 [X:thread, x:term, K:term] :
           Has(X, hash{x}K) => Computes(X, hash{x}K)
             | exists thread Y. exists term m. Computes(Y, hash{x}K) & Send(Y, m) & Contains(m, hash{x}K);",
        false,
        "a held keyed hash was computed locally or computed and sent by some thread",
    ),
    (
        "invariant GAMMA1 [Y:thread, t:term, y:term, m:term, X:agent] :
           Send(Y, t) & Contains(t, sig{(y,m,X)}^Y) =>
           Gen(Y, m) | (Receive(Y, (X, ^Y, m)) < Send(Y, (^Y, X, y, sig{(y,m,X)}^Y)));",
        false,
        "a thread signing (y,m,X) generated m or received it bare before sending the signature",
    ),
    (
        "invariant HONEST_HASH [X:thread, m:term, K:term] :
           Honest(^X) & Has(X, hash{m}K) => Computes(X, hash{m}K);",
        false,
        "an honest thread holding a keyed hash can compute it",
    ),
    (
        "invariant PAIR_GEN [Z:thread, u:term] : Send(Z, (u,u)) => exists term v. Gen(Z, v);",
        false,
        "a thread that sends a doubled value has generated something",
    ),
];

/// The axioms and invariants known to the checker, in a fixed order.
pub fn catalogue() -> &'static [AxiomEntry] {
    static CATALOGUE: OnceLock<Vec<AxiomEntry>> = OnceLock::new();
    CATALOGUE.get_or_init(|| {
        ENTRIES
            .iter()
            .map(|(src, dh, summary)| {
                let schema = parse_schema(src, None).unwrap_or_else(|e| panic!("catalogue entry: {e}\n{src}"));
                AxiomEntry {
                    name: leak_name(&schema.name),
                    source: src,
                    requires_dh: *dh,
                    summary,
                    schema,
                }
            })
            .collect()
    })
}

fn leak_name(n: &str) -> &'static str {
    ENTRIES
        .iter()
        .find_map(|(src, _, _)| {
            let after = src.split_whitespace().nth(1)?;
            (after == n).then_some(after)
        })
        .expect("catalogue names come from the entry sources")
}

/// Case-insensitive lookup by name.
pub fn lookup(name: &str) -> Result<&'static AxiomEntry> {
    catalogue()
        .iter()
        .find(|e| e.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::UnknownAxiom {
            name: name.to_string(),
            catalogue: catalogue().iter().map(|e| e.name).collect::<Vec<_>>().join(", "),
        })
}
