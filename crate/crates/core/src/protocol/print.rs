use std::collections::HashSet;
use std::fmt::Write;

use crate::term::{Name, Term};

use super::{Action, Protocol, Role};

pub(super) fn print_protocol(p: &Protocol) -> String {
    let mut out = format!("protocol {}\n", p.name);
    let s = &p.setup;
    out.push_str("setup {\n");
    if !s.honest.is_empty() {
        let _ = writeln!(out, "  honest {};", join(&s.honest));
    }
    if !s.dishonest.is_empty() {
        let _ = writeln!(out, "  dishonest {};", join(&s.dishonest));
    }
    for (k, sort) in &s.consts {
        let _ = writeln!(out, "  const {k}:{sort};");
    }
    if !s.intruder_knows.is_empty() {
        let terms: Vec<String> = s.intruder_knows.iter().map(Term::to_string).collect();
        let _ = writeln!(out, "  intruder knows {};", terms.join(", "));
    }
    out.push_str("}\n");
    for r in &p.roles {
        out.push('\n');
        out.push_str(&print_role(r));
    }
    out
}

fn join(names: &[Name]) -> String {
    names.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" ")
}

pub(super) fn print_role(r: &Role) -> String {
    let params: Vec<String> = r.params.iter().map(|v| v.name.to_string()).collect();
    let mut head = params.join(", ");
    if !r.free.is_empty() {
        let free: Vec<String> = r.free.iter().map(|v| format!("{}:{}", v.name, v.sort)).collect();
        let _ = write!(head, "; {}", free.join(", "));
    }
    let mut out = format!("role {}({head}) {{\n", r.name);
    let mut bound: HashSet<Name> = r.params.iter().chain(&r.free).map(|v| v.name.clone()).collect();
    for a in &r.body {
        let _ = writeln!(out, "  {};", print_action(a, Some(&mut bound)));
    }
    out.push_str("}\n");
    out
}

/// Renders one action. With a scope, variables first bound by a receive
/// pattern are annotated with their sort and added to the scope.
pub(super) fn print_action(a: &Action, mut bound: Option<&mut HashSet<Name>>) -> String {
    let out = match a {
        Action::Send { from, to, msg } => format!("send {from},{to},{msg}"),
        Action::Receive { from, to, pattern } => {
            let mut parts = Vec::new();
            for t in [from, to, pattern] {
                let mut s = String::new();
                pattern_into(t, bound.as_deref_mut(), &mut s);
                parts.push(s);
            }
            format!("receive {}", parts.join(","))
        }
        Action::New(v) => format!("new {}:{}", v.name, v.sort),
        Action::Enc { out, payload, key } => {
            format!("{}:{} := enc {payload},{key}", out.name, out.sort)
        }
        Action::Dec { out, cipher, key } => {
            format!("{}:{} := dec {cipher},{key}", out.name, out.sort)
        }
        Action::Sign { out, payload, signer } => {
            format!("{}:{} := sign {payload},{signer}", out.name, out.sort)
        }
        Action::Verify { sig, payload, signer } => format!("verify {sig},{payload},{signer}"),
    };
    if let (Some(b), Some(v)) = (bound, a.out_var()) {
        b.insert(v.name.clone());
    }
    out
}

fn pattern_into(t: &Term, mut bound: Option<&mut HashSet<Name>>, out: &mut String) {
    let list = |items: Vec<&Term>, out: &mut String, bound: &mut Option<&mut HashSet<Name>>| {
        for (i, item) in items.into_iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            pattern_into(item, bound.as_deref_mut(), out);
        }
    };
    match t {
        Term::Var(v) => {
            out.push_str(&v.name);
            if let Some(b) = bound {
                if b.insert(v.name.clone()) {
                    let _ = write!(out, ":{}", v.sort);
                }
            }
        }
        Term::Tuple(..) => {
            out.push('(');
            list(t.tuple_items(), out, &mut bound);
            out.push(')');
        }
        Term::Enc(m, k) | Term::Sig(m, k) | Term::Hash(m, k) => {
            let kw = match t {
                Term::Enc(..) => "enc",
                Term::Sig(..) => "sig",
                _ => "hash",
            };
            let _ = write!(out, "{kw}{{");
            pattern_into(m, bound.as_deref_mut(), out);
            out.push('}');
            let paren = matches!(**k, Term::Tuple(..));
            if paren {
                out.push('(');
            }
            pattern_into(k, bound, out);
            if paren {
                out.push(')');
            }
        }
        Term::PubKey(a) | Term::PrivKey(a) | Term::DhG(a) => {
            let kw = match t {
                Term::PubKey(_) => "pk",
                Term::PrivKey(_) => "sk",
                _ => "g",
            };
            let _ = write!(out, "{kw}(");
            pattern_into(a, bound, out);
            out.push(')');
        }
        Term::SymKey(a, b) | Term::DhH(a, b) => {
            out.push_str(if matches!(t, Term::SymKey(..)) { "k(" } else { "h(" });
            pattern_into(a, bound.as_deref_mut(), out);
            out.push(',');
            pattern_into(b, bound, out);
            out.push(')');
        }
        Term::Agent(_) | Term::Nonce(_) | Term::Const(..) => {
            let _ = write!(out, "{t}");
        }
    }
}
