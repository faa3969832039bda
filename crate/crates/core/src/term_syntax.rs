//! Concrete term syntax shared by the protocol and formula languages:
//! `A`, `n`, `x:nonce`, `(t1,t2,...)`, `enc{t}k`, `sig{t}A`, `hash{t}k`,
//! `g(a)`, `h(a,b)`, `pk(A)`, `sk(A)`, `k(A,B)`, plus `m#3` for fresh
//! values and `^X` (formulas only) for the agent executing thread `X`.

use crate::error::{Error, Pos, Result};
use crate::lexer::{Cursor, Tok};
use crate::term::{Sort, Term};

/// Maps identifiers to terms; each language has its own scoping rules.
pub trait Resolver {
    fn resolve(&mut self, name: &str, annotation: Option<Sort>, pos: Pos) -> Result<Term>;

    fn hat(&mut self, name: &str, pos: Pos) -> Result<Term> {
        Err(Error::Semantic {
            pos,
            message: format!("`^{name}` is only meaningful in formulas"),
        })
    }
}

pub fn parse_sort(c: &mut Cursor) -> Result<Sort> {
    let pos = c.pos();
    let s = c.ident("a sort")?;
    Sort::parse(&s).ok_or_else(|| Error::Semantic {
        pos,
        message: format!("unknown sort `{s}`"),
    })
}

pub fn parse_term(c: &mut Cursor, r: &mut dyn Resolver) -> Result<Term> {
    let pos = c.pos();
    match c.peek().clone() {
        Tok::LParen => {
            c.bump();
            let items = parse_term_list(c, r)?;
            c.expect(&Tok::RParen)?;
            Ok(Term::tuple(items))
        }
        Tok::Caret => {
            c.bump();
            let pos = c.pos();
            let n = c.ident("a thread variable")?;
            r.hat(&n, pos)
        }
        Tok::Ident(s) => {
            let next = c.peek_at(1).clone();
            match (s.as_str(), next) {
                ("enc" | "sig" | "hash", Tok::LBrace) => {
                    c.bump();
                    c.bump();
                    let payload = Term::tuple(parse_term_list(c, r)?);
                    c.expect(&Tok::RBrace)?;
                    let key = parse_key(c, r)?;
                    Ok(match s.as_str() {
                        "enc" => Term::enc(payload, key),
                        "sig" => Term::sig(payload, key),
                        _ => Term::hash(payload, key),
                    })
                }
                ("g" | "pk" | "sk", Tok::LParen) => {
                    c.bump();
                    c.bump();
                    let a = parse_term(c, r)?;
                    c.expect(&Tok::RParen)?;
                    Ok(match s.as_str() {
                        "g" => Term::g(a),
                        "pk" => Term::pk(a),
                        _ => Term::sk(a),
                    })
                }
                ("h" | "k", Tok::LParen) => {
                    c.bump();
                    c.bump();
                    let a = parse_term(c, r)?;
                    c.expect(&Tok::Comma)?;
                    let b = parse_term(c, r)?;
                    c.expect(&Tok::RParen)?;
                    Ok(if s == "h" { Term::h(a, b) } else { Term::sym_key(a, b) })
                }
                (_, Tok::Hash) => {
                    c.bump();
                    c.bump();
                    let thread = match c.bump() {
                        Tok::Num(n) => Some(n),
                        Tok::Ident(i) if i == "I" => None,
                        _ => {
                            return Err(Error::Syntax {
                                pos,
                                found: s.clone(),
                                expected: "a thread number or `I` after `#`".into(),
                            })
                        }
                    };
                    let sort = if c.eat(&Tok::Colon) {
                        parse_sort(c)?
                    } else {
                        Sort::Nonce
                    };
                    Ok(Term::nonce(&s, thread, sort))
                }
                _ => {
                    c.bump();
                    let annotation = if c.peek() == &Tok::Colon && matches!(c.peek_at(1), Tok::Ident(_)) {
                        c.bump();
                        Some(parse_sort(c)?)
                    } else {
                        None
                    };
                    r.resolve(&s, annotation, pos)
                }
            }
        }
        _ => c.error("a term"),
    }
}

fn parse_key(c: &mut Cursor, r: &mut dyn Resolver) -> Result<Term> {
    if c.eat(&Tok::LParen) {
        let t = parse_term(c, r)?;
        c.expect(&Tok::RParen)?;
        Ok(t)
    } else {
        parse_term(c, r)
    }
}

pub fn parse_term_list(c: &mut Cursor, r: &mut dyn Resolver) -> Result<Vec<Term>> {
    let mut items = vec![parse_term(c, r)?];
    while c.eat(&Tok::Comma) {
        items.push(parse_term(c, r)?);
    }
    Ok(items)
}

/// Resolver for ground terms: identifiers are agents (capitalised) or
/// constants of sort `message`.
pub struct GroundResolver;

impl Resolver for GroundResolver {
    fn resolve(&mut self, name: &str, annotation: Option<Sort>, _pos: Pos) -> Result<Term> {
        let starts_upper = name.chars().next().is_some_and(|c| c.is_ascii_uppercase());
        Ok(match annotation {
            Some(Sort::Agent) => Term::agent(name),
            Some(sort) => Term::constant(name, sort),
            None if starts_upper => Term::agent(name),
            None => Term::constant(name, Sort::Message),
        })
    }
}

/// Parses a standalone ground term.
pub fn parse_ground_term(src: &str) -> Result<Term> {
    let mut c = Cursor::new(src)?;
    let t = parse_term(&mut c, &mut GroundResolver)?;
    if c.peek() != &Tok::Eof {
        return c.error("end of input");
    }
    Ok(t)
}
