//! Formula syntax.
//!
//! ```text
//! formula := or ('=>' formula)?
//! or      := and ('|' and)*
//! and     := unary ('&' unary)*
//! unary   := '~' unary | quant | primary ('[' program ']' '_' thread unary)?
//!          | '[' program ']' '_' thread unary
//! quant   := ('exists' | 'forall') kind NAME (',' NAME)* '.' formula
//! primary := '(' formula ')' | 'true' | 'false' | atom ('<' atom)?
//!          | term '=' term | term '!=' term
//! ```
//!
//! Schemas are `axiom NAME [X:thread, x:term, A:agent] : formula;` (or
//! `invariant ...`). Inside terms, `^X` is the agent executing thread `X`,
//! and a thread variable used as a term means the same.

use crate::engine::{ActionKind, ActionPattern};
use crate::error::{Error, Pos, Result};
use crate::lexer::{Cursor, Tok};
use crate::protocol::Protocol;
use crate::term::{name, Name, Sort, Term};
use crate::term_syntax::{parse_term, Resolver};

use super::{hat_name, Atom, Binder, ComputesKind, Formula, Modal, ProgramStep, Schema, SchemaKind, ThreadRef, VarKind};

struct Scope<'p> {
    vars: Vec<(Name, VarKind)>,
    protocol: Option<&'p Protocol>,
    /// Undeclared lowercase names become term variables and undeclared
    /// thread positions become thread variables.
    implicit: bool,
}

impl Scope<'_> {
    fn lookup(&self, n: &str) -> Option<VarKind> {
        self.vars.iter().rev().find(|(v, _)| &**v == n).map(|(_, k)| *k)
    }
}

impl Resolver for Scope<'_> {
    fn resolve(&mut self, n: &str, _annotation: Option<Sort>, pos: Pos) -> Result<Term> {
        match self.lookup(n) {
            Some(VarKind::Term) => return Ok(Term::var(n, Sort::Message)),
            Some(VarKind::Agent) => return Ok(Term::var(n, Sort::Agent)),
            Some(_) => return Ok(Term::var(&hat_name(n), Sort::Agent)),
            None => {}
        }
        if let Some(p) = self.protocol {
            if let Some((_, sort)) = p.setup.consts.iter().find(|(c, _)| &**c == n) {
                return Ok(Term::constant(n, *sort));
            }
        }
        if n.starts_with(|c: char| c.is_ascii_uppercase()) {
            return Ok(Term::agent(n));
        }
        if self.implicit {
            self.vars.push((name(n), VarKind::Term));
            return Ok(Term::var(n, Sort::Message));
        }
        Err(Error::Semantic {
            pos,
            message: format!("unbound variable `{n}`"),
        })
    }

    fn hat(&mut self, n: &str, pos: Pos) -> Result<Term> {
        match self.lookup(n) {
            Some(k) if k.is_thread() => Ok(Term::var(&hat_name(n), Sort::Agent)),
            _ => Err(Error::Semantic {
                pos,
                message: format!("`^{n}` needs a thread variable"),
            }),
        }
    }
}

struct Parser<'p> {
    c: Cursor,
    scope: Scope<'p>,
}

impl Parser<'_> {
    fn formula(&mut self) -> Result<Formula> {
        let lhs = self.or()?;
        if self.c.eat(&Tok::Implies) {
            let rhs = self.formula()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula> {
        let mut f = self.and()?;
        while self.c.eat(&Tok::Bar) {
            f = Formula::or(f, self.and()?);
        }
        Ok(f)
    }

    fn and(&mut self) -> Result<Formula> {
        let mut f = self.unary()?;
        while self.c.eat(&Tok::Amp) {
            f = Formula::and(f, self.unary()?);
        }
        Ok(f)
    }

    fn unary(&mut self) -> Result<Formula> {
        if self.c.eat(&Tok::Tilde) {
            return Ok(Formula::not(self.unary()?));
        }
        if self.c.is_kw("exists") || self.c.is_kw("forall") {
            return self.quantifier();
        }
        if self.c.peek() == &Tok::LBracket {
            return self.modal(Formula::True);
        }
        let f = self.primary()?;
        if self.c.peek() == &Tok::LBracket {
            return self.modal(f);
        }
        Ok(f)
    }

    fn kind(&mut self) -> Result<VarKind> {
        let pos = self.c.pos();
        let k = self.c.ident("a variable kind")?;
        Ok(match k.as_str() {
            "thread" if self.c.eat(&Tok::Star) => VarKind::AnyThread,
            "thread" => VarKind::Thread,
            "term" => VarKind::Term,
            "agent" => VarKind::Agent,
            other => {
                return Err(Error::Semantic {
                    pos,
                    message: format!("unknown variable kind `{other}`; use thread, thread*, term or agent"),
                })
            }
        })
    }

    fn quantifier(&mut self) -> Result<Formula> {
        let exists = self.c.eat_kw("exists");
        if !exists {
            self.c.expect_kw("forall")?;
        }
        let kind = self.kind()?;
        let mut names = vec![name(&self.c.ident("a variable name")?)];
        while self.c.eat(&Tok::Comma) {
            names.push(name(&self.c.ident("a variable name")?));
        }
        self.c.expect(&Tok::Dot)?;
        for n in &names {
            self.scope.vars.push((n.clone(), kind));
        }
        let body = self.formula();
        for _ in &names {
            self.scope.vars.pop();
        }
        let mut f = body?;
        for n in names.into_iter().rev() {
            let b = Binder { name: n, kind };
            f = if exists {
                Formula::Exists(b, Box::new(f))
            } else {
                Formula::Forall(b, Box::new(f))
            };
        }
        Ok(f)
    }

    fn modal(&mut self, pre: Formula) -> Result<Formula> {
        self.c.expect(&Tok::LBracket)?;
        let mut program = vec![self.step()?];
        while self.c.eat(&Tok::Semi) {
            program.push(self.step()?);
        }
        self.c.expect(&Tok::RBracket)?;
        self.c.expect(&Tok::Underscore)?;
        let thread = self.thread()?;
        let post = self.unary()?;
        Ok(Formula::Modal(Box::new(Modal {
            pre,
            program,
            thread,
            post,
        })))
    }

    fn term(&mut self) -> Result<Term> {
        parse_term(&mut self.c, &mut self.scope)
    }

    fn two_terms(&mut self) -> Result<(Term, Term)> {
        let a = self.term()?;
        self.c.expect(&Tok::Comma)?;
        Ok((a, self.term()?))
    }

    fn step(&mut self) -> Result<ProgramStep> {
        for (kw, ctor) in [
            ("send", ProgramStep::Send as fn(Term) -> ProgramStep),
            ("receive", ProgramStep::Receive),
            ("new", ProgramStep::New),
        ] {
            if self.c.is_kw(kw) && !matches!(self.c.peek_at(1), Tok::Assign) {
                self.c.bump();
                return Ok(ctor(self.term()?));
            }
        }
        if self.c.is_kw("verify") && !matches!(self.c.peek_at(1), Tok::Assign) {
            self.c.bump();
            let sig = self.term()?;
            self.c.expect(&Tok::Comma)?;
            let (payload, signer) = self.two_terms()?;
            return Ok(ProgramStep::Verify { sig, payload, signer });
        }
        let out = self.term()?;
        self.c.expect(&Tok::Assign)?;
        let pos = self.c.pos();
        let op = self.c.ident("`enc`, `dec` or `sign`")?;
        let (a, b) = self.two_terms()?;
        Ok(match op.as_str() {
            "enc" => ProgramStep::Enc { out, payload: a, key: b },
            "dec" => ProgramStep::Dec { out, cipher: a, key: b },
            "sign" => ProgramStep::Sign { out, payload: a, signer: b },
            _ => {
                return Err(Error::Syntax {
                    pos,
                    found: format!("`{op}`"),
                    expected: "`enc`, `dec` or `sign`".into(),
                })
            }
        })
    }

    fn thread(&mut self) -> Result<ThreadRef> {
        let pos = self.c.pos();
        if self.c.eat(&Tok::Hash) {
            return match self.c.bump() {
                Tok::Num(n) => Ok(ThreadRef::Id(n)),
                _ => Err(Error::Syntax {
                    pos,
                    found: "`#`".into(),
                    expected: "a thread number after `#`".into(),
                }),
            };
        }
        let n = self.c.ident("a thread")?;
        match self.scope.lookup(&n) {
            Some(k) if k.is_thread() => Ok(ThreadRef::Var(name(&n))),
            None if self.scope.implicit => {
                self.scope.vars.push((name(&n), VarKind::Thread));
                Ok(ThreadRef::Var(name(&n)))
            }
            _ => Err(Error::Semantic {
                pos,
                message: format!("`{n}` is not a thread variable"),
            }),
        }
    }

    fn primary(&mut self) -> Result<Formula> {
        if self.c.peek() == &Tok::LParen {
            let mark = self.c.mark();
            if let Ok(f) = self.equation() {
                return Ok(f);
            }
            self.c.reset(mark);
            self.c.bump();
            let f = self.formula()?;
            self.c.expect(&Tok::RParen)?;
            return Ok(f);
        }
        if self.c.eat_kw("true") {
            return Ok(Formula::True);
        }
        if self.c.eat_kw("false") {
            return Ok(Formula::False);
        }
        if self.at_predicate() {
            let a = self.predicate()?;
            if self.c.eat(&Tok::Lt) {
                let pos = self.c.pos();
                let b = self.predicate()?;
                if !matches!(a, Atom::Action(..)) || !matches!(b, Atom::Action(..)) {
                    return Err(Error::Semantic {
                        pos,
                        message: "`<` orders action predicates only".into(),
                    });
                }
                return Ok(Formula::Atom(Atom::Order(Box::new(a), Box::new(b))));
            }
            return Ok(Formula::Atom(a));
        }
        self.equation()
    }

    fn equation(&mut self) -> Result<Formula> {
        let a = self.term()?;
        let eq = match self.c.peek() {
            Tok::Eq => true,
            Tok::Neq => false,
            _ => return self.c.error("`=` or `!=`"),
        };
        self.c.bump();
        let b = self.term()?;
        let atom = Formula::Atom(Atom::Eq(a, b));
        Ok(if eq { atom } else { Formula::not(atom) })
    }

    fn at_predicate(&self) -> bool {
        match self.c.peek() {
            Tok::Ident(s) => {
                self.c.peek_at(1) == &Tok::LParen
                    && (ActionKind::parse(s).is_some()
                        || matches!(s.as_str(), "Has" | "Fresh" | "Computes" | "Honest" | "Contains"))
            }
            _ => false,
        }
    }

    fn predicate(&mut self) -> Result<Atom> {
        let pos = self.c.pos();
        let p = self.c.ident("a predicate")?;
        self.c.expect(&Tok::LParen)?;
        let atom = match p.as_str() {
            "Honest" => Atom::Honest(self.term()?),
            "Contains" => {
                let (a, b) = self.two_terms()?;
                Atom::Contains(a, b)
            }
            _ => {
                let x = self.thread()?;
                self.c.expect(&Tok::Comma)?;
                let t = self.term()?;
                match p.as_str() {
                    "Has" => Atom::Has(x, t),
                    "Fresh" => Atom::Fresh(x, t),
                    "Computes" => {
                        let kind = match t {
                            Term::DhH(..) => ComputesKind::Dh,
                            Term::Hash(..) => ComputesKind::Hash,
                            _ => ComputesKind::Any,
                        };
                        Atom::Computes(kind, x, t)
                    }
                    other => match ActionKind::parse(other) {
                        Some(k) => Atom::Action(k, x, t),
                        None => {
                            return Err(Error::Semantic {
                                pos,
                                message: format!("unknown predicate `{other}`"),
                            })
                        }
                    },
                }
            }
        };
        self.c.expect(&Tok::RParen)?;
        Ok(atom)
    }

    fn end(&self) -> Result<()> {
        if self.c.peek() == &Tok::Eof {
            Ok(())
        } else {
            self.c.error("end of input")
        }
    }

    fn schema(&mut self) -> Result<Schema> {
        let kind = if self.c.eat_kw("axiom") {
            SchemaKind::Axiom
        } else if self.c.eat_kw("invariant") {
            SchemaKind::Invariant
        } else {
            return self.c.error("`axiom` or `invariant`");
        };
        let title = self.c.ident("a schema name")?;
        let mut vars = Vec::new();
        if self.c.eat(&Tok::LBracket) {
            loop {
                let n = name(&self.c.ident("a variable name")?);
                self.c.expect(&Tok::Colon)?;
                let kind = self.kind()?;
                vars.push(Binder { name: n, kind });
                if !self.c.eat(&Tok::Comma) {
                    break;
                }
            }
            self.c.expect(&Tok::RBracket)?;
        }
        self.c.expect(&Tok::Colon)?;
        self.scope.vars = vars.iter().map(|b| (b.name.clone(), b.kind)).collect();
        let body = self.formula()?;
        self.c.expect(&Tok::Semi)?;
        Ok(Schema {
            kind,
            name: title,
            vars,
            body,
        })
    }
}

fn parser<'p>(src: &str, vars: &[Binder], protocol: Option<&'p Protocol>, implicit: bool) -> Result<Parser<'p>> {
    Ok(Parser {
        c: Cursor::new(src)?,
        scope: Scope {
            vars: vars.iter().map(|b| (b.name.clone(), b.kind)).collect(),
            protocol,
            implicit,
        },
    })
}

/// Parses a formula whose free variables are `vars`. Protocol constants
/// resolve when a protocol is given; other capitalised names are agents.
pub fn parse_formula(src: &str, vars: &[Binder], protocol: Option<&Protocol>) -> Result<Formula> {
    let mut p = parser(src, vars, protocol, false)?;
    let f = p.formula()?;
    p.end()?;
    Ok(f)
}

pub fn parse_schema(src: &str, protocol: Option<&Protocol>) -> Result<Schema> {
    let mut p = parser(src, &[], protocol, false)?;
    let s = p.schema()?;
    p.end()?;
    Ok(s)
}

/// Parses a file of schemas.
pub fn parse_schemas(src: &str, protocol: Option<&Protocol>) -> Result<Vec<Schema>> {
    let mut p = parser(src, &[], protocol, false)?;
    let mut out = Vec::new();
    while p.c.peek() != &Tok::Eof {
        out.push(p.schema()?);
    }
    Ok(out)
}

/// Parses an ordered event pattern such as
/// `Send(X, h(a,b)) < Receive(Y, h(b,a))`. Variables need no declaration.
pub fn parse_action_pattern(src: &str) -> Result<Vec<ActionPattern>> {
    let mut p = parser(src, &[], None, true)?;
    let mut out = Vec::new();
    loop {
        let pos = p.c.pos();
        match p.predicate()? {
            Atom::Action(kind, ThreadRef::Var(thread), term) => out.push(ActionPattern { kind, thread, term }),
            _ => {
                return Err(Error::Semantic {
                    pos,
                    message: "patterns are made of action predicates over thread variables".into(),
                })
            }
        }
        if !p.c.eat(&Tok::Lt) {
            break;
        }
    }
    p.end()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::Var;

    fn b(n: &str, kind: VarKind) -> Binder {
        Binder { name: name(n), kind }
    }

    #[test]
    fn precedence_and_associativity() {
        let vars = [b("X", VarKind::Thread), b("m", VarKind::Term)];
        let f = parse_formula("Send(X,m) & Has(X,m) | Gen(X,m) => ~Fresh(X,m) => true", &vars, None).unwrap();
        let Formula::Implies(lhs, rhs) = f else { panic!() };
        assert!(matches!(*lhs, Formula::Or(..)));
        assert!(matches!(*rhs, Formula::Implies(..)));
    }

    #[test]
    fn quantifier_body_extends_right() {
        let vars = [b("A", VarKind::Agent)];
        let f = parse_formula("exists thread X. ^X = A & exists term m. Send(X,m)", &vars, None).unwrap();
        let Formula::Exists(bx, body) = f else { panic!() };
        assert_eq!(bx.kind, VarKind::Thread);
        assert!(matches!(*body, Formula::And(..)));
    }

    #[test]
    fn hat_and_coercion() {
        let vars = [b("Y", VarKind::Thread)];
        let f = parse_formula("Honest(^Y) & Honest(Y)", &vars, None).unwrap();
        let hat = Term::Var(Var::new("^Y", Sort::Agent));
        assert_eq!(
            f,
            Formula::and(Formula::Atom(Atom::Honest(hat.clone())), Formula::Atom(Atom::Honest(hat)))
        );
    }

    #[test]
    fn modal_forms() {
        let vars = [b("X", VarKind::Thread), b("x", VarKind::Term), b("y", VarKind::Term), b("K", VarKind::Term)];
        let f = parse_formula("Receive(X,x) [y := dec x, K]_X Receive(X, enc{y}K)", &vars, None).unwrap();
        let Formula::Modal(m) = f else { panic!() };
        assert!(matches!(m.pre, Formula::Atom(Atom::Action(ActionKind::Receive, ..))));
        assert_eq!(m.program.len(), 1);
        let g = parse_formula("[receive x]_X exists thread* Z. Send(Z,x)", &vars, None).unwrap();
        let Formula::Modal(m) = g else { panic!() };
        assert_eq!(m.pre, Formula::True);
        assert!(matches!(m.post, Formula::Exists(..)));
    }

    #[test]
    fn order_and_parenthesised_tuples() {
        let vars = [b("Y", VarKind::Thread), b("m", VarKind::Term)];
        let f = parse_formula("(Receive(Y,m) < Send(Y,(m,m))) | (m, m) = m", &vars, None).unwrap();
        let Formula::Or(a, e) = f else { panic!() };
        assert!(matches!(*a, Formula::Atom(Atom::Order(..))));
        assert!(matches!(*e, Formula::Atom(Atom::Eq(..))));
    }

    #[test]
    fn unbound_lowercase_is_an_error() {
        let err = parse_formula("Send(X, m)", &[b("X", VarKind::Thread)], None).unwrap_err();
        assert!(err.to_string().contains("unbound variable `m`"), "{err}");
        assert!(parse_formula("Send(Q, A)", &[], None).is_err());
    }

    #[test]
    fn schema_display_round_trips() {
        let src = "axiom G [Y:thread, t:term, y:term, m:term, X:agent] : \
                   Send(Y,t) & Contains(t, sig{(y,m,X)}^Y) => Gen(Y,m) | \
                   (Receive(Y,(X,^Y,m)) < Send(Y,(^Y,X,y,sig{(y,m,X)}^Y)));";
        let s = parse_schema(src, None).unwrap();
        let again = parse_schema(&s.to_string(), None).unwrap();
        assert_eq!(s, again, "{s}");
        let t = "axiom A [X:thread, t:term] : [receive t]_X exists thread* Z. Send(Z,t);";
        let s = parse_schema(t, None).unwrap();
        assert_eq!(s, parse_schema(&s.to_string(), None).unwrap(), "{s}");
    }

    #[test]
    fn protocol_constants_resolve() {
        let p = crate::protocol::parse_protocol(include_str!("../../../../fixtures/hash3.pcl")).unwrap();
        let f = parse_formula("Has(X, K)", &[b("X", VarKind::Thread)], Some(&p)).unwrap();
        assert_eq!(
            f,
            Formula::Atom(Atom::Has(ThreadRef::Var(name("X")), Term::constant("K", Sort::SymKey)))
        );
    }

    #[test]
    fn action_patterns_declare_implicitly() {
        let pat = parse_action_pattern("Send(X, h(a,b)) < Receive(Y, h(b,a))").unwrap();
        assert_eq!(pat.len(), 2);
        assert_eq!(&*pat[1].thread, "Y");
        assert_eq!(pat[0].kind, ActionKind::Send);
    }
}
