use std::collections::HashMap;

use crate::error::{Error, Pos, Result};
use crate::lexer::{Cursor, Tok};
use crate::term::{name, Sort, Term, Var};
use crate::term_syntax::{parse_sort, parse_term, parse_term_list, Resolver};

use super::{Action, Protocol, Role, Setup};

/// Parses one protocol description and validates it.
pub fn parse_protocol(src: &str) -> Result<Protocol> {
    let mut c = Cursor::new(src)?;
    c.expect_kw("protocol")?;
    let pname = c.ident("a protocol name")?;
    let mut setup = Setup::default();
    if c.is_kw("setup") {
        parse_setup(&mut c, &mut setup)?;
    }
    let mut roles = Vec::new();
    while c.is_kw("role") {
        let pos = c.pos();
        let role = parse_role(&mut c, &setup)?;
        if roles.iter().any(|r: &Role| r.name == role.name) {
            return Err(Error::Semantic {
                pos,
                message: format!("duplicate role `{}`", role.name),
            });
        }
        roles.push(role);
    }
    if c.peek() != &Tok::Eof {
        return c.error("`role` or end of input");
    }
    let protocol = Protocol {
        name: name(&pname),
        setup,
        roles,
    };
    protocol.validate()?;
    Ok(protocol)
}

fn parse_setup(c: &mut Cursor, setup: &mut Setup) -> Result<()> {
    c.expect_kw("setup")?;
    c.expect(&Tok::LBrace)?;
    while !c.eat(&Tok::RBrace) {
        let pos = c.pos();
        if c.eat_kw("honest") || c.is_kw("dishonest") {
            let honest = !c.eat_kw("dishonest");
            while let Tok::Ident(a) = c.peek().clone() {
                c.bump();
                declare_agent(setup, &a, honest, pos)?;
                c.eat(&Tok::Comma);
            }
        } else if c.eat_kw("const") {
            loop {
                let cpos = c.pos();
                let n = c.ident("a constant name")?;
                c.expect(&Tok::Colon)?;
                let sort = parse_sort(c)?;
                if setup.consts.iter().any(|(k, _)| **k == *n) {
                    return Err(Error::Semantic {
                        pos: cpos,
                        message: format!("constant `{n}` declared twice"),
                    });
                }
                setup.consts.push((name(&n), sort));
                if !c.eat(&Tok::Comma) {
                    break;
                }
            }
        } else if c.eat_kw("intruder") {
            c.expect_kw("knows")?;
            let mut r = SetupResolver { setup };
            let terms = parse_term_list(c, &mut r)?;
            setup.intruder_knows.extend(terms);
        } else {
            return c.error("`honest`, `dishonest`, `const`, `intruder` or `}`");
        }
        c.expect(&Tok::Semi)?;
    }
    Ok(())
}

fn declare_agent(setup: &mut Setup, a: &str, honest: bool, pos: Pos) -> Result<()> {
    if setup.honest.iter().chain(&setup.dishonest).any(|x| &**x == a) {
        return Err(Error::Semantic {
            pos,
            message: format!("agent `{a}` declared twice"),
        });
    }
    if honest {
        setup.honest.push(name(a));
    } else {
        setup.dishonest.push(name(a));
    }
    Ok(())
}

/// Leaked terms may mention constants and agents; an agent name that
/// was not declared honest is taken to be a dishonest agent.
struct SetupResolver<'a> {
    setup: &'a mut Setup,
}

impl Resolver for SetupResolver<'_> {
    fn resolve(&mut self, n: &str, annotation: Option<Sort>, pos: Pos) -> Result<Term> {
        if annotation.is_some() {
            return Err(Error::Semantic {
                pos,
                message: format!("sort annotation on `{n}` in setup"),
            });
        }
        if let Some((k, s)) = self.setup.consts.iter().find(|(k, _)| &**k == n) {
            return Ok(Term::Const(k.clone(), *s));
        }
        let known = self.setup.honest.iter().chain(&self.setup.dishonest).any(|a| &**a == n);
        if known {
            return Ok(Term::agent(n));
        }
        if n.starts_with(|ch: char| ch.is_ascii_uppercase()) {
            self.setup.dishonest.push(name(n));
            return Ok(Term::agent(n));
        }
        Err(Error::Semantic {
            pos,
            message: format!("`{n}` is neither a declared constant nor an agent"),
        })
    }
}

/// Scope for role bodies. In binding mode (receive patterns) an annotated
/// unknown identifier introduces a variable.
struct RoleScope<'a> {
    setup: &'a Setup,
    vars: HashMap<String, Var>,
    binding: bool,
}

impl RoleScope<'_> {
    fn bind(&mut self, v: Var, pos: Pos) -> Result<()> {
        if self.vars.contains_key(&*v.name) || self.is_global(&v.name) {
            return Err(Error::Semantic {
                pos,
                message: format!("`{}` is already bound", v.name),
            });
        }
        self.vars.insert(v.name.to_string(), v);
        Ok(())
    }

    fn is_global(&self, n: &str) -> bool {
        self.setup.consts.iter().any(|(k, _)| &**k == n)
            || self.setup.honest.iter().chain(&self.setup.dishonest).any(|a| &**a == n)
    }
}

impl Resolver for RoleScope<'_> {
    fn resolve(&mut self, n: &str, annotation: Option<Sort>, pos: Pos) -> Result<Term> {
        if let Some(v) = self.vars.get(n) {
            if annotation.is_some() {
                return Err(Error::Semantic {
                    pos,
                    message: format!("`{n}` is already bound; only binding occurrences carry a sort"),
                });
            }
            return Ok(Term::Var(v.clone()));
        }
        if let Some((k, s)) = self.setup.consts.iter().find(|(k, _)| &**k == n) {
            return Ok(Term::Const(k.clone(), *s));
        }
        if self.setup.honest.iter().chain(&self.setup.dishonest).any(|a| &**a == n) {
            return Ok(Term::agent(n));
        }
        match annotation {
            Some(sort) if self.binding => {
                let v = Var::new(n, sort);
                self.vars.insert(n.to_string(), v.clone());
                Ok(Term::Var(v))
            }
            Some(_) => Err(Error::Semantic {
                pos,
                message: format!("variable `{n}` can only be introduced by a receive pattern"),
            }),
            None if self.binding => Err(Error::Semantic {
                pos,
                message: format!("variable `{n}` needs a sort where it is first bound"),
            }),
            None => Err(Error::Semantic {
                pos,
                message: format!("variable `{n}` is used before it is bound"),
            }),
        }
    }
}

fn parse_role(c: &mut Cursor, setup: &Setup) -> Result<Role> {
    c.expect_kw("role")?;
    let rname = c.ident("a role name")?;
    let mut scope = RoleScope {
        setup,
        vars: HashMap::new(),
        binding: false,
    };
    c.expect(&Tok::LParen)?;
    let mut params = Vec::new();
    let mut free = Vec::new();
    loop {
        let pos = c.pos();
        let p = c.ident("a parameter")?;
        let v = Var::new(&p, Sort::Agent);
        scope.bind(v.clone(), pos)?;
        params.push(v);
        if !c.eat(&Tok::Comma) {
            break;
        }
    }
    if c.eat(&Tok::Semi) {
        loop {
            let pos = c.pos();
            let p = c.ident("a parameter")?;
            c.expect(&Tok::Colon)?;
            let v = Var::new(&p, parse_sort(c)?);
            scope.bind(v.clone(), pos)?;
            free.push(v);
            if !c.eat(&Tok::Comma) {
                break;
            }
        }
    }
    c.expect(&Tok::RParen)?;
    c.expect(&Tok::LBrace)?;
    let mut body = Vec::new();
    while !c.eat(&Tok::RBrace) {
        body.push(parse_action(c, &mut scope)?);
        c.expect(&Tok::Semi)?;
    }
    Ok(Role {
        name: name(&rname),
        params,
        free,
        body,
    })
}

fn addressed(c: &mut Cursor, scope: &mut RoleScope, kw: &str) -> Result<(Term, Term, Term)> {
    let pos = c.pos();
    let mut items = parse_term_list(c, scope)?;
    if items.len() < 3 {
        return Err(Error::Syntax {
            pos,
            found: format!("{} term(s)", items.len()),
            expected: format!("`{kw} from, to, message`"),
        });
    }
    let rest = items.split_off(2);
    let to = items.pop().unwrap();
    let from = items.pop().unwrap();
    Ok((from, to, Term::tuple(rest)))
}

fn parse_action(c: &mut Cursor, scope: &mut RoleScope) -> Result<Action> {
    let pos = c.pos();
    if c.eat_kw("send") {
        let (from, to, msg) = addressed(c, scope, "send")?;
        return Ok(Action::Send { from, to, msg });
    }
    if c.eat_kw("receive") {
        scope.binding = true;
        let parsed = addressed(c, scope, "receive");
        scope.binding = false;
        let (from, to, pattern) = parsed?;
        return Ok(Action::Receive { from, to, pattern });
    }
    if c.eat_kw("new") {
        let vpos = c.pos();
        let n = c.ident("a variable")?;
        c.expect(&Tok::Colon)?;
        let v = Var::new(&n, parse_sort(c)?);
        scope.bind(v.clone(), vpos)?;
        return Ok(Action::New(v));
    }
    if c.eat_kw("verify") {
        let items = parse_term_list(c, scope)?;
        let [sig, payload, signer]: [Term; 3] = items.try_into().map_err(|v: Vec<Term>| {
            Error::Syntax {
                pos,
                found: format!("{} term(s)", v.len()),
                expected: "`verify signature, payload, signer`".into(),
            }
        })?;
        return Ok(Action::Verify { sig, payload, signer });
    }
    let out = match c.peek().clone() {
        Tok::Ident(s) if matches!(c.peek_at(1), Tok::Assign | Tok::Colon) => {
            c.bump();
            s
        }
        _ => return c.error("an action"),
    };
    let annotation = if c.eat(&Tok::Colon) {
        Some(parse_sort(c)?)
    } else {
        None
    };
    c.expect(&Tok::Assign)?;
    let op_pos = c.pos();
    let op = c.ident("`enc`, `dec` or `sign`")?;
    let first = parse_term(c, scope)?;
    c.expect(&Tok::Comma)?;
    let second = parse_term(c, scope)?;
    let default_sort = match op.as_str() {
        "enc" => Sort::Ciphertext,
        "dec" => Sort::Message,
        "sign" => Sort::SigVal,
        other => {
            return Err(Error::Syntax {
                pos: op_pos,
                found: format!("`{other}`"),
                expected: "`enc`, `dec` or `sign`".into(),
            })
        }
    };
    let v = Var::new(&out, annotation.unwrap_or(default_sort));
    scope.bind(v.clone(), pos)?;
    Ok(match op.as_str() {
        "enc" => Action::Enc {
            out: v,
            payload: first,
            key: second,
        },
        "dec" => Action::Dec {
            out: v,
            cipher: first,
            key: second,
        },
        _ => Action::Sign {
            out: v,
            payload: first,
            signer: second,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CR: &str = include_str!("../../../../fixtures/cr.pcl");

    #[test]
    fn parses_cr_initiator() {
        let p = parse_protocol(CR).unwrap();
        assert_eq!(&*p.name, "CR");
        let init = p.role("Init").unwrap();
        let kinds: Vec<_> = init.body.iter().map(Action::keyword).collect();
        assert_eq!(kinds, ["new", "send", "receive", "verify", "sign", "send"]);
        match &init.body[2] {
            Action::Receive { pattern, .. } => {
                let vars = pattern.vars();
                assert_eq!(vars[0], Var::new("y", Sort::Nonce));
                assert_eq!(vars[1], Var::new("s", Sort::SigVal));
            }
            _ => unreachable!(),
        }
        assert_eq!(init.body[4].out_var().unwrap().sort, Sort::SigVal);
        assert_eq!(p.role("Resp").unwrap().body.len(), 4);
    }

    #[test]
    fn empty_input_fails_at_origin() {
        match parse_protocol("") {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, Pos { line: 1, col: 1 }),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn use_before_binding_names_the_variable() {
        let src = "protocol P setup { honest A B; } role R(X, Y) { send X,Y,x; receive Y,X,x:nonce; }";
        match parse_protocol(src) {
            Err(Error::Semantic { message, .. }) => assert!(message.contains("`x`"), "{message}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicates_and_unknown_sorts() {
        let dup = "protocol P role R(X) { new m:nonce; } role R(X) { new m:nonce; }";
        assert!(matches!(parse_protocol(dup), Err(Error::Semantic { .. })));
        let sort = "protocol P role R(X) { new m:widget; }";
        match parse_protocol(sort) {
            Err(Error::Semantic { message, .. }) => assert!(message.contains("widget")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn setup_mentions_implicitly_declare_dishonest_agents() {
        let src = "protocol CR setup { honest A B; intruder knows k(A,E); } role R(X, Y) { new m:nonce; send X,Y,m; }";
        let p = parse_protocol(src).unwrap();
        assert_eq!(p.setup.dishonest, vec![name("E")]);
        assert_eq!(p.setup.intruder_knows[0].to_string(), "k(A,E)");
    }

    #[test]
    fn multi_term_messages_become_tuples() {
        let src = "protocol P setup { honest A B; } role R(X, Y) { new n:nonce; send X,Y,n,X; }";
        let p = parse_protocol(src).unwrap();
        match &p.roles[0].body[1] {
            Action::Send { msg, .. } => assert_eq!(msg.to_string(), "(n,X)"),
            _ => unreachable!(),
        }
    }
}
