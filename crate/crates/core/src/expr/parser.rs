//! Recursive-descent parser.
//!
//! Grammar, loosest to tightest binding:
//!
//! ```text
//! expr   := term  (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?          // right-associative
//! atom   := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus, so `-x^2` is `-(x^2)`. A unary minus
//! directly in front of a numeric literal folds into the literal unless the
//! literal is the base of a `^` (so `-2^2` stays `-(2^2)`).

use super::ast::{BinOp, Func, Node};
use super::lexer::{tokenize, Pos, Tok};
use super::ParseError;

pub(crate) fn parse_nodes(source: &str, vars: &[String]) -> Result<Node, ParseError> {
    let toks = tokenize(source)?;
    if toks.is_empty() {
        return Err(ParseError::new(Pos { line: 1, col: 1 }, "empty expression"));
    }
    let mut p = Parser {
        toks,
        idx: 0,
        vars,
        end: end_pos(source),
    };
    let node = p.expr()?;
    if let Some((tok, pos)) = p.peek_full() {
        return Err(ParseError::new(
            pos,
            format!("unexpected {} after expression", tok.describe()),
        ));
    }
    Ok(node)
}

fn end_pos(source: &str) -> Pos {
    let mut line = 1u32;
    let mut col = 1u32;
    for c in source.chars() {
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    Pos { line, col }
}

struct Parser<'a> {
    toks: Vec<(Tok, Pos)>,
    idx: usize,
    vars: &'a [String],
    end: Pos,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|(t, _)| t)
    }

    fn peek_full(&self) -> Option<(&Tok, Pos)> {
        self.toks.get(self.idx).map(|(t, p)| (t, *p))
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.idx + 1).map(|(t, _)| t)
    }

    fn advance(&mut self) -> (Tok, Pos) {
        let out = self.toks[self.idx].clone();
        self.idx += 1;
        out
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<(), ParseError> {
        match self.peek_full() {
            Some((tok, pos)) => {
                if tok == want {
                    self.idx += 1;
                    Ok(())
                } else {
                    Err(ParseError::new(
                        pos,
                        format!("expected {what}, found {}", tok.describe()),
                    ))
                }
            }
            None => Err(ParseError::new(
                self.end,
                format!("expected {what}, found end of input"),
            )),
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            self.advance();
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => break,
            };
            self.advance();
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            // Fold `-literal` into a negative literal, except when the
            // literal is immediately raised to a power.
            if let (Some(Tok::Num(_)), follows) = (self.peek2(), self.toks.get(self.idx + 2)) {
                if !matches!(follows, Some((Tok::Caret, _))) {
                    self.advance();
                    if let (Tok::Num(v), _) = self.advance() {
                        return Ok(Node::Num(-v));
                    }
                    unreachable!();
                }
            }
            self.advance();
            let inner = self.unary()?;
            return Ok(Node::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.advance();
            let exponent = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        match self.peek_full() {
            Some((Tok::Num(_), _)) => {
                if let (Tok::Num(v), _) = self.advance() {
                    Ok(Node::Num(v))
                } else {
                    unreachable!()
                }
            }
            Some((Tok::LParen, _)) => {
                self.advance();
                let inner = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some((Tok::Ident(_), pos)) => {
                let name = match self.advance() {
                    (Tok::Ident(s), _) => s,
                    _ => unreachable!(),
                };
                if matches!(self.peek(), Some(Tok::LParen)) {
                    self.call(&name, pos)
                } else if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    Ok(Node::Var(i))
                } else if Func::from_name(&name).is_some() || name == "pow" {
                    Err(ParseError::new(
                        pos,
                        format!("intrinsic `{name}` used without argument list"),
                    ))
                } else {
                    Err(ParseError::new(
                        pos,
                        format!("unknown identifier `{name}` (declared variables: {})", self.vars.join(", ")),
                    ))
                }
            }
            Some((tok, pos)) => Err(ParseError::new(
                pos,
                format!("expected a value, found {}", tok.describe()),
            )),
            None => Err(ParseError::new(
                self.end,
                "expected a value, found end of input",
            )),
        }
    }

    fn call(&mut self, name: &str, pos: Pos) -> Result<Node, ParseError> {
        self.expect(&Tok::LParen, "`(`")?;
        let mut args = vec![self.expr()?];
        while matches!(self.peek(), Some(Tok::Comma)) {
            self.advance();
            args.push(self.expr()?);
        }
        self.expect(&Tok::RParen, "`)` closing the argument list")?;

        if name == "pow" {
            if args.len() != 2 {
                return Err(ParseError::new(
                    pos,
                    format!("`pow` expects 2 arguments, got {}", args.len()),
                ));
            }
            let mut it = args.into_iter();
            let base = it.next().unwrap();
            let exponent = it.next().unwrap();
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }

        let func = Func::from_name(name).ok_or_else(|| {
            ParseError::new(pos, format!("unknown function `{name}`"))
        })?;
        if args.len() != func.arity() {
            return Err(ParseError::new(
                pos,
                format!(
                    "`{name}` expects {} argument{}, got {}",
                    func.arity(),
                    if func.arity() == 1 { "" } else { "s" },
                    args.len()
                ),
            ));
        }
        Ok(Node::Call(func, args))
    }
}
