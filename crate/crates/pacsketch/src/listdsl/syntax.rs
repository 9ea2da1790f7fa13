//! Concrete syntax: `(fold + (map predict_float input2) 0)`.
//!
//! Applications are curried; `(f a b)` is sugar for `((f a) b)` and is how
//! the printer writes nested applications. ASCII spellings `<=`, `>=`,
//! `cond-<=` and `cond->=` are accepted alongside the Unicode ones.

use super::{DslExpr, DslType, Prim};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

fn perr(position: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        position,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(src: &str) -> Vec<(usize, Tok<'_>)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in src.char_indices() {
        if c == '(' || c == ')' || c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s, Tok::Atom(&src[s..i])));
            }
            if c == '(' {
                out.push((i, Tok::Open));
            } else if c == ')' {
                out.push((i, Tok::Close));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s, Tok::Atom(&src[s..])));
    }
    out
}

const KEYWORDS: [&str; 5] = ["fold", "map", "filter", "slice", "length"];

struct Parser<'a> {
    toks: Vec<(usize, Tok<'a>)>,
    pos: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn here(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.0)
    }

    fn expr(&mut self) -> Result<DslExpr, ParseError> {
        let at = self.here();
        match self.toks.get(self.pos).cloned() {
            None => Err(perr(at, "unexpected end of input")),
            Some((_, Tok::Close)) => Err(perr(at, "unexpected ')'")),
            Some((_, Tok::Atom(a))) => {
                self.pos += 1;
                atom(a, at)
            }
            Some((_, Tok::Open)) => {
                self.pos += 1;
                let form = self.form(at)?;
                match self.toks.get(self.pos) {
                    Some((_, Tok::Close)) => {
                        self.pos += 1;
                        Ok(form)
                    }
                    _ => Err(perr(self.here(), "expected ')'")),
                }
            }
        }
    }

    fn args_until_close(&mut self) -> Result<Vec<DslExpr>, ParseError> {
        let mut args = Vec::new();
        while !matches!(self.toks.get(self.pos), Some((_, Tok::Close)) | None) {
            args.push(self.expr()?);
        }
        Ok(args)
    }

    fn form(&mut self, at: usize) -> Result<DslExpr, ParseError> {
        if let Some((_, Tok::Atom(head))) = self.toks.get(self.pos).cloned() {
            if KEYWORDS.contains(&head) {
                self.pos += 1;
                let args = self.args_until_close()?;
                let want = match head {
                    "fold" | "slice" => 3,
                    "map" | "filter" => 2,
                    _ => 1,
                };
                if args.len() != want {
                    return Err(perr(at, format!("{head} takes {want} arguments, got {}", args.len())));
                }
                let mut it = args.into_iter().map(Arc::new);
                let mut next = || it.next().expect("arity checked");
                return Ok(match head {
                    "fold" => DslExpr::Fold(next(), next(), next()),
                    "map" => DslExpr::Map(next(), next()),
                    "filter" => DslExpr::Filter(next(), next()),
                    "slice" => DslExpr::Slice(next(), next(), next()),
                    _ => DslExpr::Length(next()),
                });
            }
        }
        let mut items = self.args_until_close()?.into_iter();
        let head = items.next().ok_or_else(|| perr(at, "empty application"))?;
        let mut e = head;
        let mut any = false;
        for a in items {
            e = DslExpr::app(e, a);
            any = true;
        }
        if !any {
            return Err(perr(at, "application needs at least one argument"));
        }
        Ok(e)
    }
}

fn atom(a: &str, at: usize) -> Result<DslExpr, ParseError> {
    if let Some(p) = Prim::from_name(a) {
        return Ok(DslExpr::Prim(p));
    }
    if let Some(n) = a.strip_prefix("input") {
        return match n.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(DslExpr::Input(k - 1)),
            _ => Err(perr(at, format!("bad input name {a:?}"))),
        };
    }
    if let Ok(v) = a.parse::<i64>() {
        return Ok(DslExpr::Lit(v));
    }
    if KEYWORDS.contains(&a) {
        return Err(perr(at, format!("{a} must be applied in parentheses")));
    }
    if a == "then" || a == "if" {
        return Err(perr(at, "conditionals are written with cond-≤ / cond-≥, not if/then"));
    }
    Err(perr(at, format!("unknown symbol {a:?}")))
}

pub fn parse_program(src: &str) -> Result<DslExpr, ParseError> {
    let mut p = Parser {
        toks: tokenize(src),
        pos: 0,
        end: src.len(),
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(perr(p.here(), "trailing input"));
    }
    Ok(e)
}

pub(super) fn write_expr(e: &DslExpr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        DslExpr::Input(i) => write!(f, "input{}", i + 1),
        DslExpr::Lit(v) => write!(f, "{v}"),
        DslExpr::Prim(p) => write!(f, "{p}"),
        DslExpr::App(..) => {
            let mut spine = Vec::new();
            let mut cur = e;
            while let DslExpr::App(g, a) = cur {
                spine.push(&**a);
                cur = g;
            }
            write!(f, "({cur}")?;
            for a in spine.iter().rev() {
                write!(f, " {a}")?;
            }
            f.write_str(")")
        }
        DslExpr::Fold(a, b, c) => write!(f, "(fold {a} {b} {c})"),
        DslExpr::Map(a, b) => write!(f, "(map {a} {b})"),
        DslExpr::Filter(a, b) => write!(f, "(filter {a} {b})"),
        DslExpr::Slice(a, b, c) => write!(f, "(slice {a} {b} {c})"),
        DslExpr::Length(a) => write!(f, "(length {a})"),
    }
}

/// Parses `bool`, `int`, `float`, `image`, `list(T)` and right-associative
/// arrows `T -> T` (also `→`), with parentheses for grouping.
pub fn parse_type(src: &str) -> Result<DslType, ParseError> {
    struct P<'a> {
        s: &'a str,
        i: usize,
    }
    impl P<'_> {
        fn ws(&mut self) {
            while self.s[self.i..].starts_with(char::is_whitespace) {
                self.i += self.s[self.i..].chars().next().map_or(1, char::len_utf8);
            }
        }
        fn eat(&mut self, t: &str) -> bool {
            self.ws();
            if self.s[self.i..].starts_with(t) {
                self.i += t.len();
                true
            } else {
                false
            }
        }
        fn arrow(&mut self) -> Result<DslType, ParseError> {
            let a = self.atom()?;
            if self.eat("->") || self.eat("→") {
                Ok(DslType::arrow(a, self.arrow()?))
            } else {
                Ok(a)
            }
        }
        fn atom(&mut self) -> Result<DslType, ParseError> {
            if self.eat("(") {
                let t = self.arrow()?;
                if !self.eat(")") {
                    return Err(perr(self.i, "expected ')'"));
                }
                return Ok(t);
            }
            for (name, t) in [
                ("bool", DslType::Bool),
                ("int", DslType::Int),
                ("float", DslType::Float),
                ("image", DslType::Image),
            ] {
                if self.eat(name) {
                    return Ok(t);
                }
            }
            if self.eat("list") {
                if !self.eat("(") {
                    return Err(perr(self.i, "expected '(' after list"));
                }
                let t = self.arrow()?;
                if !self.eat(")") {
                    return Err(perr(self.i, "expected ')'"));
                }
                return Ok(DslType::list(t));
            }
            Err(perr(self.i, "expected a type"))
        }
    }
    let mut p = P { s: src, i: 0 };
    let t = p.arrow()?;
    p.ws();
    if p.i != src.len() {
        return Err(perr(p.i, "trailing input"));
    }
    Ok(t)
}
