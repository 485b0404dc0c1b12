//! Lexer and recursive-descent parser.
//!
//! ```text
//! expr    := or
//! or      := and ("||" and)*
//! and     := unary ("&&" unary)*
//! unary   := "!" unary | cmp
//! cmp     := operand (CMPOP operand)?
//! operand := literal | path | "(" expr ")"
//! path    := NS ("." IDENT)+
//! ```

use std::fmt;

use super::ast::{CmpOp, Expr, Namespace, Path};
use crate::value::Decimal;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("syntax error at offset {position}: expected {expected}, found {found}")]
pub struct SyntaxError {
    /// Byte offset into the source.
    pub position: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(Decimal),
    Text(String),
    Dot,
    LParen,
    RParen,
    Bang,
    AndAnd,
    OrOr,
    Cmp(CmpOp),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Num(n) => write!(f, "number `{n}`"),
            Tok::Text(_) => f.write_str("text literal"),
            Tok::Dot => f.write_str("`.`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Bang => f.write_str("`!`"),
            Tok::AndAnd => f.write_str("`&&`"),
            Tok::OrOr => f.write_str("`||`"),
            Tok::Cmp(op) => write!(f, "`{}`", op.symbol()),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn err(position: usize, expected: impl Into<String>, found: impl Into<String>) -> SyntaxError {
    SyntaxError {
        position,
        expected: expected.into(),
        found: found.into(),
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, SyntaxError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'.' => {
                out.push((start, Tok::Dot));
                i += 1;
            }
            b'(' => {
                out.push((start, Tok::LParen));
                i += 1;
            }
            b')' => {
                out.push((start, Tok::RParen));
                i += 1;
            }
            b'&' | b'|' => {
                if bytes.get(i + 1) != Some(&c) {
                    let want = if c == b'&' { "`&&`" } else { "`||`" };
                    return Err(err(start, want, format!("`{}`", c as char)));
                }
                out.push((start, if c == b'&' { Tok::AndAnd } else { Tok::OrOr }));
                i += 2;
            }
            b'!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push((start, Tok::Cmp(CmpOp::Ne)));
                    i += 2;
                } else {
                    out.push((start, Tok::Bang));
                    i += 1;
                }
            }
            b'=' => {
                if bytes.get(i + 1) != Some(&b'=') {
                    return Err(err(start, "`==`", "`=`"));
                }
                out.push((start, Tok::Cmp(CmpOp::Eq)));
                i += 2;
            }
            b'<' | b'>' => {
                let eq = bytes.get(i + 1) == Some(&b'=');
                let op = match (c, eq) {
                    (b'<', false) => CmpOp::Lt,
                    (b'<', true) => CmpOp::Le,
                    (_, false) => CmpOp::Gt,
                    (_, true) => CmpOp::Ge,
                };
                out.push((start, Tok::Cmp(op)));
                i += if eq { 2 } else { 1 };
            }
            b'\'' => {
                let mut text = String::new();
                i += 1;
                loop {
                    match src[i..].find('\'') {
                        None => return Err(err(start, "closing `'`", "end of input")),
                        Some(off) => {
                            text.push_str(&src[i..i + off]);
                            i += off + 1;
                            if bytes.get(i) == Some(&b'\'') {
                                text.push('\'');
                                i += 1;
                            } else {
                                break;
                            }
                        }
                    }
                }
                out.push((start, Tok::Text(text)));
            }
            b'-' | b'0'..=b'9' => {
                i += 1;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                let literal = &src[start..i];
                let n: Decimal = literal
                    .parse()
                    .map_err(|e| err(start, "number", format!("`{literal}` ({e})")))?;
                out.push((start, Tok::Num(n)));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(src[start..i].to_string())));
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(err(start, "token", format!("`{ch}`")));
            }
        }
    }
    out.push((src.len(), Tok::Eof));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> SyntaxError {
        err(self.offset(), expected, self.peek().to_string())
    }

    fn or(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.and()?;
        while *self.peek() == Tok::OrOr {
            self.bump();
            lhs = Expr::or(lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        while *self.peek() == Tok::AndAnd {
            self.bump();
            lhs = Expr::and(lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if *self.peek() == Tok::Bang {
            self.bump();
            return Ok(Expr::not(self.unary()?));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Expr, SyntaxError> {
        let lhs = self.operand()?;
        let Tok::Cmp(op) = *self.peek() else {
            return Ok(lhs);
        };
        self.bump();
        let rhs = self.operand()?;
        if matches!(self.peek(), Tok::Cmp(_)) {
            return Err(self.unexpected("`&&`, `||`, `)` or end of input (comparisons do not chain)"));
        }
        Ok(Expr::cmp(op, lhs, rhs))
    }

    fn operand(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(Expr::Num(n))
            }
            Tok::Text(t) => {
                self.bump();
                Ok(Expr::Text(t))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.or()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.unexpected("`)`"));
                }
                self.bump();
                Ok(inner)
            }
            Tok::Ident(id) if id == "true" || id == "false" => {
                self.bump();
                Ok(Expr::Bool(id == "true"))
            }
            Tok::Ident(id) => match Namespace::from_ident(&id) {
                Some(namespace) => {
                    self.bump();
                    let mut segments = Vec::new();
                    while *self.peek() == Tok::Dot {
                        self.bump();
                        let Tok::Ident(seg) = self.peek().clone() else {
                            return Err(self.unexpected("identifier"));
                        };
                        self.bump();
                        segments.push(seg);
                    }
                    if segments.is_empty() {
                        return Err(self.unexpected("`.`"));
                    }
                    Ok(Expr::Path(Path { namespace, segments }))
                }
                None => Err(self.unexpected("literal, `userContext`, `planContext`, `subscription` or `(`")),
            },
            _ => Err(self.unexpected("literal, path, `!` or `(`")),
        }
    }
}

/// Parses one expression.
pub fn parse_expression(source: &str) -> Result<Expr, SyntaxError> {
    let mut p = Parser {
        toks: lex(source)?,
        pos: 0,
    };
    let expr = p.or()?;
    if *p.peek() != Tok::Eof {
        return Err(p.unexpected("`&&`, `||` or end of input"));
    }
    Ok(expr)
}
