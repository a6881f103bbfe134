//! Text grammar for scalar expressions.
//!
//! Infix `+ - * / ^` with standard precedence, parentheses, call syntax for
//! `sin`/`cos`/`exp`, rational and decimal literals. Coordinates are written
//! with their declared names, jets as `field_base` (e.g. `y1_t`), second
//! jets as `field_basebase` (e.g. `y1_tx`).

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::pow::Pow;
use thiserror::Error;

use crate::chart::JetChart;
use crate::expr::poly::FunKind;
use crate::expr::ScalarExpr;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("column {col}: {msg}")]
pub struct ParseError {
    pub col: usize,
    pub msg: String,
}

fn err<T>(col: usize, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        col,
        msg: msg.into(),
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigRational),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(usize, Tok)>, ParseError> {
        let mut lx = Lexer {
            src: src.as_bytes(),
            pos: 0,
        };
        let mut out = Vec::new();
        while let Some(t) = lx.next_token()? {
            out.push(t);
        }
        Ok(out)
    }

    fn next_token(&mut self) -> Result<Option<(usize, Tok)>, ParseError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'-' => {
                self.pos += 1;
                Tok::Minus
            }
            b'*' => {
                self.pos += 1;
                Tok::Star
            }
            b'/' => {
                self.pos += 1;
                Tok::Slash
            }
            b'^' => {
                self.pos += 1;
                Tok::Caret
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b',' => {
                self.pos += 1;
                Tok::Comma
            }
            b'0'..=b'9' | b'.' => self.number(start)?,
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                Tok::Ident(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
            }
            other => return err(start + 1, format!("unexpected character `{}`", other as char)),
        };
        Ok(Some((start + 1, tok)))
    }

    fn number(&mut self, start: usize) -> Result<Tok, ParseError> {
        let mut int_part = String::new();
        let mut frac_part = String::new();
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            int_part.push(self.src[self.pos] as char);
            self.pos += 1;
        }
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                frac_part.push(self.src[self.pos] as char);
                self.pos += 1;
            }
        }
        if int_part.is_empty() && frac_part.is_empty() {
            return err(start + 1, "malformed number");
        }
        let mut exp: i64 = 0;
        if self.pos < self.src.len() && (self.src[self.pos] == b'e' || self.src[self.pos] == b'E') {
            // lookahead: exponent must be digits with optional sign
            let save = self.pos;
            self.pos += 1;
            let mut sign = 1i64;
            if self.pos < self.src.len() && (self.src[self.pos] == b'+' || self.src[self.pos] == b'-')
            {
                if self.src[self.pos] == b'-' {
                    sign = -1;
                }
                self.pos += 1;
            }
            let mut digits = String::new();
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                digits.push(self.src[self.pos] as char);
                self.pos += 1;
            }
            if digits.is_empty() {
                self.pos = save; // `e` belongs to an identifier, not this literal
            } else {
                exp = sign * digits.parse::<i64>().map_err(|_| ParseError {
                    col: start + 1,
                    msg: "exponent out of range".into(),
                })?;
            }
        }
        let digits = format!("{int_part}{frac_part}");
        let digits = if digits.is_empty() { "0".into() } else { digits };
        let numer: BigInt = digits.parse().map_err(|_| ParseError {
            col: start + 1,
            msg: "number out of range".into(),
        })?;
        let mut value = BigRational::from(numer);
        let shift = frac_part.len() as i64 - exp;
        let ten = BigInt::from(10u32);
        if shift > 0 {
            value /= BigRational::from(ten.pow(shift as u64));
        } else if shift < 0 {
            value *= BigRational::from(ten.pow((-shift) as u64));
        }
        Ok(Tok::Num(value))
    }
}

/// Resolution context: the chart plus the set of admissible parameter names.
pub struct ParseCtx<'a> {
    pub chart: &'a JetChart,
    pub params: &'a [String],
    /// When set, identifiers that match neither a coordinate nor a declared
    /// parameter become free parameters instead of errors.
    pub allow_free_params: bool,
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    ctx: &'a ParseCtx<'a>,
}

/// Parse an expression string in the given context.
pub fn parse_expr(src: &str, ctx: &ParseCtx) -> Result<ScalarExpr, ParseError> {
    let toks = Lexer::tokens(src)?;
    if toks.is_empty() {
        return err(1, "empty expression");
    }
    let mut p = Parser { toks, pos: 0, ctx };
    let e = p.expr()?;
    if p.pos < p.toks.len() {
        let (col, _) = p.toks[p.pos];
        return err(col, "trailing input after expression");
    }
    Ok(e)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn col(&self) -> usize {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|(c, _)| *c)
            .unwrap_or(1)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<ScalarExpr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    lhs = lhs.add(&self.term()?);
                }
                Some(Tok::Minus) => {
                    self.bump();
                    lhs = lhs.sub(&self.term()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<ScalarExpr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    lhs = lhs.mul(&self.unary()?);
                }
                Some(Tok::Slash) => {
                    let col = self.col();
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = lhs
                        .div(&rhs)
                        .map_err(|_| ParseError {
                            col,
                            msg: "division by the zero expression".into(),
                        })?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<ScalarExpr, ParseError> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            return Ok(self.unary()?.neg());
        }
        self.power()
    }

    fn power(&mut self) -> Result<ScalarExpr, ParseError> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            let col = self.col();
            self.bump();
            let e = self.integer_exponent()?;
            return base.powi(e).map_err(|_| ParseError {
                col,
                msg: "invalid power (zero base with negative exponent)".into(),
            });
        }
        Ok(base)
    }

    fn integer_exponent(&mut self) -> Result<i64, ParseError> {
        let col = self.col();
        let mut sign = 1i64;
        let mut parens = false;
        if matches!(self.peek(), Some(Tok::LParen)) {
            self.bump();
            parens = true;
        }
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            sign = -1;
        }
        let value: i64 = match self.bump() {
            Some(Tok::Num(r)) if r.is_integer() => {
                i64::try_from(r.to_integer()).map_err(|_| ParseError {
                    col,
                    msg: "exponent out of range".into(),
                })?
            }
            _ => return err(col, "exponent must be an integer literal"),
        };
        if parens && !matches!(self.bump(), Some(Tok::RParen)) {
            return err(col, "expected `)` after exponent");
        }
        Ok(sign * value)
    }

    fn atom(&mut self) -> Result<ScalarExpr, ParseError> {
        let col = self.col();
        match self.bump() {
            Some(Tok::Num(r)) => Ok(ScalarExpr::rational(r)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                match self.bump() {
                    Some(Tok::RParen) => Ok(e),
                    _ => err(col, "unbalanced parenthesis"),
                }
            }
            Some(Tok::Ident(name)) => {
                if matches!(self.peek(), Some(Tok::LParen)) {
                    let kind = match name.as_str() {
                        "sin" => FunKind::Sin,
                        "cos" => FunKind::Cos,
                        "exp" => FunKind::Exp,
                        other => {
                            return err(col, format!("unknown function `{other}`"));
                        }
                    };
                    self.bump();
                    let arg = self.expr()?;
                    match self.bump() {
                        Some(Tok::RParen) => Ok(ScalarExpr::fun(kind, arg)),
                        _ => err(col, "unbalanced parenthesis in function call"),
                    }
                } else {
                    self.resolve(&name, col)
                }
            }
            _ => err(col, "expected a number, name or parenthesized expression"),
        }
    }

    fn resolve(&self, name: &str, col: usize) -> Result<ScalarExpr, ParseError> {
        if let Ok(c) = self.ctx.chart.resolve(name) {
            return Ok(ScalarExpr::coord(c));
        }
        if self.ctx.params.iter().any(|p| p == name) || self.ctx.allow_free_params {
            return Ok(ScalarExpr::param(name));
        }
        err(col, format!("unknown name `{name}`"))
    }
}
