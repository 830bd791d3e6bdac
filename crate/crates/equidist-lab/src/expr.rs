//! The `F` expression language: parsing, printing, evaluation and interval enclosure.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor ('*' factor)*
//! factor := '-' factor | atom ('^' digits)*
//! atom   := number | 'x' digits | '(' expr ')'
//! ```

use equidist::Transform;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("variable x{index} is outside x1..x{arity}")]
    Arity { index: usize, arity: usize },
}

/// Constants are non-negative literals; a leading minus is a `Neg` node.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// 1-based variable index.
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, u32),
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    arity: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn fail<T>(&self, offset: usize, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Syntax { offset, message: message.into() })
    }

    fn digits(&mut self) -> &str {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits")
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Add(Box::new(lhs), Box::new(if op == b'-' { Expr::Neg(Box::new(rhs)) } else { rhs }));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        let mut base = self.atom()?;
        while self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let at = self.pos;
            let e = self.digits();
            match e.parse::<u32>() {
                Ok(0) => return self.fail(at, "exponent must be positive"),
                Ok(e) => base = Expr::Pow(Box::new(base), e),
                Err(_) if e.is_empty() => return self.fail(at, "expected exponent digits"),
                Err(_) => return self.fail(at, "exponent too large"),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let at = self.pos;
        match self.peek() {
            None => self.fail(self.src.len(), "unexpected end of input"),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return self.fail(self.pos, "expected ')'");
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(b'x') => {
                self.pos += 1;
                let digits_at = self.pos;
                let d = self.digits();
                let index: usize = match d.parse() {
                    Ok(i) if i >= 1 => i,
                    _ => return self.fail(digits_at, "expected variable index after 'x'"),
                };
                if index > self.arity {
                    return Err(ExprError::Arity { index, arity: self.arity });
                }
                Ok(Expr::Var(index))
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) => self.fail(at.max(self.pos), format!("unexpected '{}'", c as char)),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let bytes = self.src;
        let mut i = start;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
            i += 1;
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = std::str::from_utf8(&bytes[start..i]).expect("ascii number");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => {
                self.pos = i;
                Ok(Expr::Const(v))
            }
            _ => self.fail(start, format!("malformed number '{text}'")),
        }
    }
}

/// Parse `text` as a function of x1..xn.
pub fn parse_f_expr(text: &str, n: usize) -> Result<Expr, ExprError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0, arity: n };
    let e = p.expr()?;
    if p.peek().is_some() {
        return p.fail(p.pos, "unexpected trailing input");
    }
    Ok(e)
}

fn widen(lo: f64, hi: f64) -> (f64, f64) {
    let pad = |v: f64| v.abs() * 4.0 * f64::EPSILON + f64::MIN_POSITIVE;
    (lo - pad(lo), hi + pad(hi))
}

impl Expr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[i - 1],
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Neg(a) => -a.eval(x),
            Expr::Pow(a, e) => a.eval(x).powi(*e as i32),
        }
    }

    /// Outward-rounded natural interval extension over a box.
    pub fn enclose(&self, bx: &[(f64, f64)]) -> (f64, f64) {
        match self {
            Expr::Const(c) => (*c, *c),
            Expr::Var(i) => bx[i - 1],
            Expr::Add(a, b) => {
                let ((al, ah), (bl, bh)) = (a.enclose(bx), b.enclose(bx));
                widen(al + bl, ah + bh)
            }
            Expr::Mul(a, b) => {
                let ((al, ah), (bl, bh)) = (a.enclose(bx), b.enclose(bx));
                let c = [al * bl, al * bh, ah * bl, ah * bh];
                widen(c.iter().copied().fold(f64::INFINITY, f64::min), c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            }
            Expr::Neg(a) => {
                let (l, h) = a.enclose(bx);
                (-h, -l)
            }
            Expr::Pow(a, e) => {
                let (l, h) = a.enclose(bx);
                let (pl, ph) = (l.powi(*e as i32), h.powi(*e as i32));
                if e % 2 == 1 {
                    widen(pl, ph)
                } else if l <= 0.0 && h >= 0.0 {
                    widen(0.0, pl.max(ph)).max_lo(0.0)
                } else {
                    widen(pl.min(ph), pl.max(ph)).max_lo(0.0)
                }
            }
        }
    }

    /// Coefficients λ when the expression is Σ λ_j x_j with no constant term.
    pub fn linear_coefficients(&self, n: usize) -> Option<Vec<f64>> {
        fn walk(e: &Expr, scale: f64, acc: &mut [f64]) -> bool {
            match e {
                Expr::Var(i) => {
                    acc[i - 1] += scale;
                    true
                }
                Expr::Add(a, b) => walk(a, scale, acc) && walk(b, scale, acc),
                Expr::Neg(a) => walk(a, -scale, acc),
                Expr::Mul(a, b) => match (a.as_ref(), b.as_ref()) {
                    (Expr::Const(c), other) | (other, Expr::Const(c)) => walk(other, scale * c, acc),
                    _ => false,
                },
                Expr::Pow(a, 1) => walk(a, scale, acc),
                _ => false,
            }
        }
        let mut acc = vec![0.0; n];
        walk(self, 1.0, &mut acc).then_some(acc)
    }

    fn is_atomic(&self) -> bool {
        matches!(self, Expr::Const(_) | Expr::Var(_))
    }
}

trait MaxLo {
    fn max_lo(self, floor: f64) -> Self;
}

impl MaxLo for (f64, f64) {
    fn max_lo(self, floor: f64) -> Self {
        (self.0.max(floor), self.1)
    }
}

/// Fully parenthesized except around atoms, so printing then parsing restores the tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |e: &Expr, f: &mut fmt::Formatter<'_>| if e.is_atomic() { write!(f, "{e}") } else { write!(f, "({e})") };
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var(i) => write!(f, "x{i}"),
            Expr::Add(a, b) => {
                wrap(a, f)?;
                write!(f, " + ")?;
                wrap(b, f)
            }
            Expr::Mul(a, b) => {
                wrap(a, f)?;
                write!(f, " * ")?;
                wrap(b, f)
            }
            Expr::Neg(a) => {
                write!(f, "-")?;
                wrap(a, f)
            }
            Expr::Pow(a, e) => {
                wrap(a, f)?;
                write!(f, "^{e}")
            }
        }
    }
}

/// A parsed expression of fixed arity, usable wherever a [`Transform`] is expected.
#[derive(Debug, Clone, PartialEq)]
pub struct Formula {
    pub ast: Expr,
    pub arity: usize,
    pub source: String,
}

impl Formula {
    pub fn parse(text: &str, n: usize) -> Result<Self, ExprError> {
        Ok(Formula { ast: parse_f_expr(text, n)?, arity: n, source: text.to_string() })
    }
}

impl Transform for Formula {
    fn arity(&self) -> usize {
        self.arity
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.ast.eval(x)
    }

    fn enclose(&self, bx: &[(f64, f64)]) -> Option<(f64, f64)> {
        Some(self.ast.enclose(bx))
    }
}
