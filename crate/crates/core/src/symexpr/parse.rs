//! Recursive-descent parser for the expression grammar
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := unary (('*'|'/') unary)*
//! unary  := '-' unary | factor
//! factor := base ('^' int)?
//! base   := number | ident | '(' expr ')'
//! ident  := [a-zA-Z][a-zA-Z0-9_]*
//! ```
//!
//! Numbers are integers or decimals and are read exactly. Identifiers must
//! name a coordinate of the chart.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use super::{Chart, Expr, SymError};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigRational),
    Ident(String),
    Op(char),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, SymError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let mut frac = "";
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                let fs = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                frac = &src[fs..i];
            }
            let int_part = src[start..i].split('.').next().unwrap_or("");
            let digits = format!("{int_part}{frac}");
            let n: BigInt = if digits.is_empty() {
                BigInt::zero()
            } else {
                digits.parse().map_err(|_| SymError::Syntax {
                    pos: start,
                    msg: "malformed number".into(),
                })?
            };
            let d = num_traits::pow(BigInt::from(10), frac.len());
            out.push((start, Tok::Num(BigRational::new(n, d))));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if "+-*/^()".contains(c) {
            out.push((i, Tok::Op(c)));
            i += 1;
        } else {
            return Err(SymError::Syntax {
                pos: i,
                msg: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
    chart: &'a Chart,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, SymError> {
        Err(SymError::Syntax {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, SymError> {
        let mut acc = self.term()?;
        loop {
            if self.eat('+') {
                acc = &acc + &self.term()?;
            } else if self.eat('-') {
                acc = &acc - &self.term()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, SymError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat('*') {
                acc = &acc * &self.unary()?;
            } else if self.peek() == Some(&Tok::Op('/')) {
                let pos = self.pos();
                self.at += 1;
                let rhs = self.unary()?;
                acc = acc.checked_div(&rhs).map_err(|_| SymError::Syntax {
                    pos,
                    msg: "division by an expression that is identically zero".into(),
                })?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, SymError> {
        if self.eat('-') {
            Ok(-self.unary()?)
        } else {
            self.factor()
        }
    }

    fn factor(&mut self) -> Result<Expr, SymError> {
        let base = self.base()?;
        if self.eat('^') {
            match self.peek().cloned() {
                Some(Tok::Num(n)) if n.is_integer() => {
                    self.at += 1;
                    let e: i32 = n.to_integer().try_into().or_else(|_| self.err("exponent too large"))?;
                    base.pow(e).or_else(|_| self.err("zero raised to a negative power"))
                }
                _ => self.err("expected an integer exponent"),
            }
        } else {
            Ok(base)
        }
    }

    fn base(&mut self) -> Result<Expr, SymError> {
        let pos = self.pos();
        match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.at += 1;
                Ok(Expr::rational(n))
            }
            Some(Tok::Ident(name)) => {
                self.at += 1;
                match self.chart.position(&name) {
                    Some(p) => Ok(self.chart.x(p)),
                    None => Err(SymError::UnknownSymbol { name, pos }),
                }
            }
            Some(Tok::Op('(')) => {
                self.at += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return self.err("expected `)`");
                }
                Ok(e)
            }
            Some(Tok::Op(c)) => self.err(format!("unexpected `{c}`")),
            None => self.err("unexpected end of input"),
        }
    }
}

/// Parse `source` over the coordinates of `chart` into canonical form.
pub fn parse_expr(source: &str, chart: &Chart) -> Result<Expr, SymError> {
    let toks = lex(source)?;
    let mut p = Parser {
        toks,
        at: 0,
        end: source.len(),
        chart,
    };
    if p.peek().is_none() {
        return p.err("empty expression");
    }
    let e = p.expr()?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart() -> Chart {
        Chart::plain(&["x1", "x2"], &["y1", "y2"]).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        let c = chart();
        let a = parse_expr("1 - 2 - 3", &c).unwrap();
        assert_eq!(a, Expr::int(-4));
        let b = parse_expr("8/4/2", &c).unwrap();
        assert_eq!(b, Expr::int(1));
        let d = parse_expr("2*3^2", &c).unwrap();
        assert_eq!(d, Expr::int(18));
        let e = parse_expr("-y1^2", &c).unwrap();
        assert_eq!(e, -(c.x(2).pow(2).unwrap()));
        assert_eq!(parse_expr("0.25*4", &c).unwrap(), Expr::one());
    }

    #[test]
    fn zero_is_canonical_zero() {
        assert!(parse_expr("0", &chart()).unwrap().is_zero());
    }

    #[test]
    fn errors_carry_positions() {
        let c = chart();
        assert_eq!(
            parse_expr("y1 + z", &c),
            Err(SymError::UnknownSymbol {
                name: "z".into(),
                pos: 5
            })
        );
        assert!(matches!(parse_expr("y1 +", &c), Err(SymError::Syntax { pos: 4, .. })));
        assert!(matches!(parse_expr("(y1", &c), Err(SymError::Syntax { pos: 3, .. })));
        assert!(matches!(parse_expr("y1 $ 2", &c), Err(SymError::Syntax { pos: 3, .. })));
        assert!(matches!(parse_expr("y1^y2", &c), Err(SymError::Syntax { .. })));
        assert!(matches!(parse_expr("1/(y1-y1)", &c), Err(SymError::Syntax { pos: 1, .. })));
        assert!(matches!(parse_expr("", &c), Err(SymError::Syntax { .. })));
    }
}
