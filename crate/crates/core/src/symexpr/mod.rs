//! Exact symbolic scalars: rational functions over chart coordinates and
//! opaque function atoms.
//!
//! An [`Expr`] is always stored in canonical form: numerator and denominator
//! are coprime polynomials, the denominator is monic in graded-lex order, and
//! the zero expression has denominator 1. Structural equality is therefore
//! equality of rational functions.

mod chart;
mod parse;
pub mod poly;

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub use chart::{Chart, ChartKind, MAX_DIM};
pub use parse::parse_expr;
pub use poly::{Atom, Coord, Monomial, Poly, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SymError {
    #[error("syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown symbol `{name}` at offset {pos}")]
    UnknownSymbol { name: String, pos: usize },
    #[error("division by zero")]
    DivisionByZero,
    #[error("no value supplied for `{0}`")]
    MissingSymbol(String),
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error("non-decidable coefficient `{0}`: opaque function atoms cannot be zero-tested")]
    NonDecidable(String),
}

/// A numeric value used for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Number {
    Rational(BigRational),
    Float(f64),
}

impl Number {
    pub fn int(v: i64) -> Number {
        Number::Rational(BigRational::from_integer(BigInt::from(v)))
    }

    pub fn ratio(n: i64, d: i64) -> Number {
        Number::Rational(BigRational::new(BigInt::from(n), BigInt::from(d)))
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Number::Rational(r) => r.to_f64().unwrap_or(f64::NAN),
            Number::Float(f) => *f,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Number::Rational(r) => r.is_zero(),
            Number::Float(f) => *f == 0.0,
        }
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Number::Rational(r) => write!(f, "{r}"),
            Number::Float(v) => write!(f, "{v:e}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Expr {
    num: Poly,
    den: Poly,
}

impl Default for Expr {
    fn default() -> Self {
        Expr::zero()
    }
}

impl Expr {
    pub fn zero() -> Expr {
        Expr {
            num: Poly::zero(),
            den: Poly::one(),
        }
    }

    pub fn one() -> Expr {
        Expr::int(1)
    }

    pub fn int(v: i64) -> Expr {
        Expr::from_poly(Poly::from_int(v))
    }

    pub fn rational(r: BigRational) -> Expr {
        Expr::from_poly(Poly::constant(r))
    }

    pub fn ratio(n: i64, d: i64) -> Expr {
        Expr::rational(BigRational::new(BigInt::from(n), BigInt::from(d)))
    }

    pub fn from_poly(p: Poly) -> Expr {
        Expr {
            num: p,
            den: Poly::one(),
        }
    }

    pub fn from_var(v: Var) -> Expr {
        Expr::from_poly(Poly::var(v))
    }

    /// An opaque function `name(args...)`.
    pub fn atom(name: &str, args: Vec<Coord>) -> Expr {
        let derivs = vec![0; args.len()];
        Expr::from_var(Var::Atom(Arc::new(Atom {
            name: name.to_string(),
            args,
            derivs,
        })))
    }

    /// Build `num / den` in canonical form.
    pub fn fraction(num: Poly, den: Poly) -> Result<Expr, SymError> {
        if den.is_zero() {
            return Err(SymError::DivisionByZero);
        }
        Ok(Expr::normalize(num, den))
    }

    fn normalize(num: Poly, den: Poly) -> Expr {
        if num.is_zero() {
            return Expr::zero();
        }
        if let Some(c) = den.constant_value() {
            if c.is_one() {
                return Expr { num, den };
            }
            return Expr {
                num: num.scale(&c.recip()),
                den: Poly::one(),
            };
        }
        if let Some(q) = num.exact_div(&den) {
            return Expr {
                num: q,
                den: Poly::one(),
            };
        }
        let g = num.gcd(&den);
        let (num, den) = if g.is_one() {
            (num, den)
        } else {
            (
                num.exact_div(&g).expect("gcd divides numerator"),
                den.exact_div(&g).expect("gcd divides denominator"),
            )
        };
        let lc = den.leading_coeff().recip();
        Expr {
            num: num.scale(&lc),
            den: den.scale(&lc),
        }
    }

    pub fn numer(&self) -> &Poly {
        &self.num
    }

    pub fn denom(&self) -> &Poly {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.den.is_one() && self.num.is_one()
    }

    pub fn is_polynomial(&self) -> bool {
        self.den.is_one()
    }

    pub fn constant_value(&self) -> Option<BigRational> {
        if self.den.is_one() {
            self.num.constant_value()
        } else {
            None
        }
    }

    pub fn is_constant(&self) -> bool {
        self.constant_value().is_some()
    }

    pub fn has_atoms(&self) -> bool {
        self.num.has_atoms() || self.den.has_atoms()
    }

    /// Error out if the expression lies outside the decidable fragment.
    pub fn require_decidable(&self) -> Result<(), SymError> {
        if self.has_atoms() {
            Err(SymError::NonDecidable(self.to_string()))
        } else {
            Ok(())
        }
    }

    pub fn vars(&self) -> std::collections::BTreeSet<Var> {
        let mut v = self.num.vars();
        v.extend(self.den.vars());
        v
    }

    pub fn checked_div(&self, other: &Expr) -> Result<Expr, SymError> {
        if other.is_zero() {
            return Err(SymError::DivisionByZero);
        }
        Ok(Expr::normalize(
            self.num.mul(&other.den),
            self.den.mul(&other.num),
        ))
    }

    pub fn recip(&self) -> Result<Expr, SymError> {
        Expr::one().checked_div(self)
    }

    pub fn pow(&self, e: i32) -> Result<Expr, SymError> {
        if e >= 0 {
            Ok(Expr {
                num: self.num.pow(e as u32),
                den: self.den.pow(e as u32),
            })
        } else {
            self.recip()?.pow(-e)
        }
    }

    pub fn scale(&self, c: &BigRational) -> Expr {
        Expr::normalize(self.num.scale(c), self.den.clone())
    }

    /// Partial derivative with respect to a coordinate.
    pub fn diff(&self, c: &Coord) -> Expr {
        let dn = self.num.diff(c);
        if self.den.is_one() {
            return Expr::from_poly(dn);
        }
        let dd = self.den.diff(c);
        Expr::normalize(
            dn.mul(&self.den).sub(&self.num.mul(&dd)),
            self.den.mul(&self.den),
        )
    }

    /// Substitute expressions for variables. Variables absent from the map
    /// are kept.
    pub fn substitute(&self, map: &HashMap<Var, Expr>) -> Result<Expr, SymError> {
        let n = subst_poly(&self.num, map);
        let d = subst_poly(&self.den, map);
        n.checked_div(&d)
    }

    /// Remainder of the numerator by multivariate division against an
    /// ordered list of polynomials; the denominator is kept.
    pub fn reduce_modulo(&self, divisors: &[Poly]) -> Expr {
        if divisors.is_empty() || self.is_zero() {
            return self.clone();
        }
        let r = self.num.reduce(divisors);
        Expr::normalize(r, self.den.clone())
    }

    /// Zero set representative: the numerator made integral, primitive, and
    /// with positive leading coefficient.
    pub fn constraint_form(&self) -> Expr {
        Expr::from_poly(self.num.primitive_integer())
    }

    /// Evaluate at a point given by symbol name (atoms are looked up by their
    /// display form). Exact when every supplied value is rational.
    pub fn eval(&self, point: &HashMap<String, Number>) -> Result<Number, SymError> {
        let lookup = |v: &Var| -> Result<Number, SymError> {
            let key = v.to_string();
            point.get(&key).cloned().ok_or(SymError::MissingSymbol(key))
        };
        self.eval_with(&lookup)
    }

    /// Evaluate with coordinates taken by chart position.
    pub fn eval_at(&self, point: &[Number]) -> Result<Number, SymError> {
        let lookup = |v: &Var| -> Result<Number, SymError> {
            match v {
                Var::Coord(c) => point
                    .get(c.pos)
                    .cloned()
                    .ok_or_else(|| SymError::MissingSymbol(c.name.to_string())),
                Var::Atom(_) => Err(SymError::MissingSymbol(v.to_string())),
            }
        };
        self.eval_with(&lookup)
    }

    fn eval_with(&self, lookup: &dyn Fn(&Var) -> Result<Number, SymError>) -> Result<Number, SymError> {
        let mut values: HashMap<Var, Number> = HashMap::new();
        for v in self.vars() {
            let x = lookup(&v)?;
            values.insert(v, x);
        }
        let exact = values.values().all(|x| matches!(x, Number::Rational(_)));
        if exact {
            let f = |v: &Var| match values.get(v) {
                Some(Number::Rational(r)) => Some(r.clone()),
                _ => None,
            };
            let n = self.num.substitute_rational(&f).expect("all values present");
            let d = self.den.substitute_rational(&f).expect("all values present");
            if d.is_zero() {
                return Err(SymError::DivisionByZero);
            }
            Ok(Number::Rational(n / d))
        } else {
            let f = |v: &Var| values.get(v).map(Number::to_f64).unwrap_or(f64::NAN);
            let n = eval_poly_f64(&self.num, &f);
            let d = eval_poly_f64(&self.den, &f);
            if d == 0.0 {
                return Err(SymError::DivisionByZero);
            }
            Ok(Number::Float(n / d))
        }
    }

    /// Compile to a closure-free evaluator over `f64` chart positions.
    pub fn compile(&self) -> Result<CompiledExpr, SymError> {
        CompiledExpr::new(self)
    }
}

fn subst_poly(p: &Poly, map: &HashMap<Var, Expr>) -> Expr {
    let mut acc = Expr::zero();
    for (m, c) in p.terms() {
        let mut t = Expr::rational(c.clone());
        let mut kept = Monomial::one();
        for (v, e) in m.factors() {
            match map.get(v) {
                Some(x) => t = &t * &x.pow(*e as i32).expect("non-negative power"),
                None => kept = kept.mul(&Monomial::var(v.clone(), *e)),
            }
        }
        let t = &t * &Expr::from_poly(Poly::term(BigRational::one(), kept));
        acc = &acc + &t;
    }
    acc
}

fn eval_poly_f64(p: &Poly, f: &dyn Fn(&Var) -> f64) -> f64 {
    p.terms()
        .map(|(m, c)| {
            m.factors()
                .iter()
                .fold(c.to_f64().unwrap_or(f64::NAN), |acc, (v, e)| acc * f(v).powi(*e as i32))
        })
        .sum()
}

/// An expression lowered to flat term lists for fast `f64` evaluation.
#[derive(Clone, Debug)]
pub struct CompiledExpr {
    num: Vec<(f64, Vec<(usize, i32)>)>,
    den: Vec<(f64, Vec<(usize, i32)>)>,
}

impl CompiledExpr {
    fn new(e: &Expr) -> Result<CompiledExpr, SymError> {
        e.require_decidable()?;
        let lower = |p: &Poly| {
            p.terms()
                .map(|(m, c)| {
                    let factors = m
                        .factors()
                        .iter()
                        .map(|(v, k)| (v.coord().expect("no atoms").pos, *k as i32))
                        .collect();
                    (c.to_f64().unwrap_or(f64::NAN), factors)
                })
                .collect::<Vec<_>>()
        };
        Ok(CompiledExpr {
            num: lower(&e.num),
            den: lower(&e.den),
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let ev = |terms: &[(f64, Vec<(usize, i32)>)]| -> f64 {
            terms
                .iter()
                .map(|(c, fs)| fs.iter().fold(*c, |acc, (p, k)| acc * x[*p].powi(*k)))
                .sum()
        };
        let n = ev(&self.num);
        if self.den.len() == 1 && self.den[0].1.is_empty() {
            n / self.den[0].0
        } else {
            n / ev(&self.den)
        }
    }
}

impl Add for &Expr {
    type Output = Expr;
    fn add(self, rhs: &Expr) -> Expr {
        if rhs.is_zero() {
            return self.clone();
        }
        if self.is_zero() {
            return rhs.clone();
        }
        if self.den == rhs.den {
            if self.den.is_one() {
                return Expr::from_poly(self.num.add(&rhs.num));
            }
            return Expr::normalize(self.num.add(&rhs.num), self.den.clone());
        }
        Expr::normalize(
            self.num.mul(&rhs.den).add(&rhs.num.mul(&self.den)),
            self.den.mul(&rhs.den),
        )
    }
}

impl Sub for &Expr {
    type Output = Expr;
    fn sub(self, rhs: &Expr) -> Expr {
        self + &(-rhs)
    }
}

impl Mul for &Expr {
    type Output = Expr;
    fn mul(self, rhs: &Expr) -> Expr {
        if self.is_zero() || rhs.is_zero() {
            return Expr::zero();
        }
        if self.den.is_one() && rhs.den.is_one() {
            return Expr::from_poly(self.num.mul(&rhs.num));
        }
        Expr::normalize(self.num.mul(&rhs.num), self.den.mul(&rhs.den))
    }
}

/// Panics on division by zero; use [`Expr::checked_div`] when the divisor
/// may vanish.
impl Div for &Expr {
    type Output = Expr;
    fn div(self, rhs: &Expr) -> Expr {
        self.checked_div(rhs).expect("division by zero expression")
    }
}

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr {
            num: self.num.neg(),
            den: self.den.clone(),
        }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Expr> for Expr {
            type Output = Expr;
            fn $m(self, rhs: &Expr) -> Expr {
                (&self).$m(rhs)
            }
        }
        impl $tr<Expr> for &Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                self.$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);
forward_owned!(Div, div);

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -&self
    }
}

impl std::iter::Sum for Expr {
    fn sum<I: Iterator<Item = Expr>>(iter: I) -> Expr {
        iter.fold(Expr::zero(), |a, b| &a + &b)
    }
}

fn fmt_poly(p: &Poly, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if p.is_zero() {
        return f.write_str("0");
    }
    for (i, (m, c)) in p.terms().enumerate() {
        let neg = c.is_negative();
        let abs = c.abs();
        if i == 0 {
            if neg {
                f.write_str("-")?;
            }
        } else {
            f.write_str(if neg { " - " } else { " + " })?;
        }
        let mut parts: Vec<String> = Vec::new();
        if m.is_one() || !abs.is_one() {
            parts.push(abs.to_string());
        }
        for (v, e) in m.factors() {
            if *e == 1 {
                parts.push(v.to_string());
            } else {
                parts.push(format!("{v}^{e}"));
            }
        }
        f.write_str(&parts.join("*"))?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.is_one() {
            return fmt_poly(&self.num, f);
        }
        let wrap_num = self.num.len() > 1;
        if wrap_num {
            f.write_str("(")?;
        }
        fmt_poly(&self.num, f)?;
        if wrap_num {
            f.write_str(")")?;
        }
        f.write_str("/")?;
        let simple_den = self.den.len() == 1
            && self
                .den
                .terms()
                .all(|(m, c)| c.is_one() && m.factors().len() == 1);
        if simple_den {
            fmt_poly(&self.den, f)
        } else {
            f.write_str("(")?;
            fmt_poly(&self.den, f)?;
            f.write_str(")")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart() -> Chart {
        Chart::first_jet(&["x1", "x2"], &["y1", "y2"]).unwrap()
    }

    fn p(s: &str) -> Expr {
        parse_expr(s, &chart()).unwrap()
    }

    #[test]
    fn canonical_cancellation() {
        assert_eq!(p("(y1^2 - y2^2)/(y1 - y2)"), p("y1 + y2"));
        assert_eq!(p("(2*y1)/(4*y1*y2)"), p("1/(2*y2)"));
        assert!(p("y1 - y1").is_zero());
    }

    #[test]
    fn display_round_trips() {
        let c = chart();
        for src in ["x2*y1 - y1*y2", "3/2*x1^2 + 1", "(y1 + y2)/(x1 - 2)", "-v1_1", "1/(y1*y2)"] {
            let e = p(src);
            let again = parse_expr(&e.to_string(), &c).unwrap();
            assert_eq!(e, again, "{src} -> {e}");
        }
    }

    #[test]
    fn diff_basic() {
        let c = chart();
        let y1 = c.coord(2);
        assert_eq!(p("y1*y2").diff(&y1), p("y2"));
        let v12 = c.coord(c.position("v1_2").unwrap());
        assert_eq!(p("x2*(y1*v1_2 + y2*v2_2) + y1*y2").diff(&v12), p("x2*y1"));
        assert_eq!(p("1/y1").diff(&y1), p("-1/y1^2"));
    }

    #[test]
    fn atoms_differentiate_by_chain_rule() {
        let c = chart();
        let f = c.atom("f", &["x1", "y1"]).unwrap();
        let e = &f * &f;
        let d = e.diff(&c.coord(0));
        let fx = f.diff(&c.coord(0));
        assert_eq!(d, Expr::int(2) * &f * &fx);
        assert!(f.diff(&c.coord(1)).is_zero());
        assert!(d.require_decidable().is_err());
        // mixed partials commute on atoms
        let fxy = fx.diff(&c.coord(2));
        let fyx = f.diff(&c.coord(2)).diff(&c.coord(0));
        assert_eq!(fxy, fyx);
    }

    #[test]
    fn eval_exact_and_errors() {
        let pt: HashMap<String, Number> = [("y1", 3), ("y2", 3)]
            .iter()
            .map(|(k, v)| (k.to_string(), Number::int(*v)))
            .collect();
        assert_eq!(p("y1 - y2").eval(&pt).unwrap(), Number::int(0));
        let pt1: HashMap<String, Number> = [("y1", 1), ("y2", 1)]
            .iter()
            .map(|(k, v)| (k.to_string(), Number::int(*v)))
            .collect();
        assert_eq!(p("1/(y1 - y2)").eval(&pt1), Err(SymError::DivisionByZero));
        assert!(matches!(p("x1 + y1").eval(&pt1), Err(SymError::MissingSymbol(s)) if s == "x1"));
    }

    #[test]
    fn eval_example_lagrangian() {
        let pt: HashMap<String, Number> = [("x2", 1), ("y1", 1), ("y2", 2), ("v1_2", 1), ("v2_2", 0)]
            .iter()
            .map(|(k, v)| (k.to_string(), Number::int(*v)))
            .collect();
        let l = p("x2*(y1*v1_2 + y2*v2_2) + y1*y2");
        assert_eq!(l.eval(&pt).unwrap(), Number::int(3));
    }

    #[test]
    fn float_evaluation_and_compiled_agree() {
        let c = chart();
        let e = p("(x1^2 + 3*y2)/(1 + y1^2)");
        let x = [0.5, 0.0, 2.0, -1.0, 0.0, 0.0, 0.0, 0.0];
        let pt: Vec<Number> = x.iter().map(|v| Number::Float(*v)).collect();
        let a = e.eval_at(&pt).unwrap().to_f64();
        let b = e.compile().unwrap().eval(&x);
        assert!((a - b).abs() < 1e-15);
        assert!((a - (0.25 - 3.0) / 5.0).abs() < 1e-15);
        let _ = c;
    }

    #[test]
    fn substitution() {
        let c = chart();
        let mut map = HashMap::new();
        map.insert(c.var(2), p("y2 + 1"));
        let e = p("y1^2 - y2").substitute(&map).unwrap();
        assert_eq!(e, p("y2^2 + y2 + 1"));
    }

    #[test]
    fn constraint_form_normalises() {
        assert_eq!(p("(-2*y1 + 2*y2)/x1").constraint_form(), p("y1 - y2"));
    }
}
