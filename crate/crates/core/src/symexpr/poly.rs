//! Sparse multivariate polynomials over the rationals.
//!
//! Terms are kept in a `BTreeMap` keyed by [`Monomial`], whose `Ord` is the
//! graded lexicographic order; the leading term is therefore the last entry.
//! Variable significance follows [`Var`]'s order: coordinates by chart
//! position (first coordinate most significant), then opaque atoms.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// A chart coordinate: its position in the chart and its name.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coord {
    pub pos: usize,
    pub name: Arc<str>,
}

/// An opaque function of a list of coordinates, possibly differentiated.
///
/// `derivs[i]` counts how many times the atom was differentiated with
/// respect to `args[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub name: String,
    pub args: Vec<Coord>,
    pub derivs: Vec<u32>,
}

impl Atom {
    pub fn is_differentiated(&self) -> bool {
        self.derivs.iter().any(|&d| d > 0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    Coord(Coord),
    Atom(Arc<Atom>),
}

impl Var {
    pub fn coord(&self) -> Option<&Coord> {
        match self {
            Var::Coord(c) => Some(c),
            Var::Atom(_) => None,
        }
    }

    pub fn is_atom(&self) -> bool {
        matches!(self, Var::Atom(_))
    }

    /// Whether this variable depends on the coordinate `c`.
    pub fn depends_on(&self, c: &Coord) -> bool {
        match self {
            Var::Coord(own) => own == c,
            Var::Atom(a) => a.args.contains(c),
        }
    }

    /// Partial derivative of the variable itself with respect to `c`.
    pub(crate) fn derivative(&self, c: &Coord) -> Option<Var> {
        match self {
            Var::Coord(_) => None,
            Var::Atom(a) => {
                let idx = a.args.iter().position(|arg| arg == c)?;
                let mut d = (**a).clone();
                d.derivs[idx] += 1;
                Some(Var::Atom(Arc::new(d)))
            }
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Coord(c) => f.write_str(&c.name),
            Var::Atom(a) => {
                if a.is_differentiated() {
                    f.write_str("D[")?;
                    let mut first = true;
                    for (arg, &k) in a.args.iter().zip(&a.derivs) {
                        for _ in 0..k {
                            if !first {
                                f.write_str(",")?;
                            }
                            first = false;
                            f.write_str(&arg.name)?;
                        }
                    }
                    f.write_str("]")?;
                }
                f.write_str(&a.name)?;
                f.write_str("(")?;
                for (i, arg) in a.args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    f.write_str(&arg.name)?;
                }
                f.write_str(")")
            }
        }
    }
}

/// A power product, stored as `(variable, exponent)` pairs sorted by variable
/// with strictly positive exponents.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Monomial(Vec<(Var, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(v: Var, exp: u32) -> Self {
        if exp == 0 {
            Monomial::one()
        } else {
            Monomial(vec![(v, exp)])
        }
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| e).sum()
    }

    pub fn factors(&self) -> &[(Var, u32)] {
        &self.0
    }

    pub fn exponent(&self, v: &Var) -> u32 {
        self.0
            .binary_search_by(|(w, _)| w.cmp(v))
            .map(|i| self.0[i].1)
            .unwrap_or(0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].0.cmp(&other.0[j].0) {
                Ordering::Less => {
                    out.push(self.0[i].clone());
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(other.0[j].clone());
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((self.0[i].0.clone(), self.0[i].1 + other.0[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Monomial(out)
    }

    /// `self / other` if `other` divides `self`.
    pub fn div(&self, other: &Monomial) -> Option<Monomial> {
        let mut out = Vec::with_capacity(self.0.len());
        let mut j = 0;
        for (v, e) in &self.0 {
            if j < other.0.len() && other.0[j].0 < *v {
                return None;
            }
            if j < other.0.len() && other.0[j].0 == *v {
                let oe = other.0[j].1;
                j += 1;
                match e.cmp(&oe) {
                    Ordering::Less => return None,
                    Ordering::Equal => {}
                    Ordering::Greater => out.push((v.clone(), e - oe)),
                }
            } else {
                out.push((v.clone(), *e));
            }
        }
        if j < other.0.len() {
            return None;
        }
        Some(Monomial(out))
    }

    /// Componentwise minimum of exponents.
    pub fn gcd(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::new();
        for (v, e) in &self.0 {
            let oe = other.exponent(v);
            if oe > 0 {
                out.push((v.clone(), (*e).min(oe)));
            }
        }
        Monomial(out)
    }

    /// Remove variable `v`, returning its exponent and the rest.
    fn split_off(&self, v: &Var) -> (u32, Monomial) {
        let mut rest = Vec::with_capacity(self.0.len());
        let mut exp = 0;
        for (w, e) in &self.0 {
            if w == v {
                exp = *e;
            } else {
                rest.push((w.clone(), *e));
            }
        }
        (exp, Monomial(rest))
    }
}

impl Ord for Monomial {
    /// Graded lexicographic order.
    fn cmp(&self, other: &Self) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.0.cmp(&b.0) {
                // `self` carries a more significant variable
                Ordering::Less => return Ordering::Greater,
                Ordering::Greater => return Ordering::Less,
                Ordering::Equal => match a.1.cmp(&b.1) {
                    Ordering::Equal => {}
                    ord => return ord,
                },
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Poly {
    terms: BTreeMap<Monomial, BigRational>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn one() -> Self {
        Poly::constant(BigRational::one())
    }

    pub fn constant(c: BigRational) -> Self {
        let mut p = Poly::zero();
        if !c.is_zero() {
            p.terms.insert(Monomial::one(), c);
        }
        p
    }

    pub fn from_int(c: i64) -> Self {
        Poly::constant(BigRational::from_integer(BigInt::from(c)))
    }

    pub fn var(v: Var) -> Self {
        Poly::term(BigRational::one(), Monomial::var(v, 1))
    }

    pub fn term(c: BigRational, m: Monomial) -> Self {
        let mut p = Poly::zero();
        if !c.is_zero() {
            p.terms.insert(m, c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(Monomial::is_one)
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1
            && self
                .terms
                .iter()
                .all(|(m, c)| m.is_one() && c.is_one())
    }

    pub fn constant_value(&self) -> Option<BigRational> {
        if self.is_zero() {
            Some(BigRational::zero())
        } else if self.is_constant() {
            self.terms.values().next().cloned()
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    /// Terms in descending monomial order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter().rev()
    }

    pub fn leading(&self) -> Option<(&Monomial, &BigRational)> {
        self.terms.iter().next_back()
    }

    pub fn leading_coeff(&self) -> BigRational {
        self.leading()
            .map(|(_, c)| c.clone())
            .unwrap_or_else(BigRational::zero)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        self.terms
            .keys()
            .flat_map(|m| m.0.iter().map(|(v, _)| v.clone()))
            .collect()
    }

    pub fn has_atoms(&self) -> bool {
        self.terms.keys().any(|m| m.0.iter().any(|(v, _)| v.is_atom()))
    }

    pub fn degree_in(&self, v: &Var) -> u32 {
        self.terms.keys().map(|m| m.exponent(v)).max().unwrap_or(0)
    }

    fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }

    pub fn neg(&self) -> Poly {
        Poly {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), -c.clone()))
                .collect(),
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let mut out = Poly::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out.add_term(m1.mul(m2), c1 * c2);
            }
        }
        out
    }

    pub fn scale(&self, c: &BigRational) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self
                .terms
                .iter()
                .map(|(m, k)| (m.clone(), k * c))
                .collect(),
        }
    }

    pub fn mul_monomial(&self, m: &Monomial, c: &BigRational) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self
                .terms
                .iter()
                .map(|(k, v)| (k.mul(m), v * c))
                .collect(),
        }
    }

    pub fn pow(&self, mut e: u32) -> Poly {
        let mut base = self.clone();
        let mut acc = Poly::one();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    /// Partial derivative with respect to a chart coordinate, applying the
    /// chain rule through opaque atoms that depend on it.
    pub fn diff(&self, c: &Coord) -> Poly {
        let mut out = Poly::zero();
        for (m, k) in &self.terms {
            for (idx, (v, e)) in m.0.iter().enumerate() {
                if !v.depends_on(c) {
                    continue;
                }
                let mut rest = m.0.clone();
                if *e == 1 {
                    rest.remove(idx);
                } else {
                    rest[idx].1 -= 1;
                }
                let rest = Monomial(rest);
                let coeff = k * BigRational::from_integer(BigInt::from(*e));
                match v.derivative(c) {
                    None => out.add_term(rest, coeff),
                    Some(dv) => out.add_term(rest.mul(&Monomial::var(dv, 1)), coeff),
                }
            }
        }
        out
    }

    /// Coefficients as a univariate polynomial in `v`.
    pub fn coeffs_in(&self, v: &Var) -> BTreeMap<u32, Poly> {
        let mut out: BTreeMap<u32, Poly> = BTreeMap::new();
        for (m, c) in &self.terms {
            let (e, rest) = m.split_off(v);
            out.entry(e).or_default().add_term(rest, c.clone());
        }
        out
    }

    fn lead_in(&self, v: &Var) -> (u32, Poly) {
        let coeffs = self.coeffs_in(v);
        coeffs
            .into_iter()
            .next_back()
            .unwrap_or((0, Poly::zero()))
    }

    /// Make the leading coefficient 1.
    pub fn monic(&self) -> Poly {
        match self.leading() {
            None => Poly::zero(),
            Some((_, c)) => {
                let inv = c.recip();
                self.scale(&inv)
            }
        }
    }

    /// Scale to integer coefficients with unit content and positive leading
    /// coefficient.
    pub fn primitive_integer(&self) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        let mut lcm = BigInt::one();
        for c in self.terms.values() {
            lcm = lcm.lcm(c.denom());
        }
        let mut g = BigInt::zero();
        for c in self.terms.values() {
            let n = c.numer() * (&lcm / c.denom());
            g = g.gcd(&n);
        }
        let mut factor = BigRational::new(lcm, g);
        if self.leading_coeff().is_negative() {
            factor = -factor;
        }
        self.scale(&factor)
    }

    /// Multivariate division by an ordered divisor list; returns the
    /// remainder.
    pub fn reduce(&self, divisors: &[Poly]) -> Poly {
        let divisors: Vec<&Poly> = divisors.iter().filter(|d| !d.is_zero()).collect();
        if divisors.is_empty() {
            return self.clone();
        }
        let mut p = self.clone();
        let mut rem = Poly::zero();
        while let Some((lm, lc)) = p.leading().map(|(m, c)| (m.clone(), c.clone())) {
            let mut divided = false;
            for d in &divisors {
                let (dm, dc) = d.leading().expect("nonzero divisor");
                if let Some(q) = lm.div(dm) {
                    let qc = &lc / dc;
                    p = p.sub(&d.mul_monomial(&q, &qc));
                    divided = true;
                    break;
                }
            }
            if !divided {
                p.terms.remove(&lm);
                rem.add_term(lm, lc);
            }
        }
        rem
    }

    /// Exact quotient `self / d`, or `None` when `d` does not divide `self`.
    pub fn exact_div(&self, d: &Poly) -> Option<Poly> {
        if d.is_zero() {
            return None;
        }
        if let Some(c) = d.constant_value() {
            return Some(self.scale(&c.recip()));
        }
        let (dm, dc) = d.leading().expect("nonzero");
        let (dm, dc) = (dm.clone(), dc.clone());
        let mut p = self.clone();
        let mut q = Poly::zero();
        while let Some((lm, lc)) = p.leading().map(|(m, c)| (m.clone(), c.clone())) {
            let m = lm.div(&dm)?;
            let c = &lc / &dc;
            p = p.sub(&d.mul_monomial(&m, &c));
            q.add_term(m, c);
        }
        Some(q)
    }

    fn min_monomial(&self) -> Monomial {
        let mut it = self.terms.keys();
        let first = match it.next() {
            Some(m) => m.clone(),
            None => return Monomial::one(),
        };
        it.fold(first, |acc, m| acc.gcd(m))
    }

    /// Monic greatest common divisor.
    pub fn gcd(&self, other: &Poly) -> Poly {
        if self.is_zero() {
            return other.monic();
        }
        if other.is_zero() {
            return self.monic();
        }
        if self.is_constant() || other.is_constant() {
            return Poly::one();
        }
        if self.len() == 1 || other.len() == 1 {
            let m = self.min_monomial().gcd(&other.min_monomial());
            return Poly::term(BigRational::one(), m);
        }
        // cheap when one divides the other, which is common in elimination
        let (small, large) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        if large.exact_div(small).is_some() {
            return small.monic();
        }
        let va = self.vars();
        let vb = other.vars();
        if va.is_disjoint(&vb) {
            return Poly::one();
        }
        let main = va.union(&vb).next().cloned().expect("nonempty");
        let in_a = va.contains(&main);
        let in_b = vb.contains(&main);
        match (in_a, in_b) {
            (true, false) => self.content_in(&main).gcd(other),
            (false, true) => self.gcd(&other.content_in(&main)),
            _ => {
                let ca = self.content_in(&main);
                let cb = other.content_in(&main);
                let pa = self.exact_div(&ca).expect("content divides");
                let pb = other.exact_div(&cb).expect("content divides");
                let c = ca.gcd(&cb);
                let g = prs_gcd(pa, pb, &main);
                let g = g.exact_div(&g.content_in(&main)).expect("content divides");
                c.mul(&g).monic()
            }
        }
    }

    /// gcd of the coefficients of `self` viewed as a polynomial in `v`.
    pub fn content_in(&self, v: &Var) -> Poly {
        let mut g = Poly::zero();
        for c in self.coeffs_in(v).values() {
            g = g.gcd(c);
            if g.is_one() {
                break;
            }
        }
        g
    }

    /// Pseudo-remainder of `self` by `d` in the variable `v`.
    fn prem(&self, d: &Poly, v: &Var) -> Poly {
        let (dd, dl) = d.lead_in(v);
        let mut r = self.clone();
        let vx = |e: u32| Poly::term(BigRational::one(), Monomial::var(v.clone(), e));
        loop {
            if r.is_zero() {
                return r;
            }
            let (rd, rl) = r.lead_in(v);
            if rd < dd {
                return r;
            }
            r = r.mul(&dl).sub(&rl.mul(&vx(rd - dd)).mul(d));
        }
    }

    pub fn substitute_rational(&self, f: &dyn Fn(&Var) -> Option<BigRational>) -> Option<BigRational> {
        let mut acc = BigRational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (v, e) in &m.0 {
                let x = f(v)?;
                t *= pow_rational(&x, *e);
            }
            acc += t;
        }
        Some(acc)
    }
}

fn prs_gcd(mut a: Poly, mut b: Poly, v: &Var) -> Poly {
    if a.degree_in(v) < b.degree_in(v) {
        std::mem::swap(&mut a, &mut b);
    }
    while !b.is_zero() {
        if b.degree_in(v) == 0 {
            return Poly::one();
        }
        let r = a.prem(&b, v);
        a = b;
        b = if r.is_zero() {
            r
        } else {
            let c = r.content_in(v);
            r.exact_div(&c).expect("content divides").primitive_integer()
        };
    }
    a
}

pub(crate) fn pow_rational(x: &BigRational, e: u32) -> BigRational {
    num_traits::pow(x.clone(), e as usize)
}
