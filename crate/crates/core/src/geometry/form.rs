use std::collections::BTreeMap;
use std::fmt;

use crate::symexpr::{Chart, Expr};

use super::{GeometryError, VectorField};

/// Multi-index over chart positions, one bit per coordinate.
pub type Index = u64;

pub(crate) fn bits(idx: Index) -> impl Iterator<Item = usize> {
    (0..64).filter(move |i| idx & (1u64 << i) != 0)
}

pub(crate) fn index_of(positions: &[usize]) -> Option<(Index, i32)> {
    // sort with parity tracking; repeated entries give None
    let mut v = positions.to_vec();
    let mut sign = 1;
    for i in 0..v.len() {
        for j in 0..v.len().saturating_sub(1 + i) {
            if v[j] > v[j + 1] {
                v.swap(j, j + 1);
                sign = -sign;
            } else if v[j] == v[j + 1] {
                return None;
            }
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    Some((v.iter().fold(0, |acc, p| acc | (1u64 << p)), sign))
}

/// Sign of `dx^I ^ dx^J` relative to `dx^{I u J}`; zero when they overlap.
fn merge_sign(i: Index, j: Index) -> i32 {
    if i & j != 0 {
        return 0;
    }
    let mut swaps = 0u32;
    for b in bits(j) {
        swaps += (i >> (b + 1)).count_ones();
    }
    if swaps % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Sign produced by `i(d/dx^p)` acting on `dx^I` with `p` in `I`.
pub(crate) fn removal_sign(idx: Index, p: usize) -> i32 {
    let below = idx & ((1u64 << p) - 1);
    if below.count_ones() % 2 == 0 {
        1
    } else {
        -1
    }
}

fn signed(e: &Expr, s: i32) -> Expr {
    if s > 0 {
        e.clone()
    } else {
        -e
    }
}

/// A differential form of fixed degree with canonical [`Expr`] coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiffForm {
    dim: usize,
    degree: usize,
    terms: BTreeMap<Index, Expr>,
}

impl DiffForm {
    pub fn zero(dim: usize, degree: usize) -> DiffForm {
        DiffForm {
            dim,
            degree,
            terms: BTreeMap::new(),
        }
    }

    /// The 0-form `f`.
    pub fn scalar(dim: usize, f: Expr) -> DiffForm {
        let mut out = DiffForm::zero(dim, 0);
        out.add_term(0, f);
        out
    }

    /// `dx^p`.
    pub fn dx(dim: usize, p: usize) -> DiffForm {
        DiffForm::basis(dim, &[p]).expect("single index")
    }

    /// `dx^{p1} ^ ... ^ dx^{pk}` in the given order, sign included.
    pub fn basis(dim: usize, positions: &[usize]) -> Result<DiffForm, GeometryError> {
        if positions.iter().any(|&p| p >= dim) {
            return Err(GeometryError::IndexOutOfRange);
        }
        let mut out = DiffForm::zero(dim, positions.len());
        if let Some((idx, sign)) = index_of(positions) {
            out.add_term(idx, Expr::int(sign as i64));
        }
        Ok(out)
    }

    /// `dx^1 ^ ... ^ dx^m` over the base coordinates of `chart`.
    pub fn volume(chart: &Chart) -> DiffForm {
        let base: Vec<usize> = (0..chart.base_dim()).collect();
        DiffForm::basis(chart.dim(), &base).expect("base indices in range")
    }

    /// `d^{m-1}x_mu = i(d/dx^mu) d^m x`.
    pub fn volume_minus(chart: &Chart, mu: usize) -> DiffForm {
        DiffForm::volume(chart).contract_basis(mu)
    }

    pub fn from_terms(dim: usize, degree: usize, terms: impl IntoIterator<Item = (Index, Expr)>) -> DiffForm {
        let mut out = DiffForm::zero(dim, degree);
        for (idx, e) in terms {
            assert_eq!(idx.count_ones() as usize, degree, "multi-index degree mismatch");
            out.add_term(idx, e);
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (Index, &Expr)> {
        self.terms.iter().map(|(k, v)| (*k, v))
    }

    pub fn coeff(&self, idx: Index) -> Expr {
        self.terms.get(&idx).cloned().unwrap_or_default()
    }

    /// Coefficient of `dx^{p1}^...^dx^{pk}` for positions in any order.
    pub fn component(&self, positions: &[usize]) -> Expr {
        match index_of(positions) {
            None => Expr::zero(),
            Some((idx, sign)) => signed(&self.coeff(idx), sign),
        }
    }

    fn add_term(&mut self, idx: Index, e: Expr) {
        if e.is_zero() {
            return;
        }
        let slot = self.terms.entry(idx).or_default();
        *slot = &*slot + &e;
        if slot.is_zero() {
            self.terms.remove(&idx);
        }
    }

    fn check_compatible(&self, other: &DiffForm) {
        assert_eq!(self.dim, other.dim, "forms live on charts of different dimension");
        assert_eq!(self.degree, other.degree, "adding forms of different degree");
    }

    pub fn add(&self, other: &DiffForm) -> DiffForm {
        self.check_compatible(other);
        let mut out = self.clone();
        for (k, v) in &other.terms {
            out.add_term(*k, v.clone());
        }
        out
    }

    pub fn sub(&self, other: &DiffForm) -> DiffForm {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> DiffForm {
        self.map_coeffs(|e| -e)
    }

    pub fn scale(&self, f: &Expr) -> DiffForm {
        self.map_coeffs(|e| e * f)
    }

    pub fn map_coeffs(&self, f: impl Fn(&Expr) -> Expr) -> DiffForm {
        let mut out = DiffForm::zero(self.dim, self.degree);
        for (k, v) in &self.terms {
            out.add_term(*k, f(v));
        }
        out
    }

    /// Exterior product.
    pub fn wedge(&self, other: &DiffForm) -> Result<DiffForm, GeometryError> {
        assert_eq!(self.dim, other.dim, "forms live on charts of different dimension");
        let degree = self.degree + other.degree;
        if degree > self.dim {
            return Err(GeometryError::DegreeOverflow {
                degree,
                dim: self.dim,
            });
        }
        let mut out = DiffForm::zero(self.dim, degree);
        for (i, a) in &self.terms {
            for (j, b) in &other.terms {
                let s = merge_sign(*i, *j);
                if s != 0 {
                    out.add_term(i | j, signed(&(a * b), s));
                }
            }
        }
        Ok(out)
    }

    /// Exterior derivative `d`, with `d(f dx^I) = sum_p df/dx^p dx^p ^ dx^I`.
    pub fn exterior_derivative(&self, chart: &Chart) -> DiffForm {
        assert_eq!(self.dim, chart.dim());
        let mut out = DiffForm::zero(self.dim, self.degree + 1);
        if self.degree >= self.dim {
            return out;
        }
        let coords = chart.coords();
        for (idx, f) in &self.terms {
            for c in &coords {
                let bit = 1u64 << c.pos;
                if idx & bit != 0 {
                    continue;
                }
                let df = f.diff(c);
                if df.is_zero() {
                    continue;
                }
                out.add_term(idx | bit, signed(&df, merge_sign(bit, *idx)));
            }
        }
        out
    }

    /// `i(d/dx^p)` applied to the form.
    pub fn contract_basis(&self, p: usize) -> DiffForm {
        assert!(self.degree > 0, "cannot contract a 0-form");
        let mut out = DiffForm::zero(self.dim, self.degree - 1);
        let bit = 1u64 << p;
        for (idx, f) in &self.terms {
            if idx & bit != 0 {
                out.add_term(idx & !bit, signed(f, removal_sign(*idx, p)));
            }
        }
        out
    }

    /// `i(X)` for a vector field: the field fills the first slot.
    pub fn contract_vector(&self, x: &VectorField) -> DiffForm {
        assert!(self.degree > 0, "cannot contract a 0-form");
        assert_eq!(x.dim(), self.dim);
        let mut out = DiffForm::zero(self.dim, self.degree - 1);
        for (idx, f) in &self.terms {
            for p in bits(*idx) {
                let xp = x.component(p);
                if xp.is_zero() {
                    continue;
                }
                out.add_term(idx & !(1u64 << p), signed(&(f * xp), removal_sign(*idx, p)));
            }
        }
        out
    }

    /// Value on a list of vector fields: `a(v1, ..., vk)`.
    pub fn evaluate(&self, vectors: &[VectorField]) -> Result<Expr, GeometryError> {
        if vectors.len() != self.degree {
            return Err(GeometryError::DegreeMismatch {
                expected: self.degree,
                found: vectors.len(),
            });
        }
        let mut acc = self.clone();
        for v in vectors {
            acc = acc.contract_vector(v);
        }
        Ok(acc.coeff(0))
    }

    /// Pull back through a coordinate map given as one expression per source
    /// coordinate, written on `target`.
    pub fn pullback(&self, target: &Chart, map: &[Expr]) -> DiffForm {
        assert_eq!(map.len(), self.dim, "one image expression per source coordinate");
        let tdim = target.dim();
        let differentials: Vec<DiffForm> = map
            .iter()
            .map(|e| DiffForm::scalar(tdim, e.clone()).exterior_derivative(target))
            .collect();
        let subst = |f: &Expr| -> Expr {
            let vars: std::collections::HashMap<_, _> = f
                .vars()
                .into_iter()
                .filter_map(|v| {
                    let pos = v.coord()?.pos;
                    Some((v.clone(), map[pos].clone()))
                })
                .collect();
            f.substitute(&vars).expect("pullback lands on a pole")
        };
        let mut out = DiffForm::zero(tdim, self.degree);
        for (idx, f) in &self.terms {
            let mut acc = DiffForm::scalar(tdim, subst(f));
            for p in bits(*idx) {
                acc = acc.wedge(&differentials[p]).expect("degree within target dimension");
            }
            out = out.add(&acc);
        }
        out
    }

    /// Positions of fibre coordinates present in each term, used by the
    /// bidegree check: returns a term with at least three vertical indices.
    pub fn triple_vertical(&self, chart: &Chart) -> Option<[usize; 3]> {
        let vertical_mask: Index = (chart.base_dim()..chart.dim()).fold(0, |m, p| m | (1u64 << p));
        self.terms.keys().find_map(|idx| {
            let v: Vec<usize> = bits(idx & vertical_mask).take(3).collect();
            (v.len() == 3).then(|| [v[0], v[1], v[2]])
        })
    }

    pub fn display<'a>(&'a self, chart: &'a Chart) -> FormDisplay<'a> {
        FormDisplay { form: self, chart }
    }
}

pub struct FormDisplay<'a> {
    form: &'a DiffForm,
    chart: &'a Chart,
}

impl fmt::Display for FormDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.form.is_zero() {
            return f.write_str("0");
        }
        for (n, (idx, c)) in self.form.terms.iter().rev().enumerate() {
            if n > 0 {
                f.write_str(" + ")?;
            }
            let basis: Vec<String> = bits(*idx).map(|p| format!("d{}", self.chart.name(p))).collect();
            if basis.is_empty() {
                write!(f, "({c})")?;
            } else {
                write!(f, "({c}) {}", basis.join("^"))?;
            }
        }
        Ok(())
    }
}
