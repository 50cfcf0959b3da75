use std::collections::BTreeMap;

use crate::symexpr::{Chart, Expr};

use super::form::{bits, removal_sign, DiffForm, Index};
use super::GeometryError;

/// A vector field given by its components along the coordinate basis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VectorField(Vec<Expr>);

impl VectorField {
    pub fn new(components: Vec<Expr>) -> VectorField {
        VectorField(components)
    }

    pub fn zero(dim: usize) -> VectorField {
        VectorField(vec![Expr::zero(); dim])
    }

    /// `d/dx^p`.
    pub fn basis(dim: usize, p: usize) -> VectorField {
        let mut v = VectorField::zero(dim);
        v.0[p] = Expr::one();
        v
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn component(&self, p: usize) -> &Expr {
        &self.0[p]
    }

    pub fn components(&self) -> &[Expr] {
        &self.0
    }

    pub fn set(&mut self, p: usize, e: Expr) {
        self.0[p] = e;
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        VectorField(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, f: &Expr) -> VectorField {
        VectorField(self.0.iter().map(|a| a * f).collect())
    }

    /// Directional derivative `X(f)`.
    pub fn apply(&self, f: &Expr, chart: &Chart) -> Expr {
        let mut acc = Expr::zero();
        for (p, x) in self.0.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            let df = f.diff(&chart.coord(p));
            if !df.is_zero() {
                acc = &acc + &(x * &df);
            }
        }
        acc
    }

    /// Lie bracket `[X, Y]`.
    pub fn bracket(&self, other: &VectorField, chart: &Chart) -> VectorField {
        VectorField(
            (0..self.dim())
                .map(|p| &self.apply(&other.0[p], chart) - &other.apply(&self.0[p], chart))
                .collect(),
        )
    }

    pub fn map(&self, f: impl Fn(&Expr) -> Expr) -> VectorField {
        VectorField(self.0.iter().map(f).collect())
    }
}

/// A multivector field on a chart, stored by strictly increasing coordinate
/// multi-indices. May carry a decomposable witness: the ordered factors whose
/// wedge product equals it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiVector {
    dim: usize,
    degree: usize,
    terms: BTreeMap<Index, Expr>,
    witness: Option<Vec<VectorField>>,
}

impl MultiVector {
    pub fn zero(dim: usize, degree: usize) -> MultiVector {
        MultiVector {
            dim,
            degree,
            terms: BTreeMap::new(),
            witness: None,
        }
    }

    /// `X_1 ^ ... ^ X_k` with the factors kept as a witness.
    pub fn decomposable(factors: Vec<VectorField>) -> MultiVector {
        assert!(!factors.is_empty(), "empty wedge");
        let dim = factors[0].dim();
        let mut terms: BTreeMap<Index, Expr> = BTreeMap::new();
        terms.insert(0, Expr::one());
        for v in &factors {
            let mut next: BTreeMap<Index, Expr> = BTreeMap::new();
            for (idx, c) in &terms {
                for (p, vp) in v.components().iter().enumerate() {
                    let bit = 1u64 << p;
                    if idx & bit != 0 || vp.is_zero() {
                        continue;
                    }
                    // move d/dx^p left past the larger indices of `idx`
                    let above = (idx >> (p + 1)).count_ones();
                    let term = c * vp;
                    let term = if above % 2 == 0 { term } else { -term };
                    let slot = next.entry(idx | bit).or_default();
                    *slot = &*slot + &term;
                }
            }
            next.retain(|_, e| !e.is_zero());
            terms = next;
        }
        MultiVector {
            dim,
            degree: factors.len(),
            terms,
            witness: Some(factors),
        }
    }

    pub fn from_terms(dim: usize, degree: usize, terms: impl IntoIterator<Item = (Index, Expr)>) -> MultiVector {
        let mut out = MultiVector::zero(dim, degree);
        for (idx, e) in terms {
            assert_eq!(idx.count_ones() as usize, degree);
            if !e.is_zero() {
                let slot = out.terms.entry(idx).or_default();
                *slot = &*slot + &e;
            }
        }
        out.terms.retain(|_, e| !e.is_zero());
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn witness(&self) -> Option<&[VectorField]> {
        self.witness.as_deref()
    }

    pub fn coeff(&self, idx: Index) -> Expr {
        self.terms.get(&idx).cloned().unwrap_or_default()
    }

    pub fn terms(&self) -> impl Iterator<Item = (Index, &Expr)> {
        self.terms.iter().map(|(k, v)| (*k, v))
    }

    /// Multiply by a scalar. Scaling the first witness factor keeps the
    /// witness consistent.
    pub fn scale(&self, f: &Expr) -> MultiVector {
        let mut out = MultiVector::from_terms(self.dim, self.degree, self.terms.iter().map(|(k, v)| (*k, v * f)));
        out.witness = self.witness.as_ref().map(|w| {
            let mut w = w.clone();
            w[0] = w[0].scale(f);
            w
        });
        out
    }

    /// Whether the stored witness expands to the stored coefficients.
    pub fn witness_consistent(&self) -> bool {
        match &self.witness {
            None => true,
            Some(w) => MultiVector::decomposable(w.clone()).terms == self.terms,
        }
    }

    /// Interior product `i(X)a`: the factors of `X` fill the first slots of
    /// `a`, i.e. `(i(X_1 ^ ... ^ X_k) a)(V...) = a(X_1, ..., X_k, V...)`.
    pub fn contract(&self, a: &DiffForm) -> Result<DiffForm, GeometryError> {
        if self.degree > a.degree() {
            return Err(GeometryError::DegreeMismatch {
                expected: a.degree(),
                found: self.degree,
            });
        }
        let mut out = DiffForm::zero(a.dim(), a.degree() - self.degree);
        for (j, c) in &self.terms {
            let mut terms: Vec<(Index, Expr)> = Vec::new();
            for (idx, f) in a.terms() {
                if idx & j != *j {
                    continue;
                }
                let mut cur = idx;
                let mut sign = 1;
                for p in bits(*j) {
                    sign *= removal_sign(cur, p);
                    cur &= !(1u64 << p);
                }
                let t = f * c;
                terms.push((cur, if sign > 0 { t } else { -t }));
            }
            out = out.add(&DiffForm::from_terms(a.dim(), a.degree() - self.degree, terms));
        }
        Ok(out)
    }

    /// Interior product through the witness factors, `i(X_k) ... i(X_1) a`.
    pub fn contract_via_witness(&self, a: &DiffForm) -> Option<Result<DiffForm, GeometryError>> {
        let w = self.witness.as_ref()?;
        if w.len() > a.degree() {
            return Some(Err(GeometryError::DegreeMismatch {
                expected: a.degree(),
                found: w.len(),
            }));
        }
        let mut acc = a.clone();
        for v in w {
            acc = acc.contract_vector(v);
        }
        Some(Ok(acc))
    }
}
