//! The affine-linear system for the vertical coefficients `Gamma^a_mu` of a
//! candidate section, and its exact solution over the field of rational
//! functions on the chart.
//!
//! A section `h` with `h(d/dx^mu) = D_mu + Gamma^a_mu d/du^a` solves the
//! field equations when `i(X) Omega` vanishes on every vertical vector,
//! `X = ^_mu h(d/dx^mu)`. When `Omega` has no term with three vertical
//! factors this is linear in `Gamma`:
//!
//! ```text
//! sum_{a,mu} Gamma^a_mu Omega(D_1, .., d/du^a (slot mu), .., D_m, d/du^b) = -gamma(d/du^b)
//! ```
//!
//! Tangency to a constraint `xi = 0` adds the rows
//! `sum_a Gamma^a_mu dxi/du^a = -D_mu(xi)`.

use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{DiffForm, EhresmannConnection, GeometryError};
use crate::symexpr::{Chart, Expr, Number, Poly, SymError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinsolveError {
    #[error("Omega has a term with three vertical factors ({0}, {1}, {2})")]
    AssumptionViolated(String, String, String),
    #[error("non-decidable coefficient: {0}")]
    NonDecidable(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl From<SymError> for LinsolveError {
    fn from(e: SymError) -> Self {
        match e {
            SymError::NonDecidable(s) => LinsolveError::NonDecidable(s),
            other => LinsolveError::NonDecidable(other.to_string()),
        }
    }
}

/// Where a row of the system comes from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RowOrigin {
    /// Test against the vertical coordinate vector at chart position `coord`.
    Vertical { coord: usize },
    /// Tangency to constraint number `constraint` along base direction `mu`.
    Tangency { constraint: usize, mu: usize },
}

/// The unknown `Gamma^a_mu`, with `a` indexing the fibre coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Unknown {
    pub a: usize,
    pub mu: usize,
}

impl Unknown {
    pub fn flat(&self, m: usize) -> usize {
        self.a * m + self.mu
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearProblem {
    base_dim: usize,
    fibre_dim: usize,
    /// Active columns, in `(a, mu)` order with `a` major.
    unknowns: Vec<Unknown>,
    frozen: Vec<(Unknown, Expr)>,
    matrix: Vec<Vec<Expr>>,
    rhs: Vec<Expr>,
    origins: Vec<RowOrigin>,
}

impl LinearProblem {
    /// A problem from explicit data over all `fibre_dim * base_dim` unknowns.
    pub fn new(
        base_dim: usize,
        fibre_dim: usize,
        matrix: Vec<Vec<Expr>>,
        rhs: Vec<Expr>,
        origins: Vec<RowOrigin>,
    ) -> LinearProblem {
        let n = base_dim * fibre_dim;
        assert!(matrix.iter().all(|r| r.len() == n), "row length must equal the unknown count");
        assert_eq!(matrix.len(), rhs.len());
        assert_eq!(matrix.len(), origins.len());
        LinearProblem {
            base_dim,
            fibre_dim,
            unknowns: all_unknowns(base_dim, fibre_dim),
            frozen: Vec::new(),
            matrix,
            rhs,
            origins,
        }
    }

    pub fn rows(&self) -> usize {
        self.matrix.len()
    }

    pub fn unknowns(&self) -> &[Unknown] {
        &self.unknowns
    }

    pub fn frozen(&self) -> &[(Unknown, Expr)] {
        &self.frozen
    }

    pub fn matrix(&self) -> &[Vec<Expr>] {
        &self.matrix
    }

    pub fn rhs(&self) -> &[Expr] {
        &self.rhs
    }

    pub fn origins(&self) -> &[RowOrigin] {
        &self.origins
    }

    pub fn entry(&self, row: usize, u: Unknown) -> Expr {
        match self.unknowns.iter().position(|&k| k == u) {
            Some(c) => self.matrix[row][c].clone(),
            None => Expr::zero(),
        }
    }

    /// Fix an unknown to a value, moving its column into the right-hand side.
    pub fn freeze(&mut self, u: Unknown, value: Expr) {
        let Some(c) = self.unknowns.iter().position(|&k| k == u) else {
            return;
        };
        for (row, b) in self.matrix.iter_mut().zip(self.rhs.iter_mut()) {
            let a = row.remove(c);
            if !a.is_zero() {
                *b = &*b - &(&a * &value);
            }
        }
        self.unknowns.remove(c);
        self.frozen.push((u, value));
    }

    /// Reduce every entry modulo an ordered constraint list.
    pub fn reduce_modulo(&self, constraints: &[Poly]) -> LinearProblem {
        let mut out = self.clone();
        for row in out.matrix.iter_mut() {
            for e in row.iter_mut() {
                *e = e.reduce_modulo(constraints);
            }
        }
        for b in out.rhs.iter_mut() {
            *b = b.reduce_modulo(constraints);
        }
        out
    }

    /// `A v - b` for a vector over the active unknowns.
    pub fn residual(&self, v: &[Expr]) -> Vec<Expr> {
        self.matrix
            .iter()
            .zip(&self.rhs)
            .map(|(row, b)| &dot(row, v) - b)
            .collect()
    }

    /// Restrict a full-length `Gamma` vector to the active unknowns.
    pub fn active_part(&self, full: &[Expr]) -> Vec<Expr> {
        self.unknowns.iter().map(|u| full[u.flat(self.base_dim)].clone()).collect()
    }

    fn expand(&self, active: &[Expr], with_frozen: bool) -> Vec<Expr> {
        let mut full = vec![Expr::zero(); self.base_dim * self.fibre_dim];
        for (u, v) in self.unknowns.iter().zip(active) {
            full[u.flat(self.base_dim)] = v.clone();
        }
        if with_frozen {
            for (u, v) in &self.frozen {
                full[u.flat(self.base_dim)] = v.clone();
            }
        }
        full
    }
}

fn all_unknowns(m: usize, nf: usize) -> Vec<Unknown> {
    (0..nf).flat_map(|a| (0..m).map(move |mu| Unknown { a, mu })).collect()
}

fn dot(a: &[Expr], b: &[Expr]) -> Expr {
    a.iter()
        .zip(b)
        .filter(|(x, y)| !x.is_zero() && !y.is_zero())
        .map(|(x, y)| x * y)
        .sum()
}

/// Assemble the system for `Omega` relative to `conn`, with `gamma` the
/// contraction of `Omega` by the horizontal m-vector, plus tangency rows for
/// each constraint.
pub fn assemble(
    omega: &DiffForm,
    conn: &EhresmannConnection,
    gamma: &DiffForm,
    tangency: &[Expr],
    chart: &Chart,
) -> Result<LinearProblem, LinsolveError> {
    if let Some([p, q, r]) = omega.triple_vertical(chart) {
        return Err(LinsolveError::AssumptionViolated(
            chart.name(p).into(),
            chart.name(q).into(),
            chart.name(r).into(),
        ));
    }
    let m = chart.base_dim();
    let nf = chart.fibre_dim();
    let frame = conn.horizontal_frame(chart);
    let mut matrix = Vec::new();
    let mut rhs = Vec::new();
    let mut origins = Vec::new();

    // slots[a * m + mu] = i(D_1, .., d/du^a at slot mu, .., D_m) Omega
    let mut slots = Vec::with_capacity(nf * m);
    for a in 0..nf {
        for mu in 0..m {
            let mut f = omega.clone();
            for (k, d) in frame.iter().enumerate() {
                f = if k == mu {
                    f.contract_basis(chart.fibre_pos(a))
                } else {
                    f.contract_vector(d)
                };
            }
            slots.push(f);
        }
    }
    for b in 0..nf {
        let bit = 1u64 << chart.fibre_pos(b);
        matrix.push(slots.iter().map(|f| f.coeff(bit)).collect());
        rhs.push(-gamma.coeff(bit));
        origins.push(RowOrigin::Vertical { coord: chart.fibre_pos(b) });
    }
    for (k, xi) in tangency.iter().enumerate() {
        for mu in 0..m {
            let mut row = vec![Expr::zero(); nf * m];
            for (a, slot) in (0..nf).map(|a| (a, a * m + mu)) {
                row[slot] = xi.diff(&chart.coord(chart.fibre_pos(a)));
            }
            matrix.push(row);
            rhs.push(-frame[mu].apply(xi, chart));
            origins.push(RowOrigin::Tangency { constraint: k, mu });
        }
    }
    Ok(LinearProblem::new(m, nf, matrix, rhs, origins))
}

/// A consistency condition: a left-nullspace covector and its pairing with
/// the right-hand side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Condition {
    pub covector: Vec<Expr>,
    pub value: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolutionFamily {
    /// Particular solution over all `(a, mu)`, free parameters zero and
    /// frozen unknowns at their fixed values.
    pub particular: Vec<Expr>,
    /// Nullspace basis over all `(a, mu)`; frozen slots are zero.
    pub nullspace: Vec<Vec<Expr>>,
    /// Nonzero pairings `l . b` that must vanish for solvability.
    pub conditions: Vec<Condition>,
    /// Every left-nullspace covector found, including those with zero pairing.
    pub covectors: Vec<Vec<Expr>>,
    pub rank: usize,
    /// Pivot columns as unknowns.
    pub pivots: Vec<Unknown>,
    /// Non-constant pivots: the rank may drop where these vanish.
    pub stratification: Vec<Expr>,
    /// The row operations applied, one row per original row.
    pub transform: Vec<Vec<Expr>>,
}

impl SolutionFamily {
    pub fn is_solvable(&self) -> bool {
        self.conditions.is_empty()
    }
}

pub fn solve(p: &LinearProblem) -> Result<SolutionFamily, LinsolveError> {
    solve_modulo(p, &[])
}

/// Solve with every intermediate entry reduced modulo `constraints`.
///
/// Rows are first cleared of denominators; elimination then runs
/// fraction-free over polynomials, dividing by the previous pivot whenever
/// that division is exact (always, when no constraints are given).
pub fn solve_modulo(p: &LinearProblem, constraints: &[Poly]) -> Result<SolutionFamily, LinsolveError> {
    for e in p.matrix.iter().flatten().chain(&p.rhs) {
        e.require_decidable()?;
    }
    let rows = p.rows();
    let n = p.unknowns.len();
    let reduce = |q: Poly| if constraints.is_empty() { q } else { q.reduce(constraints) };

    // augmented [A | b | I] with each row scaled to polynomial entries
    let mut aug: Vec<Vec<Poly>> = Vec::with_capacity(rows);
    for i in 0..rows {
        let entries: Vec<&Expr> = p.matrix[i].iter().chain(std::iter::once(&p.rhs[i])).collect();
        let mut den = Poly::one();
        for e in &entries {
            if !e.is_polynomial() {
                let g = den.gcd(e.denom());
                den = den.mul(&e.denom().exact_div(&g).expect("gcd divides"));
            }
        }
        let mut r: Vec<Poly> = entries
            .iter()
            .map(|e| {
                let scale = den.exact_div(e.denom()).expect("denominator divides the lcm");
                reduce(e.numer().mul(&scale))
            })
            .collect();
        r.extend((0..rows).map(|j| if i == j { den.clone() } else { Poly::zero() }));
        aug.push(r);
    }
    let width = n + 1 + rows;

    let mut pivot_rows: Vec<(usize, usize)> = Vec::new();
    let mut used = vec![false; rows];
    let mut prev = Poly::one();
    let mut stratification: Vec<Expr> = Vec::new();
    for col in 0..n {
        let Some(r) = (0..rows).find(|&r| !used[r] && !aug[r][col].is_zero()) else {
            continue;
        };
        used[r] = true;
        let piv = aug[r][col].clone();
        if !piv.is_constant() {
            let s = Expr::from_poly(piv.clone()).constraint_form();
            if !stratification.contains(&s) {
                stratification.push(s);
            }
        }
        for i in 0..rows {
            if used[i] {
                continue;
            }
            let f = aug[i][col].clone();
            let mut next: Vec<Poly> = (0..width)
                .map(|j| {
                    let t = piv.mul(&aug[i][j]);
                    reduce(if f.is_zero() { t } else { t.sub(&f.mul(&aug[r][j])) })
                })
                .collect();
            if !prev.is_one() {
                if let Some(q) = next.iter().map(|t| t.exact_div(&prev)).collect::<Option<Vec<_>>>() {
                    next = q;
                }
            }
            aug[i] = next;
        }
        prev = piv;
        pivot_rows.push((r, col));
    }

    // back substitution over a common denominator:
    // x_j = num[j] / den for every column solved so far
    let solve_with = |rhs_col: Option<usize>, free: Option<usize>| -> Vec<Expr> {
        let mut num = vec![Poly::zero(); n];
        let mut den = Poly::one();
        if let Some(f) = free {
            num[f] = Poly::one();
        }
        for &(r, c) in pivot_rows.iter().rev() {
            let mut acc = match rhs_col {
                Some(k) => aug[r][k].mul(&den),
                None => Poly::zero(),
            };
            for j in c + 1..n {
                if !aug[r][j].is_zero() && !num[j].is_zero() {
                    acc = acc.sub(&aug[r][j].mul(&num[j]));
                }
            }
            let a = &aug[r][c];
            for x in num.iter_mut() {
                if !x.is_zero() {
                    *x = x.mul(a);
                }
            }
            num[c] = reduce(acc);
            den = den.mul(a);
        }
        // without reduction the last pivot is a common denominator
        let last = pivot_rows.last().map_or_else(Poly::one, |&(r, c)| aug[r][c].clone());
        num.into_iter()
            .map(|x| {
                let e = match x.mul(&last).exact_div(&den) {
                    Some(q) => Expr::fraction(q, last.clone()),
                    None => Expr::fraction(x, den.clone()),
                };
                e.expect("pivots are nonzero").reduce_modulo(constraints)
            })
            .collect()
    };
    let particular = solve_with(Some(n), None);
    let pivot_cols: Vec<usize> = pivot_rows.iter().map(|&(_, c)| c).collect();
    let nullspace: Vec<Vec<Expr>> = (0..n)
        .filter(|c| !pivot_cols.contains(c))
        .map(|c| p.expand(&solve_with(None, Some(c)), false))
        .collect();

    let mut conditions = Vec::new();
    let mut covectors = Vec::new();
    for (r, row) in aug.iter().enumerate() {
        if used[r] {
            continue;
        }
        let covector: Vec<Expr> = row[n + 1..].iter().cloned().map(Expr::from_poly).collect();
        let value = Expr::from_poly(row[n].clone());
        if !value.is_zero() {
            conditions.push(Condition {
                covector: covector.clone(),
                value,
            });
        }
        covectors.push(covector);
    }
    Ok(SolutionFamily {
        particular: p.expand(&particular, true),
        nullspace,
        conditions,
        covectors,
        rank: pivot_rows.len(),
        pivots: pivot_cols.iter().map(|&c| p.unknowns[c]).collect(),
        stratification,
        transform: aug
            .iter()
            .map(|r| r[n + 1..].iter().cloned().map(Expr::from_poly).collect())
            .collect(),
    })
}

/// Basis of covectors `l` with `l . A = 0`.
pub fn orth_complement(p: &LinearProblem) -> Result<Vec<Vec<Expr>>, LinsolveError> {
    Ok(solve(p)?.covectors)
}

/// Rank of the matrix at a point given by chart position. `None` when an
/// entry has a pole there.
pub fn rank_at(p: &LinearProblem, point: &[Number]) -> Option<usize> {
    let vals: Option<Vec<Vec<Number>>> = p
        .matrix
        .iter()
        .map(|r| r.iter().map(|e| e.eval_at(point).ok()).collect())
        .collect();
    let vals = vals?;
    if vals.iter().flatten().all(|v| matches!(v, Number::Rational(_))) {
        let m: Vec<Vec<BigRational>> = vals
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|v| match v {
                        Number::Rational(q) => q,
                        Number::Float(_) => unreachable!(),
                    })
                    .collect()
            })
            .collect();
        Some(rational_rank(m))
    } else {
        Some(float_rank(vals.iter().map(|r| r.iter().map(Number::to_f64).collect()).collect()))
    }
}

pub fn rational_rank(mut m: Vec<Vec<BigRational>>) -> usize {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(r) = (rank..rows).find(|&r| !m[r][c].is_zero()) else {
            continue;
        };
        m.swap(rank, r);
        for i in rank + 1..rows {
            if m[i][c].is_zero() {
                continue;
            }
            let f = &m[i][c] / &m[rank][c];
            for j in c..cols {
                let t = &f * &m[rank][j];
                m[i][j] -= t;
            }
        }
        rank += 1;
    }
    rank
}

fn float_rank(mut m: Vec<Vec<f64>>) -> usize {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let scale = m.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
    let tol = 1e-9 * scale;
    let mut rank = 0;
    for c in 0..cols {
        let Some(r) = (rank..rows).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())) else {
            break;
        };
        if m[r][c].abs() <= tol {
            continue;
        }
        m.swap(rank, r);
        for i in rank + 1..rows {
            let f = m[i][c] / m[rank][c];
            for j in c..cols {
                m[i][j] -= f * m[rank][j];
            }
        }
        rank += 1;
    }
    rank
}
