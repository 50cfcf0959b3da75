//! Lagrangians affine in the velocities, `L = a + f^mu_B v^B_mu`, induced by
//! the `m`-form `alpha = a d^m x + f^mu_B dy^B ^ d^{m-1}x_mu` on the
//! configuration bundle.

use crate::constraints::{
    run_constraint_algorithm, zeta_components, AlgorithmOptions, AnalysisReport, PremultisymplecticSystem, Zeta,
};
use crate::geometry::{split_omega, CandidateSection, DiffForm, EhresmannConnection};
use crate::linsolve::{assemble, solve, LinearProblem, RowOrigin, SolutionFamily};
use crate::symexpr::{Chart, ChartKind, Coord, Expr};

use super::FieldTheoryError;

#[derive(Clone, Debug)]
pub struct AffineLagrangian {
    chart: Chart,
    a: Expr,
    /// `f[mu][B]`.
    f: Vec<Vec<Expr>>,
}

impl AffineLagrangian {
    /// `chart` is the configuration chart `(x^mu, y^A)`.
    pub fn new(chart: &Chart, a: Expr, f: Vec<Vec<Expr>>) -> Result<AffineLagrangian, FieldTheoryError> {
        if !matches!(chart.kind(), ChartKind::Plain) {
            return Err(FieldTheoryError::WrongChart { expected: "plain" });
        }
        let (m, n) = (chart.base_dim(), chart.fibre_dim());
        if f.len() != m || f.iter().any(|row| row.len() != n) {
            return Err(FieldTheoryError::Affine(format!("expected {m} x {n} coefficients f^mu_B")));
        }
        Ok(AffineLagrangian {
            chart: chart.clone(),
            a,
            f,
        })
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn a(&self) -> &Expr {
        &self.a
    }

    pub fn f(&self, mu: usize, b: usize) -> &Expr {
        &self.f[mu][b]
    }

    fn y(&self, a: usize) -> Coord {
        self.chart.coord(self.chart.fibre_pos(a))
    }

    /// `f^mu_{AB} = df^mu_B/dy^A - df^mu_A/dy^B`, indexed `[mu][A][B]`.
    pub fn blocks(&self) -> Vec<Vec<Vec<Expr>>> {
        let n = self.chart.fibre_dim();
        self.f
            .iter()
            .map(|fmu| {
                (0..n)
                    .map(|a| (0..n).map(|b| &fmu[b].diff(&self.y(a)) - &fmu[a].diff(&self.y(b))).collect())
                    .collect()
            })
            .collect()
    }

    pub fn alpha(&self) -> DiffForm {
        let dim = self.chart.dim();
        let mut out = DiffForm::volume(&self.chart).scale(&self.a);
        for (mu, fmu) in self.f.iter().enumerate() {
            let tail = DiffForm::volume_minus(&self.chart, mu);
            for (b, fb) in fmu.iter().enumerate() {
                let term = DiffForm::dx(dim, self.chart.fibre_pos(b))
                    .wedge(&tail)
                    .expect("degree m");
                out = out.add(&term.scale(fb));
            }
        }
        out
    }

    /// `-d alpha`.
    pub fn omega(&self) -> DiffForm {
        self.alpha().exterior_derivative(&self.chart).neg()
    }

    /// The first-jet chart over the same coordinates.
    pub fn jet_chart(&self) -> Chart {
        let base: Vec<&str> = self.chart.base_names().collect();
        let fibre: Vec<&str> = self.chart.fibre_names().collect();
        Chart::first_jet(&base, &fibre).expect("names already validated")
    }

    /// `L = a + f^mu_B v^B_mu` on `jet_chart()`. Base and field coordinates
    /// keep their positions, so the coefficients carry over unchanged.
    pub fn lagrangian(&self) -> Expr {
        let jet = self.jet_chart();
        let mut l = self.a.clone();
        for (mu, fmu) in self.f.iter().enumerate() {
            for (b, fb) in fmu.iter().enumerate() {
                l = &l + &(fb * &jet.x(jet.block_pos(b, mu)));
            }
        }
        l
    }

    /// `alpha` pulled back along the jet projection.
    pub fn alpha_on_jet(&self) -> DiffForm {
        let jet = self.jet_chart();
        let map: Vec<Expr> = (0..self.chart.dim()).map(|p| jet.x(p)).collect();
        self.alpha().pullback(&jet, &map)
    }

    /// The system `(df^mu_A/dy^B - df^mu_B/dy^A) F^B_mu = da/dy^A - df^nu_A/dx^nu`
    /// over the unknowns `F^B_mu`.
    pub fn direct_system(&self) -> LinearProblem {
        let (m, n) = (self.chart.base_dim(), self.chart.fibre_dim());
        let blocks = self.blocks();
        let mut matrix = Vec::with_capacity(n);
        let mut rhs = Vec::with_capacity(n);
        for a in 0..n {
            let mut row = vec![Expr::zero(); n * m];
            for b in 0..n {
                for mu in 0..m {
                    row[b * m + mu] = -blocks[mu][a][b].clone();
                }
            }
            matrix.push(row);
            let mut r = self.a.diff(&self.y(a));
            for nu in 0..m {
                r = &r - &self.f[nu][a].diff(&self.chart.coord(nu));
            }
            rhs.push(r);
        }
        let origins = (0..n)
            .map(|a| RowOrigin::Vertical {
                coord: self.chart.fibre_pos(a),
            })
            .collect();
        LinearProblem::new(m, n, matrix, rhs, origins)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AffineRoute {
    /// Full rank with constant pivots: the family is read off directly.
    ClosedForm,
    /// Singular blocks: the general constraint algorithm was run.
    Engine,
}

#[derive(Clone, Debug)]
pub struct AffineAnalysis {
    pub problem: LinearProblem,
    /// `f^mu_{AB}`, indexed `[mu][A][B]`.
    pub blocks: Vec<Vec<Vec<Expr>>>,
    /// Whether each `f^mu_{AB}` block is invertible over the function field.
    pub block_regular: Vec<bool>,
    /// Rank `n` with constant pivots.
    pub nondegenerate: bool,
    pub route: AffineRoute,
    pub family: SolutionFamily,
    /// Dimension of the solution family, `n(m-1)` when nondegenerate.
    pub dimension: usize,
    pub report: Option<AnalysisReport>,
    /// The representative with free parameters zero.
    pub section: CandidateSection,
    pub zeta: Vec<Zeta>,
    /// Whether the direct rows match the generic assembly up to a factor
    /// per row.
    pub engine_agrees: bool,
}

pub fn affine_analyze(aff: &AffineLagrangian, opts: &AlgorithmOptions) -> Result<AffineAnalysis, FieldTheoryError> {
    let chart = &aff.chart;
    let n = chart.fibre_dim();
    let problem = aff.direct_system();
    let blocks = aff.blocks();
    let block_regular = blocks.iter().map(|b| super::expr_rank(b.clone()) == n).collect();
    let direct = solve(&problem)?;
    let nondegenerate = direct.rank == n && direct.stratification.is_empty();

    let conn = EhresmannConnection::trivial(chart);
    let omega = aff.omega();
    let split = split_omega(&omega, &conn, &DiffForm::volume(chart), chart)?;
    let generic = assemble(&omega, &conn, &split.gamma, &[], chart)?;
    let engine_agrees = rows_agree_up_to_scaling(&problem, &generic);

    let (route, family, report) = if nondegenerate {
        (AffineRoute::ClosedForm, direct, None)
    } else {
        let sys = PremultisymplecticSystem::new(chart.clone(), omega);
        let report = run_constraint_algorithm(&sys, &conn, opts)?;
        (AffineRoute::Engine, report.family.clone(), Some(report))
    };
    let section = CandidateSection::from_flat(chart, &family.particular);
    let zeta = zeta_components(chart, &conn, &section);
    Ok(AffineAnalysis {
        problem,
        blocks,
        block_regular,
        nondegenerate,
        route,
        dimension: family.nullspace.len(),
        family,
        report,
        section,
        zeta,
        engine_agrees,
    })
}

/// Each row of `a`, with its right-hand side, is a multiple of the
/// corresponding row of `b` by a single nonzero factor.
fn rows_agree_up_to_scaling(a: &LinearProblem, b: &LinearProblem) -> bool {
    if a.rows() != b.rows() {
        return false;
    }
    (0..a.rows()).all(|r| {
        let ra: Vec<&Expr> = a.matrix()[r].iter().chain(std::iter::once(&a.rhs()[r])).collect();
        let rb: Vec<&Expr> = b.matrix()[r].iter().chain(std::iter::once(&b.rhs()[r])).collect();
        let Some(k) = ra.iter().position(|e| !e.is_zero()) else {
            return rb.iter().all(|e| e.is_zero());
        };
        if rb[k].is_zero() {
            return false;
        }
        let s = rb[k] / ra[k];
        ra.iter().zip(&rb).all(|(x, y)| (&(*x * &s) - *y).is_zero())
    })
}
