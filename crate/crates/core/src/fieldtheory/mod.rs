//! Lagrangian and Hamiltonian systems on natural charts.
//!
//! A Lagrangian `L` on a first-jet chart `(x^a, y^A, v^A_a)` gives the
//! Poincare-Cartan forms
//!
//! ```text
//! Theta_L = dL/dv^A_a dy^A ^ d^{m-1}x_a + (L - v^A_a dL/dv^A_a) d^m x
//! Omega_L = -d Theta_L
//! ```
//!
//! with `d^{m-1}x_a = i(d/dx^a) d^m x`. A Hamiltonian `H` on a momentum chart
//! `(x^a, y^A, p^a_A)` gives
//! `Omega_h = -dp^a_A ^ dy^A ^ d^{m-1}x_a + dH ^ d^m x`.

mod affine;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::constraints::{
    run_constraint_algorithm, sample_points, AlgorithmOptions, AnalysisReport, ConstraintError, PremultisymplecticSystem,
    Provenance,
};
use crate::geometry::{CandidateSection, DiffForm, EhresmannConnection, GeometryError};
use crate::linsolve::{rational_rank, LinsolveError, Unknown};
use crate::symexpr::{Chart, ChartKind, Expr, Number, Poly};

pub use affine::{affine_analyze, AffineAnalysis, AffineLagrangian, AffineRoute};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldTheoryError {
    #[error("expected a {expected} chart")]
    WrongChart { expected: &'static str },
    #[error("section is not semi-holonomic: {0}")]
    NotSemiHolonomic(String),
    #[error("affine data: {0}")]
    Affine(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Linsolve(#[from] LinsolveError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
}

/// Number of points used for the sampled Hessian rank.
const RANK_SAMPLES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regularity {
    /// Full Hessian rank, symbolically and at every sample.
    Regular,
    /// Constant deficient rank at the samples. Whether the Legendre map is a
    /// submersion onto a closed image with connected fibres is not checked.
    AlmostRegularCandidate,
    /// The rank varies between samples.
    Degenerate,
    /// The Hessian involves opaque functions and cannot be evaluated.
    Undetermined,
}

impl Regularity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regularity::Regular => "regular",
            Regularity::AlmostRegularCandidate => "almost-regular-candidate",
            Regularity::Degenerate => "degenerate",
            Regularity::Undetermined => "undetermined",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegularityEvidence {
    pub full_rank: usize,
    /// Rank over the rational function field, when decidable.
    pub symbolic_rank: Option<usize>,
    pub sampled_ranks: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct LagrangianSystem {
    pub chart: Chart,
    pub lagrangian: Expr,
    pub theta: DiffForm,
    pub omega: DiffForm,
    /// `d^2 L / dv^A_a dv^B_b`, indexed by `A*m + a` and `B*m + b`.
    pub hessian: Vec<Vec<Expr>>,
    pub regularity: Regularity,
    pub evidence: RegularityEvidence,
}

impl LagrangianSystem {
    pub fn fields(&self) -> usize {
        self.chart.field_count()
    }

    /// The system handed to the constraint algorithm.
    pub fn premultisymplectic(&self) -> PremultisymplecticSystem {
        PremultisymplecticSystem::new(self.chart.clone(), self.omega.clone())
    }

    fn velocity(&self, a: usize, mu: usize) -> Expr {
        self.chart.x(self.chart.block_pos(a, mu))
    }

    /// Fibre index of `v^A_mu`, for addressing section coefficients.
    fn velocity_fibre_index(&self, a: usize, mu: usize) -> usize {
        self.chart.block_pos(a, mu) - self.chart.base_dim()
    }
}

fn require_jet(chart: &Chart) -> Result<(), FieldTheoryError> {
    match chart.kind() {
        ChartKind::FirstJet { .. } => Ok(()),
        _ => Err(FieldTheoryError::WrongChart { expected: "first-jet" }),
    }
}

fn require_momentum(chart: &Chart) -> Result<(), FieldTheoryError> {
    match chart.kind() {
        ChartKind::Momentum { .. } => Ok(()),
        _ => Err(FieldTheoryError::WrongChart { expected: "momentum" }),
    }
}

/// `dL/dv^A_a`, indexed `[A][a]`.
fn momenta(chart: &Chart, l: &Expr) -> Vec<Vec<Expr>> {
    let m = chart.base_dim();
    (0..chart.field_count())
        .map(|a| (0..m).map(|mu| l.diff(&chart.coord(chart.block_pos(a, mu)))).collect())
        .collect()
}

pub fn build_lagrangian_system(chart: &Chart, l: &Expr) -> Result<LagrangianSystem, FieldTheoryError> {
    build_lagrangian_system_seeded(chart, l, 0)
}

pub fn build_lagrangian_system_seeded(chart: &Chart, l: &Expr, seed: u64) -> Result<LagrangianSystem, FieldTheoryError> {
    require_jet(chart)?;
    let (m, n) = (chart.base_dim(), chart.field_count());
    let dim = chart.dim();
    let p = momenta(chart, l);
    let mut theta = DiffForm::zero(dim, m);
    let mut energy = l.clone();
    for a in 0..n {
        for mu in 0..m {
            let dy = DiffForm::dx(dim, chart.field_pos(a));
            theta = theta.add(&dy.wedge(&DiffForm::volume_minus(chart, mu))?.scale(&p[a][mu]));
            energy = &energy - &(&chart.x(chart.block_pos(a, mu)) * &p[a][mu]);
        }
    }
    theta = theta.add(&DiffForm::volume(chart).scale(&energy));
    let omega = theta.exterior_derivative(chart).neg();

    let hessian: Vec<Vec<Expr>> = (0..n * m)
        .map(|i| {
            (0..n * m)
                .map(|j| p[i / m][i % m].diff(&chart.coord(chart.block_pos(j / m, j % m))))
                .collect()
        })
        .collect();
    let evidence = hessian_evidence(chart, &hessian, seed);
    let regularity = classify(&evidence);
    Ok(LagrangianSystem {
        chart: chart.clone(),
        lagrangian: l.clone(),
        theta,
        omega,
        hessian,
        regularity,
        evidence,
    })
}

/// `Omega_L` assembled term by term from the second derivatives of `L`,
/// without going through `Theta_L`.
pub fn omega_by_expansion(chart: &Chart, l: &Expr) -> Result<DiffForm, FieldTheoryError> {
    require_jet(chart)?;
    let (m, n) = (chart.base_dim(), chart.field_count());
    let dim = chart.dim();
    let vol = DiffForm::volume(chart);
    let c = |pos: usize| chart.coord(pos);
    let mut out = DiffForm::zero(dim, m + 1);
    for a in 0..n {
        for al in 0..m {
            let lva = l.diff(&c(chart.block_pos(a, al)));
            let tail = DiffForm::dx(dim, chart.field_pos(a)).wedge(&DiffForm::volume_minus(chart, al))?;
            for b in 0..n {
                for nu in 0..m {
                    let h = lva.diff(&c(chart.block_pos(b, nu)));
                    if h.is_zero() {
                        continue;
                    }
                    let dv = DiffForm::dx(dim, chart.block_pos(b, nu));
                    out = out.sub(&dv.wedge(&tail)?.scale(&h));
                    let v = chart.x(chart.block_pos(a, al));
                    out = out.add(&dv.wedge(&vol)?.scale(&(&h * &v)));
                }
                let lyv = lva.diff(&c(chart.field_pos(b)));
                if !lyv.is_zero() {
                    let dy = DiffForm::dx(dim, chart.field_pos(b));
                    out = out.sub(&dy.wedge(&tail)?.scale(&lyv));
                }
            }
        }
    }
    for b in 0..n {
        let mut coeff = -l.diff(&c(chart.field_pos(b)));
        for al in 0..m {
            let lvb = l.diff(&c(chart.block_pos(b, al)));
            coeff = &coeff + &lvb.diff(&c(al));
            for a in 0..n {
                let lva = l.diff(&c(chart.block_pos(a, al)));
                coeff = &coeff + &(&lva.diff(&c(chart.field_pos(b))) * &chart.x(chart.block_pos(a, al)));
            }
        }
        out = out.add(&DiffForm::dx(dim, chart.field_pos(b)).wedge(&vol)?.scale(&coeff));
    }
    Ok(out)
}

fn hessian_evidence(chart: &Chart, hessian: &[Vec<Expr>], seed: u64) -> RegularityEvidence {
    let full_rank = hessian.len();
    let decidable = hessian.iter().flatten().all(|e| !e.has_atoms());
    if !decidable {
        return RegularityEvidence {
            full_rank,
            symbolic_rank: None,
            sampled_ranks: Vec::new(),
        };
    }
    let symbolic_rank = Some(expr_rank(hessian.to_vec()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = sample_points(chart, &[], RANK_SAMPLES, &mut rng).unwrap_or_default();
    let sampled_ranks = points
        .iter()
        .filter_map(|pt| {
            let rows: Option<Vec<Vec<_>>> = hessian
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|e| match e.eval_at(pt) {
                            Ok(Number::Rational(q)) => Some(q),
                            _ => None,
                        })
                        .collect()
                })
                .collect();
            rows.map(rational_rank)
        })
        .collect();
    RegularityEvidence {
        full_rank,
        symbolic_rank,
        sampled_ranks,
    }
}

fn classify(ev: &RegularityEvidence) -> Regularity {
    let Some(sym) = ev.symbolic_rank else {
        return Regularity::Undetermined;
    };
    let constant = ev.sampled_ranks.windows(2).all(|w| w[0] == w[1]);
    if !constant {
        return Regularity::Degenerate;
    }
    match ev.sampled_ranks.first() {
        Some(&r) if r == ev.full_rank && sym == ev.full_rank => Regularity::Regular,
        Some(&r) if r == sym => Regularity::AlmostRegularCandidate,
        None if sym == ev.full_rank => Regularity::Regular,
        None => Regularity::AlmostRegularCandidate,
        _ => Regularity::Degenerate,
    }
}

/// Rank over the field of rational functions, by Gaussian elimination.
pub fn expr_rank(rows: Vec<Vec<Expr>>) -> usize {
    row_echelon(rows).len()
}

/// Nonzero rows of a row echelon form.
fn row_echelon(mut rows: Vec<Vec<Expr>>) -> Vec<Vec<Expr>> {
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..cols {
        let Some(piv) = (rank..rows.len()).find(|&r| !rows[r][col].is_zero()) else {
            continue;
        };
        rows.swap(rank, piv);
        let inv = rows[rank][col].recip().expect("nonzero pivot");
        for r in rank + 1..rows.len() {
            if rows[r][col].is_zero() {
                continue;
            }
            let f = &rows[r][col] * &inv;
            for c in col..cols {
                let t = &rows[rank][c] * &f;
                rows[r][c] = &rows[r][c] - &t;
            }
        }
        rank += 1;
    }
    rows.truncate(rank);
    rows
}

/// Whether `i(V) form = 0` forces `V = 0` for vertical `V`, i.e. the
/// contractions with the vertical coordinate vectors are independent.
pub fn is_one_nondegenerate(form: &DiffForm, chart: &Chart) -> bool {
    if form.degree() == 0 {
        return false;
    }
    let images: Vec<DiffForm> = (chart.base_dim()..chart.dim()).map(|p| form.contract_basis(p)).collect();
    let mut keys: Vec<u64> = images.iter().flat_map(|f| f.terms().map(|(k, _)| k)).collect();
    keys.sort_unstable();
    keys.dedup();
    let rows = images
        .iter()
        .map(|f| keys.iter().map(|k| f.coeff(*k)).collect())
        .collect();
    keys.len() >= images.len() && expr_rank(rows) == images.len()
}

/// Kernel of the Hessian: directions in the velocity block along which the
/// Legendre map is constant to first order.
pub fn legendre_kernel(sys: &LagrangianSystem) -> Vec<Vec<Expr>> {
    let n = sys.hessian.len();
    let echelon = row_echelon(sys.hessian.clone());
    // pivot columns of the echelon form
    let pivots: Vec<usize> = echelon
        .iter()
        .map(|row| row.iter().position(|e| !e.is_zero()).expect("nonzero row"))
        .collect();
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![Expr::zero(); n];
            v[f] = Expr::one();
            for (i, row) in echelon.iter().enumerate().rev() {
                let pc = pivots[i];
                let s: Expr = (pc + 1..n).map(|c| &row[c] * &v[c]).sum();
                v[pc] = -(&s / &row[pc]);
            }
            v
        })
        .collect()
}

/// Coordinate expressions of the Legendre maps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LegendreMap {
    /// `p^a_A = dL/dv^A_a`, indexed `[A][a]`.
    pub momenta: Vec<Vec<Expr>>,
    /// The extra coordinate of the extended map, `p = L - v^A_a dL/dv^A_a`.
    pub extended_p: Expr,
    /// `v^A_a dL/dv^A_a - L`, the Hamiltonian pulled back to the jet chart.
    /// The Hamiltonian section sets `p = -H`, so this is `-extended_p`.
    pub energy: Expr,
}

pub fn legendre_map(sys: &LagrangianSystem) -> LegendreMap {
    let chart = &sys.chart;
    let p = momenta(chart, &sys.lagrangian);
    let mut energy = -sys.lagrangian.clone();
    for (a, row) in p.iter().enumerate() {
        for (mu, pa) in row.iter().enumerate() {
            energy = &energy + &(&sys.velocity(a, mu) * pa);
        }
    }
    LegendreMap {
        momenta: p,
        extended_p: -energy.clone(),
        energy,
    }
}

impl LegendreMap {
    /// One jet-chart expression per momentum-chart coordinate.
    pub fn coordinate_map(&self, jet: &Chart, momentum: &Chart) -> Vec<Expr> {
        (0..momentum.dim())
            .map(|pos| {
                if pos < momentum.base_dim() + momentum.field_count() {
                    jet.x(pos)
                } else {
                    let k = pos - momentum.base_dim() - momentum.field_count();
                    let m = momentum.base_dim();
                    self.momenta[k / m][k % m].clone()
                }
            })
            .collect()
    }

    /// Pull a form on the momentum chart back to the jet chart.
    pub fn pullback(&self, form: &DiffForm, jet: &Chart, momentum: &Chart) -> Result<DiffForm, FieldTheoryError> {
        require_jet(jet)?;
        require_momentum(momentum)?;
        if jet.base_dim() != momentum.base_dim() || jet.field_count() != momentum.field_count() {
            return Err(FieldTheoryError::WrongChart {
                expected: "momentum chart over the same base and fields",
            });
        }
        Ok(form.pullback(jet, &self.coordinate_map(jet, momentum)))
    }
}

#[derive(Clone, Debug)]
pub struct HamiltonianSystem {
    pub chart: Chart,
    pub hamiltonian: Expr,
    pub omega: DiffForm,
}

impl HamiltonianSystem {
    pub fn premultisymplectic(&self) -> PremultisymplecticSystem {
        PremultisymplecticSystem::new(self.chart.clone(), self.omega.clone())
    }
}

pub fn build_hamiltonian_system(chart: &Chart, h: &Expr) -> Result<HamiltonianSystem, FieldTheoryError> {
    require_momentum(chart)?;
    let (m, n, dim) = (chart.base_dim(), chart.field_count(), chart.dim());
    let mut omega = DiffForm::scalar(dim, h.clone())
        .exterior_derivative(chart)
        .wedge(&DiffForm::volume(chart))?;
    for a in 0..n {
        for mu in 0..m {
            let term = DiffForm::dx(dim, chart.block_pos(a, mu))
                .wedge(&DiffForm::dx(dim, chart.field_pos(a)))?
                .wedge(&DiffForm::volume_minus(chart, mu))?;
            omega = omega.sub(&term);
        }
    }
    Ok(HamiltonianSystem {
        chart: chart.clone(),
        hamiltonian: h.clone(),
        omega,
    })
}

/// Semi-holonomy defects `Gamma^{y^A}_a - v^A_a` of a section on a jet
/// chart, relative to the trivial connection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemiHolonomy {
    /// Indexed by `A*m + a`.
    pub defects: Vec<Expr>,
    /// The defects that do not vanish identically, as constraints.
    pub constraints: Vec<Expr>,
}

impl SemiHolonomy {
    pub fn is_semi_holonomic(&self) -> bool {
        self.constraints.is_empty()
    }
}

pub fn semi_holonomy(sys: &LagrangianSystem, h: &CandidateSection) -> SemiHolonomy {
    semi_holonomy_modulo(sys, h, &[])
}

/// Defects reduced modulo a constraint list.
pub fn semi_holonomy_modulo(sys: &LagrangianSystem, h: &CandidateSection, constraints: &[Poly]) -> SemiHolonomy {
    let m = sys.chart.base_dim();
    let mut defects = Vec::new();
    for a in 0..sys.fields() {
        for mu in 0..m {
            let d = h.gamma(a, mu) - &sys.velocity(a, mu);
            defects.push(d.reduce_modulo(constraints));
        }
    }
    let constraints = defects
        .iter()
        .filter(|d| !d.is_zero())
        .map(Expr::constraint_form)
        .collect();
    SemiHolonomy { defects, constraints }
}

/// Whether the solved system pins `Gamma^{y^A}_a = v^A_a` for every member
/// of the family in `report`.
pub fn semi_holonomy_forced(sys: &LagrangianSystem, report: &AnalysisReport) -> bool {
    let cons = report.constraint_polys();
    let sh = semi_holonomy_modulo(sys, &report.canonical_section(), &cons);
    let m = sys.chart.base_dim();
    let y_block = sys.fields() * m;
    sh.is_semi_holonomic()
        && report
            .family
            .nullspace
            .iter()
            .all(|v| v[..y_block].iter().all(|e| e.reduce_modulo(&cons).is_zero()))
}

/// Rerun the constraint algorithm with `Gamma^{y^A}_a` held at `v^A_a`.
/// Constraints that the unrestricted run `base` did not need are tagged as
/// semi-holonomy constraints.
pub fn semi_holonomic_run(
    sys: &LagrangianSystem,
    base: &AnalysisReport,
    opts: &AlgorithmOptions,
) -> Result<AnalysisReport, FieldTheoryError> {
    let m = sys.chart.base_dim();
    let mut opts = opts.clone();
    opts.frozen = (0..sys.fields())
        .flat_map(|a| (0..m).map(move |mu| (a, mu)))
        .map(|(a, mu)| (Unknown { a, mu }, sys.velocity(a, mu)))
        .collect();
    let mut report = run_constraint_algorithm(&sys.premultisymplectic(), &EhresmannConnection::trivial(&sys.chart), &opts)?;
    let base_polys = base.constraint_polys();
    for g in &mut report.generations {
        for c in &mut g.constraints {
            if !c.expr.reduce_modulo(&base_polys).is_zero() {
                c.provenance = Provenance::SemiHolonomy;
            }
        }
    }
    Ok(report)
}

/// The Euler-Lagrange residual per field,
/// `d2L/dx^a dv^A_a + d2L/dy^B dv^A_a v^B_a + d2L/dv^B_b dv^A_a Gamma^B_ab - dL/dy^A`,
/// with `Gamma^B_ab` the coefficient of `d/dv^B_b` in the `a`-th frame
/// field. The section must be semi-holonomic modulo `constraints`.
pub fn el_residual(
    sys: &LagrangianSystem,
    h: &CandidateSection,
    constraints: &[Poly],
) -> Result<Vec<Expr>, FieldTheoryError> {
    let sh = semi_holonomy_modulo(sys, h, constraints);
    if let Some(d) = sh.constraints.first() {
        return Err(FieldTheoryError::NotSemiHolonomic(format!("defect {d} does not vanish")));
    }
    let chart = &sys.chart;
    let (m, n) = (chart.base_dim(), sys.fields());
    let l = &sys.lagrangian;
    let p = momenta(chart, l);
    let mut out = Vec::with_capacity(n);
    for a in 0..n {
        let mut r = -l.diff(&chart.coord(chart.field_pos(a)));
        for al in 0..m {
            let pa = &p[a][al];
            r = &r + &pa.diff(&chart.coord(al));
            for b in 0..n {
                r = &r + &(&pa.diff(&chart.coord(chart.field_pos(b))) * &sys.velocity(b, al));
                for nu in 0..m {
                    let hess = pa.diff(&chart.coord(chart.block_pos(b, nu)));
                    if !hess.is_zero() {
                        r = &r + &(&hess * h.gamma(sys.velocity_fibre_index(b, nu), al));
                    }
                }
            }
        }
        out.push(r.reduce_modulo(constraints));
    }
    Ok(out)
}
