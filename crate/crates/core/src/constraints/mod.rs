//! The constraint algorithm and the integrability algorithm.
//!
//! Generation 1 collects the consistency conditions of the linear system for
//! `Gamma`. Each later generation adds tangency rows for every constraint
//! found so far and collects the new conditions, until a pass adds nothing.
//! A candidate counts as new when it survives reduction by the earlier
//! constraints and does not vanish at every sampled point of their zero set.

mod sample;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{split_omega, CandidateSection, DiffForm, EhresmannConnection, GeometryError, Splitting};
use crate::linsolve::{assemble, rank_at, solve_modulo, LinearProblem, LinsolveError, SolutionFamily, Unknown};
use crate::symexpr::{Chart, Expr, Number, Poly};

pub use sample::{sample_points, vanishes, SamplingFailed};

pub const DEFAULT_MAX_GENERATIONS: usize = 16;
pub const DEFAULT_SAMPLES: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConstraintError {
    #[error(transparent)]
    Linsolve(#[from] LinsolveError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("integrability requires a final constraint set (status: {0:?})")]
    NotFinal(Status),
}

/// An `(m+1)`-form `Omega` and the volume `m`-form on a chart.
#[derive(Clone, Debug)]
pub struct PremultisymplecticSystem {
    pub chart: Chart,
    pub omega: DiffForm,
    pub volume: DiffForm,
}

impl PremultisymplecticSystem {
    pub fn new(chart: Chart, omega: DiffForm) -> PremultisymplecticSystem {
        let volume = DiffForm::volume(&chart);
        PremultisymplecticSystem { chart, omega, volume }
    }
}

#[derive(Clone, Debug)]
pub struct AlgorithmOptions {
    pub max_generations: usize,
    pub seed: u64,
    pub samples: usize,
    /// Unknowns held at fixed values instead of solved for.
    pub frozen: Vec<(Unknown, Expr)>,
}

impl Default for AlgorithmOptions {
    fn default() -> Self {
        AlgorithmOptions {
            max_generations: DEFAULT_MAX_GENERATIONS,
            seed: 0,
            samples: DEFAULT_SAMPLES,
            frozen: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Pairing of a left-nullspace covector with the right-hand side.
    Consistency,
    /// Consistency condition of a tangency row.
    Tangency,
    /// Vertical component of a bracket of the solution frame.
    Involutivity,
    /// A semi-holonomy defect that the solved system leaves free.
    SemiHolonomy,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Consistency => "consistency",
            Provenance::Tangency => "tangency",
            Provenance::Involutivity => "involutivity",
            Provenance::SemiHolonomy => "semi-holonomy",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub expr: Expr,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintGeneration {
    pub index: usize,
    pub constraints: Vec<Constraint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    FinalSubmanifoldFound,
    NoSolution,
    IterationLimit,
    StratificationAmbiguous,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::FinalSubmanifoldFound => "final-submanifold-found",
            Status::NoSolution => "no-solution",
            Status::IterationLimit => "iteration-limit",
            Status::StratificationAmbiguous => "stratification-ambiguous",
        }
    }
}

#[derive(Clone, Debug)]
pub struct AnalysisReport {
    pub chart: Chart,
    pub connection: EhresmannConnection,
    pub splitting: Splitting,
    /// Generations that produced at least one constraint.
    pub generations: Vec<ConstraintGeneration>,
    /// Passes of the assemble and solve loop, including the final one.
    pub passes: usize,
    pub status: Status,
    /// The system of the last pass and its solution family.
    pub problem: LinearProblem,
    pub family: SolutionFamily,
    pub warnings: Vec<String>,
    /// Points of the final constraint set used for the spot checks.
    pub samples: Vec<Vec<Number>>,
    pub integrability: Option<IntegrabilityReport>,
}

impl AnalysisReport {
    pub fn constraints(&self) -> Vec<&Expr> {
        self.generations
            .iter()
            .flat_map(|g| g.constraints.iter().map(|c| &c.expr))
            .collect()
    }

    pub fn constraint_polys(&self) -> Vec<Poly> {
        self.constraints().into_iter().map(|e| e.numer().clone()).collect()
    }

    /// The canonical representative: free parameters zero.
    pub fn canonical_section(&self) -> CandidateSection {
        CandidateSection::from_flat(&self.chart, &self.family.particular)
    }
}

/// Tracks an accumulated constraint list and sample points of its zero set.
struct Accumulator<'a> {
    chart: &'a Chart,
    polys: Vec<Poly>,
    samples: Vec<Vec<Number>>,
    rng: ChaCha8Rng,
    count: usize,
    sampling_failed: bool,
}

enum Candidate {
    Dependent,
    Inconsistent,
    New(Expr),
}

impl<'a> Accumulator<'a> {
    fn new(chart: &'a Chart, polys: Vec<Poly>, seed: u64, count: usize) -> Accumulator<'a> {
        let mut acc = Accumulator {
            chart,
            polys,
            samples: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            count,
            sampling_failed: false,
        };
        acc.resample();
        acc
    }

    fn resample(&mut self) {
        match sample_points(self.chart, &self.polys, self.count, &mut self.rng) {
            Ok(p) => {
                self.samples = p;
                self.sampling_failed = false;
            }
            Err(SamplingFailed) => {
                self.samples.clear();
                self.sampling_failed = true;
            }
        }
    }

    fn classify(&self, e: &Expr) -> Candidate {
        let r = e.reduce_modulo(&self.polys);
        if r.is_zero() {
            return Candidate::Dependent;
        }
        let c = r.constraint_form();
        if c.is_constant() {
            return Candidate::Inconsistent;
        }
        if !self.samples.is_empty() && self.samples.iter().all(|p| vanishes(&c, p)) {
            return Candidate::Dependent;
        }
        Candidate::New(c)
    }

    fn accept(&mut self, c: Expr) {
        self.polys.push(c.numer().clone());
        self.resample();
    }
}

/// Outcome of feeding candidates to the accumulator.
enum Step {
    Added(Vec<Expr>),
    Inconsistent,
}

fn absorb(acc: &mut Accumulator, candidates: impl IntoIterator<Item = Expr>) -> Step {
    let mut added = Vec::new();
    for e in candidates {
        match acc.classify(&e) {
            Candidate::Dependent => {}
            Candidate::Inconsistent => return Step::Inconsistent,
            Candidate::New(c) => {
                acc.accept(c.clone());
                added.push(c);
            }
        }
    }
    Step::Added(added)
}

pub fn run_constraint_algorithm(
    system: &PremultisymplecticSystem,
    conn: &EhresmannConnection,
    opts: &AlgorithmOptions,
) -> Result<AnalysisReport, ConstraintError> {
    let chart = &system.chart;
    let splitting = split_omega(&system.omega, conn, &system.volume, chart)?;
    let max_constraints = chart.dim() - chart.base_dim() + 1;
    let mut acc = Accumulator::new(chart, Vec::new(), opts.seed, opts.samples.max(1));
    let mut constraints: Vec<Expr> = Vec::new();
    let mut generations = Vec::new();
    let mut warnings = Vec::new();
    let mut passes = 0;

    let status = loop {
        passes += 1;
        let mut problem = assemble(&system.omega, conn, &splitting.gamma, &constraints, chart)?;
        for (u, v) in &opts.frozen {
            problem.freeze(*u, v.clone());
        }
        let family = solve_modulo(&problem, &acc.polys)?;
        let provenance = if passes == 1 {
            Provenance::Consistency
        } else {
            Provenance::Tangency
        };
        let step = absorb(&mut acc, family.conditions.iter().map(|c| c.value.clone()));
        let added = match step {
            Step::Inconsistent => {
                warnings.push(format!("pass {passes}: a consistency condition is a nonzero constant"));
                break finish(Status::NoSolution, problem, family);
            }
            Step::Added(a) => a,
        };
        if !added.is_empty() {
            constraints.extend(added.iter().cloned());
            generations.push(generation(generations.len() + 1, &added, provenance));
            if constraints.len() >= max_constraints {
                warnings.push(format!(
                    "{} independent constraints leave dimension at most {}",
                    constraints.len(),
                    chart.base_dim() - 1
                ));
                break finish(Status::NoSolution, problem, family);
            }
        }
        if acc.sampling_failed {
            warnings.push(format!("pass {passes}: no points found on the constraint set"));
            break finish(Status::StratificationAmbiguous, problem, family);
        }
        if added.is_empty() {
            let ambiguous = rank_warnings(&problem, &family, &acc.samples, &mut warnings);
            let status = if ambiguous {
                Status::StratificationAmbiguous
            } else {
                Status::FinalSubmanifoldFound
            };
            break finish(status, problem, family);
        }
        if passes >= opts.max_generations {
            break finish(Status::IterationLimit, problem, family);
        }
    };
    let (status, problem, family) = status;
    for s in &family.stratification {
        warnings.push(format!("pivot {s} is not constant; the rank may drop where it vanishes"));
    }
    Ok(AnalysisReport {
        chart: chart.clone(),
        connection: conn.clone(),
        splitting,
        generations,
        passes,
        status,
        problem,
        family,
        warnings,
        samples: acc.samples,
        integrability: None,
    })
}

fn finish(s: Status, p: LinearProblem, f: SolutionFamily) -> (Status, LinearProblem, SolutionFamily) {
    (s, p, f)
}

fn generation(index: usize, added: &[Expr], provenance: Provenance) -> ConstraintGeneration {
    ConstraintGeneration {
        index,
        constraints: added
            .iter()
            .map(|e| Constraint {
                expr: e.clone(),
                provenance,
            })
            .collect(),
    }
}

/// Compare the generic rank with the rank at the sample points. Returns true
/// when every sample disagrees, which means the elimination over the
/// function field does not describe the constraint set.
fn rank_warnings(p: &LinearProblem, f: &SolutionFamily, samples: &[Vec<Number>], warnings: &mut Vec<String>) -> bool {
    let mut disagree = 0;
    let mut checked = 0;
    for pt in samples {
        if let Some(r) = rank_at(p, pt) {
            checked += 1;
            if r != f.rank {
                disagree += 1;
            }
        }
    }
    if disagree > 0 {
        warnings.push(format!(
            "generic rank {} differs from the sampled rank at {disagree} of {checked} points",
            f.rank
        ));
    }
    checked > 0 && disagree == checked
}

/// A vertical bracket component `zeta^a_{mu nu}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Zeta {
    pub a: usize,
    pub mu: usize,
    pub nu: usize,
    pub expr: Expr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegrabilityStatus {
    /// Every bracket vanishes on the final constraint set.
    Integrable,
    /// Integrable on a smaller set cut out by the extra constraints.
    Constrained,
    NoSolution,
    IterationLimit,
    StratificationAmbiguous,
}

impl IntegrabilityStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            IntegrabilityStatus::Integrable => "integrable",
            IntegrabilityStatus::Constrained => "constrained",
            IntegrabilityStatus::NoSolution => "no-solution",
            IntegrabilityStatus::IterationLimit => "iteration-limit",
            IntegrabilityStatus::StratificationAmbiguous => "stratification-ambiguous",
        }
    }
}

#[derive(Clone, Debug)]
pub struct IntegrabilityReport {
    pub section: CandidateSection,
    /// Raw bracket components, before reduction.
    pub zeta: Vec<Zeta>,
    pub generations: Vec<ConstraintGeneration>,
    pub status: IntegrabilityStatus,
    pub warnings: Vec<String>,
}

impl IntegrabilityReport {
    pub fn constraints(&self) -> Vec<&Expr> {
        self.generations
            .iter()
            .flat_map(|g| g.constraints.iter().map(|c| &c.expr))
            .collect()
    }
}

/// `zeta^a_{mu nu} = X_mu(W^a_nu) - X_nu(W^a_mu)` for `mu < nu`, where
/// `W = G + Gamma` and `X_mu = d/dx^mu + W^a_mu d/du^a`.
pub fn zeta_components(chart: &Chart, conn: &EhresmannConnection, h: &CandidateSection) -> Vec<Zeta> {
    let m = chart.base_dim();
    let frame = h.frame(conn, chart);
    let mut out = Vec::new();
    for mu in 0..m {
        for nu in mu + 1..m {
            for a in 0..chart.fibre_dim() {
                let p = chart.fibre_pos(a);
                let w_nu = frame[nu].component(p);
                let w_mu = frame[mu].component(p);
                let expr = &frame[mu].apply(w_nu, chart) - &frame[nu].apply(w_mu, chart);
                out.push(Zeta { a, mu, nu, expr });
            }
        }
    }
    out
}

/// Run the integrability algorithm for a section on the final constraint
/// set of `report`, and attach the result to a copy of the report.
pub fn run_integrability_algorithm(
    report: &AnalysisReport,
    h: &CandidateSection,
    opts: &AlgorithmOptions,
) -> Result<AnalysisReport, ConstraintError> {
    if report.status != Status::FinalSubmanifoldFound {
        return Err(ConstraintError::NotFinal(report.status));
    }
    let chart = &report.chart;
    for row in h.rows() {
        for e in row {
            e.require_decidable().map_err(LinsolveError::from)?;
        }
    }
    let zeta = zeta_components(chart, &report.connection, h);
    let frame = h.frame(&report.connection, chart);
    let max_constraints = chart.dim() - chart.base_dim() + 1;
    let mut acc = Accumulator::new(chart, report.constraint_polys(), opts.seed ^ 0x9e37_79b9, opts.samples.max(1));
    let mut generations = Vec::new();
    let mut warnings = Vec::new();
    let mut frontier: Vec<Expr> = zeta.iter().map(|z| z.expr.clone()).collect();
    let mut provenance = Provenance::Involutivity;
    let mut pass = 0;
    let status = loop {
        pass += 1;
        let added = match absorb(&mut acc, frontier.drain(..)) {
            Step::Inconsistent => break IntegrabilityStatus::NoSolution,
            Step::Added(a) => a,
        };
        if !added.is_empty() {
            generations.push(generation(generations.len() + 1, &added, provenance));
            if acc.polys.len() >= max_constraints {
                break IntegrabilityStatus::NoSolution;
            }
        }
        if acc.sampling_failed {
            warnings.push("no points found on the integrability constraint set".into());
            break IntegrabilityStatus::StratificationAmbiguous;
        }
        if added.is_empty() {
            break if generations.is_empty() {
                IntegrabilityStatus::Integrable
            } else {
                IntegrabilityStatus::Constrained
            };
        }
        if pass >= opts.max_generations {
            break IntegrabilityStatus::IterationLimit;
        }
        frontier = added
            .iter()
            .flat_map(|z| frame.iter().map(move |x| x.apply(z, chart)))
            .collect();
        provenance = Provenance::Tangency;
    };
    let mut out = report.clone();
    out.integrability = Some(IntegrabilityReport {
        section: h.clone(),
        zeta,
        generations,
        status,
        warnings,
    });
    Ok(out)
}

#[cfg(test)]
mod tests;
