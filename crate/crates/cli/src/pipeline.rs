//! The analysis pipeline behind `analyze`, `check` and `integrate`, and the
//! structured results document.

use serde::Serialize;
use thiserror::Error;

use multisym::constraints::{
    run_constraint_algorithm, run_integrability_algorithm, AnalysisReport, ConstraintError, ConstraintGeneration,
    PremultisymplecticSystem, Status,
};
use multisym::fieldtheory::{
    affine_analyze, build_hamiltonian_system, build_lagrangian_system_seeded, el_residual, legendre_map,
    semi_holonomic_run, semi_holonomy_forced, AffineAnalysis, AffineRoute, FieldTheoryError, LagrangianSystem,
    LegendreMap,
};
use multisym::geometry::{CandidateSection, DiffForm};
use multisym::symexpr::{Chart, Expr};

use crate::model::{Model, Payload};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    FieldTheory(#[from] FieldTheoryError),
}

pub struct LagrangianOutcome {
    pub sys: LagrangianSystem,
    pub legendre: LegendreMap,
    /// Whether the unrestricted system already pins the semi-holonomy.
    pub forced: bool,
    /// The Euler-Lagrange equations for a generic semi-holonomic section,
    /// written in the unknown second-order coefficients.
    pub el_relation: Vec<Expr>,
    /// The residual of the canonical section, modulo the constraints.
    pub el_residual: Option<Vec<Expr>>,
}

pub struct Analysis {
    pub omega: DiffForm,
    /// The unrestricted run.
    pub base: AnalysisReport,
    /// The run solutions are drawn from: the semi-holonomic rerun for
    /// Lagrangians that need it, otherwise `base`. Carries the
    /// integrability report when the run reached a final constraint set.
    pub solution: AnalysisReport,
    pub lagrangian: Option<LagrangianOutcome>,
    pub affine: Option<AffineAnalysis>,
}

impl Analysis {
    /// Constraints of the run together with those found by the
    /// integrability algorithm.
    pub fn all_constraints(&self) -> Vec<Expr> {
        let mut out: Vec<Expr> = self.solution.constraints().into_iter().cloned().collect();
        if let Some(i) = &self.solution.integrability {
            out.extend(i.constraints().into_iter().cloned());
        }
        out
    }
}

pub fn omega_of(model: &Model) -> Result<DiffForm, PipelineError> {
    Ok(match &model.payload {
        Payload::Lagrangian(l) => build_lagrangian_system_seeded(&model.chart, l, model.options.seed)?.omega,
        Payload::Hamiltonian(h) => build_hamiltonian_system(&model.chart, h)?.omega,
        Payload::Omega(w) => w.clone(),
        Payload::Affine(aff) => aff.omega(),
    })
}

pub fn analyze(model: &Model) -> Result<Analysis, PipelineError> {
    let chart = &model.chart;
    let opts = &model.options;
    let mut lagrangian_sys = None;
    let mut affine = None;
    let omega = match &model.payload {
        Payload::Lagrangian(l) => {
            let sys = build_lagrangian_system_seeded(chart, l, opts.seed)?;
            let w = sys.omega.clone();
            lagrangian_sys = Some(sys);
            w
        }
        Payload::Affine(aff) => {
            affine = Some(affine_analyze(aff, opts)?);
            aff.omega()
        }
        _ => omega_of(model)?,
    };
    let system = PremultisymplecticSystem::new(chart.clone(), omega.clone());
    let base = run_constraint_algorithm(&system, &model.connection, opts)?;

    let mut report = base.clone();
    let mut forced = false;
    if let Some(sys) = &lagrangian_sys {
        if base.status == Status::FinalSubmanifoldFound {
            forced = semi_holonomy_forced(sys, &base);
            if !forced {
                report = semi_holonomic_run(sys, &base, opts)?;
            }
        }
    }
    if report.status == Status::FinalSubmanifoldFound {
        let h = report.canonical_section();
        report = run_integrability_algorithm(&report, &h, opts)?;
    }

    let lagrangian = match lagrangian_sys {
        Some(sys) => {
            let el_relation = el_relation(&sys)?;
            let el = (report.status == Status::FinalSubmanifoldFound)
                .then(|| el_residual(&sys, &report.canonical_section(), &report.constraint_polys()).ok())
                .flatten();
            Some(LagrangianOutcome {
                legendre: legendre_map(&sys),
                sys,
                forced,
                el_relation,
                el_residual: el,
            })
        }
        None => None,
    };
    Ok(Analysis {
        omega,
        base,
        solution: report,
        lagrangian,
        affine,
    })
}

/// Euler-Lagrange expressions for the semi-holonomic section whose
/// second-order coefficients are left as opaque symbols `G(v<B>_<nu>,x<mu>)`.
fn el_relation(sys: &LagrangianSystem) -> Result<Vec<Expr>, FieldTheoryError> {
    let chart = &sys.chart;
    let m = chart.base_dim();
    let n = sys.fields();
    let mut rows = vec![vec![Expr::zero(); m]; chart.fibre_dim()];
    let names: Vec<String> = chart.names().map(str::to_string).collect();
    for a in 0..n {
        for mu in 0..m {
            rows[a][mu] = chart.x(chart.block_pos(a, mu));
            let v = chart.block_pos(a, mu);
            for (al, row) in rows[v - m].iter_mut().enumerate() {
                *row = chart
                    .atom("G", &[names[v].as_str(), names[al].as_str()])
                    .expect("chart coordinates");
            }
        }
    }
    let h = CandidateSection::new(chart, rows)?;
    el_residual(sys, &h, &[])
}

// ---- structured output ----

#[derive(Serialize)]
pub struct Results {
    pub kind: &'static str,
    pub base: Vec<String>,
    pub fibre: Vec<String>,
    pub options: OptionsDto,
    pub status: &'static str,
    pub passes: usize,
    pub generations: Vec<GenerationDto>,
    pub splitting: SplittingDto,
    pub system: SystemDto,
    pub section: Vec<SectionRowDto>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lagrangian: Option<LagrangianDto>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub affine: Option<AffineDto>,
    pub integrability: Option<IntegrabilityDto>,
}

#[derive(Serialize)]
pub struct OptionsDto {
    pub max_generations: usize,
    pub seed: u64,
    pub samples: usize,
}

#[derive(Serialize)]
pub struct ConstraintDto {
    pub expr: String,
    pub provenance: multisym::constraints::Provenance,
}

#[derive(Serialize)]
pub struct GenerationDto {
    pub index: usize,
    pub constraints: Vec<ConstraintDto>,
}

#[derive(Serialize)]
pub struct SplittingDto {
    pub gamma: String,
    pub omega_conn: String,
    pub assumption_ok: bool,
}

#[derive(Serialize)]
pub struct SystemDto {
    pub rows: usize,
    pub unknowns: usize,
    pub rank: usize,
    pub nullspace_dimension: usize,
    pub conditions: Vec<String>,
    pub stratification: Vec<String>,
}

#[derive(Serialize)]
pub struct SectionRowDto {
    pub coordinate: String,
    pub gamma: Vec<String>,
}

#[derive(Serialize)]
pub struct LagrangianDto {
    pub regularity: &'static str,
    pub hessian_rank: Option<usize>,
    pub hessian_full_rank: usize,
    pub momenta: Vec<Vec<String>>,
    pub energy: String,
    pub semi_holonomy_forced: bool,
    /// The rerun with the semi-holonomy imposed, when it was needed.
    pub semi_holonomic: Option<RunDto>,
    pub el_relation: Vec<String>,
    pub el_residual: Option<Vec<String>>,
}

#[derive(Serialize)]
pub struct RunDto {
    pub status: &'static str,
    pub generations: Vec<GenerationDto>,
    pub section: Vec<SectionRowDto>,
}

#[derive(Serialize)]
pub struct AffineDto {
    pub route: &'static str,
    pub nondegenerate: bool,
    pub block_regular: Vec<bool>,
    pub dimension: usize,
    pub engine_agrees: bool,
    pub zeta: Vec<ZetaDto>,
}

#[derive(Serialize)]
pub struct ZetaDto {
    pub coordinate: String,
    pub mu: usize,
    pub nu: usize,
    pub expr: String,
}

#[derive(Serialize)]
pub struct IntegrabilityDto {
    pub status: &'static str,
    pub zeta: Vec<ZetaDto>,
    pub generations: Vec<GenerationDto>,
    pub warnings: Vec<String>,
}

fn strings<'a>(it: impl IntoIterator<Item = &'a Expr>) -> Vec<String> {
    it.into_iter().map(Expr::to_string).collect()
}

fn generations(gens: &[ConstraintGeneration]) -> Vec<GenerationDto> {
    gens.iter()
        .map(|g| GenerationDto {
            index: g.index,
            constraints: g
                .constraints
                .iter()
                .map(|c| ConstraintDto {
                    expr: c.expr.to_string(),
                    provenance: c.provenance,
                })
                .collect(),
        })
        .collect()
}

fn zeta_dto(chart: &Chart, z: &[multisym::constraints::Zeta]) -> Vec<ZetaDto> {
    z.iter()
        .map(|z| ZetaDto {
            coordinate: chart.name(chart.fibre_pos(z.a)).to_string(),
            mu: z.mu + 1,
            nu: z.nu + 1,
            expr: z.expr.to_string(),
        })
        .collect()
}

fn section_rows(chart: &Chart, r: &AnalysisReport) -> Vec<SectionRowDto> {
    chart
        .fibre_names()
        .zip(r.canonical_section().rows())
        .map(|(name, row)| SectionRowDto {
            coordinate: name.to_string(),
            gamma: strings(row),
        })
        .collect()
}

impl Results {
    pub fn new(model: &Model, a: &Analysis) -> Results {
        let chart = &model.chart;
        let r = &a.base;
        let lagrangian = a.lagrangian.as_ref().map(|l| LagrangianDto {
            regularity: l.sys.regularity.as_str(),
            hessian_rank: l.sys.evidence.symbolic_rank,
            hessian_full_rank: l.sys.evidence.full_rank,
            momenta: l.legendre.momenta.iter().map(strings).collect(),
            energy: l.legendre.energy.to_string(),
            semi_holonomy_forced: l.forced,
            semi_holonomic: (!l.forced && a.base.status == Status::FinalSubmanifoldFound).then(|| RunDto {
                status: a.solution.status.as_str(),
                generations: generations(&a.solution.generations),
                section: section_rows(chart, &a.solution),
            }),
            el_relation: strings(&l.el_relation),
            el_residual: l.el_residual.as_ref().map(strings),
        });
        let affine = a.affine.as_ref().map(|af| AffineDto {
            route: match af.route {
                AffineRoute::ClosedForm => "closed-form",
                AffineRoute::Engine => "engine",
            },
            nondegenerate: af.nondegenerate,
            block_regular: af.block_regular.clone(),
            dimension: af.dimension,
            engine_agrees: af.engine_agrees,
            zeta: zeta_dto(chart, &af.zeta),
        });
        Results {
            kind: model.kind.as_str(),
            base: chart.base_names().map(str::to_string).collect(),
            fibre: chart.fibre_names().map(str::to_string).collect(),
            options: OptionsDto {
                max_generations: model.options.max_generations,
                seed: model.options.seed,
                samples: model.options.samples,
            },
            status: r.status.as_str(),
            passes: r.passes,
            generations: generations(&r.generations),
            splitting: SplittingDto {
                gamma: r.splitting.gamma.display(chart).to_string(),
                omega_conn: r.splitting.omega_conn.display(chart).to_string(),
                assumption_ok: r.splitting.assumption_ok(),
            },
            system: SystemDto {
                rows: r.problem.rows(),
                unknowns: r.problem.matrix().first().map_or(0, Vec::len),
                rank: r.family.rank,
                nullspace_dimension: r.family.nullspace.len(),
                conditions: r.family.conditions.iter().map(|c| c.value.to_string()).collect(),
                stratification: strings(&r.family.stratification),
            },
            section: section_rows(chart, r),
            warnings: r.warnings.clone(),
            lagrangian,
            affine,
            integrability: a.solution.integrability.as_ref().map(|i| IntegrabilityDto {
                status: i.status.as_str(),
                zeta: zeta_dto(chart, &i.zeta),
                generations: generations(&i.generations),
                warnings: i.warnings.clone(),
            }),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("results serialize");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let w = &mut out;
        let _ = writeln!(w, "model: {} over ({}) with fibre ({})", self.kind, self.base.join(", "), self.fibre.join(", "));
        let _ = writeln!(w, "status: {}", self.status);
        let _ = writeln!(w, "passes: {}", self.passes);
        let _ = writeln!(w, "gamma: {}", self.splitting.gamma);
        let _ = writeln!(w, "omega_conn: {}", self.splitting.omega_conn);
        if self.generations.is_empty() {
            let _ = writeln!(w, "constraints: none");
        }
        for g in &self.generations {
            let list: Vec<String> = g.constraints.iter().map(|c| c.expr.clone()).collect();
            let _ = writeln!(w, "generation {}: [{}]", g.index, list.join(", "));
            for c in &g.constraints {
                let _ = writeln!(w, "  {} ({})", c.expr, c.provenance.as_str());
            }
        }
        let s = &self.system;
        let _ = writeln!(
            w,
            "system: {} rows, {} unknowns, rank {}, nullspace dimension {}",
            s.rows, s.unknowns, s.rank, s.nullspace_dimension
        );
        if !s.stratification.is_empty() {
            let _ = writeln!(w, "  rank drops where any of [{}] vanish", s.stratification.join(", "));
        }
        let _ = writeln!(w, "canonical section:");
        for row in &self.section {
            let _ = writeln!(w, "  {}: [{}]", row.coordinate, row.gamma.join(", "));
        }
        if let Some(l) = &self.lagrangian {
            let _ = writeln!(w, "regularity: {}", l.regularity);
            let _ = writeln!(w, "semi-holonomy forced: {}", l.semi_holonomy_forced);
            if let Some(run) = &l.semi_holonomic {
                let _ = writeln!(w, "semi-holonomic run: {}", run.status);
                for g in &run.generations {
                    let list: Vec<String> = g.constraints.iter().map(|c| format!("{} ({})", c.expr, c.provenance.as_str())).collect();
                    let _ = writeln!(w, "  generation {}: [{}]", g.index, list.join(", "));
                }
                for row in &run.section {
                    let _ = writeln!(w, "  {}: [{}]", row.coordinate, row.gamma.join(", "));
                }
            }
            for (a, rel) in l.el_relation.iter().enumerate() {
                let _ = writeln!(w, "euler-lagrange relation {}: {} = 0", a + 1, rel);
            }
            match &l.el_residual {
                Some(r) => {
                    let _ = writeln!(w, "euler-lagrange residual of the canonical section: [{}]", r.join(", "));
                }
                None => {
                    let _ = writeln!(w, "euler-lagrange residual: not available");
                }
            }
        }
        if let Some(af) = &self.affine {
            let _ = writeln!(
                w,
                "affine: route {}, nondegenerate {}, family dimension {}, engine agrees {}",
                af.route, af.nondegenerate, af.dimension, af.engine_agrees
            );
            for z in &af.zeta {
                let _ = writeln!(w, "  zeta[{}]_{}{} = {}", z.coordinate, z.mu, z.nu, z.expr);
            }
        }
        if let Some(i) = &self.integrability {
            let _ = writeln!(w, "integrability: {}", i.status);
            for g in &i.generations {
                let list: Vec<String> = g.constraints.iter().map(|c| c.expr.clone()).collect();
                let _ = writeln!(w, "  generation {}: [{}]", g.index, list.join(", "));
            }
            for warning in &i.warnings {
                let _ = writeln!(w, "  warning: {warning}");
            }
        }
        for warning in &self.warnings {
            let _ = writeln!(w, "warning: {warning}");
        }
        out
    }
}

/// Process exit code for a run status.
pub fn exit_code(status: Status) -> u8 {
    match status {
        Status::FinalSubmanifoldFound => 0,
        Status::NoSolution => 2,
        Status::IterationLimit | Status::StratificationAmbiguous => 3,
    }
}
