//! Numeric integration of the flat solution found by the pipeline.

use thiserror::Error;

use multisym::constraints::{zeta_components, Status};
use multisym::fieldtheory::semi_holonomy_modulo;
use multisym::geometry::CandidateSection;
use multisym::integrate::{integrate_section, numeric_el_check, observed_order, Axis, Grid, GridSection, IntegrateError};
use multisym::linsolve::{assemble, LinsolveError};
use multisym::symexpr::{Expr, Poly};

use crate::model::{GridSpec, Model};
use crate::pipeline::Analysis;

#[derive(Debug, Error)]
pub enum NumericError {
    #[error("no final constraint set (status {})", .0.as_str())]
    NotFinal(Status),
    #[error("the section does not solve the final system: {0}")]
    NotASolution(String),
    #[error("the section is not flat: {0}")]
    NotFlat(String),
    #[error("no grid given; pass --grid or set [options.grid]")]
    NoGrid,
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Linsolve(#[from] LinsolveError),
}

/// The section to integrate: the one given in the model, otherwise the
/// canonical member of the final family. It must solve the final system
/// and be flat modulo every constraint found.
pub fn flat_section(model: &Model, an: &Analysis) -> Result<CandidateSection, NumericError> {
    let report = &an.solution;
    if report.status != Status::FinalSubmanifoldFound {
        return Err(NumericError::NotFinal(report.status));
    }
    let chart = &model.chart;
    let h = model.section.clone().unwrap_or_else(|| report.canonical_section());
    let constraints = an.all_constraints();
    let polys: Vec<Poly> = constraints.iter().map(|c| c.numer().clone()).collect();
    let problem = assemble(&an.omega, &model.connection, &report.splitting.gamma, &constraints, chart)?;
    if let Some(r) = problem
        .residual(&h.to_flat())
        .into_iter()
        .map(|r| r.reduce_modulo(&polys))
        .find(|r| !r.is_zero())
    {
        return Err(NumericError::NotASolution(format!("residual {r}")));
    }
    if let Some(l) = &an.lagrangian {
        if let Some(d) = semi_holonomy_modulo(&l.sys, &h, &polys).constraints.first() {
            return Err(NumericError::NotASolution(format!("semi-holonomy defect {d}")));
        }
    }
    if let Some(z) = zeta_components(chart, &model.connection, &h)
        .into_iter()
        .map(|z| z.expr.reduce_modulo(&polys))
        .find(|z| !z.is_zero())
    {
        return Err(NumericError::NotFlat(format!("bracket component {z}")));
    }
    Ok(h)
}

/// `ds^a/dx^mu = G^a_mu + Gamma^a_mu`.
pub fn total_rhs(model: &Model, h: &CandidateSection) -> Vec<Vec<Expr>> {
    let conn = model.connection.coeffs();
    h.rows()
        .iter()
        .zip(conn)
        .map(|(row, g)| row.iter().zip(g).map(|(a, b)| a + b).collect())
        .collect()
}

pub fn grid(spec: &GridSpec, nodes: usize) -> Grid {
    Grid::new(
        spec.lo
            .iter()
            .zip(&spec.hi)
            .map(|(lo, hi)| Axis::span(*lo, *hi, nodes))
            .collect(),
    )
}

/// Start values in fibre order; unnamed coordinates start at zero.
pub fn start_values(model: &Model, spec: &GridSpec) -> Vec<f64> {
    model
        .chart
        .fibre_names()
        .map(|n| spec.start.get(n).copied().unwrap_or(0.0))
        .collect()
}

pub fn integrate(model: &Model, an: &Analysis, grid: &Grid, start: &[f64]) -> Result<GridSection, NumericError> {
    let h = flat_section(model, an)?;
    Ok(integrate_section(&model.chart, &total_rhs(model, &h), start, grid, &an.all_constraints())?)
}

pub struct Convergence {
    pub steps: Vec<f64>,
    pub defects: Vec<f64>,
    /// Largest finite-difference Euler-Lagrange residual per level.
    pub residuals: Vec<f64>,
    /// Observed order of the residuals, when they are above round-off.
    pub order: Option<f64>,
}

/// Residuals below this are treated as exact.
pub const ROUND_OFF: f64 = 1e-10;

/// Integrate at each refinement level and run the finite-difference check.
pub fn convergence(model: &Model, an: &Analysis, spec: &GridSpec) -> Result<Convergence, NumericError> {
    let Some(l) = &an.lagrangian else {
        return Err(NumericError::NotFinal(an.solution.status));
    };
    let levels = if spec.refine.is_empty() { vec![spec.nodes] } else { spec.refine.clone() };
    let start = start_values(model, spec);
    let mut out = Convergence {
        steps: Vec::new(),
        defects: Vec::new(),
        residuals: Vec::new(),
        order: None,
    };
    for nodes in levels {
        let g = grid(spec, nodes);
        let sec = integrate(model, an, &g, &start)?;
        let stats = numeric_el_check(&l.sys, &sec)?;
        out.steps.push(g.axes.iter().map(|a| a.step.abs()).fold(0.0, f64::max));
        out.defects.push(sec.defect);
        out.residuals.push(stats.max);
    }
    if out.steps.len() > 1 && out.residuals.iter().all(|r| *r > ROUND_OFF) {
        out.order = Some(observed_order(&out.steps, &out.residuals));
    }
    Ok(out)
}
