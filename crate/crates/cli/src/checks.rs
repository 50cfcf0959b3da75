//! The invariant suite run by `check`.

use std::fmt;

use multisym::constraints::Status;
use multisym::fieldtheory::{omega_by_expansion, AffineRoute};
use multisym::geometry::{mvf_to_section, section_to_mvf, DiffForm};
use multisym::symexpr::{Chart, Expr, Number};

use crate::model::{Kind, Model, Payload};
use crate::numeric;
use crate::pipeline::{self, Analysis};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    Skip,
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub outcome: Outcome,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.outcome {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
            Outcome::Skip => "SKIP",
        };
        write!(f, "[{tag}] {}", self.name)?;
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        Ok(())
    }
}

fn check(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        outcome: if ok { Outcome::Pass } else { Outcome::Fail },
        detail: detail.into(),
    }
}

fn skip(name: impl Into<String>, why: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        outcome: Outcome::Skip,
        detail: why.into(),
    }
}

fn form_text(w: &DiffForm, chart: &Chart) -> String {
    w.display(chart).to_string()
}

fn same_up_to_unit(a: &Expr, b: &Expr) -> bool {
    let (a, b) = (a.constraint_form(), b.constraint_form());
    a == b || a == -b.clone()
}

pub fn run_checks(model: &Model) -> Vec<Check> {
    let chart = &model.chart;
    let mut out = Vec::new();
    let omega = match pipeline::omega_of(model) {
        Ok(w) => w,
        Err(e) => {
            out.push(check("build Ω", false, e.to_string()));
            return out;
        }
    };
    out.push(check("Ω is closed", omega.exterior_derivative(chart).is_zero(), ""));
    match omega.triple_vertical(chart) {
        None => out.push(check("no triple-vertical terms in Ω", true, "")),
        Some(t) => {
            let names: Vec<String> = t.iter().map(|&p| format!("d{}", chart.name(p))).collect();
            out.push(check(
                "no triple-vertical terms in Ω",
                false,
                format!("Ω does not vanish on {}", names.join("^")),
            ));
        }
    }
    if let Payload::Lagrangian(l) = &model.payload {
        let built = pipeline::omega_of(model).ok();
        match omega_by_expansion(chart, l) {
            Ok(w) => out.push(check("Ω_L matches the coordinate expansion", Some(&w) == built.as_ref(), "")),
            Err(e) => out.push(check("Ω_L matches the coordinate expansion", false, e.to_string())),
        }
    }

    let an = match pipeline::analyze(model) {
        Ok(an) => an,
        Err(e) => {
            out.push(check("constraint algorithm runs", false, e.to_string()));
            return out;
        }
    };
    let report = &an.base;
    let split = &report.splitting;
    let vol = DiffForm::volume(chart);
    let rebuilt = vol.wedge(&split.gamma).map(|w| w.add(&split.omega_conn));
    out.push(check(
        "ω^γ + Ω∇ reconstructs Ω",
        rebuilt.as_ref().is_ok_and(|w| *w == an.omega),
        "",
    ));
    if let Some(g) = &model.expect.gamma {
        let got = form_text(&split.gamma, chart);
        out.push(check(
            format!("γ matches {}", form_text(g, chart)),
            *g == split.gamma,
            if *g == split.gamma { String::new() } else { format!("got {got}") },
        ));
    }
    if let Some(w) = &model.expect.omega_conn {
        let name = if w.is_zero() { "Ω∇ = 0".to_string() } else { format!("Ω∇ matches {}", form_text(w, chart)) };
        let ok = *w == split.omega_conn;
        out.push(check(name, ok, if ok { String::new() } else { format!("got {}", form_text(&split.omega_conn, chart)) }));
    }
    if let Some(want) = &model.expect.constraints {
        let got: Vec<Vec<&Expr>> = report
            .generations
            .iter()
            .map(|g| g.constraints.iter().map(|c| &c.expr).collect())
            .collect();
        let ok = got.len() == want.len()
            && got.iter().zip(want).all(|(g, w)| {
                g.len() == w.len() && w.iter().all(|e| g.iter().any(|c| same_up_to_unit(c, e)))
            });
        let shown: Vec<String> = got
            .iter()
            .map(|g| format!("[{}]", g.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ")))
            .collect();
        let shown = if shown.is_empty() { "none".to_string() } else { shown.join(" ") };
        out.push(check("constraint generations match", ok, format!("got {shown}")));
    }
    out.push(check(
        "run reaches a final constraint set",
        report.status == Status::FinalSubmanifoldFound,
        report.status.as_str(),
    ));
    out.extend(sample_checks(&an));

    if report.status == Status::FinalSubmanifoldFound {
        let h = report.canonical_section();
        let x = section_to_mvf(&h, &model.connection, chart);
        let pairing = x.contract(&vol).map(|f| f.coeff(0));
        out.push(check(
            "section ↔ m-vector round trip",
            pairing.as_ref().is_ok_and(Expr::is_one)
                && mvf_to_section(&x, &model.connection, chart).is_ok_and(|back| back == h),
            "",
        ));
    }

    if let Some(l) = &an.lagrangian {
        match &l.el_residual {
            Some(r) => out.push(check(
                "Euler-Lagrange residual vanishes on the constraint set",
                r.iter().all(Expr::is_zero),
                format!("[{}]", r.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ")),
            )),
            None => out.push(skip("Euler-Lagrange residual vanishes on the constraint set", "no semi-holonomic section")),
        }
    }

    if let Some(af) = &an.affine {
        out.push(check("direct affine rows agree with the generic assembly", af.engine_agrees, ""));
        if af.route == AffineRoute::ClosedForm {
            let (m, n) = (chart.base_dim(), chart.fibre_dim());
            let ok = af.dimension == n * (m - 1) && report.family.nullspace.len() == af.dimension;
            out.push(check(
                "closed-form family has dimension n(m-1)",
                ok,
                format!("dimension {}", af.dimension),
            ));
        }
    }

    if model.kind == Kind::Lagrangian {
        if let Some(spec) = &model.grid {
            out.extend(numeric_checks(model, &an, spec));
        }
    }
    out
}

/// Constraint values and system residuals at the stored sample points.
fn sample_checks(an: &Analysis) -> Vec<Check> {
    let report = &an.base;
    if report.samples.is_empty() {
        return vec![skip("constraints vanish at sample points", "no sample points")];
    }
    let tol = 1e-9;
    let small = |v: &Number| match v {
        Number::Rational(r) => r.numer().bits() == 0,
        Number::Float(f) => f.abs() < tol,
    };
    let mut worst = String::new();
    let mut ok = true;
    for p in &report.samples {
        for c in report.constraints() {
            match c.eval_at(p) {
                Ok(v) if small(&v) => {}
                Ok(v) => {
                    ok = false;
                    worst = format!("{c} = {v}");
                }
                Err(e) => {
                    ok = false;
                    worst = e.to_string();
                }
            }
        }
    }
    let mut out = vec![check("constraints vanish at sample points", ok, worst)];
    let residual = report.problem.residual(&report.family.particular);
    let mut ok = true;
    let mut worst = String::new();
    for p in &report.samples {
        for r in &residual {
            match r.eval_at(p) {
                Ok(v) if small(&v) => {}
                Ok(v) => {
                    ok = false;
                    worst = format!("residual {v}");
                }
                Err(e) => {
                    ok = false;
                    worst = e.to_string();
                }
            }
        }
    }
    out.push(check("canonical section solves the system at sample points", ok, worst));
    out
}

fn numeric_checks(model: &Model, an: &Analysis, spec: &crate::model::GridSpec) -> Vec<Check> {
    let name = "Euler-Lagrange residual converges at second order";
    let conv = match numeric::convergence(model, an, spec) {
        Ok(c) => c,
        Err(e) => return vec![check("flat section integrates", false, e.to_string())],
    };
    let defect = conv.defects.iter().copied().fold(0.0, f64::max);
    let mut out = vec![check(
        "integrated section is path independent",
        defect < 1e-8,
        format!("defect {defect:.3e}"),
    )];
    let levels: Vec<String> = conv
        .steps
        .iter()
        .zip(&conv.residuals)
        .map(|(h, r)| format!("h={h:.4e}: {r:.3e}"))
        .collect();
    let detail = levels.join(", ");
    if conv.residuals.iter().all(|r| *r <= numeric::ROUND_OFF) {
        out.push(check(name, true, format!("exact to round-off ({detail})")));
    } else if let Some(p) = conv.order {
        out.push(check(name, (p - 2.0).abs() <= 0.2, format!("order {p:.3} ({detail})")));
    } else {
        out.push(skip(name, format!("needs two refinement levels ({detail})")));
    }
    out
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.outcome != Outcome::Fail)
}
