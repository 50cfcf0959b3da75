use proptest::prelude::*;

use super::*;
use crate::geometry::VectorField;
use crate::linsolve::solve_modulo;
use crate::symexpr::parse_expr;

fn e(src: &str, c: &Chart) -> Expr {
    parse_expr(src, c).unwrap()
}

fn analyze(c: &Chart, omega: DiffForm) -> AnalysisReport {
    let sys = PremultisymplecticSystem::new(c.clone(), omega);
    run_constraint_algorithm(&sys, &EhresmannConnection::trivial(c), &AlgorithmOptions::default()).unwrap()
}

fn affine_example() -> (Chart, DiffForm) {
    let c = Chart::plain(&["x1", "x2"], &["y1", "y2"]).unwrap();
    let alpha = DiffForm::basis(4, &[0, 1])
        .unwrap()
        .scale(&e("y1*y2", &c))
        .add(&DiffForm::basis(4, &[2, 0]).unwrap().scale(&e("-x2*y1", &c)))
        .add(&DiffForm::basis(4, &[3, 0]).unwrap().scale(&e("-x2*y2", &c)));
    let omega = alpha.exterior_derivative(&c).neg();
    (c, omega)
}

fn names(r: &AnalysisReport) -> Vec<Vec<Expr>> {
    r.generations
        .iter()
        .map(|g| g.constraints.iter().map(|k| k.expr.clone()).collect())
        .collect()
}

#[test]
fn affine_example_constraints() {
    let (c, omega) = affine_example();
    let r = analyze(&c, omega);
    assert_eq!(r.status, Status::FinalSubmanifoldFound);
    assert_eq!(names(&r), vec![vec![e("y1 - y2", &c)]]);
    assert_eq!(r.generations[0].constraints[0].provenance, Provenance::Consistency);
    assert_eq!(r.passes, 2);
    assert!(r.splitting.omega_conn.is_zero());
    assert_eq!(r.family.nullspace.len(), 2);
    for pt in &r.samples {
        assert!(vanishes(&e("y1 - y2", &c), pt));
    }
}

#[test]
fn regular_system_has_no_constraints() {
    let c = Chart::first_jet(&["x1", "x2"], &["y1"]).unwrap();
    let (y, v1, v2) = (2, 3, 4);
    let omega = DiffForm::basis(5, &[v1, y, 1])
        .unwrap()
        .neg()
        .add(&DiffForm::basis(5, &[v2, y, 0]).unwrap())
        .add(&DiffForm::basis(5, &[v1, 0, 1]).unwrap().scale(&c.x(v1)))
        .add(&DiffForm::basis(5, &[v2, 0, 1]).unwrap().scale(&c.x(v2)));
    let r = analyze(&c, omega);
    assert_eq!(r.status, Status::FinalSubmanifoldFound);
    assert!(r.generations.is_empty());
    assert_eq!(r.passes, 1);
    assert!(r.warnings.is_empty(), "{:?}", r.warnings);
}

#[test]
fn zero_form_is_unconstrained() {
    let (c, _) = affine_example();
    let r = analyze(&c, DiffForm::zero(4, 3));
    assert_eq!(r.status, Status::FinalSubmanifoldFound);
    assert!(r.generations.is_empty());
    assert_eq!(r.family.nullspace.len(), 4);
}

#[test]
fn one_dimensional_toy() {
    // Omega = p dq ^ dt: the only row reads 0 = p
    let c = Chart::plain(&["t"], &["q", "p"]).unwrap();
    let omega = DiffForm::basis(3, &[1, 0]).unwrap().scale(&e("p", &c));
    let r = analyze(&c, omega);
    assert_eq!(r.status, Status::FinalSubmanifoldFound);
    assert_eq!(names(&r), vec![vec![e("p", &c)]]);
    // tangency forces Gamma^p = 0
    assert_eq!(r.canonical_section().gamma(1, 0), &Expr::zero());
}

#[test]
fn constant_condition_means_no_solution() {
    let c = Chart::plain(&["t"], &["q"]).unwrap();
    let omega = DiffForm::basis(2, &[1, 0]).unwrap();
    let r = analyze(&c, omega);
    assert_eq!(r.status, Status::NoSolution);
}

/// `Omega = dq ^ dp + dH ^ dt` with `H = p^2/2 + l q`: the multiplier `l`
/// forces `q = 0`, then `p = 0`, then `l = 0`.
#[test]
fn three_generations() {
    let c = Chart::plain(&["t"], &["q", "p", "l"]).unwrap();
    let h = DiffForm::scalar(4, e("p^2/2 + l*q", &c));
    let omega = DiffForm::basis(4, &[1, 2])
        .unwrap()
        .add(&h.exterior_derivative(&c).wedge(&DiffForm::dx(4, 0)).unwrap());
    let r = analyze(&c, omega);
    assert_eq!(r.status, Status::FinalSubmanifoldFound);
    let got = names(&r);
    assert_eq!(got, vec![vec![e("q", &c)], vec![e("p", &c)], vec![e("l", &c)]]);
    assert_eq!(r.generations[1].constraints[0].provenance, Provenance::Tangency);
    assert_eq!(r.passes, 4);
}

#[test]
fn generation_limit() {
    let c = Chart::plain(&["t"], &["q", "p", "l"]).unwrap();
    let h = DiffForm::scalar(4, e("p^2/2 + l*q", &c));
    let omega = DiffForm::basis(4, &[1, 2])
        .unwrap()
        .add(&h.exterior_derivative(&c).wedge(&DiffForm::dx(4, 0)).unwrap());
    let sys = PremultisymplecticSystem::new(c.clone(), omega);
    let opts = AlgorithmOptions {
        max_generations: 2,
        ..Default::default()
    };
    let r = run_constraint_algorithm(&sys, &EhresmannConnection::trivial(&c), &opts).unwrap();
    assert_eq!(r.status, Status::IterationLimit);
    assert_eq!(r.generations.len(), 2);
}

#[test]
fn too_many_constraints_is_no_solution() {
    // generation 1 is {y1, x1 x2 - 1}; its tangency rows add x2 and x1,
    // which leaves no points
    let c = Chart::plain(&["x1", "x2"], &["y1", "y2"]).unwrap();
    let vol = DiffForm::volume(&c);
    let omega = DiffForm::dx(4, 2)
        .wedge(&vol)
        .unwrap()
        .scale(&e("y1", &c))
        .add(&DiffForm::dx(4, 3).wedge(&vol).unwrap().scale(&e("y1 + x1*x2 - 1", &c)));
    let r = analyze(&c, omega);
    assert_eq!(r.status, Status::NoSolution, "{:?}", names(&r));
    assert_eq!(r.generations[0].constraints.len(), 2);
    assert!(r.constraints().len() >= 3);
}

#[test]
fn atoms_are_refused() {
    let c = Chart::plain(&["x1"], &["y1"]).unwrap();
    let f = c.atom("f", &["x1", "y1"]).unwrap();
    let omega = DiffForm::basis(2, &[1, 0]).unwrap().scale(&f);
    let sys = PremultisymplecticSystem::new(c.clone(), omega);
    let err = run_constraint_algorithm(&sys, &EhresmannConnection::trivial(&c), &AlgorithmOptions::default());
    assert!(matches!(err, Err(ConstraintError::Linsolve(LinsolveError::NonDecidable(_)))));
}

fn plain_scalar() -> Chart {
    Chart::plain(&["x1", "x2"], &["y"]).unwrap()
}

fn section(c: &Chart, g1: &str, g2: &str) -> CandidateSection {
    CandidateSection::new(c, vec![vec![e(g1, c), e(g2, c)]]).unwrap()
}

fn bracket_oracle(c: &Chart, h: &CandidateSection) -> Expr {
    let frame = h.frame(&EhresmannConnection::trivial(c), c);
    let b = frame[0].bracket(&frame[1], c);
    assert!(b.component(0).is_zero() && b.component(1).is_zero());
    b.component(2).clone()
}

#[test]
fn zeta_examples() {
    let c = plain_scalar();
    let conn = EhresmannConnection::trivial(&c);
    let h = section(&c, "y", "0");
    let z = zeta_components(&c, &conn, &h);
    assert_eq!(z.len(), 1);
    assert!(z[0].expr.is_zero());
    assert_eq!(z[0].expr, bracket_oracle(&c, &h));

    let h = section(&c, "0", "x1*y");
    let z = zeta_components(&c, &conn, &h);
    assert_eq!(z[0].expr, e("y", &c));
    assert_eq!(z[0].expr, bracket_oracle(&c, &h));
}

#[test]
fn integrability_runs() {
    let c = plain_scalar();
    let r = analyze(&c, DiffForm::zero(3, 3));
    let opts = AlgorithmOptions::default();

    let flat = run_integrability_algorithm(&r, &section(&c, "y", "0"), &opts).unwrap();
    let i = flat.integrability.unwrap();
    assert_eq!(i.status, IntegrabilityStatus::Integrable);
    assert!(i.generations.is_empty());

    let constant = run_integrability_algorithm(&r, &section(&c, "2", "-1/3"), &opts).unwrap();
    assert_eq!(constant.integrability.unwrap().status, IntegrabilityStatus::Integrable);

    let bent = run_integrability_algorithm(&r, &section(&c, "0", "x1*y"), &opts).unwrap();
    let i = bent.integrability.unwrap();
    assert_eq!(i.status, IntegrabilityStatus::Constrained);
    assert_eq!(i.constraints(), vec![&e("y", &c)]);
    assert_eq!(i.generations[0].constraints[0].provenance, Provenance::Involutivity);

    // zeta = 1 has no zeros
    let none = run_integrability_algorithm(&r, &section(&c, "0", "x1"), &opts).unwrap();
    assert_eq!(none.integrability.unwrap().status, IntegrabilityStatus::NoSolution);
}

#[test]
fn integrability_tangency_loop() {
    // zeta = y - x1 and X_2(zeta) = 0, X_1(zeta) = -1 + Gamma_1 d/dy (y - x1)
    let c = plain_scalar();
    let r = analyze(&c, DiffForm::zero(3, 3));
    let h = section(&c, "0", "x1*(y - x1) + y");
    let z = zeta_components(&c, &EhresmannConnection::trivial(&c), &h);
    assert_eq!(z[0].expr, bracket_oracle(&c, &h));
    let out = run_integrability_algorithm(&r, &h, &AlgorithmOptions::default()).unwrap();
    let i = out.integrability.unwrap();
    assert_eq!(i.generations[0].constraints[0].expr, z[0].expr.constraint_form());
    assert_eq!(i.status, IntegrabilityStatus::NoSolution);
}

#[test]
fn integrability_needs_final_report() {
    let c = Chart::plain(&["t"], &["q"]).unwrap();
    let r = analyze(&c, DiffForm::basis(2, &[1, 0]).unwrap());
    let h = CandidateSection::zero(&c);
    assert!(matches!(
        run_integrability_algorithm(&r, &h, &AlgorithmOptions::default()),
        Err(ConstraintError::NotFinal(Status::NoSolution))
    ));
}

#[test]
fn affine_integrability_expression() {
    // F^A_mu as opaque functions of (x, y)
    let c = Chart::plain(&["x1", "x2"], &["y1", "y2"]).unwrap();
    let args = ["x1", "x2", "y1", "y2"];
    let f: Vec<Vec<Expr>> = (1..=2)
        .map(|a| (1..=2).map(|mu| c.atom(&format!("F{a}_{mu}"), &args).unwrap()).collect())
        .collect();
    let h = CandidateSection::new(&c, f.clone()).unwrap();
    let z = zeta_components(&c, &EhresmannConnection::trivial(&c), &h);
    assert_eq!(z.len(), 2);
    for zeta in &z {
        let fa = &f[zeta.a];
        let (mu, nu) = (zeta.mu, zeta.nu);
        let mut want = &fa[nu].diff(&c.coord(mu)) - &fa[mu].diff(&c.coord(nu));
        for b in 0..2 {
            let yb = c.coord(c.fibre_pos(b));
            want = &want + &(&f[b][mu] * &fa[nu].diff(&yb));
            want = &want - &(&f[b][nu] * &fa[mu].diff(&yb));
        }
        assert_eq!(zeta.expr, want);
    }
}

fn poly_strategy(names: &'static [&'static str]) -> impl Strategy<Value = String> {
    prop::collection::vec((-2i64..=2, prop::sample::select(names), 0u32..=2), 1..=3).prop_map(|terms| {
        terms
            .into_iter()
            .map(|(k, v, d)| format!("({k})*{v}^{d}"))
            .collect::<Vec<_>>()
            .join(" + ")
    })
}

const VARS: &[&str] = &["x1", "x2", "y1", "y2"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn brackets_are_vertical(g in prop::collection::vec(poly_strategy(VARS), 4), conn in prop::collection::vec(poly_strategy(VARS), 4)) {
        let c = Chart::plain(&["x1", "x2"], &["y1", "y2"]).unwrap();
        let gamma = vec![vec![e(&g[0], &c), e(&g[1], &c)], vec![e(&g[2], &c), e(&g[3], &c)]];
        let conn = EhresmannConnection::new(&c, vec![
            vec![e(&conn[0], &c), e(&conn[1], &c)],
            vec![e(&conn[2], &c), e(&conn[3], &c)],
        ]).unwrap();
        let h = CandidateSection::new(&c, gamma).unwrap();
        let frame = h.frame(&conn, &c);
        let b: VectorField = frame[0].bracket(&frame[1], &c);
        prop_assert!(b.component(0).is_zero() && b.component(1).is_zero());
        let z = zeta_components(&c, &conn, &h);
        for zeta in &z {
            prop_assert_eq!(&zeta.expr, b.component(c.fibre_pos(zeta.a)));
        }
    }

    #[test]
    fn algorithm_reaches_a_stable_fixed_point(a in poly_strategy(VARS), f1 in poly_strategy(VARS), f2 in poly_strategy(VARS), seed in 0u64..1000) {
        let c = Chart::plain(&["x1", "x2"], &["y1", "y2"]).unwrap();
        let alpha = DiffForm::basis(4, &[0, 1]).unwrap().scale(&e(&a, &c))
            .add(&DiffForm::basis(4, &[2, 0]).unwrap().scale(&e(&f1, &c)))
            .add(&DiffForm::basis(4, &[3, 0]).unwrap().scale(&e(&f2, &c)));
        let omega = alpha.exterior_derivative(&c).neg();
        let sys = PremultisymplecticSystem::new(c.clone(), omega.clone());
        let opts = AlgorithmOptions { seed, ..Default::default() };
        let conn = EhresmannConnection::trivial(&c);
        let r = run_constraint_algorithm(&sys, &conn, &opts).unwrap();
        // monotone: each generation is non-empty and independent of the earlier ones
        let mut earlier: Vec<Poly> = Vec::new();
        for g in &r.generations {
            prop_assert!(!g.constraints.is_empty());
            for k in &g.constraints {
                prop_assert!(!k.expr.reduce_modulo(&earlier).is_zero());
                earlier.push(k.expr.numer().clone());
            }
        }
        if r.status != Status::FinalSubmanifoldFound {
            return Ok(());
        }
        // the constraints vanish at the samples, and the particular solution
        // satisfies the assembled system there
        let constraints: Vec<Expr> = r.constraints().into_iter().cloned().collect();
        for pt in &r.samples {
            for k in &constraints {
                prop_assert!(vanishes(k, pt));
            }
            for res in r.problem.residual(&r.family.particular) {
                prop_assert!(vanishes(&res.reduce_modulo(&r.constraint_polys()), pt) || vanishes(&res, pt));
            }
        }
        // stable: one more pass adds nothing
        let p = assemble(&omega, &conn, &r.splitting.gamma, &constraints, &c).unwrap();
        let fam = solve_modulo(&p, &r.constraint_polys()).unwrap();
        for cond in &fam.conditions {
            let red = cond.value.reduce_modulo(&r.constraint_polys());
            prop_assert!(red.is_zero() || r.samples.iter().all(|pt| vanishes(&red.constraint_form(), pt)));
        }
    }
}
