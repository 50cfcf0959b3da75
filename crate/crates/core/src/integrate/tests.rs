use super::*;
use crate::fieldtheory::build_lagrangian_system;
use crate::symexpr::parse_expr;

fn e(src: &str, c: &Chart) -> Expr {
    parse_expr(src, c).unwrap()
}

fn square(nodes: usize) -> Grid {
    Grid::new(vec![Axis::span(0.0, 1.0, nodes), Axis::span(0.0, 1.0, nodes)])
}

fn rows(c: &Chart, src: &[[&str; 2]]) -> Vec<Vec<Expr>> {
    src.iter().map(|r| r.iter().map(|s| e(s, c)).collect()).collect()
}

#[test]
fn grid_indexing_round_trips() {
    let g = Grid::new(vec![Axis::span(0.0, 1.0, 3), Axis::span(-1.0, 1.0, 5)]);
    assert_eq!(g.len(), 15);
    for k in 0..g.len() {
        assert_eq!(g.flat(&g.index(k)), k);
    }
    assert_eq!(g.index(4), vec![1, 1]);
    assert_eq!(g.point(&[2, 4]), vec![1.0, 1.0]);
}

#[test]
fn zero_connection_gives_a_constant_section() {
    let c = Chart::plain(&["x1", "x2"], &["s"]).unwrap();
    let sec = integrate_section(&c, &rows(&c, &[["0", "0"]]), &[2.5], &square(9), &[]).unwrap();
    assert!(sec.values.iter().all(|v| v == &vec![2.5]));
    assert_eq!(sec.defect, 0.0);
    assert_eq!(sec.order, 4);
}

#[test]
fn exponential_along_the_first_axis() {
    let c = Chart::plain(&["x1", "x2"], &["s"]).unwrap();
    let sec = integrate_section(&c, &rows(&c, &[["s", "0"]]), &[1.0], &square(65), &[]).unwrap();
    let err = (0..sec.grid.len())
        .map(|k| {
            let x = sec.grid.point(&sec.grid.index(k));
            (sec.values[k][0] - x[0].exp()).abs()
        })
        .fold(0.0, f64::max);
    assert!(err < 1e-8, "error {err}");
    assert!(sec.defect < 1e-10, "defect {}", sec.defect);
}

#[test]
fn non_flat_connection_shows_a_defect() {
    // s_1 = x2, s_2 = 0 has no solution; the two sweeps give 0 and x1 x2
    let c = Chart::plain(&["x1", "x2"], &["s"]).unwrap();
    let sec = integrate_section(&c, &rows(&c, &[["x2", "0"]]), &[0.0], &square(17), &[]).unwrap();
    assert!((sec.defect - 1.0).abs() < 1e-12, "defect {}", sec.defect);
}

#[test]
fn start_must_satisfy_the_constraints() {
    let c = Chart::plain(&["x1", "x2"], &["s"]).unwrap();
    let f = rows(&c, &[["0", "0"]]);
    let err = integrate_section(&c, &f, &[0.5], &square(5), &[e("s - 1", &c)]).unwrap_err();
    assert!(matches!(err, IntegrateError::StartOffConstraint { .. }));
    assert!(integrate_section(&c, &f, &[1.0], &square(5), &[e("s - 1", &c)]).is_ok());
}

#[test]
fn shape_and_blow_up_errors() {
    let c = Chart::plain(&["x1", "x2"], &["s"]).unwrap();
    let f = rows(&c, &[["s^2", "0"]]);
    let one_axis = Grid::new(vec![Axis::span(0.0, 1.0, 5)]);
    assert!(matches!(
        integrate_section(&c, &f, &[1.0], &one_axis, &[]),
        Err(IntegrateError::GridShape { .. })
    ));
    assert!(matches!(
        integrate_section(&c, &f, &[1.0, 2.0], &square(5), &[]),
        Err(IntegrateError::StartShape { .. })
    ));
    // s = 1/(1 - x1) blows up at x1 = 1
    let far = Grid::new(vec![Axis::span(0.0, 3.0, 301), Axis::span(0.0, 1.0, 3)]);
    assert!(matches!(
        integrate_section(&c, &f, &[1.0], &far, &[]),
        Err(IntegrateError::BlowUp { .. })
    ));
}

#[test]
fn table_export() {
    let c = Chart::plain(&["x1", "x2"], &["s"]).unwrap();
    let g = Grid::new(vec![Axis::span(0.0, 1.0, 2), Axis::span(0.0, 1.0, 2)]);
    let sec = GridSection::tabulate(&c, g, |x| vec![x[0] + 10.0 * x[1]]);
    let t = sec.to_table();
    let lines: Vec<&str> = t.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[1], "1.0000000000000000e0 0.0000000000000000e0 1.0000000000000000e0");
    assert_eq!(lines[2].split(' ').nth(2), Some("1.0000000000000000e1"));
}

fn harmonic() -> LagrangianSystem {
    let c = Chart::first_jet(&["x1", "x2"], &["y1"]).unwrap();
    build_lagrangian_system(&c, &e("(v1_1^2 + v1_2^2)/2", &c)).unwrap()
}

#[test]
fn harmonic_function_passes_the_check() {
    let sys = harmonic();
    let sec = GridSection::tabulate(&sys.chart, square(65), |x| vec![x[0] * x[0] - x[1] * x[1]]);
    let r = numeric_el_check(&sys, &sec).unwrap();
    assert!(r.max < 1e-6, "residual {}", r.max);
    assert_eq!(r.nodes, 61 * 61);
    // x1^2 has Laplacian 2
    let sec = GridSection::tabulate(&sys.chart, square(65), |x| vec![x[0] * x[0]]);
    let r = numeric_el_check(&sys, &sec).unwrap();
    assert!((r.max - 2.0).abs() < 1e-6);
    assert!((r.l2 - 2.0 * (61.0f64 / 64.0)).abs() < 1e-6);
}

#[test]
fn check_rejects_bad_input() {
    let sys = harmonic();
    let sec = GridSection::tabulate(&sys.chart, square(4), |x| vec![x[0]]);
    assert!(matches!(
        numeric_el_check(&sys, &sec),
        Err(IntegrateError::TooCoarse { needed: 5, .. })
    ));
    let sec = GridSection::tabulate(&sys.chart, square(9), |x| vec![x[0], x[1]]);
    assert!(matches!(numeric_el_check(&sys, &sec), Err(IntegrateError::ChartMismatch(_))));
}

/// Flat, traceless connection on the harmonic jet chart whose integral
/// section through `(1, k, 0)` is `y = exp(k x1) cos(k x2)`.
fn exp_cos_connection(c: &Chart) -> Vec<Vec<Expr>> {
    rows(
        c,
        &[
            ["v1_1", "v1_2"],
            ["v1_1/4", "v1_2/4"],
            ["v1_2/4", "-v1_1/4"],
        ],
    )
}

#[test]
fn harmonic_section_integrates_and_checks() {
    let sys = harmonic();
    let k = 0.25;
    let f = exp_cos_connection(&sys.chart);
    let (mut hs, mut errs, mut res) = (Vec::new(), Vec::new(), Vec::new());
    for nodes in [17, 33, 65] {
        let sec = integrate_section(&sys.chart, &f, &[1.0, k, 0.0], &square(nodes), &[]).unwrap();
        assert!(sec.defect < 1e-10, "defect {}", sec.defect);
        let err = (0..sec.grid.len())
            .map(|i| {
                let x = sec.grid.point(&sec.grid.index(i));
                (sec.values[i][0] - (k * x[0]).exp() * (k * x[1]).cos()).abs()
            })
            .fold(0.0, f64::max);
        hs.push(1.0 / (nodes - 1) as f64);
        errs.push(err);
        res.push(numeric_el_check(&sys, &sec).unwrap().max);
    }
    assert!(res[2] < 1e-6, "residual {}", res[2]);
    let p = observed_order(&hs, &errs);
    assert!(p > 3.5, "integration order {p} from {errs:?}");
    let p = observed_order(&hs, &res);
    assert!((p - 2.0).abs() < 0.2, "residual order {p} from {res:?}");
}

#[test]
fn finite_differences_converge_at_second_order() {
    // y = exp(x1) sin(x2) is harmonic; drop the velocities so they are
    // differenced as well
    let sys = harmonic();
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    for nodes in [17, 33, 65] {
        let sec = GridSection::tabulate(&sys.chart, square(nodes), |x| vec![x[0].exp() * x[1].sin()]);
        let r = numeric_el_check(&sys, &sec).unwrap();
        hs.push(1.0 / (nodes - 1) as f64);
        errs.push(r.max);
    }
    let p = observed_order(&hs, &errs);
    assert!((p - 2.0).abs() < 0.2, "order {p}");
}

#[test]
fn observed_order_of_exact_power_law() {
    let hs = [0.1, 0.05, 0.025];
    let errs: Vec<f64> = hs.iter().map(|h: &f64| 3.0 * h.powi(4)).collect();
    assert!((observed_order(&hs, &errs) - 4.0).abs() < 1e-12);
}
