use proptest::prelude::*;

use super::*;
use crate::symexpr::{parse_expr, Chart, Expr};

fn e(src: &str, chart: &Chart) -> Expr {
    parse_expr(src, chart).unwrap()
}

fn plain() -> Chart {
    Chart::plain(&["x1", "x2"], &["y1", "y2"]).unwrap()
}

/// `alpha = y1 y2 dx1^dx2 - x2 y1 dy1^dx1 - x2 y2 dy2^dx1`.
fn affine_alpha(c: &Chart) -> DiffForm {
    let a = DiffForm::basis(4, &[0, 1]).unwrap().scale(&e("y1*y2", c));
    let b = DiffForm::basis(4, &[2, 0]).unwrap().scale(&e("-x2*y1", c));
    let d = DiffForm::basis(4, &[3, 0]).unwrap().scale(&e("-x2*y2", c));
    a.add(&b).add(&d)
}

#[test]
fn wedge_basics() {
    let dx1 = DiffForm::dx(4, 0);
    let dx2 = DiffForm::dx(4, 1);
    let v = dx1.wedge(&dx2).unwrap();
    assert_eq!(v.coeff(0b11), Expr::one());
    assert!(dx1.wedge(&dx1).unwrap().is_zero());
    assert_eq!(dx2.wedge(&dx1).unwrap(), v.neg());
    let vol = DiffForm::volume(&plain());
    assert!(matches!(
        vol.wedge(&vol).unwrap().wedge(&dx1),
        Err(GeometryError::DegreeOverflow { .. })
    ));
}

#[test]
fn exterior_derivative_product_rule() {
    let c = plain();
    let a = DiffForm::dx(4, 0).scale(&e("y1*y2", &c));
    let got = a.exterior_derivative(&c);
    let want = DiffForm::basis(4, &[2, 0])
        .unwrap()
        .scale(&e("y2", &c))
        .add(&DiffForm::basis(4, &[3, 0]).unwrap().scale(&e("y1", &c)));
    assert_eq!(got, want);
}

#[test]
fn affine_example_omega_and_split() {
    let c = plain();
    let alpha = affine_alpha(&c);
    assert!(alpha.exterior_derivative(&c).exterior_derivative(&c).is_zero());
    let omega = alpha.exterior_derivative(&c).neg();
    // (y1 - y2)(dy1 - dy2) ^ dx1 ^ dx2
    let dy = DiffForm::dx(4, 2).sub(&DiffForm::dx(4, 3));
    let want = dy
        .wedge(&DiffForm::volume(&c))
        .unwrap()
        .scale(&e("y1 - y2", &c));
    assert_eq!(omega, want);

    let conn = EhresmannConnection::trivial(&c);
    let split = split_omega(&omega, &conn, &DiffForm::volume(&c), &c).unwrap();
    assert_eq!(split.gamma, dy.scale(&e("y1 - y2", &c)));
    assert!(split.omega_conn.is_zero());
    assert!(split.assumption_ok());

    let y = conn.horizontal_mvf(&c);
    assert_eq!(y.contract(&omega).unwrap(), split.gamma);
}

#[test]
fn split_of_zero_form() {
    let c = plain();
    let conn = EhresmannConnection::trivial(&c);
    let s = split_omega(&DiffForm::zero(4, 3), &conn, &DiffForm::volume(&c), &c).unwrap();
    assert!(s.gamma.is_zero() && s.omega_conn.is_zero() && s.assumption_ok());
}

#[test]
fn split_rejects_non_unit_pairing() {
    let c = plain();
    let conn = EhresmannConnection::trivial(&c);
    let w = DiffForm::volume(&c).scale(&Expr::int(2));
    assert!(matches!(
        split_omega(&DiffForm::zero(4, 3), &conn, &w, &c),
        Err(GeometryError::NotTransverse(_))
    ));
}

#[test]
fn triple_vertical_is_detected() {
    let c = chart3();
    let bad = DiffForm::basis(5, &[2, 3, 4]).unwrap();
    let conn = EhresmannConnection::trivial(&c);
    let s = split_omega(&bad, &conn, &DiffForm::volume(&c), &c).unwrap();
    assert_eq!(s.violating_triple, Some([2, 3, 4]));
}

#[test]
fn contraction_examples() {
    let c = plain();
    let y = MultiVector::decomposable(vec![VectorField::basis(4, 0), VectorField::basis(4, 1)]);
    assert_eq!(y.contract(&DiffForm::volume(&c)).unwrap().coeff(0), Expr::one());
    let f = DiffForm::dx(4, 2)
        .sub(&DiffForm::dx(4, 3))
        .wedge(&DiffForm::volume(&c))
        .unwrap();
    let got = f.contract_basis(2);
    assert_eq!(got, DiffForm::volume(&c));
}

/// Value of a form on vectors by the determinant expansion
/// `a(v1..vk) = sum_I a_I det[v_j^{i_l}]`.
fn det_eval(a: &DiffForm, vs: &[VectorField]) -> Expr {
    fn det(m: Vec<Vec<Expr>>) -> Expr {
        if m.len() == 1 {
            return m[0][0].clone();
        }
        let mut acc = Expr::zero();
        for j in 0..m.len() {
            let minor: Vec<Vec<Expr>> = m[1..]
                .iter()
                .map(|r| r.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, x)| x.clone()).collect())
                .collect();
            let t = &m[0][j] * &det(minor);
            acc = if j % 2 == 0 { &acc + &t } else { &acc - &t };
        }
        acc
    }
    let mut acc = Expr::zero();
    for (idx, c) in a.terms() {
        let pos: Vec<usize> = (0..64).filter(|i| idx & (1 << i) != 0).collect();
        let m: Vec<Vec<Expr>> = pos
            .iter()
            .map(|&p| vs.iter().map(|v| v.component(p).clone()).collect())
            .collect();
        acc = &acc + &(c * &det(m));
    }
    acc
}

#[test]
fn contraction_matches_determinant_expansion() {
    let c = plain();
    let f = DiffForm::dx(4, 2)
        .sub(&DiffForm::dx(4, 3))
        .wedge(&DiffForm::volume(&c))
        .unwrap();
    let contracted = f.contract_basis(2);
    let basis: Vec<VectorField> = (0..4).map(|p| VectorField::basis(4, p)).collect();
    for i in 0..4 {
        for j in 0..4 {
            let lhs = contracted.evaluate(&[basis[i].clone(), basis[j].clone()]).unwrap();
            let rhs = det_eval(&f, &[basis[2].clone(), basis[i].clone(), basis[j].clone()]);
            assert_eq!(lhs, rhs);
        }
    }
}

#[test]
fn section_roundtrip_and_semi_holonomic_frame() {
    let c = Chart::first_jet(&["x1", "x2"], &["y1"]).unwrap();
    let conn = EhresmannConnection::trivial(&c);
    let mut g = vec![vec![Expr::zero(); 2]; 3];
    g[0][0] = c.symbol("v1_1").unwrap();
    g[0][1] = c.symbol("v1_2").unwrap();
    let h = CandidateSection::new(&c, g).unwrap();
    let x = section_to_mvf(&h, &conn, &c);
    assert!(x.witness_consistent());
    // direct multilinear expansion of (d1 + v1_1 dy)^(d2 + v1_2 dy)
    let want = MultiVector::from_terms(
        5,
        2,
        [
            (0b00011, Expr::one()),
            (0b00101, c.symbol("v1_2").unwrap()),
            (0b00110, -c.symbol("v1_1").unwrap()),
        ],
    );
    assert_eq!(x.terms().collect::<Vec<_>>(), want.terms().collect::<Vec<_>>());
    assert_eq!(x.contract(&DiffForm::volume(&c)).unwrap().coeff(0), Expr::one());
    assert_eq!(mvf_to_section(&x, &conn, &c).unwrap(), h);
    assert_eq!(mvf_to_section(&want, &conn, &c).unwrap(), h);
    assert_eq!(
        mvf_to_section(&conn.horizontal_mvf(&c), &conn, &c).unwrap(),
        CandidateSection::zero(&c)
    );
}

#[test]
fn mvf_to_section_rejects_vertical() {
    let c = plain();
    let conn = EhresmannConnection::trivial(&c);
    let x = MultiVector::decomposable(vec![VectorField::basis(4, 0), VectorField::basis(4, 2)]);
    assert!(matches!(mvf_to_section(&x, &conn, &c), Err(GeometryError::NotTransverse(_))));
}

#[test]
fn affine_solution_recovered() {
    let c = plain();
    let conn = EhresmannConnection::trivial(&c);
    let f: Vec<Vec<Expr>> = vec![
        vec![e("x1*y2", &c), e("3", &c)],
        vec![e("y1 - x2", &c), e("y1*y2", &c)],
    ];
    let frame: Vec<VectorField> = (0..2)
        .map(|mu| {
            let mut v = VectorField::basis(4, mu);
            v.set(2, f[0][mu].clone());
            v.set(3, f[1][mu].clone());
            v
        })
        .collect();
    let x = MultiVector::decomposable(frame);
    assert_eq!(mvf_to_section(&x, &conn, &c).unwrap().rows(), &f[..]);
}

#[test]
fn nontrivial_connection_frame() {
    let c = Chart::plain(&["x1"], &["y1"]).unwrap();
    let conn = EhresmannConnection::new(&c, vec![vec![e("y1", &c)]]).unwrap();
    let h = CandidateSection::new(&c, vec![vec![e("x1", &c)]]).unwrap();
    let x = section_to_mvf(&h, &conn, &c);
    assert_eq!(x.coeff(0b10), e("x1 + y1", &c));
    assert_eq!(mvf_to_section(&x, &conn, &c).unwrap(), h);
}

// ---- randomized properties ----

fn small_expr(chart: &Chart) -> impl Strategy<Value = Expr> {
    let dim = chart.dim();
    let chart = chart.clone();
    prop::collection::vec((-3i64..=3, prop::collection::vec(0u32..=2, dim)), 1..4).prop_map(move |terms| {
        terms
            .into_iter()
            .map(|(k, exps)| {
                exps.iter()
                    .enumerate()
                    .fold(Expr::int(k), |acc, (p, &n)| &acc * &chart.x(p).pow(n as i32).unwrap())
            })
            .sum()
    })
}

fn random_form(chart: &Chart, degree: usize) -> impl Strategy<Value = DiffForm> {
    let dim = chart.dim();
    let idxs: Vec<Index> = (0u64..(1 << dim)).filter(|i| i.count_ones() as usize == degree).collect();
    let n = idxs.len();
    prop::collection::vec(prop::option::weighted(0.5, small_expr(chart)), n).prop_map(move |cs| {
        DiffForm::from_terms(
            dim,
            degree,
            idxs.iter().zip(cs).filter_map(|(i, c)| c.map(|c| (*i, c))),
        )
    })
}

fn random_field(chart: &Chart) -> impl Strategy<Value = VectorField> {
    prop::collection::vec(small_expr(chart), chart.dim()).prop_map(VectorField::new)
}

/// Random `(m+1)`-form with no term carrying three vertical factors.
fn assumption_form(chart: &Chart) -> impl Strategy<Value = DiffForm> {
    let c = chart.clone();
    random_form(chart, chart.base_dim() + 1).prop_map(move |f| {
        let vertical: Index = (c.base_dim()..c.dim()).fold(0, |m, p| m | (1 << p));
        DiffForm::from_terms(
            f.dim(),
            f.degree(),
            f.terms()
                .filter(|(i, _)| (i & vertical).count_ones() < 3)
                .map(|(i, e)| (i, e.clone())),
        )
    })
}

fn chart3() -> Chart {
    Chart::plain(&["x1", "x2"], &["y1", "y2", "y3"]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn d_squared_vanishes(f in (0usize..4).prop_flat_map(|deg| random_form(&chart3(), deg))) {
        let c = chart3();
        prop_assert!(f.exterior_derivative(&c).exterior_derivative(&c).is_zero());
    }

    #[test]
    fn splitting_reconstructs(omega in assumption_form(&chart3()), g in prop::collection::vec(small_expr(&chart3()), 6)) {
        let c = chart3();
        let conn = EhresmannConnection::new(&c, g.chunks(2).map(<[Expr]>::to_vec).collect()).unwrap();
        let vol = DiffForm::volume(&c);
        let s = split_omega(&omega, &conn, &vol, &c).unwrap();
        prop_assert!(s.assumption_ok());
        prop_assert_eq!(vol.wedge(&s.gamma).unwrap().add(&s.omega_conn), omega);
        // gamma annihilates the horizontal frame
        for d in conn.horizontal_frame(&c) {
            prop_assert!(s.gamma.evaluate(&[d]).unwrap().is_zero());
        }
    }

    #[test]
    fn double_contraction_vanishes(f in random_form(&chart3(), 3), x in random_field(&chart3())) {
        prop_assert!(f.contract_vector(&x).contract_vector(&x).is_zero());
    }

    #[test]
    fn witness_and_coefficient_contractions_agree(
        f in random_form(&chart3(), 3),
        a in random_field(&chart3()),
        b in random_field(&chart3()),
    ) {
        let x = MultiVector::decomposable(vec![a.clone(), b.clone()]);
        prop_assert!(x.witness_consistent());
        let via = x.contract_via_witness(&f).unwrap().unwrap();
        prop_assert_eq!(x.contract(&f).unwrap(), via.clone());
        // slot convention: (i(a^b) f)(v) = f(a, b, v)
        for p in 0..5 {
            let v = VectorField::basis(5, p);
            prop_assert_eq!(via.evaluate(&[v.clone()]).unwrap(), f.evaluate(&[a.clone(), b.clone(), v]).unwrap());
        }
    }

    #[test]
    fn section_roundtrip(g in prop::collection::vec(small_expr(&chart3()), 6), s in small_expr(&chart3())) {
        let c = chart3();
        let conn = EhresmannConnection::trivial(&c);
        let h = CandidateSection::new(&c, g.chunks(2).map(<[Expr]>::to_vec).collect()).unwrap();
        let x = section_to_mvf(&h, &conn, &c);
        prop_assert_eq!(x.contract(&DiffForm::volume(&c)).unwrap().coeff(0), Expr::one());
        prop_assert_eq!(mvf_to_section(&x, &conn, &c).unwrap(), h.clone());
        // rescaling a factor keeps the span
        if !s.is_zero() {
            let scaled = x.scale(&s);
            prop_assert_eq!(mvf_to_section(&scaled, &conn, &c).unwrap(), h.clone());
            let bare = MultiVector::from_terms(5, 2, scaled.terms().map(|(i, e)| (i, e.clone())));
            prop_assert_eq!(mvf_to_section(&bare, &conn, &c).unwrap(), h);
        }
    }
}
