use crate::symexpr::{Chart, Expr};

use super::{DiffForm, GeometryError, MultiVector, VectorField};

/// Ehresmann connection given by horizontal-lift coefficients `G^a_mu`,
/// defining the horizontal frame `D_mu = d/dx^mu + G^a_mu d/du^a`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EhresmannConnection {
    /// `coeffs[a][mu]`.
    coeffs: Vec<Vec<Expr>>,
}

impl EhresmannConnection {
    /// The connection with all `G^a_mu = 0`.
    pub fn trivial(chart: &Chart) -> EhresmannConnection {
        EhresmannConnection {
            coeffs: vec![vec![Expr::zero(); chart.base_dim()]; chart.fibre_dim()],
        }
    }

    pub fn new(chart: &Chart, coeffs: Vec<Vec<Expr>>) -> Result<EhresmannConnection, GeometryError> {
        check_shape(chart, &coeffs)?;
        Ok(EhresmannConnection { coeffs })
    }

    pub fn coeff(&self, a: usize, mu: usize) -> &Expr {
        &self.coeffs[a][mu]
    }

    pub fn coeffs(&self) -> &[Vec<Expr>] {
        &self.coeffs
    }

    pub fn is_trivial(&self) -> bool {
        self.coeffs.iter().flatten().all(Expr::is_zero)
    }

    /// `D_mu`.
    pub fn horizontal(&self, chart: &Chart, mu: usize) -> VectorField {
        let mut v = VectorField::basis(chart.dim(), mu);
        for (a, row) in self.coeffs.iter().enumerate() {
            v.set(chart.fibre_pos(a), row[mu].clone());
        }
        v
    }

    pub fn horizontal_frame(&self, chart: &Chart) -> Vec<VectorField> {
        (0..chart.base_dim()).map(|mu| self.horizontal(chart, mu)).collect()
    }

    /// `Y = D_1 ^ ... ^ D_m`.
    pub fn horizontal_mvf(&self, chart: &Chart) -> MultiVector {
        MultiVector::decomposable(self.horizontal_frame(chart))
    }

    /// `D_mu(f)`.
    pub fn total(&self, chart: &Chart, mu: usize, f: &Expr) -> Expr {
        self.horizontal(chart, mu).apply(f, chart)
    }
}

fn check_shape(chart: &Chart, coeffs: &[Vec<Expr>]) -> Result<(), GeometryError> {
    if coeffs.len() != chart.fibre_dim() || coeffs.iter().any(|r| r.len() != chart.base_dim()) {
        return Err(GeometryError::Shape(format!(
            "expected {} x {} coefficients",
            chart.fibre_dim(),
            chart.base_dim()
        )));
    }
    Ok(())
}

/// A candidate section `h` of the first jet of the chart bundle, given by
/// vertical coefficients relative to a connection:
/// `h(d/dx^mu) = D_mu + Gamma^a_mu d/du^a`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateSection {
    /// `gamma[a][mu]`.
    gamma: Vec<Vec<Expr>>,
}

impl CandidateSection {
    pub fn new(chart: &Chart, gamma: Vec<Vec<Expr>>) -> Result<CandidateSection, GeometryError> {
        check_shape(chart, &gamma)?;
        Ok(CandidateSection { gamma })
    }

    pub fn zero(chart: &Chart) -> CandidateSection {
        CandidateSection {
            gamma: vec![vec![Expr::zero(); chart.base_dim()]; chart.fibre_dim()],
        }
    }

    /// From a flat vector ordered `(a, mu)` with `a` major.
    pub fn from_flat(chart: &Chart, flat: &[Expr]) -> CandidateSection {
        let m = chart.base_dim();
        assert_eq!(flat.len(), m * chart.fibre_dim());
        CandidateSection {
            gamma: flat.chunks(m).map(<[Expr]>::to_vec).collect(),
        }
    }

    pub fn to_flat(&self) -> Vec<Expr> {
        self.gamma.iter().flatten().cloned().collect()
    }

    pub fn gamma(&self, a: usize, mu: usize) -> &Expr {
        &self.gamma[a][mu]
    }

    pub fn rows(&self) -> &[Vec<Expr>] {
        &self.gamma
    }

    /// The frame `X_mu = D_mu + Gamma^a_mu d/du^a`.
    pub fn frame(&self, conn: &EhresmannConnection, chart: &Chart) -> Vec<VectorField> {
        (0..chart.base_dim())
            .map(|mu| {
                let mut v = conn.horizontal(chart, mu);
                for (a, row) in self.gamma.iter().enumerate() {
                    let p = chart.fibre_pos(a);
                    let cur = v.component(p) + &row[mu];
                    v.set(p, cur);
                }
                v
            })
            .collect()
    }
}

/// The decomposition `Omega = Omega^conn + omega ^ gamma` induced by a
/// connection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Splitting {
    /// `gamma = i(Y) Omega`.
    pub gamma: DiffForm,
    /// `Omega - omega ^ gamma`.
    pub omega_conn: DiffForm,
    /// A triple of vertical positions on which `Omega` does not vanish, if any.
    pub violating_triple: Option<[usize; 3]>,
}

impl Splitting {
    pub fn assumption_ok(&self) -> bool {
        self.violating_triple.is_none()
    }
}

pub fn split_omega(
    big_omega: &DiffForm,
    conn: &EhresmannConnection,
    volume: &DiffForm,
    chart: &Chart,
) -> Result<Splitting, GeometryError> {
    let m = chart.base_dim();
    if big_omega.degree() != m + 1 || volume.degree() != m {
        return Err(GeometryError::DegreeMismatch {
            expected: m + 1,
            found: big_omega.degree(),
        });
    }
    let y = conn.horizontal_mvf(chart);
    let pairing = y.contract(volume)?.coeff(0);
    if !pairing.is_one() {
        return Err(GeometryError::NotTransverse(pairing.to_string()));
    }
    let gamma = y.contract(big_omega)?;
    let omega_conn = big_omega.sub(&volume.wedge(&gamma)?);
    Ok(Splitting {
        gamma,
        omega_conn,
        violating_triple: big_omega.triple_vertical(chart),
    })
}

/// The decomposable `m`-vector `X = ^_mu (D_mu + Gamma^a_mu d/du^a)`.
pub fn section_to_mvf(h: &CandidateSection, conn: &EhresmannConnection, chart: &Chart) -> MultiVector {
    MultiVector::decomposable(h.frame(conn, chart))
}

/// Recover the section whose image is spanned by a transverse decomposable
/// `m`-vector. Uses the witness when present, otherwise reads the
/// normalized factors off the coefficients.
pub fn mvf_to_section(
    x: &MultiVector,
    conn: &EhresmannConnection,
    chart: &Chart,
) -> Result<CandidateSection, GeometryError> {
    let m = chart.base_dim();
    let nf = chart.fibre_dim();
    if x.degree() != m {
        return Err(GeometryError::DegreeMismatch {
            expected: m,
            found: x.degree(),
        });
    }
    let pairing = x.contract(&DiffForm::volume(chart))?.coeff(0);
    if pairing.is_zero() {
        return Err(GeometryError::NotTransverse(pairing.to_string()));
    }
    // total vertical coefficients of the normalized frame, [a][mu]
    let mut total = vec![vec![Expr::zero(); m]; nf];
    match x.witness() {
        Some(w) => {
            // base block: b[mu][nu] = component of factor nu along d/dx^mu
            let b: Vec<Vec<Expr>> = (0..m)
                .map(|mu| (0..m).map(|nu| w[nu].component(mu).clone()).collect())
                .collect();
            let inv = invert(&b).ok_or_else(|| GeometryError::NotTransverse(pairing.to_string()))?;
            for mu in 0..m {
                for (a, row) in total.iter_mut().enumerate() {
                    let p = chart.fibre_pos(a);
                    row[mu] = (0..m).map(|nu| &inv[nu][mu] * w[nu].component(p)).sum();
                }
            }
        }
        None => {
            let base_mask: u64 = (1u64 << m) - 1;
            for mu in 0..m {
                let sign = if (m - 1 - mu) % 2 == 0 { 1 } else { -1 };
                for (a, row) in total.iter_mut().enumerate() {
                    let idx = (base_mask & !(1u64 << mu)) | (1u64 << chart.fibre_pos(a));
                    let c = &x.coeff(idx) / &pairing;
                    row[mu] = if sign > 0 { c } else { -c };
                }
            }
        }
    }
    let gamma = total
        .iter()
        .enumerate()
        .map(|(a, row)| row.iter().enumerate().map(|(mu, t)| t - conn.coeff(a, mu)).collect())
        .collect();
    CandidateSection::new(chart, gamma)
}

/// Gauss-Jordan inverse over the expression field.
fn invert(mat: &[Vec<Expr>]) -> Option<Vec<Vec<Expr>>> {
    let n = mat.len();
    let mut a: Vec<Vec<Expr>> = mat
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { Expr::one() } else { Expr::zero() }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, piv);
        let inv = a[col][col].recip().ok()?;
        for e in a[col].iter_mut() {
            *e = &*e * &inv;
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for c in 0..2 * n {
                    let t = &a[col][c] * &f;
                    a[r][c] = &a[r][c] - &t;
                }
            }
        }
    }
    Some(a.into_iter().map(|r| r[n..].to_vec()).collect())
}
