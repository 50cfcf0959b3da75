//! Points on the zero set of a constraint list.
//!
//! When each constraint is linear in a variable absent from the earlier
//! ones, the set is parametrized exactly over the rationals. Otherwise
//! damped Gauss-Newton runs from random starts in `f64`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::symexpr::{Chart, CompiledExpr, Expr, Number, Poly, Var};

const ATTEMPTS: usize = 64;
const NEWTON_STEPS: usize = 200;
const ROOT_TOL: f64 = 1e-11;
/// Values at float points below this count as zero.
pub const VANISH_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingFailed;

fn random_rational(rng: &mut ChaCha8Rng) -> BigRational {
    BigRational::new(BigInt::from(rng.gen_range(-24i64..=24)), BigInt::from(rng.gen_range(5i64..=11)))
}

/// For each constraint, a variable in which it is linear and which does not
/// occur in any earlier constraint.
fn triangular_order(chart: &Chart, constraints: &[Poly]) -> Option<Vec<Var>> {
    let mut chosen: Vec<Var> = Vec::new();
    for (i, xi) in constraints.iter().enumerate() {
        let v = (0..chart.dim()).rev().map(|p| chart.var(p)).find(|v| {
            xi.degree_in(v) == 1
                && !chosen.contains(v)
                && constraints[..i].iter().all(|earlier| earlier.degree_in(v) == 0)
        })?;
        chosen.push(v);
    }
    Some(chosen)
}

pub fn sample_points(
    chart: &Chart,
    constraints: &[Poly],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<Number>>, SamplingFailed> {
    if let Some(order) = triangular_order(chart, constraints) {
        if let Some(pts) = exact_points(chart, constraints, &order, count, rng) {
            return Ok(pts);
        }
    }
    newton_points(chart, constraints, count, rng)
}

fn exact_points(
    chart: &Chart,
    constraints: &[Poly],
    order: &[Var],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<Vec<Number>>> {
    let mut out = Vec::new();
    for _ in 0..ATTEMPTS * count {
        if out.len() == count {
            break;
        }
        let mut point: Vec<BigRational> = (0..chart.dim()).map(|_| random_rational(rng)).collect();
        let mut ok = true;
        for (xi, v) in constraints.iter().zip(order) {
            let pos = v.coord().expect("chart variable").pos;
            let coeffs = xi.coeffs_in(v);
            let at = |p: Option<&Poly>| -> BigRational {
                p.map(|p| {
                    p.substitute_rational(&|w: &Var| w.coord().map(|c| point[c.pos].clone()))
                        .expect("chart variables only")
                })
                .unwrap_or_else(BigRational::zero)
            };
            let a = at(coeffs.get(&1));
            if a.is_zero() {
                ok = false;
                break;
            }
            let b = at(coeffs.get(&0));
            point[pos] = -b / a;
        }
        if ok {
            out.push(point.into_iter().map(Number::Rational).collect());
        }
    }
    (out.len() == count).then_some(out)
}

fn newton_points(
    chart: &Chart,
    constraints: &[Poly],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<Number>>, SamplingFailed> {
    let dim = chart.dim();
    let compile = |e: Expr| e.compile().map_err(|_| SamplingFailed);
    let f: Vec<CompiledExpr> = constraints
        .iter()
        .map(|p| compile(Expr::from_poly(p.clone())))
        .collect::<Result<_, _>>()?;
    let jac: Vec<Vec<CompiledExpr>> = constraints
        .iter()
        .map(|p| {
            (0..dim)
                .map(|k| compile(Expr::from_poly(p.diff(&chart.coord(k)))))
                .collect::<Result<_, _>>()
        })
        .collect::<Result<_, _>>()?;
    let residual = |x: &[f64]| f.iter().map(|g| g.eval(x)).collect::<Vec<f64>>();
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();

    let mut out = Vec::new();
    for _ in 0..ATTEMPTS * count {
        if out.len() == count {
            break;
        }
        let mut x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut r = residual(&x);
        for _ in 0..NEWTON_STEPS {
            if norm(&r) < ROOT_TOL {
                break;
            }
            let j: Vec<Vec<f64>> = jac.iter().map(|row| row.iter().map(|d| d.eval(&x)).collect()).collect();
            let Some(step) = min_norm_step(&j, &r) else {
                break;
            };
            // halve until the residual decreases
            let mut t = 1.0;
            let base = norm(&r);
            loop {
                let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a - t * s).collect();
                let rt = residual(&trial);
                if norm(&rt) < base || t < 1e-6 {
                    x = trial;
                    r = rt;
                    break;
                }
                t *= 0.5;
            }
        }
        if norm(&r) < ROOT_TOL && x.iter().all(|v| v.is_finite()) {
            out.push(x.into_iter().map(Number::Float).collect());
        }
    }
    if out.len() == count {
        Ok(out)
    } else {
        Err(SamplingFailed)
    }
}

/// `J^T (J J^T + lambda I)^{-1} r`.
fn min_norm_step(j: &[Vec<f64>], r: &[f64]) -> Option<Vec<f64>> {
    let k = j.len();
    let n = j.first().map_or(0, Vec::len);
    let mut g: Vec<Vec<f64>> = (0..k)
        .map(|a| {
            let mut row: Vec<f64> = (0..k)
                .map(|b| j[a].iter().zip(&j[b]).map(|(p, q)| p * q).sum())
                .collect();
            row[a] += 1e-12;
            row.push(r[a]);
            row
        })
        .collect();
    for c in 0..k {
        let p = (c..k).max_by(|&a, &b| g[a][c].abs().total_cmp(&g[b][c].abs()))?;
        if g[p][c].abs() < 1e-300 {
            return None;
        }
        g.swap(c, p);
        for i in 0..k {
            if i != c {
                let f = g[i][c] / g[c][c];
                for col in c..=k {
                    g[i][col] -= f * g[c][col];
                }
            }
        }
    }
    let y: Vec<f64> = (0..k).map(|a| g[a][k] / g[a][a]).collect();
    Some((0..n).map(|col| (0..k).map(|a| j[a][col] * y[a]).sum()).collect())
}

pub fn vanishes(e: &Expr, point: &[Number]) -> bool {
    match e.eval_at(point) {
        Ok(Number::Rational(q)) => q.is_zero(),
        Ok(Number::Float(v)) => v.abs() <= VANISH_TOL,
        Err(_) => false,
    }
}
