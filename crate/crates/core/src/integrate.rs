//! Numeric integration of flat connections on a rectangular base grid, and a
//! finite-difference Euler-Lagrange check along the resulting sections.
//!
//! The sweep integrates along axis 1 from the start corner, then from every
//! node of that line along axis 2, and so on. The reverse axis order is run
//! as well; the largest difference between the two is the path-independence
//! defect, which vanishes up to round-off for flat connections.

use std::fmt::Write as _;

use thiserror::Error;

use crate::fieldtheory::LagrangianSystem;
use crate::symexpr::{Chart, ChartKind, CompiledExpr, Expr, SymError};

/// Values above this magnitude abort the integration.
pub const BLOW_UP: f64 = 1e12;
/// Tolerance for the start point on the constraint set.
pub const START_TOL: f64 = 1e-8;
/// Fewest nodes per axis accepted by the finite-difference check.
pub const MIN_NODES: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("grid has {found} axes, the chart has {expected} base coordinates")]
    GridShape { expected: usize, found: usize },
    #[error("axis {axis} needs at least {needed} nodes, got {found}")]
    TooCoarse { axis: usize, needed: usize, found: usize },
    #[error("expected {expected} start values, got {found}")]
    StartShape { expected: usize, found: usize },
    #[error("start point violates constraint {constraint}: value {value:e}")]
    StartOffConstraint { constraint: String, value: f64 },
    #[error("value {value:e} exceeds {BLOW_UP:e} at node {node:?}")]
    BlowUp { node: Vec<usize>, value: f64 },
    #[error("section does not match the Lagrangian chart: {0}")]
    ChartMismatch(String),
    #[error(transparent)]
    Sym(#[from] SymError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub start: f64,
    pub step: f64,
    pub nodes: usize,
}

impl Axis {
    /// `nodes` points from `lo` to `hi` inclusive.
    pub fn span(lo: f64, hi: f64, nodes: usize) -> Axis {
        assert!(nodes >= 2, "an axis needs two nodes");
        Axis {
            start: lo,
            step: (hi - lo) / (nodes - 1) as f64,
            nodes,
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Grid {
        Grid { axes }
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.nodes).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index with axis 1 fastest.
    pub fn flat(&self, idx: &[usize]) -> usize {
        let mut k = 0;
        for (i, a) in idx.iter().zip(&self.axes).rev() {
            k = k * a.nodes + i;
        }
        k
    }

    pub fn index(&self, mut k: usize) -> Vec<usize> {
        self.axes
            .iter()
            .map(|a| {
                let i = k % a.nodes;
                k /= a.nodes;
                i
            })
            .collect()
    }

    pub fn point(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().zip(&self.axes).map(|(i, a)| a.coord(*i)).collect()
    }
}

/// Fibre values of a section at every node of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSection {
    pub grid: Grid,
    /// Fibre coordinate names, in chart order.
    pub names: Vec<String>,
    /// Indexed by flat node, then fibre coordinate.
    pub values: Vec<Vec<f64>>,
    /// 4 for the classical Runge-Kutta sweep, 0 for tabulated sections.
    pub order: usize,
    pub start: Vec<f64>,
    /// Largest difference between the two sweep orders.
    pub defect: f64,
}

impl GridSection {
    /// Tabulate a known section `x -> s(x)`.
    pub fn tabulate(chart: &Chart, grid: Grid, f: impl Fn(&[f64]) -> Vec<f64>) -> GridSection {
        let values: Vec<Vec<f64>> = (0..grid.len()).map(|k| f(&grid.point(&grid.index(k)))).collect();
        GridSection {
            names: chart.fibre_names().map(str::to_string).collect(),
            start: values[0].clone(),
            grid,
            values,
            order: 0,
            defect: 0.0,
        }
    }

    pub fn value(&self, idx: &[usize]) -> &[f64] {
        &self.values[self.grid.flat(idx)]
    }

    /// Plain-text table: base coordinates then fibre values, one node per
    /// line with axis 1 fastest, 17 significant digits.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for k in 0..self.grid.len() {
            let x = self.grid.point(&self.grid.index(k));
            let cells: Vec<String> = x.iter().chain(&self.values[k]).map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", cells.join(" ")).expect("write to string");
        }
        out
    }
}

fn compile_all(rows: &[Vec<Expr>]) -> Result<Vec<Vec<CompiledExpr>>, SymError> {
    rows.iter().map(|r| r.iter().map(Expr::compile).collect()).collect()
}

/// Integrate `ds^a/dx^mu = f[a][mu](x, s)` from `start` at the lower corner
/// of `grid`. `constraints` are checked at the start point.
pub fn integrate_section(
    chart: &Chart,
    f: &[Vec<Expr>],
    start: &[f64],
    grid: &Grid,
    constraints: &[Expr],
) -> Result<GridSection, IntegrateError> {
    let m = chart.base_dim();
    let nf = chart.fibre_dim();
    if grid.axes.len() != m {
        return Err(IntegrateError::GridShape {
            expected: m,
            found: grid.axes.len(),
        });
    }
    if start.len() != nf {
        return Err(IntegrateError::StartShape {
            expected: nf,
            found: start.len(),
        });
    }
    let origin: Vec<f64> = grid.axes.iter().map(|a| a.start).chain(start.iter().copied()).collect();
    for c in constraints {
        let v = c.compile()?.eval(&origin);
        if !(v.abs() <= START_TOL) {
            return Err(IntegrateError::StartOffConstraint {
                constraint: c.to_string(),
                value: v,
            });
        }
    }
    let rhs = compile_all(f)?;
    let forward: Vec<usize> = (0..m).collect();
    let values = sweep(&rhs, start, grid, &forward)?;
    let defect = if m > 1 {
        let backward: Vec<usize> = (0..m).rev().collect();
        let other = sweep(&rhs, start, grid, &backward)?;
        values
            .iter()
            .zip(&other)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(GridSection {
        grid: grid.clone(),
        names: chart.fibre_names().map(str::to_string).collect(),
        values,
        order: 4,
        start: start.to_vec(),
        defect,
    })
}

/// Fill the grid by integrating along the axes in the given order.
fn sweep(rhs: &[Vec<CompiledExpr>], start: &[f64], grid: &Grid, order: &[usize]) -> Result<Vec<Vec<f64>>, IntegrateError> {
    let m = grid.axes.len();
    let mut values: Vec<Option<Vec<f64>>> = vec![None; grid.len()];
    values[0] = Some(start.to_vec());
    // nodes reached so far, as index vectors
    let mut frontier = vec![vec![0usize; m]];
    for &axis in order {
        let mut next = Vec::with_capacity(frontier.len() * grid.axes[axis].nodes);
        for base in frontier {
            let mut idx = base.clone();
            let mut s = values[grid.flat(&idx)].clone().expect("seeded node");
            next.push(idx.clone());
            for i in 1..grid.axes[axis].nodes {
                let x = grid.point(&idx);
                s = rk4_step(rhs, axis, &x, &s, grid.axes[axis].step);
                idx[axis] = i;
                if let Some(v) = s.iter().find(|v| !(v.abs() <= BLOW_UP)) {
                    return Err(IntegrateError::BlowUp {
                        node: idx.clone(),
                        value: *v,
                    });
                }
                values[grid.flat(&idx)] = Some(s.clone());
                next.push(idx.clone());
            }
        }
        frontier = next;
    }
    Ok(values.into_iter().map(|v| v.expect("every node reached")).collect())
}

fn rk4_step(rhs: &[Vec<CompiledExpr>], axis: usize, x: &[f64], s: &[f64], h: f64) -> Vec<f64> {
    let eval = |t: f64, s: &[f64]| -> Vec<f64> {
        let mut pt: Vec<f64> = x.to_vec();
        pt[axis] += t;
        pt.extend_from_slice(s);
        rhs.iter().map(|row| row[axis].eval(&pt)).collect()
    };
    let shift = |k: &[f64], c: f64| -> Vec<f64> { s.iter().zip(k).map(|(a, b)| a + c * b).collect() };
    let k1 = eval(0.0, s);
    let k2 = eval(h / 2.0, &shift(&k1, h / 2.0));
    let k3 = eval(h / 2.0, &shift(&k2, h / 2.0));
    let k4 = eval(h, &shift(&k3, h));
    (0..s.len())
        .map(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualStats {
    /// Largest absolute residual over the interior nodes and fields.
    pub max: f64,
    /// `sqrt(sum r^2 * cell volume)` over the same nodes.
    pub l2: f64,
    pub nodes: usize,
}

/// Evaluate `d/dx^a (dL/dv^A_a) - dL/dy^A` along a section by central
/// differences. A section over the jet chart supplies the velocities; a
/// section with only the field values gets them by central differences too.
pub fn numeric_el_check(sys: &LagrangianSystem, sec: &GridSection) -> Result<ResidualStats, IntegrateError> {
    let chart = &sys.chart;
    let (m, n) = (chart.base_dim(), chart.field_count());
    if !matches!(chart.kind(), ChartKind::FirstJet { .. }) {
        return Err(IntegrateError::ChartMismatch("not a first-jet chart".into()));
    }
    let grid = &sec.grid;
    if grid.axes.len() != m {
        return Err(IntegrateError::GridShape {
            expected: m,
            found: grid.axes.len(),
        });
    }
    let width = sec.values.first().map_or(0, Vec::len);
    let with_velocities = match width {
        w if w == chart.fibre_dim() => true,
        w if w == n => false,
        w => {
            return Err(IntegrateError::ChartMismatch(format!(
                "{w} values per node, expected {n} or {}",
                chart.fibre_dim()
            )))
        }
    };
    // margin on each side: one for the divergence, one more for velocities
    let margin = if with_velocities { 1 } else { 2 };
    for (axis, a) in grid.axes.iter().enumerate() {
        let needed = MIN_NODES.max(2 * margin + 1);
        if a.nodes < needed {
            return Err(IntegrateError::TooCoarse {
                axis,
                needed,
                found: a.nodes,
            });
        }
    }
    let momenta: Vec<Vec<CompiledExpr>> = (0..n)
        .map(|a| {
            (0..m)
                .map(|mu| sys.lagrangian.diff(&chart.coord(chart.block_pos(a, mu))).compile())
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let force: Vec<CompiledExpr> = (0..n)
        .map(|a| sys.lagrangian.diff(&chart.coord(chart.field_pos(a))).compile())
        .collect::<Result<_, _>>()?;

    // full jet-chart point at a node
    let point = |idx: &[usize]| -> Vec<f64> {
        let mut pt = grid.point(idx);
        let s = sec.value(idx);
        if with_velocities {
            pt.extend_from_slice(s);
        } else {
            pt.extend_from_slice(s);
            for a in 0..n {
                for mu in 0..m {
                    let (mut up, mut down) = (idx.to_vec(), idx.to_vec());
                    up[mu] += 1;
                    down[mu] -= 1;
                    pt.push((sec.value(&up)[a] - sec.value(&down)[a]) / (2.0 * grid.axes[mu].step));
                }
            }
        }
        pt
    };

    let cell: f64 = grid.axes.iter().map(|a| a.step).product();
    let (mut max, mut sum, mut nodes) = (0.0f64, 0.0f64, 0usize);
    for k in 0..grid.len() {
        let idx = grid.index(k);
        let interior = idx
            .iter()
            .zip(&grid.axes)
            .all(|(i, a)| *i >= margin && *i + margin < a.nodes);
        if !interior {
            continue;
        }
        nodes += 1;
        let here = point(&idx);
        for a in 0..n {
            let mut r = -force[a].eval(&here);
            for mu in 0..m {
                let (mut up, mut down) = (idx.clone(), idx.clone());
                up[mu] += 1;
                down[mu] -= 1;
                let dp = momenta[a][mu].eval(&point(&up)) - momenta[a][mu].eval(&point(&down));
                r += dp / (2.0 * grid.axes[mu].step);
            }
            max = max.max(r.abs());
            sum += r * r * cell;
        }
    }
    Ok(ResidualStats {
        max,
        l2: sum.sqrt(),
        nodes,
    })
}

/// Least-squares slope of `log err` against `log h`.
pub fn observed_order(h: &[f64], err: &[f64]) -> f64 {
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

#[cfg(test)]
mod tests;
