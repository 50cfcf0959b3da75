//! Model files: TOML documents with `[model]`, `[connection]`, `[section]`,
//! `[options]` and `[expect]` tables. Expressions are quoted strings in the
//! symbolic grammar; form coefficients are keyed by wedge names such as
//! `"dy1^dx1^dx2"`.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

use multisym::constraints::{AlgorithmOptions, DEFAULT_MAX_GENERATIONS, DEFAULT_SAMPLES};
use multisym::fieldtheory::AffineLagrangian;
use multisym::geometry::{CandidateSection, DiffForm, EhresmannConnection};
use multisym::symexpr::{parse_expr, Chart, Expr, SymError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{0}")]
    Toml(#[from] toml::de::Error),
    #[error("line {line}, column {column}: in `{key}`: {source}")]
    Expr {
        key: String,
        line: usize,
        column: usize,
        source: SymError,
    },
    #[error("line {line}, column {column}: {msg}")]
    At { line: usize, column: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Lagrangian,
    Hamiltonian,
    Premultisymplectic,
    Affine,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Lagrangian => "lagrangian",
            Kind::Hamiltonian => "hamiltonian",
            Kind::Premultisymplectic => "premultisymplectic",
            Kind::Affine => "affine",
        }
    }
}

type Src = Spanned<String>;
type Coeffs = BTreeMap<String, Src>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    model: RawModel,
    #[serde(default)]
    connection: BTreeMap<String, Vec<Src>>,
    #[serde(default)]
    section: BTreeMap<String, Vec<Src>>,
    #[serde(default)]
    options: RawOptions,
    #[serde(default)]
    expect: RawExpect,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: Kind,
    base: Vec<String>,
    fields: Vec<String>,
    lagrangian: Option<Src>,
    hamiltonian: Option<Src>,
    omega: Option<Coeffs>,
    a: Option<Src>,
    f: Option<Vec<Vec<Src>>>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptions {
    max_generations: Option<usize>,
    seed: Option<u64>,
    samples: Option<usize>,
    grid: Option<RawGrid>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    nodes: usize,
    #[serde(default)]
    refine: Vec<usize>,
    #[serde(default)]
    start: BTreeMap<String, f64>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExpect {
    gamma: Option<Coeffs>,
    omega_conn: Option<Coeffs>,
    constraints: Option<Vec<Vec<Src>>>,
}

pub enum Payload {
    Lagrangian(Expr),
    Hamiltonian(Expr),
    Omega(DiffForm),
    Affine(AffineLagrangian),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub nodes: usize,
    /// Node counts for the convergence check, coarse to fine.
    pub refine: Vec<usize>,
    /// Fibre values at the lower corner, by coordinate name.
    pub start: BTreeMap<String, f64>,
}

/// Golden values the `check` command compares against.
#[derive(Default)]
pub struct Expect {
    pub gamma: Option<DiffForm>,
    pub omega_conn: Option<DiffForm>,
    pub constraints: Option<Vec<Vec<Expr>>>,
}

pub struct Model {
    pub kind: Kind,
    pub chart: Chart,
    pub payload: Payload,
    pub connection: EhresmannConnection,
    /// A chosen member of the solution family, used by `integrate`.
    pub section: Option<CandidateSection>,
    pub options: AlgorithmOptions,
    pub grid: Option<GridSpec>,
    pub expect: Expect,
}

/// Byte offset to 1-based line and column.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(offset, |i| offset - i - 1) + 1;
    (line, column)
}

struct Ctx<'a> {
    text: &'a str,
    chart: &'a Chart,
}

impl Ctx<'_> {
    fn at(&self, span: Range<usize>, msg: String) -> ModelError {
        let (line, column) = line_col(self.text, span.start);
        ModelError::At { line, column, msg }
    }

    fn expr(&self, key: &str, src: &Src) -> Result<Expr, ModelError> {
        parse_expr(src.get_ref(), self.chart).map_err(|e| {
            // offsets inside the string start after the opening quote
            let inner = match &e {
                SymError::Syntax { pos, .. } | SymError::UnknownSymbol { pos, .. } => *pos,
                _ => 0,
            };
            let (line, column) = line_col(self.text, src.span().start + 1 + inner);
            ModelError::Expr {
                key: key.to_string(),
                line,
                column,
                source: e,
            }
        })
    }

    /// Rows of `m` expressions keyed by fibre coordinate; missing rows are zero.
    fn fibre_rows(&self, table: &str, rows: &BTreeMap<String, Vec<Src>>) -> Result<Vec<Vec<Expr>>, ModelError> {
        let m = self.chart.base_dim();
        let fibre: Vec<&str> = self.chart.fibre_names().collect();
        let mut out = vec![vec![Expr::zero(); m]; fibre.len()];
        for (name, row) in rows {
            let Some(a) = fibre.iter().position(|f| f == name) else {
                return Err(ModelError::Invalid(format!(
                    "[{table}]: `{name}` is not a fibre coordinate (expected one of {})",
                    fibre.join(", ")
                )));
            };
            if row.len() != m {
                let span = row.first().map_or(0..0, |s| s.span());
                return Err(self.at(span, format!("[{table}] {name}: expected {m} entries, got {}", row.len())));
            }
            for (mu, src) in row.iter().enumerate() {
                out[a][mu] = self.expr(&format!("{table}.{name}[{mu}]"), src)?;
            }
        }
        Ok(out)
    }

    /// A form from coefficients keyed by wedge names.
    fn form(&self, table: &str, degree: usize, coeffs: &Coeffs) -> Result<DiffForm, ModelError> {
        let dim = self.chart.dim();
        let mut out = DiffForm::zero(dim, degree);
        let mut seen = BTreeSet::new();
        for (key, src) in coeffs {
            let mut positions = Vec::new();
            for part in key.split('^') {
                let name = part.trim().strip_prefix('d').unwrap_or("");
                let p = self.chart.position(name).ok_or_else(|| {
                    self.at(src.span(), format!("{table}: `{part}` in `{key}` is not a coordinate differential"))
                })?;
                positions.push(p);
            }
            if positions.len() != degree {
                return Err(self.at(
                    src.span(),
                    format!("{table}: `{key}` has degree {}, expected {degree}", positions.len()),
                ));
            }
            let mut sorted = positions.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != positions.len() {
                return Err(self.at(src.span(), format!("{table}: `{key}` repeats a differential")));
            }
            if !seen.insert(sorted) {
                return Err(self.at(src.span(), format!("{table}: `{key}` duplicates another key")));
            }
            let basis = DiffForm::basis(dim, &positions).expect("distinct positions in range");
            out = out.add(&basis.scale(&self.expr(&format!("{table}.{key}"), src)?));
        }
        Ok(out)
    }
}

fn require<'a, T>(v: &'a Option<T>, kind: Kind, key: &str) -> Result<&'a T, ModelError> {
    v.as_ref()
        .ok_or_else(|| ModelError::Invalid(format!("a {} model needs `model.{key}`", kind.as_str())))
}

fn forbid<T>(v: &Option<T>, kind: Kind, key: &str) -> Result<(), ModelError> {
    match v {
        Some(_) => Err(ModelError::Invalid(format!(
            "`model.{key}` does not apply to a {} model",
            kind.as_str()
        ))),
        None => Ok(()),
    }
}

impl Model {
    pub fn parse(text: &str) -> Result<Model, ModelError> {
        let raw: RawFile = toml::from_str(text)?;
        let RawModel {
            kind,
            base,
            fields,
            lagrangian,
            hamiltonian,
            omega,
            a,
            f,
        } = raw.model;
        let chart = match kind {
            Kind::Lagrangian => Chart::first_jet(&base, &fields),
            Kind::Hamiltonian => Chart::momentum(&base, &fields),
            Kind::Premultisymplectic | Kind::Affine => Chart::plain(&base, &fields),
        }
        .map_err(|e| ModelError::Invalid(e.to_string()))?;
        let ctx = Ctx { text, chart: &chart };
        let m = chart.base_dim();

        let keys = [
            (lagrangian.is_some(), "lagrangian", Kind::Lagrangian),
            (hamiltonian.is_some(), "hamiltonian", Kind::Hamiltonian),
            (omega.is_some(), "omega", Kind::Premultisymplectic),
            (a.is_some(), "a", Kind::Affine),
            (f.is_some(), "f", Kind::Affine),
        ];
        for (present, key, owner) in keys {
            if owner != kind {
                forbid(&present.then_some(()), kind, key)?;
            }
        }
        let payload = match kind {
            Kind::Lagrangian => Payload::Lagrangian(ctx.expr("model.lagrangian", require(&lagrangian, kind, "lagrangian")?)?),
            Kind::Hamiltonian => {
                Payload::Hamiltonian(ctx.expr("model.hamiltonian", require(&hamiltonian, kind, "hamiltonian")?)?)
            }
            Kind::Premultisymplectic => Payload::Omega(ctx.form("model.omega", m + 1, require(&omega, kind, "omega")?)?),
            Kind::Affine => {
                let a = ctx.expr("model.a", require(&a, kind, "a")?)?;
                let rows = require(&f, kind, "f")?;
                if rows.len() != m || rows.iter().any(|r| r.len() != fields.len()) {
                    return Err(ModelError::Invalid(format!(
                        "model.f must list {m} rows of {} coefficients f^mu_B",
                        fields.len()
                    )));
                }
                let f = rows
                    .iter()
                    .enumerate()
                    .map(|(mu, r)| {
                        r.iter()
                            .enumerate()
                            .map(|(b, s)| ctx.expr(&format!("model.f[{mu}][{b}]"), s))
                            .collect()
                    })
                    .collect::<Result<_, _>>()?;
                Payload::Affine(AffineLagrangian::new(&chart, a, f).map_err(|e| ModelError::Invalid(e.to_string()))?)
            }
        };

        let connection = EhresmannConnection::new(&chart, ctx.fibre_rows("connection", &raw.connection)?)
            .map_err(|e| ModelError::Invalid(e.to_string()))?;
        let section = if raw.section.is_empty() {
            None
        } else {
            let rows = ctx.fibre_rows("section", &raw.section)?;
            Some(CandidateSection::new(&chart, rows).map_err(|e| ModelError::Invalid(e.to_string()))?)
        };

        let defaults = AlgorithmOptions::default();
        let options = AlgorithmOptions {
            max_generations: raw.options.max_generations.unwrap_or(DEFAULT_MAX_GENERATIONS),
            seed: raw.options.seed.unwrap_or(defaults.seed),
            samples: raw.options.samples.unwrap_or(DEFAULT_SAMPLES),
            frozen: Vec::new(),
        };
        let grid = raw.options.grid.map(|g| grid_spec(&chart, g)).transpose()?;

        let expect = Expect {
            gamma: raw.expect.gamma.as_ref().map(|c| ctx.form("expect.gamma", 1, c)).transpose()?,
            omega_conn: raw
                .expect
                .omega_conn
                .as_ref()
                .map(|c| ctx.form("expect.omega_conn", m + 1, c))
                .transpose()?,
            constraints: raw
                .expect
                .constraints
                .as_ref()
                .map(|gens| {
                    gens.iter()
                        .enumerate()
                        .map(|(g, list)| {
                            list.iter()
                                .map(|s| ctx.expr(&format!("expect.constraints[{g}]"), s))
                                .collect()
                        })
                        .collect::<Result<Vec<Vec<Expr>>, _>>()
                })
                .transpose()?,
        };

        Ok(Model {
            kind,
            chart,
            payload,
            connection,
            section,
            options,
            grid,
            expect,
        })
    }
}

fn grid_spec(chart: &Chart, g: RawGrid) -> Result<GridSpec, ModelError> {
    let m = chart.base_dim();
    if g.lo.len() != m || g.hi.len() != m {
        return Err(ModelError::Invalid(format!("options.grid: lo and hi need {m} entries")));
    }
    if g.nodes < 2 || g.refine.iter().any(|&n| n < 2) {
        return Err(ModelError::Invalid("options.grid: an axis needs at least 2 nodes".into()));
    }
    if let Some(bad) = g.start.keys().find(|k| !chart.fibre_names().any(|f| f == k.as_str())) {
        return Err(ModelError::Invalid(format!("options.grid.start: `{bad}` is not a fibre coordinate")));
    }
    Ok(GridSpec {
        lo: g.lo,
        hi: g.hi,
        nodes: g.nodes,
        refine: g.refine,
        start: g.start,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
[model]
kind = "lagrangian"
base = ["x1", "x2"]
fields = ["y1", "y2"]
lagrangian = "x2*(y1*v1_2 + y2*v2_2) + y1*y2"

[options]
seed = 3
"#;

    #[test]
    fn parses_a_lagrangian_model() {
        let m = Model::parse(EXAMPLE).unwrap();
        assert_eq!(m.kind, Kind::Lagrangian);
        assert_eq!(m.chart.dim(), 8);
        assert_eq!(m.options.seed, 3);
        assert!(m.connection.is_trivial());
        assert!(m.section.is_none() && m.grid.is_none());
    }

    #[test]
    fn expression_errors_carry_positions() {
        let text = EXAMPLE.replace("y1*y2\"", "y1*z9\"");
        let Err(err) = Model::parse(&text) else { panic!("expected a parse error") };
        match err {
            ModelError::Expr { line, column, .. } => {
                assert_eq!(line, 6);
                let col_of_z = text.lines().nth(5).unwrap().find("z9").unwrap() + 1;
                assert_eq!(column, col_of_z);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn toml_errors_are_reported() {
        let Err(err) = Model::parse("[model\nkind = 1") else { panic!("expected a parse error") };
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn payload_must_match_the_kind() {
        let text = EXAMPLE.replace("lagrangian = ", "hamiltonian = ");
        assert!(matches!(Model::parse(&text), Err(ModelError::Invalid(_))));
        let text = EXAMPLE.replace("kind = \"lagrangian\"", "kind = \"affine\"");
        assert!(matches!(Model::parse(&text), Err(ModelError::Invalid(_))));
    }

    #[test]
    fn omega_keys() {
        let base = "[model]\nkind = \"premultisymplectic\"\nbase = [\"x1\", \"x2\"]\nfields = [\"y1\", \"y2\"]\n";
        let ok = format!("{base}omega = {{ \"dy1^dx1^dx2\" = \"y1\", \"dx1^dy2^dx2\" = \"1\" }}\n");
        let m = Model::parse(&ok).unwrap();
        let Payload::Omega(w) = &m.payload else { panic!() };
        // dx1^dy2^dx2 = -dy2^dx1^dx2
        assert_eq!(w.component(&[3, 0, 1]).to_string(), "-1");
        for bad in ["\"dy1^dx1\" = \"1\"", "\"dq^dx1^dx2\" = \"1\"", "\"dy1^dy1^dx2\" = \"1\""] {
            let text = format!("{base}omega = {{ {bad} }}\n");
            assert!(matches!(Model::parse(&text), Err(ModelError::At { .. })), "{bad}");
        }
        let dup = format!("{base}omega = {{ \"dy1^dx1^dx2\" = \"1\", \"dx1^dy1^dx2\" = \"1\" }}\n");
        assert!(Model::parse(&dup).is_err());
    }

    #[test]
    fn connection_and_grid() {
        let text = format!(
            "{EXAMPLE}\n[options.grid]\nlo = [0, 0]\nhi = [1, 1]\nnodes = 9\nstart = {{ y1 = 1.0 }}\n\n[connection]\ny1 = [\"x1\", \"0\"]\n"
        );
        let m = Model::parse(&text).unwrap();
        assert!(!m.connection.is_trivial());
        assert_eq!(m.grid.unwrap().start["y1"], 1.0);
        let bad = text.replace("y1 = [\"x1\", \"0\"]", "y1 = [\"x1\"]");
        assert!(Model::parse(&bad).is_err());
    }
}
