use std::collections::HashSet;
use std::sync::Arc;

use serde::Serialize;

use super::poly::{Coord, Var};
use super::{Expr, SymError};

/// Largest chart dimension: multi-indices are stored as `u64` bitmasks.
pub const MAX_DIM: usize = 63;

/// How the fibre block of a chart is structured.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ChartKind {
    Plain,
    /// Fibre block `y^A` followed by velocities `v<A>_<mu>`, A-major.
    FirstJet { fields: usize },
    /// Fibre block `y^A` followed by momenta `p<A>_<mu>`, A-major.
    Momentum { fields: usize },
}

/// A fibred coordinate system: base coordinates first, then fibre coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chart {
    base: Vec<Arc<str>>,
    fibre: Vec<Arc<str>>,
    kind: ChartKind,
}

fn valid_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Chart {
    fn build(base: Vec<String>, fibre: Vec<String>, kind: ChartKind) -> Result<Chart, SymError> {
        if base.is_empty() {
            return Err(SymError::InvalidChart("at least one base coordinate is required".into()));
        }
        if fibre.is_empty() {
            return Err(SymError::InvalidChart("at least one fibre coordinate is required".into()));
        }
        if base.len() + fibre.len() > MAX_DIM {
            return Err(SymError::InvalidChart(format!(
                "chart dimension {} exceeds {MAX_DIM}",
                base.len() + fibre.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in base.iter().chain(&fibre) {
            if !valid_ident(name) {
                return Err(SymError::InvalidChart(format!("`{name}` is not a valid identifier")));
            }
            if !seen.insert(name.as_str()) {
                return Err(SymError::InvalidChart(format!("duplicate coordinate `{name}`")));
            }
        }
        Ok(Chart {
            base: base.into_iter().map(Arc::from).collect(),
            fibre: fibre.into_iter().map(Arc::from).collect(),
            kind,
        })
    }

    pub fn plain<S: AsRef<str>>(base: &[S], fibre: &[S]) -> Result<Chart, SymError> {
        Chart::build(
            base.iter().map(|s| s.as_ref().to_string()).collect(),
            fibre.iter().map(|s| s.as_ref().to_string()).collect(),
            ChartKind::Plain,
        )
    }

    /// First-jet chart `(x^mu, y^A, v<A>_<mu>)`.
    pub fn first_jet<S: AsRef<str>>(base: &[S], fields: &[S]) -> Result<Chart, SymError> {
        Chart::with_block(base, fields, 'v', |n| ChartKind::FirstJet { fields: n })
    }

    /// Momentum chart `(x^mu, y^A, p<A>_<mu>)`.
    pub fn momentum<S: AsRef<str>>(base: &[S], fields: &[S]) -> Result<Chart, SymError> {
        Chart::with_block(base, fields, 'p', |n| ChartKind::Momentum { fields: n })
    }

    fn with_block<S: AsRef<str>>(
        base: &[S],
        fields: &[S],
        prefix: char,
        kind: impl Fn(usize) -> ChartKind,
    ) -> Result<Chart, SymError> {
        let m = base.len();
        let n = fields.len();
        let mut fibre: Vec<String> = fields.iter().map(|s| s.as_ref().to_string()).collect();
        for a in 1..=n {
            for mu in 1..=m {
                fibre.push(format!("{prefix}{a}_{mu}"));
            }
        }
        Chart::build(base.iter().map(|s| s.as_ref().to_string()).collect(), fibre, kind(n))
    }

    pub fn kind(&self) -> &ChartKind {
        &self.kind
    }

    /// Base dimension `m`.
    pub fn base_dim(&self) -> usize {
        self.base.len()
    }

    pub fn fibre_dim(&self) -> usize {
        self.fibre.len()
    }

    pub fn dim(&self) -> usize {
        self.base.len() + self.fibre.len()
    }

    /// Number of fields `n` (the `y^A` block) for jet and momentum charts; the
    /// whole fibre for plain charts.
    pub fn field_count(&self) -> usize {
        match self.kind {
            ChartKind::Plain => self.fibre.len(),
            ChartKind::FirstJet { fields } | ChartKind::Momentum { fields } => fields,
        }
    }

    pub fn base_names(&self) -> impl Iterator<Item = &str> {
        self.base.iter().map(|s| &**s)
    }

    pub fn fibre_names(&self) -> impl Iterator<Item = &str> {
        self.fibre.iter().map(|s| &**s)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.base_names().chain(self.fibre_names())
    }

    pub fn name(&self, pos: usize) -> &str {
        if pos < self.base.len() {
            &self.base[pos]
        } else {
            &self.fibre[pos - self.base.len()]
        }
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names().position(|n| n == name)
    }

    pub fn coord(&self, pos: usize) -> Coord {
        let name = if pos < self.base.len() {
            self.base[pos].clone()
        } else {
            self.fibre[pos - self.base.len()].clone()
        };
        Coord { pos, name }
    }

    pub fn coords(&self) -> Vec<Coord> {
        (0..self.dim()).map(|i| self.coord(i)).collect()
    }

    pub fn var(&self, pos: usize) -> Var {
        Var::Coord(self.coord(pos))
    }

    /// The coordinate function at `pos` as an expression.
    pub fn x(&self, pos: usize) -> Expr {
        Expr::from_var(self.var(pos))
    }

    pub fn symbol(&self, name: &str) -> Result<Expr, SymError> {
        self.position(name)
            .map(|p| self.x(p))
            .ok_or_else(|| SymError::UnknownSymbol {
                name: name.to_string(),
                pos: 0,
            })
    }

    /// Chart position of the fibre coordinate with fibre index `a`.
    pub fn fibre_pos(&self, a: usize) -> usize {
        self.base.len() + a
    }

    pub fn is_vertical(&self, pos: usize) -> bool {
        pos >= self.base.len()
    }

    /// Position of `y^A` (0-based `field`).
    pub fn field_pos(&self, field: usize) -> usize {
        self.base.len() + field
    }

    /// Position of the velocity or momentum coordinate for field `A` and
    /// base direction `mu` (both 0-based). Panics on plain charts.
    pub fn block_pos(&self, field: usize, mu: usize) -> usize {
        let n = match self.kind {
            ChartKind::FirstJet { fields } | ChartKind::Momentum { fields } => fields,
            ChartKind::Plain => panic!("plain chart has no velocity or momentum block"),
        };
        self.base.len() + n + field * self.base.len() + mu
    }

    /// An opaque function of the named coordinates.
    pub fn atom(&self, name: &str, args: &[&str]) -> Result<Expr, SymError> {
        let coords = args
            .iter()
            .map(|a| {
                self.position(a).map(|p| self.coord(p)).ok_or_else(|| SymError::UnknownSymbol {
                    name: a.to_string(),
                    pos: 0,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Expr::atom(name, coords))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jet_chart_naming() {
        let c = Chart::first_jet(&["x1", "x2"], &["y1", "y2"]).unwrap();
        let names: Vec<_> = c.names().collect();
        assert_eq!(
            names,
            ["x1", "x2", "y1", "y2", "v1_1", "v1_2", "v2_1", "v2_2"]
        );
        assert_eq!(c.name(c.block_pos(1, 0)), "v2_1");
        assert_eq!(c.field_count(), 2);
    }

    #[test]
    fn rejects_bad_charts() {
        assert!(Chart::plain(&["x"], &["x"]).is_err());
        assert!(Chart::plain::<&str>(&[], &["y"]).is_err());
        assert!(Chart::plain(&["x"], &[]).is_err());
        assert!(Chart::plain(&["1x"], &["y"]).is_err());
    }
}
