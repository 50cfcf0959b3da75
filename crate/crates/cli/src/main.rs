//! `multisym`: analyze pre-multisymplectic models from TOML files.
//!
//! Exit codes: 0 final constraint set found (or every check passed),
//! 2 no solution, 3 ambiguous stratification or generation limit,
//! 1 input error, 4 a failed check.

mod checks;
mod model;
mod numeric;
mod pipeline;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use model::{GridSpec, Model};
use multisym::integrate::{numeric_el_check, Axis, Grid};

const EXIT_INPUT: u8 = 1;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "multisym", version, about = "Constraint and integrability analysis of pre-multisymplectic field theories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Structured,
}

#[derive(clap::Args)]
struct Common {
    /// Model file
    file: PathBuf,
    /// Override `options.max_generations`
    #[arg(long)]
    max_generations: Option<usize>,
    /// Override `options.seed`
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report here instead of standard output
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Run the constraint and integrability algorithms
    Analyze(Common),
    /// Run the invariant checks applicable to the model
    Check(Common),
    /// Integrate the flat solution over a grid and print the node table
    Integrate {
        #[command(flatten)]
        common: Common,
        /// Start values at the lower grid corner, `name=value,...`
        #[arg(long)]
        start: Option<String>,
        /// Grid as `lo:hi:nodes`, one per base axis separated by commas, or a
        /// single one for every axis
        #[arg(long)]
        grid: Option<String>,
    },
}

struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn input(msg: impl ToString) -> Failure {
        Failure {
            code: EXIT_INPUT,
            msg: msg.to_string(),
        }
    }
}

fn load(c: &Common) -> Result<Model, Failure> {
    let text = fs::read_to_string(&c.file).map_err(|e| Failure::input(format!("{}: {e}", c.file.display())))?;
    let mut model = Model::parse(&text).map_err(|e| Failure::input(format!("{}: {e}", c.file.display())))?;
    if let Some(g) = c.max_generations {
        model.options.max_generations = g;
    }
    if let Some(s) = c.seed {
        model.options.seed = s;
    }
    Ok(model)
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::input(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn analyze(c: &Common) -> Result<u8, Failure> {
    let model = load(c)?;
    let an = pipeline::analyze(&model).map_err(Failure::input)?;
    let results = pipeline::Results::new(&model, &an);
    let text = match c.format {
        Format::Text => results.to_text(),
        Format::Structured => results.to_json(),
    };
    emit(c.output.as_deref(), &text)?;
    Ok(pipeline::exit_code(an.base.status))
}

#[derive(Serialize)]
struct CheckDto {
    name: String,
    outcome: &'static str,
    detail: String,
}

fn check(c: &Common) -> Result<u8, Failure> {
    let model = load(c)?;
    let list = checks::run_checks(&model);
    let text = match c.format {
        Format::Text => list.iter().map(|c| format!("{c}\n")).collect(),
        Format::Structured => {
            let dto: Vec<CheckDto> = list
                .iter()
                .map(|c| CheckDto {
                    name: c.name.clone(),
                    outcome: match c.outcome {
                        checks::Outcome::Pass => "pass",
                        checks::Outcome::Fail => "fail",
                        checks::Outcome::Skip => "skip",
                    },
                    detail: c.detail.clone(),
                })
                .collect();
            serde_json::to_string_pretty(&dto).expect("checks serialize") + "\n"
        }
    };
    emit(c.output.as_deref(), &text)?;
    Ok(if checks::all_pass(&list) { 0 } else { EXIT_CHECK })
}

fn parse_axis(s: &str) -> Result<(f64, f64, usize), Failure> {
    let bad = || Failure::input(format!("bad grid axis `{s}`, expected lo:hi:nodes"));
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts[..] else { return Err(bad()) };
    let (lo, hi) = (lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?);
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if n < 2 {
        return Err(bad());
    }
    Ok((lo, hi, n))
}

fn parse_grid(s: &str, m: usize) -> Result<Grid, Failure> {
    let axes: Vec<_> = s.split(',').map(parse_axis).collect::<Result<_, _>>()?;
    let axes = match axes.len() {
        1 => vec![axes[0]; m],
        k if k == m => axes,
        k => return Err(Failure::input(format!("grid has {k} axes, the model has {m} base coordinates"))),
    };
    Ok(Grid::new(axes.into_iter().map(|(lo, hi, n)| Axis::span(lo, hi, n)).collect()))
}

fn parse_start(s: &str, model: &Model, base: &mut [f64]) -> Result<(), Failure> {
    let names: Vec<&str> = model.chart.fibre_names().collect();
    for item in s.split(',').filter(|t| !t.trim().is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Failure::input(format!("bad start value `{item}`, expected name=value")))?;
        let i = names
            .iter()
            .position(|n| *n == k.trim())
            .ok_or_else(|| Failure::input(format!("`{}` is not a fibre coordinate", k.trim())))?;
        base[i] = v
            .trim()
            .parse()
            .map_err(|_| Failure::input(format!("bad number in `{item}`")))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct IntegrationDto {
    status: &'static str,
    coordinates: Vec<String>,
    rhs: Vec<Vec<String>>,
    start: Vec<f64>,
    order: usize,
    defect: f64,
    el_max: Option<f64>,
    el_l2: Option<f64>,
    table: Vec<Vec<f64>>,
}

fn integrate(c: &Common, start: Option<&str>, grid: Option<&str>) -> Result<u8, Failure> {
    let model = load(c)?;
    let m = model.chart.base_dim();
    let grid = match (grid, &model.grid) {
        (Some(g), _) => parse_grid(g, m)?,
        (None, Some(spec)) => numeric::grid(spec, spec.nodes),
        (None, None) => return Err(Failure::input(numeric::NumericError::NoGrid)),
    };
    let empty = GridSpec {
        lo: Vec::new(),
        hi: Vec::new(),
        nodes: 0,
        refine: Vec::new(),
        start: Default::default(),
    };
    let mut values = numeric::start_values(&model, model.grid.as_ref().unwrap_or(&empty));
    if let Some(s) = start {
        parse_start(s, &model, &mut values)?;
    }
    let an = pipeline::analyze(&model).map_err(Failure::input)?;
    let status = an.solution.status;
    if status != multisym::constraints::Status::FinalSubmanifoldFound {
        return Err(Failure {
            code: pipeline::exit_code(status),
            msg: numeric::NumericError::NotFinal(status).to_string(),
        });
    }
    let h = numeric::flat_section(&model, &an).map_err(|e| Failure { code: EXIT_CHECK, msg: e.to_string() })?;
    let sec = numeric::integrate(&model, &an, &grid, &values).map_err(Failure::input)?;
    let el = match &an.lagrangian {
        Some(l) => Some(numeric_el_check(&l.sys, &sec).map_err(Failure::input)?),
        None => None,
    };
    let text = match c.format {
        Format::Text => {
            let mut t = format!("# defect {:.6e}\n", sec.defect);
            if let Some(r) = &el {
                t += &format!("# euler-lagrange residual max {:.6e} l2 {:.6e}\n", r.max, r.l2);
            }
            let header: Vec<&str> = model.chart.names().collect();
            t += &format!("# {}\n", header.join(" "));
            t + &sec.to_table()
        }
        Format::Structured => {
            let dto = IntegrationDto {
                status: status.as_str(),
                coordinates: model.chart.names().map(str::to_string).collect(),
                rhs: numeric::total_rhs(&model, &h)
                    .iter()
                    .map(|row| row.iter().map(|e| e.to_string()).collect())
                    .collect(),
                start: values,
                order: sec.order,
                defect: sec.defect,
                el_max: el.as_ref().map(|r| r.max),
                el_l2: el.as_ref().map(|r| r.l2),
                table: (0..sec.grid.len())
                    .map(|k| {
                        let mut row = sec.grid.point(&sec.grid.index(k));
                        row.extend_from_slice(&sec.values[k]);
                        row
                    })
                    .collect(),
            };
            serde_json::to_string_pretty(&dto).expect("table serializes") + "\n"
        }
    };
    emit(c.output.as_deref(), &text)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(c) => analyze(c),
        Command::Check(c) => check(c),
        Command::Integrate { common, start, grid } => integrate(common, start.as_deref(), grid.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
