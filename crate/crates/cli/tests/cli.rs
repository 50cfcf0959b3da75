use std::fs;
use std::process::{Command, Output};

fn model(name: &str) -> String {
    format!("{}/models/{name}.toml", env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multisym"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write_model(dir: &tempfile::TempDir, body: &str) -> String {
    let p = dir.path().join("m.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn shipped_models_analyze_and_check() {
    for name in ["example", "harmonic", "zero", "affine", "hamiltonian"] {
        let o = run(&["analyze", &model(name)]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stderr(&o));
        let o = run(&["check", &model(name)]);
        assert_eq!(o.status.code(), Some(0), "{name}:\n{}", stdout(&o));
        assert!(!stdout(&o).contains("[FAIL]"));
    }
}

#[test]
fn worked_example_report() {
    let o = run(&["analyze", &model("example")]);
    let text = stdout(&o);
    assert!(text.contains("status: final"), "{text}");
    assert!(text.contains("y1 - y2"), "{text}");
    let o = run(&["analyze", &model("example"), "--format", "structured"]);
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["generations"][0]["constraints"][0]["expr"], "y1 - y2");
    assert_eq!(doc["splitting"]["omega_conn"], "0");
    assert_eq!(doc["integrability"]["status"], "integrable");
}

#[test]
fn corrupted_model_names_the_triple() {
    let o = run(&["check", &model("corrupted")]);
    assert_eq!(o.status.code(), Some(4));
    let text = stdout(&o);
    assert!(text.contains("[FAIL] no triple-vertical terms in Ω: Ω does not vanish on dy1^dy2^dy3"), "{text}");
    let o = run(&["analyze", &model("corrupted")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("(y1, y2, y3)"), "{}", stderr(&o));
}

#[test]
fn harmonic_convergence_check() {
    let o = run(&["check", &model("harmonic")]);
    let text = stdout(&o);
    assert!(text.contains("[PASS] integrated section is path independent"), "{text}");
    assert!(text.contains("[PASS] Euler-Lagrange residual converges at second order: order"), "{text}");
}

#[test]
fn no_solution_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_model(
        &dir,
        "[model]\nkind = \"lagrangian\"\nbase = [\"x1\", \"x2\"]\nfields = [\"y1\"]\nlagrangian = \"y1\"\n",
    );
    let o = run(&["analyze", &p]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("status: no-solution"));
}

#[test]
fn generation_limit_exits_three() {
    let o = run(&["analyze", &model("example"), "--max-generations", "0"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("status: iteration-limit"));
}

#[test]
fn parse_errors_carry_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_model(
        &dir,
        "[model]\nkind = \"lagrangian\"\nbase = [\"x1\", \"x2\"]\nfields = [\"y1\"]\nlagrangian = \"v1_1 +* 2\"\n",
    );
    let o = run(&["analyze", &p]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 5, column 21"), "{}", stderr(&o));

    let p = write_model(&dir, "[model]\nkind = \"lagrangian\"\nbase = [\"x1\"\n");
    let o = run(&["analyze", &p]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));

    let o = run(&["analyze", "/nonexistent/model.toml"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn integrate_prints_a_table() {
    let o = run(&["integrate", &model("harmonic"), "--grid", "0:1:5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# defect"));
    assert!(lines[1].starts_with("# euler-lagrange residual"));
    assert_eq!(lines[2], "# x1 x2 y1 v1_1 v1_2");
    let rows: Vec<Vec<f64>> = lines[3..]
        .iter()
        .map(|l| l.split_whitespace().map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 25);
    for r in &rows {
        let exact = (r[0] / 4.0).exp() * (r[1] / 4.0).cos();
        assert!((r[2] - exact).abs() < 1e-6, "{r:?}");
    }

    let o = run(&["integrate", &model("harmonic"), "--grid", "0:1:5", "--format", "structured"]);
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["table"].as_array().unwrap().len(), 25);
    assert_eq!(doc["order"], 4);
}

#[test]
fn integrate_rejects_a_start_off_the_constraints() {
    let o = run(&["integrate", &model("example"), "--grid", "0:1:5", "--start", "y1=1,y2=0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("y1 - y2"), "{}", stderr(&o));
    let o = run(&["integrate", &model("example"), "--grid", "0:1:5", "--start", "y1=1,y2=1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn output_is_deterministic_and_can_go_to_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let out = out.to_string_lossy();
    let a = run(&["analyze", &model("example"), "--seed", "3", "--format", "structured"]);
    let b = run(&["analyze", &model("example"), "--seed", "3", "--format", "structured", "--output", &out]);
    assert_eq!(b.status.code(), Some(0));
    assert!(b.stdout.is_empty());
    assert_eq!(a.stdout, fs::read(&*out).unwrap());
}
