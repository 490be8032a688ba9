use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn ocscape(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_ocscape"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn reproduce_example1_lists_four_minima() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout) = ocscape(dir.path(), &["reproduce", "example1"]);
    assert_eq!(code, 0, "{stdout}");
    let r = read_json(&dir.path().join("reproduce-example1.json"));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["status"], "ok");
    let minima: Vec<&Value> = r["result"]["census"]["records"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|rec| rec["class"] == "strict-local-min")
        .collect();
    assert_eq!(minima.len(), 4);
    assert!(r["verdicts"].as_array().unwrap().iter().all(|v| v["passed"] == true));
    assert!(dir.path().join("reproduce-example1.meta.json").exists());
}

#[test]
fn zero_budget_census_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "zero.toml", "[problem]\nname = \"example1\"\n[census]\nstarts_per_axis = 0\nrandom_starts = 0\n");
    let (code, _) = ocscape(dir.path(), &["census", "--config", &cfg]);
    assert_eq!(code, 2);
    let r = read_json(&dir.path().join("census.json"));
    assert_eq!(r["status"], "validation_error");
    assert_eq!(r["error"]["code"], "invalid");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "typo.toml", "[census]\nstart_per_axis = 5\n");
    let (code, _) = ocscape(dir.path(), &["census", "--problem", "example1", "--config", &cfg]);
    assert_eq!(code, 2);
}

#[test]
fn unknown_problem_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = ocscape(dir.path(), &["census", "--problem", "example9"]);
    assert_eq!(code, 2);
    assert_eq!(read_json(&dir.path().join("census.json"))["error"]["code"], "unknown");
}

#[test]
fn stochastic_grid_has_one_row_per_lattice_node() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "grid.toml",
        r#"
[problem]
name = "stochastic-counterexample"
[grid]
base = [0.0, 0.0, 0.0]
axes = [
  { coord = 1, lower = -2.0, upper = 2.0, count = 201 },
  { coord = 2, lower = -2.0, upper = 2.0, count = 201 },
]
"#,
    );
    let (code, _) = ocscape(dir.path(), &["grid", "--config", &cfg, "--format", "csv", "--quadrature-order", "8"]);
    assert_eq!(code, 0);
    assert!(!dir.path().join("grid.json").exists());
    let mut rdr = csv::Reader::from_path(dir.path().join("grid.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["coord1", "coord2", "objective"]);
    let rows: Vec<Vec<f64>> = rdr.records().map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 40401);
    // Row-major: the second coordinate varies fastest.
    assert_eq!(&rows[1][..2], &[-2.0, -1.98]);
    assert_eq!(&rows[201][..2], &[-1.98, -2.0]);
    // With every parameter zero only E[w0²] = 5/9 remains.
    let centre = &rows[100 * 201 + 100];
    assert_eq!(&centre[..2], &[0.0, 0.0]);
    assert!((centre[2] - 5.0 / 9.0).abs() < 1e-12, "{}", centre[2]);
}

#[test]
fn identical_config_gives_identical_report() {
    let root = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let cwd = root.path().join(run);
        std::fs::create_dir_all(&cwd).unwrap();
        let status = Command::new(env!("CARGO_BIN_EXE_ocscape"))
            .args(["census", "--problem", "example2", "--seed", "11", "--out", "out"])
            .current_dir(&cwd)
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        reports.push(std::fs::read(cwd.join("out/census.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn inline_problem_matches_registered_example() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "inline.toml",
        r#"
[problem.inline]
name = "dsl-example"
horizon = 2
state_dim = 1
action_dim = 1
x0 = [0.0]
action_lower = [-10.0]
action_upper = [10.0]
eval_lower = [-2.0]
eval_upper = [2.0]
dynamics = ["x0 + u0"]
stage_costs = ["0", "0.25*u0^4 - (3*x0+4)/3*u0^3 + (3*x0^2+8*x0+3)/2*u0^2 - x0*(x0+1)*(x0+3)*u0 + exp(x0^4)"]
"#,
    );
    let sub = dir.path().join("inline");
    let (code, _) = ocscape(&sub, &["census", "--config", &cfg]);
    assert_eq!(code, 0);
    let sub2 = dir.path().join("registered");
    assert_eq!(ocscape(&sub2, &["census", "--problem", "example1"]).0, 0);
    let points = |p: &Path| -> Vec<(Vec<f64>, String)> {
        read_json(&p.join("census.json"))["result"]["census"]["records"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| (serde_json::from_value(r["point"].clone()).unwrap(), r["class"].as_str().unwrap().to_string()))
            .collect()
    };
    let (x, y) = (points(&sub), points(&sub2));
    assert_eq!(x.len(), y.len());
    for ((p, c), (q, d)) in x.iter().zip(&y) {
        assert_eq!(c, d);
        assert!(p.iter().zip(q).all(|(a, b)| (a - b).abs() < 1e-8), "{p:?} vs {q:?}");
    }
}

#[test]
fn failed_reproduction_exits_with_numerical_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "lqr.toml", "[lqr]\nseeds = 2\n");
    let (code, stdout) = ocscape(dir.path(), &["reproduce", "lqr", "--config", &cfg]);
    let r = read_json(&dir.path().join("reproduce-lqr.json"));
    let failed: Vec<&Value> = r["verdicts"].as_array().unwrap().iter().filter(|v| v["passed"] == false).collect();
    assert_eq!(code, if failed.is_empty() { 0 } else { 3 }, "{stdout}");
    assert_eq!(r["exit_code"], code);
}

#[test]
fn certify_dp_reports_containment() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = ocscape(dir.path(), &["certify-dp", "--problem", "detparam-counterexample"]);
    assert_eq!(code, 0);
    let r = read_json(&dir.path().join("certify-dp.json"));
    let pts = r["result"]["points"].as_array().unwrap();
    let verdict = |z: [f64; 2]| pts.iter().find(|p| p["point"] == serde_json::json!(z)).unwrap()["dp_verdict"].clone();
    assert_eq!(verdict([1.0, -1.0]), "local-min");
    assert_eq!(verdict([1.0, 1.0]), "neither");
}

#[test]
fn default_config_round_trips_through_toml() {
    let cfg = ocscape_cli::RunConfig::default();
    let text = toml::to_string(&cfg).unwrap();
    assert_eq!(ocscape_cli::RunConfig::from_toml(&text).unwrap(), cfg);
}
