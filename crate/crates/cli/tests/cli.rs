use std::process::{Command, Output};

fn cpvquad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpvquad")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn mrs_row_for_t4_is_two() {
    let o = cpvquad(&["mrs", "--t", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    let headers = rdr.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "a_plus").unwrap();
    let row = rdr.records().next().unwrap().unwrap();
    let a_plus: f64 = row[col].parse().unwrap();
    assert!((a_plus - 2.0).abs() <= 1e-8, "a_plus = {a_plus}");
}

#[test]
fn eval_linear_integrand_is_exact() {
    let o = cpvquad(&["eval", "--n", "16", "--x", "0.3", "--f", "t"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let err = v["abs_err"].as_f64().unwrap();
    assert!(err <= 1e-8, "abs_err = {err}");
    assert!(v["bound_report"]["total"].as_f64().unwrap() > 0.0);
}

#[test]
fn unknown_weight_key_is_a_validation_error() {
    let o = cpvquad(&["--weight", "freud:a=2", "mrs", "--t", "4"]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("alpha") && msg.contains("beta"), "{msg}");
}

#[test]
fn unknown_integrand_is_a_validation_error() {
    let o = cpvquad(&["cpv", "--x", "0.1", "--f", "cosh"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("runge"));
}

#[test]
fn point_outside_bounded_support_is_a_validation_error() {
    let o = cpvquad(&["--weight", "pollaczek:alpha=1,beta=1", "cpv", "--x", "1.5", "--f", "one"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn study_writes_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("converge.csv");
    let o = cpvquad(&[
        "study", "converge", "--f", "abs", "--x", "0.3,half", "--n", "8", "--out", path.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("x,n,oracle"));
    assert_eq!(text.lines().count(), 3);
    assert_eq!(stderr(&o).lines().count(), 2);
}

#[test]
fn reproduce_all_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = cpvquad(&["reproduce-all", "--only", "1", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("PASS criterion  1"));
    let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    let m: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(m["passed"], true);
    assert_eq!(m["criteria"].as_array().unwrap().len(), 1);
    assert_eq!(m["environment"]["seed"], 42);
}

#[test]
fn reproduce_all_needs_an_output_directory() {
    let o = cpvquad(&["reproduce-all", "--only", "1"]);
    assert_eq!(o.status.code(), Some(2));
}
