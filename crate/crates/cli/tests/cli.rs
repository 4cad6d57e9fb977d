use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use murphy_core::{Axis, Curve};
use serde_json::Value;
use tempfile::TempDir;

fn murphy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_murphy")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn generate(dir: &Path, example: &str, n: &str) -> String {
    let p = dir.join(format!("ex{example}.csv"));
    let path = p.to_str().unwrap().to_string();
    let out = murphy(&["generate", "--example", example, "--seed", "1", "--n", n, "--out", &path]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn rows_named<'a>(report: &'a Value, quantity: &str) -> Vec<&'a Value> {
    report["rows"].as_array().unwrap().iter().filter(|r| r["quantity"] == quantity).collect()
}

// a calibrated predictor `good` and a noisy one; every level of `good` has
// mean response equal to its value
fn calibrated_csv() -> String {
    let mut s = String::from("id,y,good,noisy\n");
    for i in 0..60 {
        let x = 1.0 + (i % 3) as f64;
        let y = if i % 2 == 0 { x - 0.5 } else { x + 0.5 };
        let noisy = x + if i % 5 == 0 { 1.5 } else { -0.25 };
        s.push_str(&format!("r{i},{y},{x},{noisy}\n"));
    }
    s
}

#[test]
fn score_ranks_lower_loss_first() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "d.csv", &calibrated_csv());
    let r = json(&murphy(&["score", "--input", &input, "--predictors", "noisy,good", "--loss", "squared"]));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["rankings"][0]["order"], serde_json::json!(["good", "noisy"]));
    let scores = r["scores"].as_array().unwrap();
    assert_eq!(scores.len(), 2);
    assert!((scores[1]["score"].as_f64().unwrap() - 0.25).abs() < 1e-12);
}

#[test]
fn weighted_score_prefers_the_distorted_predictor() {
    let dir = TempDir::new().unwrap();
    let input = generate(dir.path(), "4", "200000");
    let r = json(&murphy(&["score", "--input", &input, "--predictors", "x1,x2", "--weighted"]));
    assert_eq!(r["rankings"][0]["by"], "weighted_score");
    assert_eq!(r["rankings"][0]["order"], serde_json::json!(["x2", "x1"]));
    let w: Vec<f64> = r["scores"].as_array().unwrap().iter().map(|s| s["weighted_score"].as_f64().unwrap()).collect();
    assert!(w[1] < w[0]);
    assert!((w[1] - 5.0 / 6.0).abs() < 5e-2, "{w:?}");
}

#[test]
fn usage_and_validation_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "d.csv", &calibrated_csv());
    assert_eq!(murphy(&["score", "--input", &input, "--predictors"]).status.code(), Some(2));
    assert_eq!(murphy(&["score", "--input", &input]).status.code(), Some(2));
    assert_eq!(murphy(&["score", "--input", &input, "--predictors", "good", "--loss", "huber:1"]).status.code(), Some(2));
    assert_eq!(murphy(&["score", "--input", &input, "--predictors", "missing"]).status.code(), Some(2));

    let bad = write(dir.path(), "bad.csv", "y,x\n1,1\n2,-3\n");
    let out = murphy(&["score", "--input", &bad, "--predictors", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&out.stderr));

    let gap = write(dir.path(), "gap.csv", "y,x\n1,1\n2,\n");
    let out = murphy(&["score", "--input", &gap, "--predictors", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let short = write(dir.path(), "short.csv", "y,x\n1,1\n2\n");
    assert_eq!(murphy(&["score", "--input", &short, "--predictors", "x"]).status.code(), Some(2));
}

#[test]
fn calibrated_input_has_no_miscalibration() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "d.csv", &calibrated_csv());
    let r = json(&murphy(&[
        "decompose", "--input", &input, "--predictors", "good", "--loss", "squared", "--loss", "tweedie:1",
        "--loss", "atoms:1.5=1,2.5=0.5",
    ]));
    for d in r["predictors"][0]["decompositions"].as_array().unwrap() {
        assert!(d["mcb"].as_f64().unwrap().abs() < 1e-12, "{d}");
        assert!(d["identity_residual"].as_f64().unwrap() <= 1e-10);
    }
}

#[test]
fn decompose_recovers_the_latent_abc() {
    let dir = TempDir::new().unwrap();
    let input = generate(dir.path(), "3", "100000");
    let out = dir.path().join("report");
    let o = murphy(&["decompose", "--input", &input, "--predictors", "x1,x2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let r: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let x1 = &r["predictors"][0];
    assert!((x1["abc"]["abc"].as_f64().unwrap() - 1.0 / 60.0).abs() < 2e-3);
    assert!(x1["max_identity_residual"].as_f64().unwrap() <= 1e-10);
    assert!(x1["gini_dsc"]["gini"].is_number());

    // curve files reproduce the reported integrals
    for p in r["predictors"].as_array().unwrap() {
        for c in p["curves"].as_array().unwrap() {
            let file = out.join(c["file"].as_str().unwrap());
            let axis = if c["kind"] == "murphy" { Axis::Threshold } else { Axis::Probability };
            let curve = Curve::<f64>::read_records(axis, std::io::BufReader::new(fs::File::open(file).unwrap())).unwrap();
            assert_eq!(curve.len(), c["points"].as_u64().unwrap() as usize);
            assert!((curve.integral() - c["integral"].as_f64().unwrap()).abs() <= 1e-12);
        }
    }
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let input = generate(dir.path(), "2", "20000");
    let again = dir.path().join("again.csv");
    murphy(&["generate", "--example", "2", "--seed", "1", "--n", "20000", "--out", again.to_str().unwrap()]);
    assert_eq!(fs::read(&input).unwrap(), fs::read(&again).unwrap());

    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = murphy(&[
            "decompose", "--input", &input, "--predictors", "x1,x2", "--loss", "tweedie:1.5", "--loss", "ecdf:x1",
            "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 9);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn identical_columns_are_equal_everywhere() {
    let dir = TempDir::new().unwrap();
    let mut text = String::from("y,a,b\n");
    for i in 0..200 {
        let x = 0.5 + (i * 37 % 101) as f64 / 50.0;
        text.push_str(&format!("{},{x},{x}\n", x * (1.0 + 0.3 * ((i % 7) as f64 - 3.0) / 3.0)));
    }
    let input = write(dir.path(), "same.csv", &text);
    let r = json(&murphy(&["dominance", "--input", &input, "--predictors", "a,b", "--recalibrate", "pav"]));
    let p = &r["pairs"][0];
    for v in [&p["lorenz"], &p["murphy"], &p["calibrated"]["lorenz"], &p["calibrated"]["murphy"]] {
        assert_eq!(v["relation"], "EqualWithinTol", "{v}");
    }
    assert_eq!(p["calibrated"]["third_degree"]["half_var_diff"], 0.0);
}

#[test]
fn lognormal_pair_crosses_once_with_a_v_class_verdict() {
    let dir = TempDir::new().unwrap();
    let input = generate(dir.path(), "5", "50000");
    let r = json(&murphy(&[
        "dominance", "--input", &input, "--predictors", "x1,x2", "--assume-calibrated", "--tol", "band:4",
        "--powers=-1,0,2",
    ]));
    let p = &r["pairs"][0];
    assert_eq!(p["lorenz"]["crossings"], 1);
    assert_eq!(p["lorenz"]["single_crossing_from_above"], true);
    let c = &p["calibrated"];
    assert_eq!(c["class_v"]["verdict"], "FirstMoreDiscriminating");
    assert_eq!(c["class_v"]["all_agree"], true);
    assert_eq!(c["class_u"]["verdict"], "Undecided");
    assert_eq!(c["crossing_consistency"]["consistent"], true);
}

#[test]
fn uncalibrated_input_skips_calibrated_analyses() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "d.csv", &calibrated_csv());
    let r = json(&murphy(&["dominance", "--input", &input, "--predictors", "good,noisy"]));
    assert!(r["notices"][0].as_str().unwrap().contains("skipped"));
    assert!(r["pairs"][0]["calibrated"].is_null());
    assert!(r["pairs"][0]["lorenz"].is_object());
}

#[test]
fn reproduce_example_1() {
    let out = murphy(&["reproduce", "--example", "1", "--seed", "1", "--n", "200000"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out);
    assert_eq!(r["pass"], true);
    let changes = rows_named(&r, "LC - CC sign changes");
    assert_eq!(changes[0]["observed"], 1.0);
    for row in rows_named(&r, "ABC(Y, X)") {
        assert_eq!(row["pass"], true);
    }
}

#[test]
fn reproduce_example_5_closed_forms() {
    let dir = TempDir::new().unwrap();
    let out = murphy(&["reproduce", "--example", "5", "--seed", "1", "--n", "20000", "--out", dir.path().to_str().unwrap()]);
    assert!(matches!(out.status.code(), Some(0 | 3)));
    let r: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    for q in ["Gini(X1)", "Gini(X2)", "Var(X1)", "Var(X2)"] {
        let reference = rows_named(&r, q).into_iter().find(|row| row["expected_from"] == "reference").unwrap();
        assert_eq!(reference["pass"], true, "{reference}");
    }
    assert!(dir.path().join("example5_lorenz1.csv").exists());
    // the exit status follows the table
    assert_eq!(out.status.code() == Some(0), r["pass"] == true);
}

#[test]
fn reproduce_example_7_half_variance() {
    let r_out = murphy(&["reproduce", "--example", "7", "--seed", "1", "--n", "20000"]);
    let r: Value = serde_json::from_slice(&r_out.stdout).unwrap();
    let half = rows_named(&r, "(Var1 - Var2) / 2");
    assert_eq!(half[0]["pass"], true);
    assert!((half[0]["observed"].as_f64().unwrap() - 146.0).abs() < 0.05);
    assert_eq!(rows_named(&r, "CDF sign changes")[0]["observed"], 2.0);
}

#[test]
fn reproduce_rejects_unknown_examples() {
    assert_eq!(murphy(&["reproduce", "--example", "8", "--seed", "1"]).status.code(), Some(2));
    assert_eq!(murphy(&["reproduce", "--example", "1"]).status.code(), Some(2));
}
