use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn glru(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glru"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = glru(args);
    assert!(
        out.status.success(),
        "glru {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&ok(args)).expect("report is JSON")
}

fn check_schema(name: &str, value: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    let schema: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}");
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Fixture {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }

    fn synth(&self, name: &str, seed: u64, n: usize, d: usize, separation: f64) -> String {
        let out = self.p(name);
        ok(&[
            "synth",
            "--seed",
            &seed.to_string(),
            "--n",
            &n.to_string(),
            "--d",
            &d.to_string(),
            "--sparsity",
            "0.2",
            "--separation",
            &separation.to_string(),
            "--out",
            &out,
        ]);
        out
    }
}

#[test]
fn train_then_gap_round_trip() {
    let fx = Fixture::new();
    let data = fx.synth("d.svm", 1, 60, 8, 1.0);
    let model = fx.p("model.json");
    ok(&["train", "--data", &data, "--lambda", "0.1", "--tol", "1e-9", "--out", &model]);
    let m: Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    check_schema("model.schema.json", &m);
    assert_eq!(m["model"]["w"].as_array().unwrap().len(), 8);

    let g = json(&["gap", "--model", &model, "--remove-instance", "0,7"]);
    check_schema("gap.schema.json", &g);
    assert_eq!(g["result"]["certificate"]["n_new"], 58);
    assert!(g["result"]["certificate"]["gap"].as_f64().unwrap() >= 0.0);
    assert!(g["result"]["radius_primal"].as_f64().unwrap() > 0.0);

    let g = json(&["gap", "--model", &model, "--remove-feature", "3"]);
    check_schema("gap.schema.json", &g);
    assert_eq!(g["result"]["kind"], "remove-features");

    let extra = fx.synth("extra.svm", 2, 3, 8, 1.0);
    let g = json(&["gap", "--model", &model, "--add-instances", &extra]);
    check_schema("gap.schema.json", &g);
    assert_eq!(g["result"]["certificate"]["n_new"], 63);

    let cols = fx.synth("cols.svm", 3, 60, 2, 1.0);
    let g = json(&["gap", "--model", &model, "--add-features", &cols]);
    check_schema("gap.schema.json", &g);
    assert_eq!(g["result"]["size"], 2);
}

#[test]
fn gap_rejects_changed_data() {
    let fx = Fixture::new();
    let data = fx.synth("d.svm", 1, 40, 5, 1.0);
    let model = fx.p("model.json");
    ok(&["train", "--data", &data, "--out", &model]);
    let other = fx.synth("other.svm", 9, 40, 5, 1.0);
    let out = glru(&["gap", "--model", &model, "--data", &other, "--remove-instance", "0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not match"));
}

#[test]
fn gap_needs_exactly_one_modification() {
    let fx = Fixture::new();
    let data = fx.synth("d.svm", 1, 40, 5, 1.0);
    let model = fx.p("model.json");
    ok(&["train", "--data", &data, "--out", &model]);
    assert_eq!(glru(&["gap", "--model", &model]).status.code(), Some(2));
    let both = glru(&["gap", "--model", &model, "--remove-instance", "0", "--remove-feature", "1"]);
    assert_eq!(both.status.code(), Some(2));
}

#[test]
fn loocv_error_count_is_the_same_with_and_without_glru() {
    let fx = Fixture::new();
    for (seed, lambda) in [(1, "1"), (2, "0.03125"), (3, "0.0009765625")] {
        let data = fx.synth(&format!("d{seed}.svm"), seed, 50, 6, 1.0);
        let base = ["loocv", "--data", &data, "--lambda", lambda, "--tol", "1e-10"];
        let naive = json(&base);
        check_schema("loocv.schema.json", &naive);
        assert_eq!(naive["result"]["method"], "naive");
        assert_eq!(naive["result"]["trainings_performed"], 50);
        for extra in [
            vec!["--glru"],
            vec!["--bound", "dual-scb"],
            vec!["--bound", "primal-scb", "--early-stop"],
        ] {
            let mut args = base.to_vec();
            args.extend(extra.iter().copied());
            let screened = json(&args);
            check_schema("loocv.schema.json", &screened);
            assert_eq!(screened["result"]["method"], "glru");
            assert_eq!(
                screened["result"]["error_count"], naive["result"]["error_count"],
                "seed {seed} lambda {lambda} {extra:?}"
            );
        }
    }
}

#[test]
fn loocv_skips_training_on_separated_data() {
    let fx = Fixture::new();
    let data = fx.synth("d.svm", 5, 80, 5, 4.0);
    let r = json(&["loocv", "--data", &data, "--lambda", "1", "--glru"]);
    assert_eq!(r["result"]["bound"], "primal-scb");
    assert!(r["result"]["trainings_performed"].as_u64().unwrap() < 80);
}

#[test]
fn approximate_loocv_runs_for_l2() {
    let fx = Fixture::new();
    let data = fx.synth("d.svm", 4, 50, 6, 1.0);
    let r = json(&["loocv", "--data", &data, "--lambda", "0.1", "--approx"]);
    check_schema("loocv.schema.json", &r);
    assert_eq!(r["result"]["method"], "approx");
    assert!(r["result"]["bound"].is_null());

    let out = glru(&["loocv", "--data", &data, "--reg", "l1", "--approx"]);
    assert_eq!(out.status.code(), Some(glru::Error::Specialization(String::new()).code()));
    let out = glru(&["loocv", "--data", &data, "--approx", "--glru"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn loocv_report_does_not_depend_on_threads() {
    let fx = Fixture::new();
    let data = fx.synth("d.svm", 6, 60, 6, 1.0);
    let strip = |mut v: Value| {
        let res = v["result"].as_object_mut().unwrap();
        for key in ["gap_time_total_secs", "total_time_secs"] {
            res.remove(key);
        }
        for fold in res["per_instance"].as_array_mut().unwrap() {
            fold.as_object_mut().unwrap().remove("train_time_secs");
        }
        v["result"].clone()
    };
    let one = strip(json(&["loocv", "--data", &data, "--glru", "--lambda", "0.1", "--threads", "1"]));
    let four = strip(json(&["loocv", "--data", &data, "--glru", "--lambda", "0.1", "--threads", "4"]));
    assert_eq!(one, four);
}

#[test]
fn stepwise_glru_matches_naive() {
    let fx = Fixture::new();
    let train = fx.synth("train.svm", 7, 80, 6, 0.8);
    let valid = fx.synth("valid.svm", 8, 80, 6, 0.8);
    let base = ["stepwise", "--train", &train, "--valid", &valid, "--lambda", "0.1", "--tol", "1e-9"];
    let naive = json(&base);
    check_schema("stepwise.schema.json", &naive);
    let mut args = base.to_vec();
    args.push("--glru");
    let screened = json(&args);
    check_schema("stepwise.schema.json", &screened);
    assert_eq!(naive["result"]["final_set"], screened["result"]["final_set"]);
    assert_eq!(naive["result"]["selected"], screened["result"]["selected"]);
}

#[test]
fn tightness_writes_csv_and_report() {
    let fx = Fixture::new();
    let data = fx.synth("d.svm", 9, 100, 6, 1.0);
    let csv = fx.p("rates.csv");
    let report = fx.p("rates.json");
    ok(&[
        "tightness", "--data", &data, "--mods", "0..3", "--lambdas", "1,0.1", "--out", &csv, "--report", &report,
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lambda,kind,count,bound,rate"));
    // 2 lambdas, 2 kinds, 4 counts, 2 bounds
    assert_eq!(lines.count(), 32);
    let r: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    check_schema("tightness.schema.json", &r);
    let rows = r["result"].as_array().unwrap();
    assert_eq!(rows.len(), 32);
    for lambda in [1.0, 0.1] {
        for count in 0..=3 {
            let n = rows
                .iter()
                .filter(|row| row["lambda"].as_f64() == Some(lambda) && row["count"] == count)
                .count();
            assert_eq!(n, 4, "lambda {lambda} count {count}");
        }
    }
}

#[test]
fn synth_is_reproducible() {
    let a = ok(&["synth", "--seed", "11", "--n", "30", "--d", "4"]);
    let b = ok(&["synth", "--seed", "11", "--n", "30", "--d", "4"]);
    let c = ok(&["synth", "--seed", "12", "--n", "30", "--d", "4"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.lines().count(), 30);
    assert_eq!(glru(&["synth", "--sparsity", "1.0"]).status.code(), Some(glru::Error::Config(String::new()).code()));
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(glru(&["loocv", "--data", "x.svm", "--bogus"]).status.code(), Some(2));
    assert_eq!(glru(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(glru(&["train", "--data", "x.svm", "--lambda", "-1"]).status.code(), Some(2));
    assert_eq!(glru(&["train", "--data", "x.svm", "--loss", "hinge"]).status.code(), Some(2));
    assert_eq!(glru(&["tightness", "--data", "x.svm", "--mods", "5..2"]).status.code(), Some(2));
}

#[test]
fn module_errors_map_to_stable_codes() {
    let fx = Fixture::new();
    let missing = fx.p("missing.svm");
    let out = glru(&["train", "--data", &missing]);
    assert_eq!(out.status.code(), Some(10));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));

    let bad = fx.path("bad.svm");
    fs::write(&bad, "+1 1:0.5 1:0.7\n").unwrap();
    assert_eq!(glru(&["train", "--data", bad.to_str().unwrap()]).status.code(), Some(11));

    let data = fx.synth("d.svm", 1, 30, 4, 1.0);
    // primal-scb needs a strongly convex regularizer
    let out = glru(&["loocv", "--data", &data, "--reg", "l1", "--bound", "primal-scb"]);
    assert_eq!(out.status.code(), Some(20));
}
