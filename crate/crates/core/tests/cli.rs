//! End-to-end runs of the command-line front end.

use std::fs;
use std::path::{Path, PathBuf};

use pivotblend::cli::{run, FitArtifact};
use pivotblend::diagnostics::diagnostics_report;
use pivotblend::sim::{preset, simulate_dataset, stream_rng};
use pivotblend::speus::{speus_fit, FitOptions, SpeusProblem};
use serde_json::Value;

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name).display().to_string()
}

fn schema(name: &str) -> Value {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn pb(args: &[&str]) -> i32 {
    run(std::iter::once("pivotblend").chain(args.iter().copied()))
}

fn read_json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn assert_valid(schema_name: &str, doc: &Value) {
    let s = schema(schema_name);
    let v = jsonschema::validator_for(&s).unwrap();
    let errs: Vec<String> = v.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errs.is_empty(), "{schema_name}: {errs:?}");
}

fn out(dir: &tempfile::TempDir, sub: &str) -> PathBuf {
    dir.path().join(sub)
}

#[test]
fn fit_matches_golden_file() {
    let tmp = tempfile::tempdir().unwrap();
    let o = out(&tmp, "fit");
    let code = pb(&["fit", "--input", &data("tiny.csv"), "--response", "y", "--seed", "7", "--out", o.to_str().unwrap()]);
    assert_eq!(code, 0);
    let got: FitArtifact = serde_json::from_value(read_json(&o, "fit.json")).unwrap();
    let gold: FitArtifact =
        serde_json::from_str(&fs::read_to_string(data("golden/tiny_fit.json")).unwrap()).unwrap();
    assert_eq!(got.predictors, gold.predictors);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * (1.0 + b.abs());
    for (a, b) in got.fit.beta.iter().zip(&gold.fit.beta) {
        assert!(close(*a, *b), "beta {a} vs {b}");
    }
    assert!(close(got.fit.alpha, gold.fit.alpha));
    assert!(close(got.fit.skew.m, gold.fit.skew.m));
    assert!(close(got.fit.skew.sigma, gold.fit.skew.sigma));
    assert!(close(got.fit.skew.nu, gold.fit.skew.nu));
    assert_eq!(got.absorb_pivot.absorbable, gold.absorb_pivot.absorbable);
    assert_valid("fit.schema.json", &read_json(&o, "fit.json"));

    let summary = fs::read_to_string(o.join("summary.txt")).unwrap();
    assert!(summary.contains("pivot absorbable"));
    let resid = fs::read_to_string(o.join("residuals.csv")).unwrap();
    assert!(resid.starts_with("row,residual,back_transformed,weight\n"));
    assert_eq!(resid.lines().count(), 11);
    let wsum: f64 = resid
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((wsum - 1.0).abs() < 1e-12);
}

#[test]
fn malformed_csv_is_a_user_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "y,x1\n1,2\n3\n").unwrap();
    let o = out(&tmp, "o");
    assert_eq!(pb(&["fit", "--input", bad.to_str().unwrap(), "--response", "y", "--out", o.to_str().unwrap()]), 1);
    fs::write(&bad, "y,x1\n1,2\nNA,3\n").unwrap();
    assert_eq!(pb(&["fit", "--input", bad.to_str().unwrap(), "--response", "y", "--out", o.to_str().unwrap()]), 1);
    assert_eq!(pb(&["fit", "--input", &data("tiny.csv"), "--response", "nope", "--out", o.to_str().unwrap()]), 1);
    assert_eq!(pb(&["fit", "--input", &data("missing.csv"), "--response", "y"]), 1);
}

#[test]
fn pinned_pivot_laplace_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let o = out(&tmp, "lap");
    let code = pb(&[
        "fit", "--input", &data("skewed_regression.csv"), "--response", "y", "--base", "laplace",
        "--m-fixed", "0", "--out", o.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let art: FitArtifact = serde_json::from_value(read_json(&o, "fit.json")).unwrap();
    assert_eq!(art.fit.skew.m, 0.0);
    assert_eq!(art.fit.base.name(), "laplace");
}

#[test]
fn config_file_overrides_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let o = out(&tmp, "cfg");
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, format!("equal-scales = true\nout = {:?}\n", o.display().to_string())).unwrap();
    let code = pb(&[
        "fit", "--input", &data("skewed_regression.csv"), "--response", "y", "--out", "/nonexistent/ignored",
        "--config", cfg.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let art: FitArtifact = serde_json::from_value(read_json(&o, "fit.json")).unwrap();
    assert_eq!(art.fit.skew.sigma, art.fit.skew.nu);
    fs::write(&cfg, "no-such-key = 1\n").unwrap();
    assert_eq!(pb(&["fit", "--input", &data("tiny.csv"), "--response", "y", "--config", cfg.to_str().unwrap()]), 1);
}

#[test]
fn twopart_scv_is_reproducible_and_finds_the_active_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let mut supports = Vec::new();
    for k in 0..2 {
        let o = out(&tmp, &format!("tp{k}"));
        let code = pb(&[
            "twopart", "--input", &data("semicontinuous.csv"), "--response", "y", "--lambda", "scv",
            "--folds", "5", "--n-lambda", "15", "--seed", "3", "--out", o.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let fit = read_json(&o, "fit.json");
        assert_valid("twopart_fit.schema.json", &fit);
        assert_valid("diagnostics.schema.json", &read_json(&o, "diagnostics.json"));
        assert!(o.join("path.csv").exists() && o.join("cv.csv").exists());
        supports.push(fit["support_names"].clone());
    }
    assert_eq!(supports[0], supports[1]);
    assert_eq!(supports[0], serde_json::json!(["x1", "x2"]));
}

#[test]
fn twopart_theory_lambda_and_partition_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let o = out(&tmp, "th");
    let code = pb(&[
        "twopart", "--input", &data("semicontinuous.csv"), "--response", "y", "--lambda", "theory",
        "--q", "2", "--A", "1", "--out", o.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let fit = read_json(&o, "fit.json");
    assert_eq!(fit["lambda_mode"], "theory");
    assert!(fit["lambda"].as_f64().unwrap() > 0.0);
    assert!(fit["cv"].is_null());

    let pos = tmp.path().join("pos.csv");
    fs::write(&pos, "y,x\n1,0.5\n2,0.1\n3,-1\n").unwrap();
    assert_eq!(pb(&["twopart", "--input", pos.to_str().unwrap(), "--response", "y", "--lambda", "1"]), 1);
    let zeros = tmp.path().join("zeros.csv");
    fs::write(&zeros, "y,x\n0,0.5\n0,0.1\n0,-1\n").unwrap();
    assert_eq!(pb(&["twopart", "--input", zeros.to_str().unwrap(), "--response", "y", "--lambda", "1"]), 1);
}

#[test]
fn simulate_rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (out(&tmp, "a"), out(&tmp, "b"));
    for o in [&a, &b] {
        assert_eq!(pb(&["simulate", "ex1-gauss", "--reps", "1", "--seed", "7", "--out", o.to_str().unwrap()]), 0);
    }
    for f in ["metrics.csv", "replications.csv", "spec.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(a.join("timing.json").exists());
    assert_eq!(pb(&["simulate", "ex9"]), 1);
}

#[test]
fn simulate_rejects_zero_replications() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("bad.toml");
    fs::write(
        &spec,
        r#"
replications = 0
[design]
n = 50
p = 2
kappa = 0.2
seed = 1
[truth]
beta_star = [1.0, 2.0]
skew_star = { m = 0.0, sigma = 1.0, nu = 2.0 }
base = { kind = "gaussian" }
"#,
    )
    .unwrap();
    assert_eq!(pb(&["simulate", spec.to_str().unwrap()]), 1);
}

#[test]
fn bootstrap_emits_three_scale_intervals() {
    let tmp = tempfile::tempdir().unwrap();
    let o = out(&tmp, "boot");
    let code = pb(&[
        "bootstrap", "--input", &data("skewed_regression.csv"), "--response", "y", "--B", "100", "--level",
        "0.90", "--seed", "5", "--out", o.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let iv = read_json(&o, "intervals.json");
    assert_valid("intervals.schema.json", &iv);
    for k in ["m", "sigma", "nu"] {
        let (lo, hi) = (iv[k]["lo"].as_f64().unwrap(), iv[k]["hi"].as_f64().unwrap());
        assert!(lo < hi, "{k}: [{lo}, {hi}]");
        assert_eq!(iv[k]["level"].as_f64().unwrap(), 0.90);
    }
    let draws = fs::read_to_string(o.join("draws.csv")).unwrap();
    assert_eq!(draws.lines().count(), 101);
    assert!(draws.starts_with("draw,x1,x2,x3,alpha,m,sigma,nu,ok\n"));
}

#[test]
fn diagnose_checks_columns_and_writes_qq() {
    let tmp = tempfile::tempdir().unwrap();
    let f = out(&tmp, "fit");
    assert_eq!(pb(&["fit", "--input", &data("skewed_regression.csv"), "--response", "y", "--out", f.to_str().unwrap()]), 0);
    let d = out(&tmp, "diag");
    let fit_json = f.join("fit.json");
    let code = pb(&[
        "diagnose", "--input", &data("skewed_regression.csv"), "--response", "y", "--fit",
        fit_json.to_str().unwrap(), "--out", d.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let bundle = read_json(&d, "diagnostics.json");
    assert_valid("diagnostics.schema.json", &bundle);
    assert_eq!(bundle["verdict"], true);
    let qq = fs::read_to_string(d.join("qq.csv")).unwrap();
    assert_eq!(qq.lines().next().unwrap(), "theoretical,sample");
    assert_eq!(qq.lines().count(), 201);
    // a fit of other columns is refused
    let code = pb(&["diagnose", "--input", &data("tiny.csv"), "--response", "y", "--fit", fit_json.to_str().unwrap()]);
    assert_eq!(code, 1);
}

/// Correct-model fits pass the diagnostic; symmetric fits of skewed data fail it.
#[test]
fn diagnose_verdicts_on_simulations() {
    let mut spec = preset("ex2-gauss", 3.0, 1, 11).unwrap();
    spec.design.n = 1000;
    let mut accept_true = 0;
    let mut reject_sym = 0;
    let reps = 20;
    for k in 0..reps {
        let d = simulate_dataset(&spec, &mut stream_rng(11, k)).unwrap();
        let prob = SpeusProblem::new(d.x, d.y, spec.truth.base).unwrap();
        let fit = speus_fit(&prob, &FitOptions::default()).unwrap();
        accept_true += diagnostics_report(&fit, &prob).unwrap().verdict as usize;
        let sym = speus_fit(&prob, &FitOptions { equal_scales: true, ..FitOptions::default() }).unwrap();
        reject_sym += !diagnostics_report(&sym, &prob).unwrap().verdict as usize;
    }
    assert!(accept_true >= 18, "correct model accepted in {accept_true}/{reps}");
    assert!(reject_sym >= 18, "symmetric fit rejected in {reject_sym}/{reps}");
}
