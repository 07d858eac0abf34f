use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ksupport"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn norm_prints_value_and_split() {
    let o = run(&["norm", "--vector", "2,1,1", "--k", "2"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "2.82842712475 r=1");
    let o = run(&["norm", "--vector", "3,1,0,0", "--k", "2"]);
    assert_eq!(stdout(&o), "3.16227766017 r=0");
    let o = run(&["norm", "--vector", "-1,1", "--k", "1.5", "--elastic"]);
    assert_eq!(stdout(&o), "1.63299316186");
}

#[test]
fn norm_rejects_bad_k() {
    let o = run(&["norm", "--vector", "1,1", "--k", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("k out of range"), "{}", stderr(&o));
    let o = run(&["norm", "--vector", "1,1", "--k", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["norm", "--vector", "1,x", "--k", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["norm", "--vector", "1", "--k", "1", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dual_norms() {
    let o = run(&["dualnorm", "--vector", "3,2,1", "--k", "2"]);
    assert_eq!(stdout(&o), "3.60555127546");
    let o = run(&["dualnorm", "--vector", "1,1,1", "--k", "3", "--elastic"]);
    assert_eq!(stdout(&o), "1.73205080757");
}

#[test]
fn prox_examples() {
    assert_eq!(stdout(&run(&["prox", "--vector", "3,2,1", "--k", "2", "--beta", "1"])), "1.5,1,0");
    assert_eq!(stdout(&run(&["prox", "--vector", "0,0", "--k", "1", "--beta", "5"])), "0,0");
    assert_eq!(stdout(&run(&["prox", "--vector", "3,2,1", "--k", "3", "--beta", "1"])), "1.5,1,0.5");
    assert_eq!(run(&["prox", "--vector", "3,2,1", "--k", "2", "--beta", "0"]).status.code(), Some(2));
}

#[test]
fn vector_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.txt");
    std::fs::write(&path, "-3\n1\n2\n").unwrap();
    let arg = format!("@{}", path.display());
    assert_eq!(stdout(&run(&["norm", "--vector", &arg, "--k", "3"])), "3.74165738677 r=0");
    let missing = format!("@{}", dir.path().join("nope.txt").display());
    assert_eq!(run(&["norm", "--vector", &missing, "--k", "1"]).status.code(), Some(3));
}

fn synthetic_csv(dir: &Path, name: &str, seed: u64, rows: usize) -> std::path::PathBuf {
    use ksupport::data::{synthetic_generate, write_csv, SyntheticSpec};
    let spec = SyntheticSpec {
        n_train: rows,
        n_val: 1,
        n_test: 1,
        seed,
        ..Default::default()
    };
    let data = synthetic_generate(&spec).unwrap();
    let path = dir.join(name);
    write_csv(&data.train, &path).unwrap();
    path
}

#[test]
fn fit_writes_document() {
    let dir = tempfile::tempdir().unwrap();
    let train = synthetic_csv(dir.path(), "train.csv", 1, 50);
    let val = synthetic_csv(dir.path(), "val.csv", 2, 50);
    let out = dir.path().join("fit.json");
    let o = run(&[
        "fit", "--train", train.to_str().unwrap(), "--val", val.to_str().unwrap(), "--header", "--method",
        "ksupport", "--k", "10", "--lambda", "1e10", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc = read_json(&out);
    let w = doc["result"]["coefficients"].as_array().unwrap();
    assert_eq!(w.len(), 40);
    assert!(w.iter().all(|v| v.as_f64().unwrap().abs() <= 1e-6));
    assert_eq!(doc["config"]["penalty"]["method"], "ksupport");
    assert!(doc["result"]["val_mse"].as_f64().is_some());
}

#[test]
fn lasso_and_elastic_without_ridge_agree() {
    let dir = tempfile::tempdir().unwrap();
    let train = synthetic_csv(dir.path(), "train.csv", 3, 50);
    let t = train.to_str().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let oa = run(&["fit", "--train", t, "--header", "--method", "lasso", "--lambda", "3", "--out", a.to_str().unwrap()]);
    let ob = run(&[
        "fit", "--train", t, "--header", "--method", "elastic", "--lambda1", "3", "--lambda2", "0", "--out",
        b.to_str().unwrap(),
    ]);
    assert!(oa.status.success() && ob.status.success());
    assert_eq!(read_json(&a)["result"], read_json(&b)["result"]);
}

#[test]
fn fit_validation_and_io_codes() {
    let dir = tempfile::tempdir().unwrap();
    let train = synthetic_csv(dir.path(), "train.csv", 4, 20);
    let t = train.to_str().unwrap();
    let out = dir.path().join("o.json");
    let o = out.to_str().unwrap();
    assert_eq!(run(&["fit", "--train", t, "--header", "--method", "lasso", "--out", o]).status.code(), Some(2));
    assert_eq!(
        run(&["fit", "--train", t, "--header", "--method", "lasso", "--lambda", "1", "--k", "3", "--out", o])
            .status
            .code(),
        Some(2)
    );
    let missing = dir.path().join("missing.csv");
    assert_eq!(
        run(&["fit", "--train", missing.to_str().unwrap(), "--method", "lasso", "--lambda", "1", "--out", o])
            .status
            .code(),
        Some(3)
    );
    let bad_out = dir.path().join("no_such_dir").join("o.json");
    assert_eq!(
        run(&["fit", "--train", t, "--header", "--method", "lasso", "--lambda", "1", "--out", bad_out.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn gridfit_selects_from_grid() {
    let dir = tempfile::tempdir().unwrap();
    let train = synthetic_csv(dir.path(), "train.csv", 5, 50);
    let val = synthetic_csv(dir.path(), "val.csv", 6, 50);
    let out = dir.path().join("grid.json");
    let o = run(&[
        "gridfit", "--train", train.to_str().unwrap(), "--val", val.to_str().unwrap(), "--header", "--method",
        "ksupport", "--k-values", "1,10,20", "--lambda-exponents", "-1,0,1", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc = read_json(&out);
    assert_eq!(doc["cells"].as_array().unwrap().len(), 9);
    assert_eq!(doc["coefficients"].as_array().unwrap().len(), 40);
    let best = doc["val_mse"].as_f64().unwrap();
    let min = doc["cells"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|c| c["val_mse"].as_f64())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(best, min);
}

#[test]
fn synthetic_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&["synthetic", "--reps", "1", "--seed", "9", "--max-iters", "300", "--out-dir", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("[summary]"));
    }
    for name in ["report.txt", "coef_lasso.csv", "coef_elastic.csv", "coef_ksupport.csv"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    let coef = std::fs::read_to_string(a.join("coef_ksupport.csv")).unwrap();
    let lines: Vec<&str> = coef.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1].split(',').count(), 40);
}
