use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn mlplr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlplr"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn assert_provenance(line: &str, seed: u64) {
    assert!(line.starts_with("# sigma2="), "{line}");
    assert!(line.contains(";config_hash="), "{line}");
    assert!(line.ends_with(&format!(";base_seed={seed}")), "{line}");
}

#[test]
fn gen_fit_lr_select_round_trip() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let o = mlplr(dir, &["--seed", "4", "gen", "--n", "300"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let data = dir.join("data.csv");
    assert_provenance(&first_line(&data), 4);
    let text = fs::read_to_string(&data).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "x1,y");
    assert_eq!(text.lines().count(), 302);

    let data_arg = data.to_str().unwrap();
    let o = mlplr(dir, &["--seed", "1", "fit", "--data", data_arg, "--k", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fit = json(&dir.join("fit.json"));
    assert_eq!(fit["base_seed"], 1);
    assert!(fit["config_hash"].as_str().unwrap().len() >= 16);
    assert!(fit["loglik"].as_f64().unwrap().is_finite());
    assert_eq!(fit["n_starts_used"], 20);

    let o = mlplr(dir, &["--seed", "1", "lr", "--data", data_arg, "--k", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lr = json(&dir.join("lr.json"));
    assert!(lr["two_lambda"].as_f64().unwrap() >= 0.0);

    let o = mlplr(dir, &["--seed", "1", "select", "--data", data_arg, "--k-max", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sel = json(&dir.join("selection.json"));
    assert_eq!(sel["per_k"].as_array().unwrap().len(), 2);
    assert!(matches!(sel["k_hat"].as_u64(), Some(1 | 2)));
}

#[test]
fn limit_writes_sample_with_header() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let o = mlplr(dir, &["--seed", "3", "limit", "--k", "2", "--draws", "50", "--gram-draws", "20000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let path = dir.join("limit.csv");
    assert_provenance(&first_line(&path), 3);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines().skip(1);
    assert_eq!(lines.next().unwrap(), "draw,value,best_partition,restarts,retries,converged");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 50);
    for r in rows {
        let v: f64 = r.split(',').nth(1).unwrap().parse().unwrap();
        assert!(v >= 0.0);
    }
}

#[test]
fn limit_gauss_hermite_mode() {
    let tmp = TempDir::new().unwrap();
    let o = mlplr(tmp.path(), &["limit", "--k", "1", "--draws", "20", "--gram-mode", "gauss-hermite"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn check_h4_and_gradcheck_reports() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let o = mlplr(dir, &["--seed", "2", "check-h4", "--gram-draws", "50000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let h = json(&dir.join("h4.json"));
    assert_eq!(h["monte_carlo"]["pass"], true);
    assert_eq!(h["agree"], true);
    assert_eq!(h["base_seed"], 2);

    let o = mlplr(dir, &["gradcheck", "--draws", "10"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let g = json(&dir.join("gradcheck.json"));
    assert!(g["max_first_rel"].as_f64().unwrap() <= 1e-5);
    assert!(g["max_second_rel"].as_f64().unwrap() <= 1e-4);
    assert_eq!(g["k"], 2);
}

#[test]
fn experiment_writes_all_outputs() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let cfg = serde_json::json!({
        "schedule": { "kind": "bic_like", "input_dim": 1 },
        "n_grid": [100],
        "k_grid": [1, 2],
        "replicates": 2,
        "base_seed": 9,
        "limit_draws": 20,
        "gram_draws": 20000,
        "fit": { "n_starts": 3 }
    });
    let cfg_path = dir.join("exp.json");
    fs::write(&cfg_path, cfg.to_string()).unwrap();
    let out = dir.join("out");
    let o = mlplr(&out, &["experiment", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["replicates.csv", "selection.csv", "limit_k1.csv", "limit_k2.csv"] {
        assert_provenance(&first_line(&out.join(f)), 9);
    }
    let reps = fs::read_to_string(out.join("replicates.csv")).unwrap();
    assert_eq!(reps.lines().nth(1).unwrap(), "replicate,n,k,sup_loglik,two_lambda,k_hat,converged");
    assert_eq!(reps.lines().count(), 2 + 4);
    let sel = fs::read_to_string(out.join("selection.csv")).unwrap();
    assert_eq!(sel.lines().nth(1).unwrap(), "replicate,n,k_hat,T_1,T_2");
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["base_seed"], 9);
    assert_eq!(summary["cells"].as_array().unwrap().len(), 2);
    assert!(summary["cells"][1]["two_lambda"]["ks_distance"].as_f64().is_some());
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let o = mlplr(dir, &["fit", "--data", "/nonexistent/data.csv", "--k", "1"]);
    assert_eq!(code(&o), 2);
    let o = mlplr(dir, &["fit", "--k", "1"]);
    assert_eq!(code(&o), 2);
    let bad = dir.join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let o = mlplr(dir, &["experiment", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let spec = dir.join("spec.json");
    fs::write(&spec, r#"{"sigma2": -1.0}"#).unwrap();
    let o = mlplr(dir, &["gen", "--spec", spec.to_str().unwrap(), "--n", "10"]);
    assert_eq!(code(&o), 2);

    // one iteration from a random start never meets the tolerance
    let o = mlplr(dir, &["--seed", "5", "gen", "--n", "200"]);
    assert_eq!(code(&o), 0);
    let cfg = dir.join("fit.json");
    fs::write(&cfg, r#"{"n_starts": 1, "max_iters": 1}"#).unwrap();
    let data = dir.join("data.csv");
    let o = mlplr(dir, &["fit", "--data", data.to_str().unwrap(), "--k", "2", "--config", cfg.to_str().unwrap(), "--output", "f.json"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}
