use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};

use scalelaw::fitting::read_fits_jsonl;
use scalelaw::models::ModelSpec;
use scalelaw::rng::rng_from_seed;
use scalelaw::sampler::{CampaignMeta, SampleRecord, SampleStatus, SampleStore, SamplingMode, STORE_VERSION};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scalelaw"))
}

fn base_config() -> Value {
    json!({
        "version": 1,
        "dataset": { "type": "two_gaussian", "d": 2, "separation": 2.0, "pool_size": 80, "test_size": 60 },
        "model": { "kind": "logistic_regression" },
        "grid": { "type": "explicit", "values": [10, 20, 40], "min_k": 5 },
        "sampling": { "mode": "per_cardinality", "m": 6 },
        "points": { "ids": [0, 1, 2, 3, 4, 5] },
        "fit": { "methods": ["loglinear", "likelihood"], "min_samples": 5 },
        "valuation": { "k_min": 10, "k_max": 40 },
        "selection": { "k_targets": [10, 40], "m": 3 },
        "seed": 11
    })
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin().args(args).arg("--config").arg(config).arg("--out").arg(out).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn two_points_two_samples_one_cardinality_gives_four_records() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["grid"] = json!({ "type": "explicit", "values": [20], "min_k": 5 });
    cfg["sampling"] = json!({ "mode": "per_cardinality", "m": 2 });
    cfg["points"] = json!({ "ids": [3, 7] });
    let c = write_config(dir.path(), "c.json", &cfg);
    let o = run(&["sample"], &c, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let store = SampleStore::read(&dir.path().join("store.bin")).unwrap();
    assert_eq!(store.len(), 4);
    assert_eq!(store.point_ids(), vec![3, 7]);
}

#[test]
fn rerun_and_worker_count_give_identical_store_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), "c.json", &base_config());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run(&["sample", "--workers", "1"], &c, &a)), 0);
    assert_eq!(code(&run(&["sample", "--workers", "3"], &c, &b)), 0);
    for f in ["store.bin", "store.bin.meta.json", "sample_summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    assert_eq!(code(&run(&["fit", "--workers", "1"], &c, &a)), 0);
    assert_eq!(code(&run(&["fit", "--workers", "3"], &c, &b)), 0);
    for f in ["fits_likelihood.jsonl", "fits_loglinear.jsonl", "fit_summary_likelihood.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn inverted_grid_is_a_config_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["grid"] = json!({ "type": "log_spaced", "k_min": 500, "k_max": 100, "count": 4 });
    let c = write_config(dir.path(), "c.json", &cfg);
    let o = run(&["sample"], &c, dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("grid"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_and_missing_files_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["smaple"] = json!(1);
    let c = write_config(dir.path(), "c.json", &cfg);
    assert_eq!(code(&run(&["sample"], &c, dir.path())), 2);

    let mut cfg = base_config();
    cfg["dataset"] = json!({ "type": "csv", "train": "/nonexistent/train.csv", "test": "/nonexistent/test.csv",
                             "label_column": "y", "task": "classification" });
    let c = write_config(dir.path(), "c.json", &cfg);
    let o = run(&["sample"], &c, dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("dataset.train"), "{}", stderr(&o));
}

#[test]
fn missing_store_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), "c.json", &base_config());
    assert_eq!(code(&run(&["fit"], &c, &dir.path().join("empty"))), 3);
}

#[test]
fn store_from_another_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), "c.json", &base_config());
    assert_eq!(code(&run(&["sample"], &c, dir.path())), 0);
    let o = run(&["fit", "--seed", "12"], &c, dir.path());
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
}

#[test]
fn loglinear_fit_emits_r2_histogram_and_figures() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), "c.json", &base_config());
    assert_eq!(code(&run(&["sample"], &c, dir.path())), 0);
    let o = run(&["fit"], &c, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let hist = fs::read_to_string(dir.path().join("r2_hist_loglinear.csv")).unwrap();
    let lines: Vec<&str> = hist.lines().collect();
    assert_eq!(lines[0], "bin_lower,bin_upper,count");
    let total: usize = lines[1..].iter().map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    let fits = read_fits_jsonl(fs::read_to_string(dir.path().join("fits_loglinear.jsonl")).unwrap().as_bytes()).unwrap();
    assert_eq!(fits.len(), 6);
    assert_eq!(total, fits.iter().filter(|f| f.diagnostics.r2.is_some()).count());
    for f in ["alpha_hist_loglinear.svg", "psi_curves_likelihood.svg", "r2_likelihood.json"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let summary = read_json(&dir.path().join("fit_summary_likelihood.json"));
    assert_eq!(summary["points_fitted"], 6);
}

#[test]
fn single_cardinality_likelihood_fit_warns_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["grid"] = json!({ "type": "explicit", "values": [20], "min_k": 5 });
    cfg["fit"] = json!({ "methods": ["likelihood"], "min_samples": 5 });
    let c = write_config(dir.path(), "c.json", &cfg);
    assert_eq!(code(&run(&["sample"], &c, dir.path())), 0);
    let o = run(&["fit"], &c, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let fits = read_fits_jsonl(fs::read_to_string(dir.path().join("fits_likelihood.jsonl")).unwrap().as_bytes()).unwrap();
    assert!(!fits.is_empty());
    assert!(fits.iter().all(|f| f.has_warning("single_cardinality")));
}

/// A store of draws from the Gaussian contribution model with known α; the
/// likelihood fit must recover it.
#[test]
fn likelihood_fit_recovers_alpha_from_a_model_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let grid: Vec<u32> = (0..10).map(|i| (100f64 * 10f64.powf(i as f64 / 9.0)).round() as u32).collect();
    let mut cfg = base_config();
    cfg["grid"] = json!({ "type": "explicit", "values": grid });
    cfg["sampling"] = json!({ "mode": "per_cardinality", "m": 2000 });
    cfg["fit"] = json!({ "methods": ["likelihood"] });
    let c = write_config(dir.path(), "c.json", &cfg);

    let truth = [(0u32, 1.0, 1.2), (1, 0.5, 0.8), (2, 2.0, 1.5)];
    let (sigma, beta) = (0.1f64, 2.0f64);
    let mut rng = rng_from_seed(99);
    let mut records = Vec::new();
    for &(id, cz, alpha) in &truth {
        for &k in &grid {
            let kf = k as f64;
            let noise = Normal::new(0.0, sigma * kf.powf(-beta / 2.0)).unwrap();
            for s in 0..2000u64 {
                let delta = cz * kf.powf(-alpha) + noise.sample(&mut rng);
                records.push(SampleRecord { point_id: id, k, delta, seed: s, status: SampleStatus::Ok });
            }
        }
    }
    let meta = CampaignMeta {
        version: STORE_VERSION,
        grid: grid.clone(),
        sampling: SamplingMode::PerCardinality { m: 2000 },
        model: ModelSpec::logistic(),
        master_seed: 11,
        balanced: true,
        pool: "fixture".into(),
        evaluator: "fixture".into(),
        points: vec![0, 1, 2],
    };
    SampleStore::new(meta, records).write(&dir.path().join("store.bin")).unwrap();
    let o = run(&["fit"], &c, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let fits = read_fits_jsonl(fs::read_to_string(dir.path().join("fits_likelihood.jsonl")).unwrap().as_bytes()).unwrap();
    for (f, &(id, cz, alpha)) in fits.iter().zip(&truth) {
        assert_eq!(f.point_id, id);
        assert!((f.alpha - alpha).abs() < 0.05, "point {id}: alpha {} vs {alpha}", f.alpha);
        assert!((f.c / cz - 1.0).abs() < 0.3, "point {id}: c {} vs {cz}", f.c);
    }
}

#[test]
fn value_and_select_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), "c.json", &base_config());
    for cmd in ["sample", "fit", "value", "select", "report"] {
        let o = run(&[cmd], &c, dir.path());
        assert_eq!(code(&o), 0, "{cmd}: {}", stderr(&o));
    }
    let corr = read_json(&dir.path().join("value_correlation.json"));
    let rows = corr.as_array().unwrap();
    assert!(rows.iter().any(|r| r["a"] == "monte_carlo" && r["b"] == "scaling(likelihood)" && r["n"] == 6));
    let values = fs::read_to_string(dir.path().join("values.csv")).unwrap();
    assert_eq!(values.lines().count(), 1 + 3 * 6);

    let sel = read_json(&dir.path().join("selection.json"));
    assert_eq!(sel["lists"].as_array().unwrap().len(), 2);
    assert_eq!(sel["lists"][0]["ids"].as_array().unwrap().len(), 3);
    let overlap = sel["overlaps"][0]["size"].as_u64().unwrap();
    assert!(overlap <= 3);
    assert!(fs::read_to_string(dir.path().join("report.md")).unwrap().contains("## Fits"));
}

#[test]
fn theorem1_check_reports_and_exits_by_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().args(["verify", "theorem1", "--out"]).arg(dir.path()).output().unwrap();
    let report = read_json(&dir.path().join("verify_theorem1.json"));
    assert_eq!(report["config"]["k"], 200);
    assert_eq!(report["within_3se_of_exact"], true);
    let pass = report["pass"].as_bool().unwrap();
    assert_eq!(pass, report["relative_gap"].as_f64().unwrap() <= 0.2);
    assert_eq!(code(&o), if pass { 0 } else { 4 }, "{}", stderr(&o));

    let mut cfg = base_config();
    cfg["theory"] = json!({ "theorem1": { "relative_tolerance": 0.0, "draws": 2000 } });
    let c = write_config(dir.path(), "c.json", &cfg);
    assert_eq!(code(&run(&["verify", "theorem1"], &c, dir.path())), 4);
    cfg["theory"] = json!({ "theorem1": { "relative_tolerance": 10.0, "draws": 2000 } });
    let c = write_config(dir.path(), "c.json", &cfg);
    assert_eq!(code(&run(&["verify", "theorem1"], &c, dir.path())), 0);
}

#[test]
fn soft_alpha_rate_check_reports_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["theory"] = json!({ "alpha_rate": { "expected": 50.0, "tolerance": 0.1, "hard": false } });
    let c = write_config(dir.path(), "c.json", &cfg);
    for cmd in ["sample", "fit"] {
        assert_eq!(code(&run(&[cmd], &c, dir.path())), 0);
    }
    assert_eq!(code(&run(&["verify", "alpha-rate"], &c, dir.path())), 0);
    let report = read_json(&dir.path().join("verify_alpha_rate.json"));
    assert_eq!(report["report"]["pass"], false);

    cfg["theory"]["alpha_rate"]["hard"] = json!(true);
    let c = write_config(dir.path(), "c.json", &cfg);
    assert_eq!(code(&run(&["verify", "alpha-rate"], &c, dir.path())), 4);
}

#[test]
fn amortize_and_add_eval_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["amortized"] = json!({ "hidden": 8, "max_epochs": 5 });
    cfg["addition"] = json!({ "preceding_sizes": [20], "n_added": 2, "trials": 5 });
    let c = write_config(dir.path(), "c.json", &cfg);
    for cmd in ["sample", "fit", "amortize", "add-eval"] {
        let o = run(&[cmd], &c, dir.path());
        assert_eq!(code(&o), 0, "{cmd}: {}", stderr(&o));
    }
    assert!(dir.path().join("amortized.net").is_file());
    let fits = read_fits_jsonl(fs::read_to_string(dir.path().join("fits_amortized.jsonl")).unwrap().as_bytes()).unwrap();
    assert_eq!(fits.len(), 6);
    let rows = read_json(&dir.path().join("addition.json"));
    let strategies: Vec<&str> = rows.as_array().unwrap().iter().map(|r| r["strategy"].as_str().unwrap()).collect();
    assert_eq!(strategies, ["scaling(k=20)", "scaling(k=10)", "scaling(k=40)", "random"]);
    assert!(rows.as_array().unwrap().iter().all(|r| r["trials_run"] == 5));
}
