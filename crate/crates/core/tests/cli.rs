use std::path::{Path, PathBuf};

use ips_core::cli::{self, EXIT_CONFIG, EXIT_DATA, EXIT_ESTIMATION, EXIT_OK, EXIT_OUTPUT, EXIT_THRESHOLDS};
use ips_core::dataset::write_frame_csv;
use ips_core::simulate::{sample_dgp, two_cell_dgp};
use serde_json::{json, Value};
use tempfile::TempDir;

struct Fixture {
    dir: TempDir,
    data: PathBuf,
}

impl Fixture {
    fn new(n: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data.csv");
        write_frame_csv(&sample_dgp(&two_cell_dgp(), n, 21).unwrap(), &data).unwrap();
        Self { dir, data }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, extra: Value) -> PathBuf {
        let mut cfg = json!({
            "schema": {"outcome_column": "y", "treatment_column": "a", "covariate_columns": ["x1"]},
            "learners": [{"kind": "ridge_logistic"}],
            "bootstrap": {"replicates": 200},
            "seed": 5,
        });
        for (k, v) in extra.as_object().unwrap() {
            cfg[k] = v.clone();
        }
        let path = self.path("config.json");
        std::fs::write(&path, cfg.to_string()).unwrap();
        path
    }
}

fn run(args: &[&str]) -> i32 {
    cli::run(std::iter::once("ips").chain(args.iter().copied()))
}

fn estimate(config: &Path, data: &Path, out: &Path) -> i32 {
    run(&[
        "estimate",
        "--config",
        config.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn estimate_writes_curve_files() {
    let fx = Fixture::new(600);
    let out = fx.path("out");
    assert_eq!(estimate(&fx.config(json!({})), &fx.data, &out), EXIT_OK);

    let mut r = csv::Reader::from_path(out.join("curve.csv")).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, cli::CURVE_CSV_HEADER);
    let rows: Vec<Vec<f64>> = r
        .records()
        .map(|rec| rec.unwrap().iter().take(7).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 101);
    assert!(rows.windows(2).all(|w| w[0][0] < w[1][0]));

    let manifest = read_json(&out.join("run_manifest.json"));
    let c = manifest["pooled"]["critical_value"].as_f64().unwrap();
    let z = manifest["pooled"]["pointwise_z"].as_f64().unwrap();
    if c >= z {
        for row in &rows {
            assert!(row[5] <= row[3] && row[3] <= row[1] && row[1] <= row[4] && row[4] <= row[6]);
        }
    }

    let one = rows.iter().find(|r| r[0] == 1.0).unwrap();
    let ys: Vec<f64> = csv::Reader::from_path(&fx.data)
        .unwrap()
        .records()
        .map(|r| r.unwrap()[1].parse().unwrap())
        .collect();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    assert!((one[1] - mean).abs() < 1e-12);

    let contrast = read_json(&out.join("contrast.json"));
    assert_eq!(contrast["overlap_test"]["delta_lo"], 0.1);
    assert_eq!(contrast["overlap_test"]["delta_hi"], 10.0);
    assert!(contrast["config_digest"].is_string());
    let curve = read_json(&out.join("curve.json"));
    assert_eq!(curve["config_digest"], manifest["config_digest"]);
    assert_eq!(curve["seed"], 5);
    assert_eq!(curve["points"].as_array().unwrap().len(), 101);
    assert_eq!(manifest["data"]["n"], 600);
    assert!(!manifest["pooled"]["learner_provenance"].as_array().unwrap().is_empty());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let fx = Fixture::new(400);
    let cfg = fx.config(json!({"grid": {"count": 15}}));
    let names = ["curve.csv", "curve.json", "contrast.json"];
    let mut first = Vec::new();
    for k in 0..2 {
        let out = fx.path(&format!("out{k}"));
        assert_eq!(estimate(&cfg, &fx.data, &out), EXIT_OK);
        let files: Vec<Vec<u8>> = names.iter().map(|n| std::fs::read(out.join(n)).unwrap()).collect();
        if k == 0 {
            first = files;
        } else {
            assert_eq!(first, files);
        }
    }
}

#[test]
fn stratified_run_writes_one_set_per_label() {
    let fx = Fixture::new(900);
    let text = std::fs::read_to_string(&fx.data).unwrap();
    let mut lines = text.lines();
    let mut out_text = format!("{},site\n", lines.next().unwrap());
    for (i, l) in lines.enumerate() {
        out_text += &format!("{l},{}\n", ["north east", "south"][i % 2]);
    }
    std::fs::write(&fx.data, out_text).unwrap();
    let out = fx.path("out");
    let cfg = fx.config(json!({"stratify": "site", "grid": {"count": 10}}));
    assert_eq!(estimate(&cfg, &fx.data, &out), EXIT_OK);
    for label in ["north_east", "south"] {
        let dir = out.join("strata").join(label);
        assert!(dir.join("curve.csv").exists(), "{label}");
        assert!(dir.join("contrast.json").exists());
    }
    let manifest = read_json(&out.join("run_manifest.json"));
    assert_eq!(manifest["strata"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["strata"][0]["stratum_label"], "north east");

    let sum_out = fx.path("summary");
    let code = run(&[
        "summarize",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        fx.data.to_str().unwrap(),
        "--out",
        sum_out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let strata = read_json(&sum_out.join("summary_strata.json"));
    assert_eq!(strata["groups"].as_array().unwrap().len(), 2);
    let treat = read_json(&sum_out.join("summary_treatment.json"));
    let total: u64 = treat["groups"].as_array().unwrap().iter().map(|g| g["n"].as_u64().unwrap()).sum();
    assert_eq!(total, 900);
}

#[test]
fn summarize_matches_hand_arithmetic() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    std::fs::write(&data, "y,a,age\n1,1,20\n0,1,30\n1,0,40\n0,0,50\n1,0,60\n").unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"schema": {"outcome_column": "y", "treatment_column": "a", "covariate_columns": ["age"]}, "seed": 1}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let code = run(&[
        "summarize",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let t = read_json(&out.join("summary_treatment.json"));
    assert_eq!(t["groups"][0]["label"], "treated");
    let age = t["variables"].as_array().unwrap().iter().find(|v| v["name"] == "age").unwrap();
    // treated: 20, 30 -> mean 25, sd sqrt(50); untreated: 40, 50, 60 -> mean 50, sd 10
    let mean = &age["stats"]["mean"];
    let sd = &age["stats"]["sd"];
    assert!((mean[0].as_f64().unwrap() - 25.0).abs() < 1e-12);
    assert!((sd[0].as_f64().unwrap() - 50f64.sqrt()).abs() < 1e-12);
    assert!((mean[1].as_f64().unwrap() - 50.0).abs() < 1e-12);
    assert!((sd[1].as_f64().unwrap() - 10.0).abs() < 1e-12);
    assert!(std::fs::read_to_string(out.join("summary_treatment.csv")).unwrap().starts_with("variable,"));
}

#[test]
fn exit_codes_separate_failure_causes() {
    let fx = Fixture::new(300);
    let out = fx.path("out");

    let cfg = fx.config(json!({"schema": {"outcome_column": "y", "treatment_column": "a", "covariate_columns": ["age"]}}));
    assert_eq!(estimate(&cfg, &fx.data, &out), EXIT_CONFIG);

    let cfg = fx.config(json!({"k_folds": 1}));
    assert_eq!(estimate(&cfg, &fx.data, &out), EXIT_CONFIG);

    std::fs::write(fx.path("bad.json"), "{not json").unwrap();
    assert_eq!(estimate(&fx.path("bad.json"), &fx.data, &out), EXIT_CONFIG);

    let bad = fx.path("bad.csv");
    std::fs::write(&bad, "y,a,x1\n1,1,0.5\n0,2,0.1\n").unwrap();
    assert_eq!(estimate(&fx.config(json!({})), &bad, &out), EXIT_DATA);
    assert_eq!(estimate(&fx.config(json!({})), &fx.path("missing.csv"), &out), EXIT_DATA);

    let one_treated = fx.path("one.csv");
    let mut text = String::from("y,a,x1\n1,1,0.5\n");
    for i in 0..40 {
        text += &format!("{},0,{}\n", i % 2, i as f64 / 40.0);
    }
    std::fs::write(&one_treated, text).unwrap();
    assert_eq!(estimate(&fx.config(json!({})), &one_treated, &out), EXIT_ESTIMATION);

    let blocker = fx.path("file");
    std::fs::write(&blocker, "").unwrap();
    assert_eq!(estimate(&fx.config(json!({})), &fx.data, &blocker), EXIT_OUTPUT);

    assert_eq!(run(&["simulate", "--suite", "foo", "--out", out.to_str().unwrap()]), EXIT_CONFIG);
    assert_eq!(run(&["--threads", "0", "simulate", "--suite", "coverage", "--out", "x"]), EXIT_CONFIG);
    assert_eq!(run(&["estimate"]), EXIT_CONFIG);
}

#[test]
fn simulate_writes_reports_and_flags_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = out.to_str().unwrap();
    let code = run(&["simulate", "--suite", "literal_formula_bias", "--out", o, "--reps", "40", "--n", "2000"]);
    assert_eq!(code, EXIT_OK);
    let doc = read_json(&out.join("literal_formula_bias.json"));
    assert_eq!(doc["passed"], true);
    assert!(out.join("literal_formula_bias_single_cell_literal_formula.csv").exists());

    let code = run(&["simulate", "--suite", "coverage", "--out", o, "--reps", "2", "--n", "200"]);
    assert_eq!(code, EXIT_THRESHOLDS);
}
