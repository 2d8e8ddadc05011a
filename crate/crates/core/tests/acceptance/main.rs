//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion ids (`P1 P3`) to run a subset.

mod oracle;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use ips_core::cli;
use ips_core::dataset::{write_frame_csv, AnalysisFrame};
use ips_core::estimator::{
    estimate_curve, influence_value, shift_propensity, DeltaGrid, GridSpec, InfluenceMatrix, LearnerConfig,
    NuisanceEstimates,
};
use ips_core::learners::{fit_super_learner, LearnerSpec};
use ips_core::seeding::{derive_seed, rng_for};
use ips_core::simulate::{
    expected_influence, oracle_nuisances, probation_like_dgp, run_suite, sample_dgp, single_cell_dgp,
    true_effect_at, two_cell_dgp, InfluenceForm, SimulationReport, SuiteOverrides,
};
use ndarray::Array2;
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn default_grid() -> DeltaGrid {
    DeltaGrid::from_spec(&GridSpec::default()).unwrap()
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    (m, (ss / (n - 1.0)).sqrt())
}

fn p1_collapse() -> Outcome {
    let grid = default_grid();
    let g1 = grid.index_of(1.0).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let dgps = [single_cell_dgp(), two_cell_dgp(), probation_like_dgp()];
    for (k, dgp) in dgps.iter().enumerate() {
        for (j, n) in [50usize, 500, 3000].into_iter().enumerate() {
            let frame = sample_dgp(dgp, n, derive_seed(1, &[k as u64, j as u64])).unwrap();
            let learners = LearnerConfig::uniform(vec![LearnerSpec::ridge(1.0)]);
            let est = estimate_curve(&frame, &grid, &learners, 2, 9, 0.05).map_err(|e| e.to_string())?;
            let y: Vec<f64> = frame.y().iter().map(|&v| v as f64).collect();
            let (m, sd) = mean_sd(&y);
            let p = &est.curve.points()[g1];
            worst = worst.max((p.estimate - m).abs()).max((p.sd - sd).abs());
        }
    }
    check(worst <= 1e-12, format!("max deviation from (mean Y, sd Y) {worst:.2e}, tolerance 1e-12"))
}

fn p2_shift_identities() -> Outcome {
    let mut runner = TestRunner::new(ProptestConfig {
        cases: 10_000,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    let result = runner.run(&(0.1f64..=10.0, 0.01f64..=0.99), |(delta, pi)| {
        let q = shift_propensity(delta, pi);
        let odds = |p: f64| p / (1.0 - p);
        let lhs = odds(q);
        let rhs = delta * odds(pi);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0), "odds {lhs} vs {rhs}");
        let back = shift_propensity(1.0 / delta, q);
        prop_assert!((back - pi).abs() <= 1e-12, "inverse {back} vs {pi}");
        prop_assert_eq!(shift_propensity(delta, 0.0), 0.0);
        prop_assert_eq!(shift_propensity(delta, 1.0), 1.0);
        Ok(())
    });
    match result {
        Ok(()) => Ok("10000 random (δ, π) pairs, tolerance 1e-12".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn p3_enumeration() -> Outcome {
    let grid = default_grid();
    let mut worst = 0.0f64;
    for dgp in [single_cell_dgp(), two_cell_dgp(), probation_like_dgp()] {
        for &delta in grid.values() {
            let truth = oracle::true_effect(&dgp, delta);
            let enumerated = oracle::expected_phi(&dgp, delta);
            let lib = expected_influence(&dgp, delta, InfluenceForm::Indicator);
            let lib_truth = true_effect_at(&dgp, delta);
            for d in [enumerated - truth, lib - truth, lib_truth - truth] {
                worst = worst.max(d.abs());
            }
            for c in &dgp.cells {
                for a in 0..2u8 {
                    for y in 0..2u8 {
                        let own = oracle::phi(delta, a, y, c.pi, c.mu1, c.mu0);
                        let got = influence_value(delta, a, y as f64, c.pi, c.mu1, c.mu0);
                        worst = worst.max((own - got).abs());
                    }
                }
            }
        }
    }
    check(worst <= 1e-12, format!("3 dgps x 101 δ, max deviation {worst:.2e}, tolerance 1e-12"))
}

fn report<'a>(reports: &'a [SimulationReport], label: &str, mode: &str) -> Result<&'a SimulationReport, String> {
    reports
        .iter()
        .find(|r| r.label == label && r.mode == mode)
        .ok_or_else(|| format!("no report {label}/{mode}"))
}

fn truth_matches(r: &SimulationReport, dgp: &ips_core::simulate::DgpSpec) -> Result<(), String> {
    for row in &r.rows {
        let t = oracle::true_effect(dgp, row.delta);
        if (row.truth - t).abs() > 1e-12 {
            return Err(format!("{} truth at δ={} is {} vs {}", r.label, row.delta, row.truth, t));
        }
    }
    Ok(())
}

fn p4_oracle_consistency() -> Outcome {
    let out = run_suite("oracle_consistency", &SuiteOverrides::default()).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut ok = true;
    for dgp in [single_cell_dgp(), two_cell_dgp()] {
        let r = report(&out.reports, &dgp.label, "replications")?;
        truth_matches(r, &dgp)?;
        let worst = r.rows.iter().map(|x| x.bias.abs() / (3.0 * x.bias_se)).fold(0.0, f64::max);
        ok &= r.replicates == 500 && r.n == 2000 && worst <= 1.0;
        parts.push(format!("{}: max |bias|/(3 se) {worst:.3}", dgp.label));
    }
    check(ok, format!("R=500, n=2000; {}", parts.join("; ")))
}

fn p5_coverage() -> Outcome {
    let out = run_suite("coverage", &SuiteOverrides::default()).map_err(|e| e.to_string())?;
    let dgp = probation_like_dgp();
    let r = report(&out.reports, &dgp.label, "replications")?;
    truth_matches(r, &dgp)?;
    let (lo, hi) = r.rows.iter().fold((1.0f64, 0.0f64), |(a, b), x| {
        (a.min(x.pointwise_coverage), b.max(x.pointwise_coverage))
    });
    let uniform = r.uniform_coverage.ok_or("no band coverage")?;
    check(
        r.replicates == 500 && r.n == 2000 && lo >= 0.92 && hi <= 0.98 && uniform >= 0.93,
        format!("R=500, n=2000; pointwise coverage in [{lo:.3}, {hi:.3}] (need [0.92, 0.98]); uniform {uniform:.3} (need >= 0.93)"),
    )
}

fn p6_double_robustness() -> Outcome {
    const SINGLE_WRONG: f64 = 0.015;
    let dr = run_suite("double_robustness", &SuiteOverrides::default()).map_err(|e| e.to_string())?;
    let two = two_cell_dgp();
    let bias = |mode: &str| -> Result<f64, String> {
        let r = report(&dr.reports, &two.label, mode)?;
        truth_matches(r, &two)?;
        Ok(r.max_abs_bias())
    };
    let (ps, or, both) = (bias("ps_wrong")?, bias("or_wrong")?, bias("both_wrong")?);

    let lit = run_suite("literal_formula_bias", &SuiteOverrides::default()).map_err(|e| e.to_string())?;
    let single = single_cell_dgp();
    let r = report(&lit.reports, &single.label, "literal_formula")?;
    let row = r.rows.iter().find(|x| x.delta == 10.0).ok_or("no δ=10 row")?;
    let analytic = oracle::literal_extra_bias(&single, 10.0);
    let z = (row.bias - analytic) / row.bias_se;

    check(
        ps <= SINGLE_WRONG && or <= SINGLE_WRONG && both > 3.0 * SINGLE_WRONG && row.bias.abs() > 0.05 && z.abs() <= 3.0,
        format!(
            "ps_wrong {ps:.4}, or_wrong {or:.4} (<= {SINGLE_WRONG}); both_wrong {both:.4} (> {:.3}); literal bias at δ=10 {:.4} vs analytic {analytic:.4} (z {z:.2})",
            3.0 * SINGLE_WRONG,
            row.bias
        ),
    )
}

fn p7_positivity() -> Outcome {
    let dgp = two_cell_dgp();
    let frame = sample_dgp(&dgp, 2000, 77).unwrap();
    let base = oracle_nuisances(&dgp, &frame).unwrap();
    let mut pi = base.pi_hat().to_vec();
    let mut rng = rng_for(77, &[1]);
    let mu1: Vec<f64> = (0..frame.n()).map(|_| rng.random::<f64>()).collect();
    let mu0: Vec<f64> = (0..frame.n()).map(|_| rng.random::<f64>()).collect();
    for (i, p) in pi.iter_mut().enumerate().filter(|(i, _)| i % 10 == 0) {
        *p = if (i / 10) % 2 == 0 { 0.0 } else { 1.0 };
    }
    let nuisances = NuisanceEstimates::from_vectors(pi, mu1, mu0).map_err(|e| e.to_string())?;
    let mut deltas = default_grid().values().to_vec();
    deltas.extend([1e-3, 1e3]);
    deltas.sort_by(f64::total_cmp);
    let grid = DeltaGrid::from_values(deltas).map_err(|e| e.to_string())?;
    let m = InfluenceMatrix::compute(&frame, &nuisances, &grid).map_err(|e| e.to_string())?;
    let mut worst_ratio = 0.0f64;
    let mut non_finite = 0usize;
    for (g, &delta) in grid.values().iter().enumerate() {
        let bound = delta.max(1.0) * 2.0 + 1.0 + delta / delta.min(1.0).powi(2);
        for &v in m.phi().column(g) {
            if !v.is_finite() {
                non_finite += 1;
            } else {
                worst_ratio = worst_ratio.max(v.abs() / bound);
            }
        }
    }
    check(
        non_finite == 0 && worst_ratio <= 1.0,
        format!("10% of π̂ in {{0, 1}}: {non_finite} non-finite values, max |φ|/bound {worst_ratio:.3}"),
    )
}

fn write_config(path: &Path, covariates: &[String], seed: u64) {
    let cfg = serde_json::json!({
        "schema": {"outcome_column": "y", "treatment_column": "a", "covariate_columns": covariates},
        "seed": seed,
    });
    std::fs::write(path, cfg.to_string()).unwrap();
}

fn covariate_names(frame: &AnalysisFrame) -> Vec<String> {
    frame.encoding().column_names()
}

fn read_curve(path: &Path) -> HashMap<String, Vec<f64>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    let mut cols: HashMap<String, Vec<f64>> = HashMap::new();
    for rec in r.records() {
        let rec = rec.unwrap();
        for (h, v) in header.iter().zip(rec.iter()) {
            if let Ok(x) = v.parse::<f64>() {
                cols.entry(h.clone()).or_default().push(x);
            }
        }
    }
    cols
}

fn p8_probation_anchors() -> Outcome {
    const ANCHORS: [(f64, f64, f64); 3] = [(0.1, 0.56, 0.01), (1.0, 0.58, 0.005), (10.0, 0.65, 0.01)];
    const RUNS: usize = 50;
    let dgp = probation_like_dgp();
    let mut failures = Vec::new();
    let share = oracle::treated_share(&dgp);
    if (share - 0.264).abs() > 0.005 {
        failures.push(format!("treated share {share:.4}"));
    }
    let mut truth_parts = Vec::new();
    for (delta, target, tol) in ANCHORS {
        let t = oracle::true_effect(&dgp, delta);
        truth_parts.push(format!("ψ({delta})={t:.4}"));
        if (t - target).abs() > tol {
            failures.push(format!("ψ({delta}) = {t:.4} outside {target} ± {tol}"));
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let mut covered = [0usize; 3];
    let mut rejected = 0usize;
    for r in 0..RUNS {
        let run_dir = dir.path().join(format!("run{r}"));
        std::fs::create_dir_all(&run_dir).unwrap();
        let frame = sample_dgp(&dgp, 2453, derive_seed(8, &[r as u64])).unwrap();
        let data = run_dir.join("data.csv");
        let config = run_dir.join("config.json");
        write_frame_csv(&frame, &data).unwrap();
        write_config(&config, &covariate_names(&frame), 800 + r as u64);
        let out = run_dir.join("out");
        cli::cmd_estimate(&config, &data, &out).map_err(|f| format!("run {r}: {}", f.error))?;
        let curve = read_curve(&out.join("curve.csv"));
        for (k, (delta, target, _)) in ANCHORS.iter().enumerate() {
            let i = curve["delta"]
                .iter()
                .position(|d| (d - delta).abs() < 1e-9 * delta)
                .ok_or("anchor δ missing from grid")?;
            if curve["band_lo"][i] <= *target && *target <= curve["band_hi"][i] {
                covered[k] += 1;
            }
        }
        let contrast: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("contrast.json")).unwrap()).unwrap();
        if contrast["overlap_test"]["overlap"] == serde_json::Value::Bool(false) {
            rejected += 1;
        }
    }
    let rates: Vec<f64> = covered.iter().map(|&c| c as f64 / RUNS as f64).collect();
    for ((delta, target, _), rate) in ANCHORS.iter().zip(&rates) {
        if *rate < 0.9 {
            failures.push(format!("band at δ={delta} contains {target} in only {rate:.2} of runs"));
        }
    }
    if 2 * rejected <= RUNS {
        failures.push(format!("overlap test rejects in {rejected}/{RUNS} runs"));
    }
    let detail = format!(
        "share {share:.4}, {}; band hit rates {:.2}/{:.2}/{:.2}; overlap rejections {rejected}/{RUNS}",
        truth_parts.join(", "),
        rates[0],
        rates[1],
        rates[2]
    );
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", failures.join("; ")))
    }
}

fn p9_ensemble() -> Outcome {
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_simplex = 0.0f64;
    for d in 0..20u64 {
        let mut rng = rng_for(9, &[d]);
        let n = rng.random_range(150..600usize);
        let p = rng.random_range(1..5usize);
        let x = Array2::from_shape_fn((n, p), |_| rng.random::<f64>() * 4.0 - 2.0);
        let coef: Vec<f64> = (0..p).map(|_| rng.random::<f64>() * 3.0 - 1.5).collect();
        let nonlinear = d % 2 == 1;
        let y: Vec<u8> = (0..n)
            .map(|i| {
                let row = x.row(i);
                let mut eta: f64 = row.iter().zip(&coef).map(|(a, b)| a * b).sum();
                if nonlinear {
                    eta = 2.0 * (row[0] * 1.7).sin() + if row[0] > 0.5 { 1.0 } else { -0.5 };
                }
                u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))
            })
            .collect();
        if y.iter().all(|&v| v == y[0]) {
            return Err(format!("dataset {d} has a single class"));
        }
        let model = fit_super_learner(&LearnerSpec::default_roster(), x.view(), &y, 10, derive_seed(9, &[d, 1]))
            .map_err(|e| e.to_string())?;
        let risk = model.cv_risk();
        let best = risk.members.iter().copied().fold(f64::INFINITY, f64::min);
        worst_gap = worst_gap.max(risk.ensemble - best);
        let w = model.weights();
        let sum: f64 = w.iter().sum();
        let neg = w.iter().copied().fold(0.0f64, f64::min);
        worst_simplex = worst_simplex.max((sum - 1.0).abs()).max(-neg);
    }
    check(
        worst_gap <= 1e-6 && worst_simplex <= 1e-8,
        format!("20 datasets; max (ensemble - best member) CV log-loss {worst_gap:.2e} (<= 1e-6); simplex error {worst_simplex:.1e} (<= 1e-8)"),
    )
}

fn p10_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let frame = sample_dgp(&two_cell_dgp(), 1500, 10).unwrap();
    let data = dir.path().join("data.csv");
    let config = dir.path().join("config.json");
    write_frame_csv(&frame, &data).unwrap();
    write_config(&config, &covariate_names(&frame), 1010);
    let mut outputs = Vec::new();
    for (k, threads) in ["1", "8", "1", "8"].into_iter().enumerate() {
        let out = dir.path().join(format!("out{k}"));
        let args = [
            "ips",
            "--threads",
            threads,
            "estimate",
            "--config",
            config.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ];
        let code = cli::run(args);
        if code != 0 {
            return Err(format!("run {k} exited with {code}"));
        }
        outputs.push(std::fs::read(out.join("curve.csv")).unwrap());
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    check(identical, format!("4 runs (--threads 1, 8, 1, 8): curve.csv byte-identical = {identical}"))
}

fn p11_limits() -> Outcome {
    let dgp = two_cell_dgp();
    let frame = sample_dgp(&dgp, 2000, 11).unwrap();
    let mut rng = rng_for(11, &[1]);
    let n = frame.n();
    let pi: Vec<f64> = (0..n).map(|_| 0.05 + 0.9 * rng.random::<f64>()).collect();
    let mu1: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let mu0: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let (a, y) = (frame.a(), frame.y());
    let aipw1 = (0..n)
        .map(|i| mu1[i] + a[i] as f64 * (y[i] as f64 - mu1[i]) / pi[i])
        .sum::<f64>()
        / n as f64;
    let aipw0 = (0..n)
        .map(|i| mu0[i] + (1 - a[i]) as f64 * (y[i] as f64 - mu0[i]) / (1.0 - pi[i]))
        .sum::<f64>()
        / n as f64;
    let nuisances = NuisanceEstimates::from_vectors(pi, mu1, mu0).map_err(|e| e.to_string())?;
    let grid = DeltaGrid::from_values(vec![1e-8, 1.0, 1e8]).unwrap();
    let m = InfluenceMatrix::compute(&frame, &nuisances, &grid).map_err(|e| e.to_string())?;
    let (lo, _) = m.column_moments(0);
    let (hi, _) = m.column_moments(2);
    let (d1, d0) = ((hi - aipw1).abs(), (lo - aipw0).abs());
    check(
        d1 <= 1e-6 && d0 <= 1e-6,
        format!("|ψ̂(1e8) - AIPW E[Y(1)]| {d1:.2e}; |ψ̂(1e-8) - AIPW E[Y(0)]| {d0:.2e} (<= 1e-6)"),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("P1", "δ=1 collapse", p1_collapse),
        ("P2", "shift identities", p2_shift_identities),
        ("P3", "influence unbiasedness by enumeration", p3_enumeration),
        ("P4", "oracle consistency", p4_oracle_consistency),
        ("P5", "coverage", p5_coverage),
        ("P6", "double robustness", p6_double_robustness),
        ("P7", "positivity robustness", p7_positivity),
        ("P8", "probation-like anchors", p8_probation_anchors),
        ("P9", "ensemble contract", p9_ensemble),
        ("P10", "determinism", p10_determinism),
        ("P11", "limit behaviour", p11_limits),
    ];
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == id) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("{id} PASS {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("{id} FAIL {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
