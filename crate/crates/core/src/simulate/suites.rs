//! Named simulation suites with frozen pass/fail thresholds.

use rayon::prelude::*;
use serde::Serialize;

use super::{
    expected_influence, misspecification_experiment, probation_like_dgp, run_replications, sample_dgp,
    single_cell_dgp, true_effect_at, two_cell_dgp, EstimationConfig, InfluenceForm, MisspecMode, SimulationReport,
};
use crate::error::{Error, Result};
use crate::estimator::{DeltaGrid, GridSpec, LearnerConfig, DEFAULT_FOLDS};
use crate::inference::Decision;
use crate::pipeline::{run_analysis, AnalysisSettings};
use crate::seeding::derive_seed;

pub const SUITE_NAMES: [&str; 5] = [
    "oracle_consistency",
    "coverage",
    "double_robustness",
    "literal_formula_bias",
    "probation_like",
];

pub const ORACLE_BIAS_SE_MULTIPLE: f64 = 3.0;
pub const POINTWISE_COVERAGE_RANGE: (f64, f64) = (0.92, 0.98);
pub const UNIFORM_COVERAGE_MIN: f64 = 0.93;
pub const COVERAGE_BAND_REPLICATES: usize = 5000;
pub const BOTH_CORRECT_MAX_BIAS: f64 = 0.01;
/// Largest asymptotic single-wrong bias on the two-cell dgp is 0.0058; this leaves room
/// for finite-sample and Monte Carlo error.
pub const SINGLE_WRONG_MAX_BIAS: f64 = 0.015;
pub const BOTH_WRONG_FACTOR: f64 = 3.0;
pub const LITERAL_MIN_BIAS: f64 = 0.05;
pub const ANCHOR_BAND_RATE_MIN: f64 = 0.9;

/// `(δ, ψ(δ))` anchors the probation-like dgp is calibrated to.
pub const PROBATION_ANCHORS: [(f64, f64, f64); 3] = [(0.1, 0.56, 0.01), (1.0, 0.58, 0.005), (10.0, 0.65, 0.01)];
pub const PROBATION_TREATED_SHARE: (f64, f64) = (0.264, 0.005);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuiteOverrides {
    pub replicates: Option<usize>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl SuiteCheck {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteOutcome {
    pub suite: String,
    pub replicates: usize,
    pub n: usize,
    pub seed: u64,
    pub reports: Vec<SimulationReport>,
    pub checks: Vec<SuiteCheck>,
    pub details: serde_json::Value,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Plan {
    replicates: usize,
    n: usize,
    seed: u64,
}

impl Plan {
    fn resolve(o: &SuiteOverrides, replicates: usize, n: usize, seed: u64) -> Self {
        Self {
            replicates: o.replicates.unwrap_or(replicates),
            n: o.n.unwrap_or(n),
            seed: o.seed.unwrap_or(seed),
        }
    }
}

fn default_grid() -> Result<DeltaGrid> {
    DeltaGrid::from_spec(&GridSpec::default())
}

pub fn run_suite(name: &str, overrides: &SuiteOverrides) -> Result<SuiteOutcome> {
    match name {
        "oracle_consistency" => oracle_consistency(Plan::resolve(overrides, 500, 2000, 410)),
        "coverage" => coverage(Plan::resolve(overrides, 500, 2000, 420)),
        "double_robustness" => double_robustness(Plan::resolve(overrides, 200, 5000, 430)),
        "literal_formula_bias" => literal_formula_bias(Plan::resolve(overrides, 200, 5000, 440)),
        "probation_like" => probation_like(Plan::resolve(overrides, 50, 2453, 450)),
        other => Err(Error::Config(format!(
            "unknown suite '{other}'; expected one of {}",
            SUITE_NAMES.join(", ")
        ))),
    }
}

fn outcome(suite: &str, plan: &Plan, reports: Vec<SimulationReport>, checks: Vec<SuiteCheck>) -> SuiteOutcome {
    SuiteOutcome {
        suite: suite.to_string(),
        replicates: plan.replicates,
        n: plan.n,
        seed: plan.seed,
        reports,
        checks,
        details: serde_json::Value::Null,
    }
}

/// Every δ with `|bias| > k·SE`, formatted for a check detail.
pub fn bias_outliers(report: &SimulationReport, k: f64) -> Vec<String> {
    report
        .rows
        .iter()
        .filter(|r| r.bias.abs() > k * r.bias_se)
        .map(|r| format!("δ={:.4}: bias {:.2e}, se {:.2e}", r.delta, r.bias, r.bias_se))
        .collect()
}

fn oracle_consistency(plan: Plan) -> Result<SuiteOutcome> {
    let grid = default_grid()?;
    let mut reports = Vec::new();
    let mut checks = Vec::new();
    for (i, dgp) in [single_cell_dgp(), two_cell_dgp()].into_iter().enumerate() {
        let report = run_replications(
            &dgp,
            &EstimationConfig::oracle(grid.clone()),
            plan.replicates,
            plan.n,
            derive_seed(plan.seed, &[i as u64]),
        )?;
        let outliers = bias_outliers(&report, ORACLE_BIAS_SE_MULTIPLE);
        checks.push(SuiteCheck::new(
            format!("{}: |bias| <= 3 se at every δ", dgp.label),
            outliers.is_empty(),
            if outliers.is_empty() {
                format!("max |bias| {:.2e}", report.max_abs_bias())
            } else {
                outliers.join("; ")
            },
        ));
        reports.push(report);
    }
    Ok(outcome("oracle_consistency", &plan, reports, checks))
}

fn coverage(plan: Plan) -> Result<SuiteOutcome> {
    let dgp = probation_like_dgp();
    let config = EstimationConfig::learned(default_grid()?, LearnerConfig::default(), DEFAULT_FOLDS)
        .with_band(COVERAGE_BAND_REPLICATES);
    let report = run_replications(&dgp, &config, plan.replicates, plan.n, plan.seed)?;
    let (lo, hi) = POINTWISE_COVERAGE_RANGE;
    let (min_cov, max_cov) = report.rows.iter().fold((1.0f64, 0.0f64), |(a, b), r| {
        (a.min(r.pointwise_coverage), b.max(r.pointwise_coverage))
    });
    let uniform = report.uniform_coverage.expect("bands requested");
    let checks = vec![
        SuiteCheck::new(
            "pointwise coverage in [0.92, 0.98] at every δ",
            min_cov >= lo && max_cov <= hi,
            format!("range [{min_cov:.3}, {max_cov:.3}]"),
        ),
        SuiteCheck::new(
            "whole-curve band coverage >= 0.93",
            uniform >= UNIFORM_COVERAGE_MIN,
            format!("{uniform:.3}"),
        ),
    ];
    Ok(outcome("coverage", &plan, vec![report], checks))
}

fn double_robustness(plan: Plan) -> Result<SuiteOutcome> {
    let dgp = two_cell_dgp();
    let modes = [
        MisspecMode::BothCorrect,
        MisspecMode::PsWrong,
        MisspecMode::OrWrong,
        MisspecMode::BothWrong,
    ];
    let reports = modes
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            misspecification_experiment(&dgp, m, plan.replicates, plan.n, derive_seed(plan.seed, &[i as u64]))
        })
        .collect::<Result<Vec<_>>>()?;
    let bias: Vec<f64> = reports.iter().map(|r| r.max_abs_bias()).collect();
    let checks = vec![
        SuiteCheck::new(
            "both_correct max |bias| < 0.01",
            bias[0] < BOTH_CORRECT_MAX_BIAS,
            format!("{:.4}", bias[0]),
        ),
        SuiteCheck::new(
            "ps_wrong max |bias| <= 0.015",
            bias[1] <= SINGLE_WRONG_MAX_BIAS,
            format!("{:.4}", bias[1]),
        ),
        SuiteCheck::new(
            "or_wrong max |bias| <= 0.015",
            bias[2] <= SINGLE_WRONG_MAX_BIAS,
            format!("{:.4}", bias[2]),
        ),
        SuiteCheck::new(
            "both_wrong max |bias| > 3 x 0.015",
            bias[3] > BOTH_WRONG_FACTOR * SINGLE_WRONG_MAX_BIAS,
            format!("{:.4}", bias[3]),
        ),
    ];
    Ok(outcome("double_robustness", &plan, reports, checks))
}

fn literal_formula_bias(plan: Plan) -> Result<SuiteOutcome> {
    let dgp = single_cell_dgp();
    let report = misspecification_experiment(&dgp, MisspecMode::LiteralFormula, plan.replicates, plan.n, plan.seed)?;
    let row = report.row_at(10.0)?;
    let analytic = expected_influence(&dgp, 10.0, InfluenceForm::Literal) - true_effect_at(&dgp, 10.0);
    let checks = vec![
        SuiteCheck::new(
            "|bias| at δ=10 > 0.05",
            row.bias.abs() > LITERAL_MIN_BIAS,
            format!("{:.4}", row.bias),
        ),
        SuiteCheck::new(
            "bias at δ=10 within 3 se of its analytic value",
            (row.bias - analytic).abs() <= ORACLE_BIAS_SE_MULTIPLE * row.bias_se,
            format!("simulated {:.4}, analytic {analytic:.4}, se {:.2e}", row.bias, row.bias_se),
        ),
    ];
    Ok(outcome("literal_formula_bias", &plan, vec![report], checks))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnchorRun {
    pub seed: u64,
    /// Per anchor: whether the band at its δ contains the anchor value.
    pub anchors_in_band: Vec<bool>,
    pub overlap_rejects: bool,
    pub critical_value: f64,
}

fn probation_like(plan: Plan) -> Result<SuiteOutcome> {
    let dgp = probation_like_dgp();
    let mut checks = Vec::new();
    let (share, tol) = PROBATION_TREATED_SHARE;
    let treated = dgp.treated_share();
    checks.push(SuiteCheck::new(
        "treated share 0.264 ± 0.005",
        (treated - share).abs() <= tol,
        format!("{treated:.5}"),
    ));
    for (delta, target, tol) in PROBATION_ANCHORS {
        let psi = true_effect_at(&dgp, delta);
        checks.push(SuiteCheck::new(
            format!("ψ({delta}) = {target} ± {tol}"),
            (psi - target).abs() <= tol,
            format!("{psi:.5}"),
        ));
    }

    let grid = default_grid()?;
    let runs = (0..plan.replicates)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(plan.seed, &[r as u64]);
            let frame = sample_dgp(&dgp, plan.n, derive_seed(seed, &[1]))?;
            let analysis = run_analysis(&frame, &AnalysisSettings::new(grid.clone(), seed))?;
            let anchors_in_band = PROBATION_ANCHORS
                .iter()
                .map(|&(delta, target, _)| {
                    Ok(analysis.curve.point_at(delta)?.band().expect("bands").contains(target))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(AnchorRun {
                seed,
                anchors_in_band,
                overlap_rejects: analysis.contrasts.expect("contrast configured").overlap.decision
                    == Decision::Reject,
                critical_value: analysis.curve.critical_value().expect("bands"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let count = runs.len() as f64;
    for (k, (delta, target, _)) in PROBATION_ANCHORS.iter().enumerate() {
        let rate = runs.iter().filter(|r| r.anchors_in_band[k]).count() as f64 / count;
        checks.push(SuiteCheck::new(
            format!("band at δ={delta} contains {target} in >= 90% of runs"),
            rate >= ANCHOR_BAND_RATE_MIN,
            format!("{rate:.3}"),
        ));
    }
    let reject_rate = runs.iter().filter(|r| r.overlap_rejects).count() as f64 / count;
    checks.push(SuiteCheck::new(
        "δ=0.1 vs δ=10 overlap test rejects in a majority of runs",
        reject_rate > 0.5,
        format!("{reject_rate:.3}"),
    ));
    let mut out = outcome("probation_like", &plan, Vec::new(), checks);
    out.details = serde_json::to_value(&runs)?;
    Ok(out)
}
