use std::collections::BTreeSet;
use std::path::Path;
use std::time::Duration;

use serde::Serialize;

use super::RunConfig;
use crate::dataset::{AnalysisFrame, SummaryTable};
use crate::digest::json_digest;
use crate::error::{Error, Result};
use crate::estimator::FoldProvenance;
use crate::inference::{ContrastResult, CurvePoint, EffectCurve};
use crate::pipeline::Analysis;
use crate::simulate::SuiteOutcome;

pub const SCHEMA_VERSION: u32 = 1;

pub const CURVE_CSV_HEADER: [&str; 9] = [
    "delta",
    "estimate",
    "std_error",
    "pointwise_lo",
    "pointwise_hi",
    "band_lo",
    "band_hi",
    "config_digest",
    "seed",
];

pub(super) struct RunContext<'a> {
    pub digest: &'a str,
    pub seed: u64,
}

pub(super) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_curve_csv(path: &Path, curve: &EffectCurve, digest: &str, seed: u64) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CURVE_CSV_HEADER)?;
    for p in curve.points() {
        w.write_record([
            p.delta.to_string(),
            p.estimate.to_string(),
            p.std_error.to_string(),
            p.pointwise_lo.to_string(),
            p.pointwise_hi.to_string(),
            opt(p.band_lo),
            opt(p.band_hi),
            digest.to_string(),
            seed.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct CurveDocument<'a> {
    schema_version: u32,
    config_digest: &'a str,
    seed: u64,
    outcome_label: Option<&'a str>,
    stratum_label: Option<&'a str>,
    n: usize,
    alpha: f64,
    pointwise_z: f64,
    critical_value: Option<f64>,
    bands_contain_pointwise: Option<bool>,
    points: &'a [CurvePoint],
}

#[derive(Serialize)]
struct ContrastDocument<'a> {
    schema_version: u32,
    config_digest: &'a str,
    seed: u64,
    stratum_label: Option<&'a str>,
    overlap_test: &'a ContrastResult,
    difference_test: &'a ContrastResult,
}

pub(super) fn write_analysis(dir: &Path, ctx: &RunContext, analysis: &Analysis, stratum: Option<&str>) -> Result<()> {
    let curve = &analysis.curve;
    write_curve_csv(&dir.join("curve.csv"), curve, ctx.digest, ctx.seed)?;
    write_json(
        &dir.join("curve.json"),
        &CurveDocument {
            schema_version: SCHEMA_VERSION,
            config_digest: ctx.digest,
            seed: ctx.seed,
            outcome_label: curve.metadata().outcome_label.as_deref(),
            stratum_label: stratum,
            n: curve.n(),
            alpha: curve.alpha(),
            pointwise_z: curve.pointwise_z(),
            critical_value: curve.critical_value(),
            bands_contain_pointwise: curve.bands_contain_pointwise(),
            points: curve.points(),
        },
    )?;
    if let Some(c) = &analysis.contrasts {
        write_json(
            &dir.join("contrast.json"),
            &ContrastDocument {
                schema_version: SCHEMA_VERSION,
                config_digest: ctx.digest,
                seed: ctx.seed,
                stratum_label: stratum,
                overlap_test: &c.overlap,
                difference_test: &c.difference,
            },
        )?;
    }
    Ok(())
}

/// Replaces characters outside `[A-Za-z0-9._-]` with `_`; empty labels and the
/// relative components `.`/`..` become `_`-prefixed.
pub fn sanitize_label(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect();
    if s.is_empty() || s == "." || s == ".." {
        format!("_{s}")
    } else {
        s
    }
}

/// Sanitized directory names, suffixed with `_2`, `_3`, ... when two labels collide.
pub(super) fn unique_dir_names<'a>(labels: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut used = BTreeSet::new();
    labels
        .map(|l| {
            let base = sanitize_label(l);
            let mut name = base.clone();
            let mut k = 2;
            while !used.insert(name.clone()) {
                name = format!("{base}_{k}");
                k += 1;
            }
            name
        })
        .collect()
}

#[derive(Serialize)]
struct DataRecord<'a> {
    path: String,
    sha256: &'a str,
    n: usize,
    treated: usize,
    outcome_mean: f64,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    stratum_label: Option<&'a str>,
    directory: String,
    n: usize,
    critical_value: Option<f64>,
    pointwise_z: f64,
    bands_contain_pointwise: Option<bool>,
    learner_provenance: &'a [FoldProvenance],
}

impl<'a> RunRecord<'a> {
    fn new(label: Option<&'a str>, directory: String, a: &'a Analysis) -> Self {
        Self {
            stratum_label: label,
            directory,
            n: a.curve.n(),
            critical_value: a.curve.critical_value(),
            pointwise_z: a.curve.pointwise_z(),
            bands_contain_pointwise: a.curve.bands_contain_pointwise(),
            learner_provenance: a.nuisances.provenance(),
        }
    }
}

#[derive(Serialize)]
pub(super) struct Manifest<'a> {
    schema_version: u32,
    tool: &'static str,
    version: &'static str,
    config_digest: &'a str,
    seed: u64,
    config: &'a RunConfig,
    data: DataRecord<'a>,
    pooled: RunRecord<'a>,
    strata: Vec<RunRecord<'a>>,
    wall_time_seconds: f64,
}

impl<'a> Manifest<'a> {
    #[allow(clippy::too_many_arguments)]
    pub(super) fn new(
        config: &'a RunConfig,
        digest: &'a str,
        data_path: &Path,
        data_digest: &'a str,
        frame: &AnalysisFrame,
        pooled: &'a Analysis,
        strata: &'a [(String, Analysis)],
        dirs: &[String],
        elapsed: Duration,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool: "ips",
            version: env!("CARGO_PKG_VERSION"),
            config_digest: digest,
            seed: config.seed,
            config,
            data: DataRecord {
                path: data_path.display().to_string(),
                sha256: data_digest,
                n: frame.n(),
                treated: frame.treated_count(),
                outcome_mean: frame.outcome_mean(),
            },
            pooled: RunRecord::new(None, ".".into(), pooled),
            strata: strata
                .iter()
                .zip(dirs)
                .map(|((label, a), dir)| RunRecord::new(Some(label), format!("strata/{dir}"), a))
                .collect(),
            wall_time_seconds: elapsed.as_secs_f64(),
        }
    }
}

#[derive(Serialize)]
struct SuiteDocument<'a> {
    schema_version: u32,
    config_digest: String,
    passed: bool,
    #[serde(flatten)]
    outcome: &'a SuiteOutcome,
}

pub(super) fn write_suite(dir: &Path, outcome: &SuiteOutcome) -> Result<()> {
    let digest = json_digest(&(&outcome.suite, outcome.replicates, outcome.n, outcome.seed));
    write_json(
        &dir.join(format!("{}.json", outcome.suite)),
        &SuiteDocument {
            schema_version: SCHEMA_VERSION,
            config_digest: digest,
            passed: outcome.passed(),
            outcome,
        },
    )?;
    for r in &outcome.reports {
        let stem = sanitize_label(&format!("{}_{}_{}", outcome.suite, r.label, r.mode));
        r.write_csv(&dir.join(format!("{stem}.csv")))?;
        r.write_json(&dir.join(format!("{stem}.json")))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SummaryDocument<'a> {
    schema_version: u32,
    config_digest: &'a str,
    seed: u64,
    #[serde(flatten)]
    table: &'a SummaryTable,
}

pub(super) fn write_summary(dir: &Path, name: &str, ctx: &RunContext, table: &SummaryTable) -> Result<()> {
    let csv_path = dir.join(format!("summary_{name}.csv"));
    let mut w = csv::Writer::from_path(&csv_path)?;
    let mut header: Vec<&str> = SummaryTable::CSV_HEADER.to_vec();
    header.extend(["config_digest", "seed"]);
    w.write_record(&header)?;
    for mut row in table.csv_rows() {
        row.push(ctx.digest.to_string());
        row.push(ctx.seed.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    write_json(
        &dir.join(format!("summary_{name}.json")),
        &SummaryDocument {
            schema_version: SCHEMA_VERSION,
            config_digest: ctx.digest,
            seed: ctx.seed,
            table,
        },
    )
}
