use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use super::{form_value, oracle_nuisances, sample_dgp, true_effect, DgpSpec, InfluenceForm};
use crate::digest::json_digest;
use crate::error::{Error, Result};
use crate::estimator::{
    cross_fit_nuisances, DeltaGrid, GridSpec, InfluenceMatrix, LearnerConfig, NuisanceEstimates, DEFAULT_FOLDS,
};
use crate::inference::{uniform_band, BootstrapConfig, EffectCurve, Multiplier};
use crate::learners::LearnerSpec;
use crate::seeding::derive_seed;

const TAG_SAMPLE: u64 = 1;
const TAG_FIT: u64 = 2;
const TAG_BOOT: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NuisanceSource {
    /// True per-cell nuisances, no learning.
    Oracle,
    Learned { learners: LearnerConfig, k_folds: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationConfig {
    pub grid: DeltaGrid,
    pub nuisances: NuisanceSource,
    pub form: InfluenceForm,
    pub alpha: f64,
    /// Bootstrap replicates per simulated dataset; `None` skips the uniform band.
    pub band_replicates: Option<usize>,
    pub multiplier: Multiplier,
}

impl EstimationConfig {
    pub fn oracle(grid: DeltaGrid) -> Self {
        Self {
            grid,
            nuisances: NuisanceSource::Oracle,
            form: InfluenceForm::Indicator,
            alpha: 0.05,
            band_replicates: None,
            multiplier: Multiplier::Rademacher,
        }
    }

    pub fn learned(grid: DeltaGrid, learners: LearnerConfig, k_folds: usize) -> Self {
        Self {
            nuisances: NuisanceSource::Learned { learners, k_folds },
            ..Self::oracle(grid)
        }
    }

    pub fn with_band(mut self, replicates: usize) -> Self {
        self.band_replicates = Some(replicates);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub delta: f64,
    pub truth: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    /// Standard error of the replicate mean.
    pub bias_se: f64,
    pub rmse: f64,
    pub mean_std_error: f64,
    pub pointwise_coverage: f64,
    pub band_coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub schema_version: u32,
    pub label: String,
    pub mode: String,
    pub replicates: usize,
    pub n: usize,
    pub seed: u64,
    pub config_digest: String,
    pub rows: Vec<ReportRow>,
    /// Share of replicates whose band covers the truth at every grid δ.
    pub uniform_coverage: Option<f64>,
    pub mean_critical_value: Option<f64>,
}

impl SimulationReport {
    pub fn max_abs_bias(&self) -> f64 {
        self.rows.iter().map(|r| r.bias.abs()).fold(0.0, f64::max)
    }

    pub fn row_at(&self, delta: f64) -> Result<&ReportRow> {
        let grid = DeltaGrid::from_values(self.rows.iter().map(|r| r.delta).collect())?;
        Ok(&self.rows[grid.index_of(delta)?])
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
        w.write_record([
            "delta",
            "truth",
            "mean_estimate",
            "bias",
            "bias_se",
            "rmse",
            "mean_std_error",
            "pointwise_coverage",
            "band_coverage",
            "replicates",
            "n",
            "config_digest",
            "seed",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.delta.to_string(),
                r.truth.to_string(),
                r.mean_estimate.to_string(),
                r.bias.to_string(),
                r.bias_se.to_string(),
                r.rmse.to_string(),
                r.mean_std_error.to_string(),
                r.pointwise_coverage.to_string(),
                r.band_coverage.map(|v| v.to_string()).unwrap_or_default(),
                self.replicates.to_string(),
                self.n.to_string(),
                self.config_digest.clone(),
                self.seed.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

struct Replicate {
    estimates: Vec<f64>,
    std_errors: Vec<f64>,
    pointwise_cover: Vec<bool>,
    band_cover: Option<Vec<bool>>,
    critical_value: Option<f64>,
}

fn influence_matrix(
    form: InfluenceForm,
    a: &[u8],
    y: &[u8],
    nuisances: &NuisanceEstimates,
    grid: &DeltaGrid,
) -> Result<InfluenceMatrix> {
    let (pi, mu1, mu0) = (nuisances.pi_hat(), nuisances.mu1_hat(), nuisances.mu0_hat());
    let phi = Array2::from_shape_fn((a.len(), grid.len()), |(i, g)| {
        form_value(form, grid.values()[g], a[i], y[i] as f64, pi[i], mu1[i], mu0[i])
    });
    InfluenceMatrix::from_parts(phi, grid.clone())
}

fn one_replicate(dgp: &DgpSpec, config: &EstimationConfig, truth: &[f64], n: usize, seed: u64) -> Result<Replicate> {
    let frame = sample_dgp(dgp, n, derive_seed(seed, &[TAG_SAMPLE]))?;
    let nuisances = match &config.nuisances {
        NuisanceSource::Oracle => oracle_nuisances(dgp, &frame)?,
        NuisanceSource::Learned { learners, k_folds } => {
            cross_fit_nuisances(&frame, learners, *k_folds, derive_seed(seed, &[TAG_FIT]))?
        }
    };
    let influence = influence_matrix(config.form, frame.a(), frame.y(), &nuisances, &config.grid)?;
    let mut curve = EffectCurve::from_influence(&influence, config.alpha)?;
    if let Some(b) = config.band_replicates {
        let boot = BootstrapConfig {
            replicates: b,
            multiplier: config.multiplier,
            alpha: config.alpha,
            seed: derive_seed(seed, &[TAG_BOOT]),
        };
        curve = uniform_band(&influence, &curve, &boot)?;
    }
    let points = curve.points();
    Ok(Replicate {
        estimates: points.iter().map(|p| p.estimate).collect(),
        std_errors: points.iter().map(|p| p.std_error).collect(),
        pointwise_cover: points.iter().zip(truth).map(|(p, &t)| p.pointwise().contains(t)).collect(),
        band_cover: curve
            .has_bands()
            .then(|| points.iter().zip(truth).map(|(p, &t)| p.band().expect("bands").contains(t)).collect()),
        critical_value: curve.critical_value(),
    })
}

/// Repeats sample → estimate → intervals `replicates` times and compares each curve
/// with the exact truth. Replicate `r` draws everything from seeds derived from
/// `(seed, r)` and results are aggregated in replicate order.
pub fn run_replications(
    dgp: &DgpSpec,
    config: &EstimationConfig,
    replicates: usize,
    n: usize,
    seed: u64,
) -> Result<SimulationReport> {
    run_labelled(dgp, config, replicates, n, seed, "replications")
}

fn run_labelled(
    dgp: &DgpSpec,
    config: &EstimationConfig,
    replicates: usize,
    n: usize,
    seed: u64,
    mode: &str,
) -> Result<SimulationReport> {
    dgp.validate()?;
    if replicates < 2 {
        return Err(Error::Config(format!("need at least 2 replicates, got {replicates}")));
    }
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 units per replicate, got {n}")));
    }
    let truth = true_effect(dgp, &config.grid).values();
    let reps = (0..replicates)
        .into_par_iter()
        .map(|r| one_replicate(dgp, config, &truth, n, derive_seed(seed, &[r as u64])))
        .collect::<Result<Vec<_>>>()?;

    let count = replicates as f64;
    let rows = config
        .grid
        .values()
        .iter()
        .enumerate()
        .map(|(g, &delta)| {
            let t = truth[g];
            let mean = reps.iter().map(|r| r.estimates[g]).sum::<f64>() / count;
            let ss: f64 = reps.iter().map(|r| (r.estimates[g] - mean).powi(2)).sum();
            let mse = reps.iter().map(|r| (r.estimates[g] - t).powi(2)).sum::<f64>() / count;
            ReportRow {
                delta,
                truth: t,
                mean_estimate: mean,
                bias: mean - t,
                bias_se: (ss / (count - 1.0)).sqrt() / count.sqrt(),
                rmse: mse.sqrt(),
                mean_std_error: reps.iter().map(|r| r.std_errors[g]).sum::<f64>() / count,
                pointwise_coverage: reps.iter().filter(|r| r.pointwise_cover[g]).count() as f64 / count,
                band_coverage: config.band_replicates.map(|_| {
                    reps.iter()
                        .filter(|r| r.band_cover.as_ref().expect("bands")[g])
                        .count() as f64
                        / count
                }),
            }
        })
        .collect();
    let uniform_coverage = config.band_replicates.map(|_| {
        reps.iter()
            .filter(|r| r.band_cover.as_ref().expect("bands").iter().all(|&c| c))
            .count() as f64
            / count
    });
    let mean_critical_value = config
        .band_replicates
        .map(|_| reps.iter().map(|r| r.critical_value.expect("bands")).sum::<f64>() / count);

    #[derive(Serialize)]
    struct Fingerprint<'a> {
        dgp: &'a DgpSpec,
        config: &'a EstimationConfig,
        replicates: usize,
        n: usize,
        seed: u64,
        mode: &'a str,
    }
    let config_digest = json_digest(&Fingerprint {
        dgp,
        config,
        replicates,
        n,
        seed,
        mode,
    });
    Ok(SimulationReport {
        schema_version: 1,
        label: dgp.label.clone(),
        mode: mode.to_string(),
        replicates,
        n,
        seed,
        config_digest,
        rows,
        uniform_coverage,
        mean_critical_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MisspecMode {
    BothCorrect,
    PsWrong,
    OrWrong,
    BothWrong,
    LiteralFormula,
}

impl MisspecMode {
    pub const ALL: [MisspecMode; 5] = [
        MisspecMode::BothCorrect,
        MisspecMode::PsWrong,
        MisspecMode::OrWrong,
        MisspecMode::BothWrong,
        MisspecMode::LiteralFormula,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MisspecMode::BothCorrect => "both_correct",
            MisspecMode::PsWrong => "ps_wrong",
            MisspecMode::OrWrong => "or_wrong",
            MisspecMode::BothWrong => "both_wrong",
            MisspecMode::LiteralFormula => "literal_formula",
        }
    }
}

/// Learned nuisances where the "correct" family is ridge logistic regression and the
/// "wrong" family is the constant learner. `LiteralFormula` uses the true nuisances
/// with the indicator-free influence value.
pub fn misspecification_experiment(
    dgp: &DgpSpec,
    mode: MisspecMode,
    replicates: usize,
    n: usize,
    seed: u64,
) -> Result<SimulationReport> {
    let ps_wrong = matches!(mode, MisspecMode::PsWrong | MisspecMode::BothWrong);
    let or_wrong = matches!(mode, MisspecMode::OrWrong | MisspecMode::BothWrong);
    if ps_wrong && !dgp.varies_in_pi() {
        return Err(Error::InvalidDgp(format!(
            "{}: a constant propensity model is not misspecified when π is constant",
            dgp.label
        )));
    }
    if (or_wrong || mode == MisspecMode::LiteralFormula) && !dgp.varies_in_mu() {
        return Err(Error::InvalidDgp(format!(
            "{}: a constant outcome model is not misspecified when μ is constant",
            dgp.label
        )));
    }
    let grid = DeltaGrid::from_spec(&GridSpec::default())?;
    let config = if mode == MisspecMode::LiteralFormula {
        EstimationConfig {
            form: InfluenceForm::Literal,
            ..EstimationConfig::oracle(grid)
        }
    } else {
        let pick = |wrong: bool| vec![if wrong { LearnerSpec::Constant } else { LearnerSpec::ridge(1.0) }];
        let learners = LearnerConfig {
            propensity: pick(ps_wrong),
            outcome: pick(or_wrong),
            ..LearnerConfig::default()
        };
        EstimationConfig::learned(grid, learners, DEFAULT_FOLDS)
    };
    run_labelled(dgp, &config, replicates, n, seed, mode.name())
}
