//! One full analysis of one frame: cross-fit, curve, uniform band, contrasts.

use serde::{Deserialize, Serialize};

use crate::dataset::AnalysisFrame;
use crate::error::Result;
use crate::estimator::{estimate_curve, DeltaGrid, InfluenceMatrix, LearnerConfig, NuisanceEstimates, DEFAULT_FOLDS};
use crate::inference::{
    contrast_difference, contrast_overlap_test, uniform_band, BootstrapConfig, ContrastResult, EffectCurve,
    IntervalKind, Multiplier,
};
use crate::seeding::derive_seed;

const TAG_BOOTSTRAP: u64 = 0xB007;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSettings {
    #[serde(default = "BandSettings::default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub multiplier: Multiplier,
}

impl BandSettings {
    fn default_replicates() -> usize {
        5000
    }
}

impl Default for BandSettings {
    fn default() -> Self {
        Self {
            replicates: Self::default_replicates(),
            multiplier: Multiplier::Rademacher,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisSettings {
    pub grid: DeltaGrid,
    pub learners: LearnerConfig,
    pub k_folds: usize,
    pub alpha: f64,
    pub band: BandSettings,
    /// `(δ_lo, δ_hi)` compared after estimation.
    pub contrast: Option<(f64, f64)>,
    pub contrast_intervals: IntervalKind,
    pub seed: u64,
}

impl AnalysisSettings {
    /// Two folds, the default learner roster, α = 0.05, 5000 Rademacher replicates
    /// and the 0.1 versus 10 contrast on the uniform band.
    pub fn new(grid: DeltaGrid, seed: u64) -> Self {
        Self {
            grid,
            learners: LearnerConfig::default(),
            k_folds: DEFAULT_FOLDS,
            alpha: 0.05,
            band: BandSettings::default(),
            contrast: Some((0.1, 10.0)),
            contrast_intervals: IntervalKind::Uniform,
            seed,
        }
    }

    pub fn bootstrap(&self) -> BootstrapConfig {
        BootstrapConfig {
            replicates: self.band.replicates,
            multiplier: self.band.multiplier,
            alpha: self.alpha,
            seed: derive_seed(self.seed, &[TAG_BOOTSTRAP]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Contrasts {
    pub overlap: ContrastResult,
    pub difference: ContrastResult,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub curve: EffectCurve,
    pub influence: InfluenceMatrix,
    pub nuisances: NuisanceEstimates,
    pub contrasts: Option<Contrasts>,
}

pub fn run_analysis(frame: &AnalysisFrame, settings: &AnalysisSettings) -> Result<Analysis> {
    let bootstrap = settings.bootstrap();
    bootstrap.validate()?;
    if let Some((lo, hi)) = settings.contrast {
        settings.grid.index_of(lo)?;
        settings.grid.index_of(hi)?;
    }
    let est = estimate_curve(
        frame,
        &settings.grid,
        &settings.learners,
        settings.k_folds,
        settings.seed,
        settings.alpha,
    )?;
    let mut curve = uniform_band(&est.influence, &est.curve, &bootstrap)?;
    curve.metadata_mut().seed = Some(settings.seed);
    curve.metadata_mut().outcome_label = Some(frame.outcome_label().to_string());
    let contrasts = match settings.contrast {
        Some((lo, hi)) => Some(Contrasts {
            overlap: contrast_overlap_test(&curve, lo, hi, settings.contrast_intervals)?,
            difference: contrast_difference(&est.influence, lo, hi, settings.alpha)?,
        }),
        None => None,
    };
    Ok(Analysis {
        curve,
        influence: est.influence,
        nuisances: est.nuisances,
        contrasts,
    })
}
