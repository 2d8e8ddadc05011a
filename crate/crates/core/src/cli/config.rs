use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnSchema, DEFAULT_MIN_STRATUM_ROWS};
use crate::digest::json_digest;
use crate::error::{Error, Result};
use crate::estimator::{DeltaGrid, GridSpec, LearnerConfig, OutcomeMode, DEFAULT_FOLDS, MAX_FOLDS};
use crate::inference::IntervalKind;
use crate::learners::LearnerSpec;
use crate::pipeline::{AnalysisSettings, BandSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastSpec {
    pub delta_lo: f64,
    pub delta_hi: f64,
    #[serde(default)]
    pub intervals: IntervalKind,
}

fn default_contrast() -> Option<ContrastSpec> {
    Some(ContrastSpec {
        delta_lo: 0.1,
        delta_hi: 10.0,
        intervals: IntervalKind::Uniform,
    })
}

fn default_k_folds() -> usize {
    DEFAULT_FOLDS
}

fn default_inner_folds() -> usize {
    10
}

fn default_alpha() -> f64 {
    0.05
}

fn default_min_stratum_rows() -> usize {
    DEFAULT_MIN_STRATUM_ROWS
}

/// JSON run configuration. `seed` is required; everything else has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: ColumnSchema,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_k_folds")]
    pub k_folds: usize,
    #[serde(default = "LearnerSpec::default_roster")]
    pub learners: Vec<LearnerSpec>,
    #[serde(default = "default_inner_folds")]
    pub inner_folds: usize,
    #[serde(default)]
    pub outcome_mode: OutcomeMode,
    #[serde(default)]
    pub bootstrap: BandSettings,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub seed: u64,
    #[serde(default)]
    pub stratify: Option<String>,
    #[serde(default = "default_min_stratum_rows")]
    pub min_stratum_rows: usize,
    #[serde(default = "default_contrast")]
    pub contrast: Option<ContrastSpec>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        if !(2..=MAX_FOLDS).contains(&self.k_folds) {
            return Err(Error::Config(format!(
                "k_folds must be in 2..={MAX_FOLDS}, got {}",
                self.k_folds
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if let (Some(s), Some(t)) = (&self.stratify, &self.schema.strata_column) {
            if s != t {
                return Err(Error::Config(format!(
                    "stratify ({s}) and schema.strata_column ({t}) disagree"
                )));
            }
        }
        self.learner_config().validate()?;
        let settings = self.analysis_settings()?;
        settings.bootstrap().validate()?;
        if let Some((lo, hi)) = settings.contrast {
            settings.grid.index_of(lo)?;
            settings.grid.index_of(hi)?;
        }
        Ok(())
    }

    /// Schema with the stratification column filled in.
    pub fn effective_schema(&self) -> ColumnSchema {
        let mut schema = self.schema.clone();
        if schema.strata_column.is_none() {
            schema.strata_column = self.stratify.clone();
        }
        schema
    }

    pub fn strata_column(&self) -> Option<&str> {
        self.stratify.as_deref().or(self.schema.strata_column.as_deref())
    }

    pub fn learner_config(&self) -> LearnerConfig {
        LearnerConfig {
            inner_folds: self.inner_folds,
            outcome_mode: self.outcome_mode,
            ..LearnerConfig::uniform(self.learners.clone())
        }
    }

    pub fn analysis_settings(&self) -> Result<AnalysisSettings> {
        let grid = DeltaGrid::from_spec(&self.grid)?;
        Ok(AnalysisSettings {
            learners: self.learner_config(),
            k_folds: self.k_folds,
            alpha: self.alpha,
            band: self.bootstrap.clone(),
            contrast: self.contrast.as_ref().map(|c| (c.delta_lo, c.delta_hi)),
            contrast_intervals: self.contrast.as_ref().map(|c| c.intervals).unwrap_or_default(),
            ..AnalysisSettings::new(grid, self.seed)
        })
    }

    /// SHA-256 of the fully defaulted configuration.
    pub fn digest(&self) -> String {
        json_digest(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"schema": {"outcome_column": "y", "treatment_column": "a", "covariate_columns": ["x1"]}, "seed": 7}"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.k_folds, 2);
        assert_eq!(c.alpha, 0.05);
        assert_eq!(c.learners.len(), 3);
        assert_eq!(c.bootstrap.replicates, 5000);
        assert_eq!(c.contrast.as_ref().unwrap().delta_hi, 10.0);
        assert_eq!(c.grid, GridSpec::default());
    }

    #[test]
    fn seed_is_required() {
        let text = MINIMAL.replace(r#", "seed": 7"#, "");
        let err = RunConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = MINIMAL.replace(r#""seed": 7"#, r#""seed": 7, "sede": 8"#);
        assert!(RunConfig::from_json(&text).is_err());
    }

    #[test]
    fn contrast_must_be_on_grid() {
        let text = MINIMAL.replace(r#""seed": 7"#, r#""seed": 7, "contrast": {"delta_lo": 0.1, "delta_hi": 9.0}"#);
        let err = RunConfig::from_json(&text).unwrap_err();
        assert!(matches!(err, Error::DeltaNotOnGrid { .. }), "{err}");
    }

    #[test]
    fn digest_ignores_formatting() {
        let spaced = MINIMAL.replace(", ", ",   ");
        assert_eq!(
            RunConfig::from_json(MINIMAL).unwrap().digest(),
            RunConfig::from_json(&spaced).unwrap().digest()
        );
    }
}
