//! Probability learners for binary targets and a cross-validated stacking ensemble.
//!
//! Every prediction is clamped to `[PROB_EPS, 1 - PROB_EPS]` so log-loss stays finite.

mod gbt;
mod ridge;
mod stack;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gbt::{GbtParams, Tree};
pub use stack::{fit_super_learner, log_loss, CvRisk, EnsembleModel};

pub const PROB_EPS: f64 = 1e-6;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerSpec {
    Constant,
    RidgeLogistic {
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    Gbt(GbtParams),
}

fn default_lambda() -> f64 {
    1.0
}

impl LearnerSpec {
    pub fn ridge(lambda: f64) -> Self {
        LearnerSpec::RidgeLogistic { lambda }
    }

    /// Constant, ridge logistic (λ = 1) and boosted trees with default parameters.
    pub fn default_roster() -> Vec<LearnerSpec> {
        vec![
            LearnerSpec::Constant,
            LearnerSpec::ridge(default_lambda()),
            LearnerSpec::Gbt(GbtParams::default()),
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            LearnerSpec::Constant => "constant",
            LearnerSpec::RidgeLogistic { .. } => "ridge_logistic",
            LearnerSpec::Gbt(_) => "gbt",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerSpec::Constant => Ok(()),
            LearnerSpec::RidgeLogistic { lambda } => {
                if lambda.is_finite() && *lambda >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidLearner(format!("ridge lambda must be >= 0, got {lambda}")))
                }
            }
            LearnerSpec::Gbt(p) => p.validate(),
        }
    }

    pub fn fit(&self, x: ArrayView2<f64>, y: &[u8]) -> Result<FittedModel> {
        self.validate()?;
        if x.nrows() != y.len() {
            return Err(Error::LengthMismatch {
                expected: x.nrows(),
                actual: y.len(),
            });
        }
        match self {
            LearnerSpec::Constant => fit_constant(x, y),
            LearnerSpec::RidgeLogistic { lambda } => ridge::fit_ridge_logistic(x, y, *lambda),
            LearnerSpec::Gbt(p) => gbt::fit_gbt(x, y, p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum ModelState {
    Constant(f64),
    Linear { intercept: f64, coef: Vec<f64> },
    Boosted { init: f64, learning_rate: f64, trees: Vec<Tree> },
}

/// A fitted probability model for a fixed number of feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    state: ModelState,
    feature_count: usize,
    meta: TrainingMeta,
}

impl FittedModel {
    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn meta(&self) -> TrainingMeta {
        self.meta
    }

    /// Intercept and slopes of a ridge-logistic model.
    pub fn linear_coefficients(&self) -> Option<(f64, &[f64])> {
        match &self.state {
            ModelState::Linear { intercept, coef } => Some((*intercept, coef)),
            _ => None,
        }
    }

    pub fn tree_count(&self) -> usize {
        match &self.state {
            ModelState::Boosted { trees, .. } => trees.len(),
            _ => 0,
        }
    }

    pub fn trees(&self) -> &[Tree] {
        match &self.state {
            ModelState::Boosted { trees, .. } => trees,
            _ => &[],
        }
    }

    fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let p = match &self.state {
            ModelState::Constant(p) => *p,
            ModelState::Linear { intercept, coef } => {
                sigmoid(intercept + coef.iter().zip(row.iter()).map(|(b, v)| b * v).sum::<f64>())
            }
            ModelState::Boosted {
                init,
                learning_rate,
                trees,
            } => {
                let score: f64 = trees.iter().map(|t| t.predict(row)).sum();
                sigmoid(init + learning_rate * score)
            }
        };
        clamp_prob(p)
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.feature_count {
            return Err(Error::ColumnCountMismatch {
                expected: self.feature_count,
                actual: x.ncols(),
            });
        }
        Ok(x.rows().into_iter().map(|r| self.predict_row(r)).collect())
    }
}

/// Predicts the clamped training mean for every row.
pub fn fit_constant(x: ArrayView2<f64>, y: &[u8]) -> Result<FittedModel> {
    if y.is_empty() {
        return Err(Error::FitFailed("constant learner needs at least one row".into()));
    }
    let mean = y.iter().map(|&v| v as f64).sum::<f64>() / y.len() as f64;
    Ok(FittedModel {
        state: ModelState::Constant(clamp_prob(mean)),
        feature_count: x.ncols(),
        meta: TrainingMeta {
            iterations: 0,
            converged: true,
        },
    })
}

pub fn fit_ridge_logistic(x: ArrayView2<f64>, y: &[u8], lambda: f64) -> Result<FittedModel> {
    LearnerSpec::ridge(lambda).fit(x, y)
}

pub fn fit_gbt(x: ArrayView2<f64>, y: &[u8], params: &GbtParams) -> Result<FittedModel> {
    LearnerSpec::Gbt(params.clone()).fit(x, y)
}
