use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::AnalysisFrame;
use crate::error::{Error, Result};
use crate::learners::{fit_super_learner, CvRisk, EnsembleModel, FittedModel, LearnerSpec};
use crate::seeding::{derive_seed, stratified_folds};

pub const DEFAULT_FOLDS: usize = 2;
pub const MAX_FOLDS: usize = 20;

const TAG_PROPENSITY: u64 = 1;
const TAG_OUTCOME: u64 = 2;
const TAG_OUTCOME_TREATED: u64 = 3;
const TAG_OUTCOME_UNTREATED: u64 = 4;

/// Treatment-stratified split of units into K cross-fitting folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    k: usize,
    seed: u64,
}

impl FoldAssignment {
    /// Every fold is guaranteed to hold units from both arms, or this fails.
    pub fn stratified(a: &[u8], k: usize, seed: u64) -> Result<Self> {
        if !(2..=MAX_FOLDS).contains(&k) {
            return Err(Error::Config(format!("k_folds must be in 2..={MAX_FOLDS}, got {k}")));
        }
        let fold_of = stratified_folds(a, k, seed);
        let mut arms = vec![[false; 2]; k];
        for (&f, &ai) in fold_of.iter().zip(a) {
            arms[f][ai as usize] = true;
        }
        if let Some(fold) = arms.iter().position(|s| !(s[0] && s[1])) {
            return Err(Error::FoldImbalance { fold });
        }
        Ok(Self { fold_of, k, seed })
    }

    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Rows inside fold `f`, ascending.
    pub fn held_out(&self, f: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == f).collect()
    }

    /// Rows outside fold `f`, ascending.
    pub fn training(&self, f: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != f).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeMode {
    /// One model of Y on (X, A), evaluated at A = 1 and A = 0.
    #[default]
    Pooled,
    /// Separate models fitted within each arm.
    PerArm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    #[serde(default = "LearnerSpec::default_roster")]
    pub propensity: Vec<LearnerSpec>,
    #[serde(default = "LearnerSpec::default_roster")]
    pub outcome: Vec<LearnerSpec>,
    /// Folds used inside the super learner.
    #[serde(default = "LearnerConfig::default_inner_folds")]
    pub inner_folds: usize,
    #[serde(default)]
    pub outcome_mode: OutcomeMode,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self::uniform(LearnerSpec::default_roster())
    }
}

impl LearnerConfig {
    fn default_inner_folds() -> usize {
        10
    }

    /// Same roster for both nuisances.
    pub fn uniform(roster: Vec<LearnerSpec>) -> Self {
        Self {
            propensity: roster.clone(),
            outcome: roster,
            inner_folds: Self::default_inner_folds(),
            outcome_mode: OutcomeMode::Pooled,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (what, roster) in [("propensity", &self.propensity), ("outcome", &self.outcome)] {
            if roster.is_empty() {
                return Err(Error::InvalidLearner(format!("{what} roster is empty")));
            }
            for s in roster {
                s.validate()?;
            }
        }
        if self.inner_folds < 2 {
            return Err(Error::InvalidLearner(format!(
                "inner_folds must be >= 2, got {}",
                self.inner_folds
            )));
        }
        Ok(())
    }
}

/// What one nuisance fit ended up as.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub learners: Vec<String>,
    pub weights: Vec<f64>,
    pub cv_risk: Option<CvRisk>,
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldProvenance {
    pub fold: usize,
    pub train_rows: usize,
    pub held_out_rows: usize,
    pub propensity: EnsembleSummary,
    /// One entry in pooled mode; untreated then treated arm in per-arm mode.
    pub outcome: Vec<EnsembleSummary>,
}

/// Per-unit nuisance predictions. Learned values lie in the prediction clamp range;
/// injected values only need to lie in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceEstimates {
    pi_hat: Vec<f64>,
    mu1_hat: Vec<f64>,
    mu0_hat: Vec<f64>,
    folds: Option<FoldAssignment>,
    provenance: Vec<FoldProvenance>,
}

impl NuisanceEstimates {
    /// Wraps externally supplied nuisances, e.g. true values from a known DGP.
    pub fn from_vectors(pi_hat: Vec<f64>, mu1_hat: Vec<f64>, mu0_hat: Vec<f64>) -> Result<Self> {
        let n = pi_hat.len();
        for v in [&mu1_hat, &mu0_hat] {
            if v.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: v.len(),
                });
            }
        }
        if n == 0 {
            return Err(Error::EmptyFrame);
        }
        for (name, v) in [("pi_hat", &pi_hat), ("mu1_hat", &mu1_hat), ("mu0_hat", &mu0_hat)] {
            if let Some(i) = v.iter().position(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidData(format!(
                    "{name}[{i}] = {} is not a probability",
                    v[i]
                )));
            }
        }
        Ok(Self {
            pi_hat,
            mu1_hat,
            mu0_hat,
            folds: None,
            provenance: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.pi_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi_hat.is_empty()
    }

    pub fn pi_hat(&self) -> &[f64] {
        &self.pi_hat
    }

    pub fn mu1_hat(&self) -> &[f64] {
        &self.mu1_hat
    }

    pub fn mu0_hat(&self) -> &[f64] {
        &self.mu0_hat
    }

    pub fn folds(&self) -> Option<&FoldAssignment> {
        self.folds.as_ref()
    }

    pub fn provenance(&self) -> &[FoldProvenance] {
        &self.provenance
    }
}

enum Predictor {
    Single(FittedModel),
    Stacked(EnsembleModel),
}

impl Predictor {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        match self {
            Predictor::Single(m) => m.predict(x),
            Predictor::Stacked(e) => e.predict(x),
        }
    }
}

fn fit_roster(
    roster: &[LearnerSpec],
    x: ArrayView2<f64>,
    y: &[u8],
    inner_folds: usize,
    seed: u64,
) -> Result<(Predictor, EnsembleSummary)> {
    if let [only] = roster {
        let model = only.fit(x, y)?;
        let summary = EnsembleSummary {
            learners: vec![only.name().to_string()],
            weights: vec![1.0],
            cv_risk: None,
            dropped: Vec::new(),
        };
        return Ok((Predictor::Single(model), summary));
    }
    let k = inner_folds.min(y.len());
    if k < 2 {
        return Err(Error::FitFailed(format!(
            "too few training rows ({}) for the super learner",
            y.len()
        )));
    }
    let ensemble = fit_super_learner(roster, x, y, k, seed)?;
    let summary = EnsembleSummary {
        learners: ensemble.specs().iter().map(|s| s.name().to_string()).collect(),
        weights: ensemble.weights().to_vec(),
        cv_risk: Some(ensemble.cv_risk().clone()),
        dropped: ensemble.dropped().to_vec(),
    };
    Ok((Predictor::Stacked(ensemble), summary))
}

fn with_treatment_column(x: ArrayView2<f64>, a: impl Iterator<Item = f64>) -> Array2<f64> {
    let col = Array2::from_shape_vec((x.nrows(), 1), a.collect()).expect("one value per row");
    concatenate(Axis(1), &[x, col.view()]).expect("row counts agree")
}

struct FoldFit {
    held: Vec<usize>,
    pi: Vec<f64>,
    mu1: Vec<f64>,
    mu0: Vec<f64>,
    provenance: FoldProvenance,
}

fn fit_fold(
    frame: &AnalysisFrame,
    folds: &FoldAssignment,
    f: usize,
    config: &LearnerConfig,
    seed: u64,
) -> Result<FoldFit> {
    let train = folds.training(f);
    let held = folds.held_out(f);
    let x = frame.x();
    let x_train = x.select(Axis(0), &train);
    let x_held = x.select(Axis(0), &held);
    let a_train: Vec<u8> = train.iter().map(|&i| frame.a()[i]).collect();
    let y_train: Vec<u8> = train.iter().map(|&i| frame.y()[i]).collect();
    let fold_tag = f as u64;

    let (pi_model, pi_summary) = fit_roster(
        &config.propensity,
        x_train.view(),
        &a_train,
        config.inner_folds,
        derive_seed(seed, &[fold_tag, TAG_PROPENSITY]),
    )?;
    let pi = pi_model.predict(x_held.view())?;

    let (mu1, mu0, outcome) = match config.outcome_mode {
        OutcomeMode::Pooled => {
            let xa_train = with_treatment_column(x_train.view(), a_train.iter().map(|&v| v as f64));
            let (model, summary) = fit_roster(
                &config.outcome,
                xa_train.view(),
                &y_train,
                config.inner_folds,
                derive_seed(seed, &[fold_tag, TAG_OUTCOME]),
            )?;
            let m = held.len();
            let mu1 = model.predict(with_treatment_column(x_held.view(), std::iter::repeat_n(1.0, m)).view())?;
            let mu0 = model.predict(with_treatment_column(x_held.view(), std::iter::repeat_n(0.0, m)).view())?;
            (mu1, mu0, vec![summary])
        }
        OutcomeMode::PerArm => {
            let mut preds = Vec::with_capacity(2);
            let mut summaries = Vec::with_capacity(2);
            for (arm, tag) in [(0u8, TAG_OUTCOME_UNTREATED), (1u8, TAG_OUTCOME_TREATED)] {
                let rows: Vec<usize> = (0..train.len()).filter(|&r| a_train[r] == arm).collect();
                let y_arm: Vec<u8> = rows.iter().map(|&r| y_train[r]).collect();
                let (model, summary) = fit_roster(
                    &config.outcome,
                    x_train.select(Axis(0), &rows).view(),
                    &y_arm,
                    config.inner_folds,
                    derive_seed(seed, &[fold_tag, tag]),
                )?;
                preds.push(model.predict(x_held.view())?);
                summaries.push(summary);
            }
            let mu1 = preds.pop().expect("two arms");
            let mu0 = preds.pop().expect("two arms");
            (mu1, mu0, summaries)
        }
    };

    Ok(FoldFit {
        provenance: FoldProvenance {
            fold: f,
            train_rows: train.len(),
            held_out_rows: held.len(),
            propensity: pi_summary,
            outcome,
        },
        held,
        pi,
        mu1,
        mu0,
    })
}

/// Out-of-fold propensity and outcome predictions. Fold `f`'s units are predicted by
/// models fitted only on the other folds.
pub fn cross_fit_nuisances(
    frame: &AnalysisFrame,
    config: &LearnerConfig,
    k_folds: usize,
    seed: u64,
) -> Result<NuisanceEstimates> {
    config.validate()?;
    let folds = FoldAssignment::stratified(frame.a(), k_folds, seed)?;
    let fits = (0..k_folds)
        .into_par_iter()
        .map(|f| fit_fold(frame, &folds, f, config, seed))
        .collect::<Result<Vec<_>>>()?;

    let n = frame.n();
    let (mut pi, mut mu1, mut mu0) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut provenance = Vec::with_capacity(k_folds);
    for fit in fits {
        for (j, &i) in fit.held.iter().enumerate() {
            pi[i] = fit.pi[j];
            mu1[i] = fit.mu1[j];
            mu0[i] = fit.mu0[j];
        }
        provenance.push(fit.provenance);
    }
    Ok(NuisanceEstimates {
        pi_hat: pi,
        mu1_hat: mu1,
        mu0_hat: mu0,
        folds: Some(folds),
        provenance,
    })
}
