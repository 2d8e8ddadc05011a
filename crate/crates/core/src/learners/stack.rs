use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{clamp_prob, FittedModel, LearnerSpec};
use crate::error::{Error, Result};
use crate::seeding::stratified_folds;

const MAX_ITER: usize = 10_000;
const IMPROVEMENT_TOL: f64 = 1e-10;

/// Mean negative log-likelihood of binary labels under predicted probabilities.
pub fn log_loss(y: &[u8], p: &[f64]) -> f64 {
    let total: f64 = y
        .iter()
        .zip(p)
        .map(|(&yi, &pi)| if yi == 1 { -pi.ln() } else { -(1.0 - pi).ln() })
        .sum();
    total / y.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRisk {
    /// Cross-validated log-loss of each retained member.
    pub members: Vec<f64>,
    /// Cross-validated log-loss of the weighted blend.
    pub ensemble: f64,
}

/// Convex combination of fitted members with weights chosen by cross-validated log-loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    specs: Vec<LearnerSpec>,
    members: Vec<FittedModel>,
    weights: Vec<f64>,
    cv_risk: CvRisk,
    dropped: Vec<String>,
}

impl EnsembleModel {
    pub fn specs(&self) -> &[LearnerSpec] {
        &self.specs
    }

    pub fn members(&self) -> &[FittedModel] {
        &self.members
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cv_risk(&self) -> &CvRisk {
        &self.cv_risk
    }

    /// Names of roster entries that failed to fit and were left out.
    pub fn dropped(&self) -> &[String] {
        &self.dropped
    }

    pub fn feature_count(&self) -> usize {
        self.members[0].feature_count()
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        let mut blend = vec![0.0; x.nrows()];
        for (m, &w) in self.members.iter().zip(&self.weights) {
            if w == 0.0 {
                // Still validates the column count.
                if x.ncols() != m.feature_count() {
                    return Err(Error::ColumnCountMismatch {
                        expected: m.feature_count(),
                        actual: x.ncols(),
                    });
                }
                continue;
            }
            for (b, p) in blend.iter_mut().zip(m.predict(x)?) {
                *b += w * p;
            }
        }
        Ok(blend.into_iter().map(clamp_prob).collect())
    }
}

fn blend_risk(level_one: &Array2<f64>, y: &[u8], w: &[f64]) -> f64 {
    let p: Vec<f64> = level_one
        .rows()
        .into_iter()
        .map(|r| clamp_prob(r.iter().zip(w).map(|(z, w)| z * w).sum()))
        .collect();
    log_loss(y, &p)
}

fn blend_gradient(level_one: &Array2<f64>, y: &[u8], w: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    let mut g = vec![0.0; w.len()];
    for (row, &yi) in level_one.rows().into_iter().zip(y) {
        let p = clamp_prob(row.iter().zip(w).map(|(z, w)| z * w).sum());
        let dp = if yi == 1 { -1.0 / p } else { 1.0 / (1.0 - p) };
        for (gj, z) in g.iter_mut().zip(row.iter()) {
            *gj += dp * z / n;
        }
    }
    g
}

/// Minimizes blend log-loss over the simplex by exponentiated gradient with step
/// halving, then falls back to the best single member if that is no worse.
pub(crate) fn simplex_weights(level_one: &Array2<f64>, y: &[u8]) -> (Vec<f64>, f64) {
    let m = level_one.ncols();
    let vertex_risks: Vec<f64> = (0..m)
        .map(|j| log_loss(y, &level_one.column(j).to_vec()))
        .collect();
    let (best_j, best_risk) = vertex_risks
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (j, r)| if r < acc.1 { (j, r) } else { acc });
    if m == 1 {
        return (vec![1.0], best_risk);
    }

    let mut w = vec![1.0 / m as f64; m];
    let mut risk = blend_risk(level_one, y, &w);
    let mut eta = 1.0;
    for _ in 0..MAX_ITER {
        let g = blend_gradient(level_one, y, &w);
        let mut improved = None;
        while eta > 1e-20 {
            let gmin = g.iter().copied().fold(f64::INFINITY, f64::min);
            let mut trial: Vec<f64> = w
                .iter()
                .zip(&g)
                .map(|(wj, gj)| wj * (-eta * (gj - gmin)).exp())
                .collect();
            let total: f64 = trial.iter().sum();
            trial.iter_mut().for_each(|v| *v /= total);
            let r = blend_risk(level_one, y, &trial);
            if r < risk {
                improved = Some((trial, r));
                break;
            }
            eta *= 0.5;
        }
        let Some((next, r)) = improved else { break };
        let gain = risk - r;
        w = next;
        risk = r;
        eta = (eta * 2.0).min(1e6);
        if gain < IMPROVEMENT_TOL {
            break;
        }
    }

    if best_risk <= risk {
        let mut vertex = vec![0.0; m];
        vertex[best_j] = 1.0;
        return (vertex, best_risk);
    }
    (w, risk)
}

/// Cross-validated stacking of `specs` with `k_folds` label-stratified folds.
pub fn fit_super_learner(
    specs: &[LearnerSpec],
    x: ArrayView2<f64>,
    y: &[u8],
    k_folds: usize,
    seed: u64,
) -> Result<EnsembleModel> {
    let n = y.len();
    if specs.is_empty() {
        return Err(Error::InvalidLearner("learner roster is empty".into()));
    }
    for s in specs {
        s.validate()?;
    }
    if k_folds < 2 || k_folds > n {
        return Err(Error::InvalidLearner(format!(
            "super learner needs 2 <= k_folds <= n, got k_folds = {k_folds}, n = {n}"
        )));
    }
    if x.nrows() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: x.nrows(),
        });
    }

    let fold_of = stratified_folds(y, k_folds, seed);
    let folds: Vec<(Vec<usize>, Vec<usize>)> = (0..k_folds)
        .map(|f| {
            let (held, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| fold_of[i] == f);
            (train, held)
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|s| (0..k_folds).map(move |f| (s, f)))
        .collect();
    let out_of_fold: Vec<Result<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(s, f)| {
            let (train, held) = &folds[f];
            let y_train: Vec<u8> = train.iter().map(|&i| y[i]).collect();
            let model = specs[s].fit(x.select(Axis(0), train).view(), &y_train)?;
            model.predict(x.select(Axis(0), held).view())
        })
        .collect();

    let mut kept_specs = Vec::new();
    let mut columns = Vec::new();
    let mut dropped = Vec::new();
    for (s, spec) in specs.iter().enumerate() {
        let mut column = vec![0.0; n];
        let mut failure = None;
        for f in 0..k_folds {
            match &out_of_fold[s * k_folds + f] {
                Ok(pred) => {
                    for (&i, &p) in folds[f].1.iter().zip(pred) {
                        column[i] = p;
                    }
                }
                Err(e) => {
                    failure = Some(e.to_string());
                    break;
                }
            }
        }
        match failure {
            None => {
                kept_specs.push(spec.clone());
                columns.push(column);
            }
            Some(reason) => {
                log::warn!("dropping {} from the ensemble: {reason}", spec.name());
                dropped.push(format!("{}: {reason}", spec.name()));
            }
        }
    }
    if kept_specs.is_empty() {
        return Err(Error::FitFailed(format!(
            "every ensemble member failed to fit ({})",
            dropped.join("; ")
        )));
    }

    let level_one = Array2::from_shape_fn((n, columns.len()), |(i, j)| columns[j][i]);
    let member_risks: Vec<f64> = columns.iter().map(|c| log_loss(y, c)).collect();
    let (weights, ensemble_risk) = simplex_weights(&level_one, y);

    let members = kept_specs
        .par_iter()
        .map(|s| s.fit(x, y))
        .collect::<Result<Vec<_>>>()?;

    Ok(EnsembleModel {
        specs: kept_specs,
        members,
        weights,
        cv_risk: CvRisk {
            members: member_risks,
            ensemble: ensemble_risk,
        },
        dropped,
    })
}
