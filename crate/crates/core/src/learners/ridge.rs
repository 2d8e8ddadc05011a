use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;

use super::{sigmoid, FittedModel, ModelState, TrainingMeta};
use crate::error::{Error, Result};

const MAX_ITER: usize = 100;
const TOL: f64 = 1e-8;

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Penalized negative log-likelihood: Σ [log(1 + e^η) − y·η] + λ/2 · Σ_{j≥1} β_j².
/// `beta[0]` is the unpenalized intercept.
pub(crate) fn objective(x: ArrayView2<f64>, y: &[u8], lambda: f64, beta: &[f64]) -> f64 {
    let nll: f64 = x
        .rows()
        .into_iter()
        .zip(y)
        .map(|(row, &yi)| {
            let eta = beta[0] + row.iter().zip(&beta[1..]).map(|(v, b)| v * b).sum::<f64>();
            softplus(eta) - yi as f64 * eta
        })
        .sum();
    nll + 0.5 * lambda * beta[1..].iter().map(|b| b * b).sum::<f64>()
}

/// Newton–Raphson (IRLS) with step halving on the penalized objective.
pub(super) fn fit_ridge_logistic(x: ArrayView2<f64>, y: &[u8], lambda: f64) -> Result<FittedModel> {
    let (n, p) = x.dim();
    if n < 2 {
        return Err(Error::FitFailed("ridge logistic needs at least two rows".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitFailed("design matrix has non-finite values".into()));
    }
    let d = p + 1;
    let mut beta = vec![0.0; d];
    let mut current = objective(x, y, lambda, &beta);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITER {
        iterations += 1;
        let mut hess = DMatrix::<f64>::zeros(d, d);
        let mut grad = DVector::<f64>::zeros(d);
        let mut z = vec![0.0; d];
        for (row, &yi) in x.rows().into_iter().zip(y) {
            z[0] = 1.0;
            for (j, v) in row.iter().enumerate() {
                z[j + 1] = *v;
            }
            let eta: f64 = z.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let mu = sigmoid(eta);
            let w = mu * (1.0 - mu);
            let r = mu - yi as f64;
            for j in 0..d {
                grad[j] += z[j] * r;
                for k in 0..=j {
                    hess[(j, k)] += w * z[j] * z[k];
                }
            }
        }
        for j in 1..d {
            grad[j] += lambda * beta[j];
            hess[(j, j)] += lambda;
        }
        for j in 0..d {
            for k in 0..j {
                hess[(k, j)] = hess[(j, k)];
            }
        }

        let step = match hess.clone().cholesky() {
            Some(chol) => chol.solve(&grad),
            // Singular information (constant columns, separation with λ = 0):
            // fall back to the minimum-norm Newton direction.
            None => hess
                .svd(true, true)
                .solve(&grad, 1e-12)
                .map_err(|e| Error::FitFailed(e.to_string()))?,
        };

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b - scale * s).collect();
            let value = objective(x, y, lambda, &trial);
            if value.is_finite() && value <= current {
                accepted = Some((trial, value));
                break;
            }
            scale *= 0.5;
        }
        let Some((next, value)) = accepted else {
            // No descent along the Newton direction: at numerical optimum.
            converged = true;
            break;
        };
        let change = next
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        beta = next;
        current = value;
        if change < TOL {
            converged = true;
            break;
        }
    }

    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::FitFailed("ridge logistic diverged".into()));
    }
    Ok(FittedModel {
        state: ModelState::Linear {
            intercept: beta[0],
            coef: beta[1..].to_vec(),
        },
        feature_count: p,
        meta: TrainingMeta {
            iterations,
            converged,
        },
    })
}
