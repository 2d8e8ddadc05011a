//! Cross-fitted doubly robust estimation of the incremental propensity score effect.
//!
//! For a multiplier δ on the odds of exposure the shifted propensity is
//! `q(δ; π) = δπ / (δπ + 1 − π)` and the estimand is
//! `ψ(δ) = E[q·μ(1, X) + (1 − q)·μ(0, X)]`. Each unit contributes the
//! influence value
//!
//! ```text
//! φ = q·μ1 + (1 − q)·μ0 + a·(δ/ω)·(y − μ1) + (1 − a)·(1/ω)·(y − μ0) + δ·(μ1 − μ0)·(a − π)/ω²
//! ```
//!
//! with `ω = δπ + 1 − π`. The weights `δ/ω` and `1/ω` equal `q/π` and
//! `(1 − q)/(1 − π)` wherever those are defined, but stay finite at π ∈ {0, 1}, so
//! no propensity trimming is ever needed.

mod grid;
mod nuisance;

use ndarray::Array2;

use crate::dataset::AnalysisFrame;
use crate::error::{Error, Result};
use crate::inference::EffectCurve;

pub use grid::{Delta, DeltaGrid, GridSpec, Spacing};
pub use nuisance::{
    cross_fit_nuisances, EnsembleSummary, FoldAssignment, FoldProvenance, LearnerConfig,
    NuisanceEstimates, OutcomeMode, DEFAULT_FOLDS, MAX_FOLDS,
};

/// `δπ / (δπ + 1 − π)`: the propensity after multiplying the odds by δ.
/// Exact at π = 0 and π = 1.
pub fn shift_propensity(delta: f64, pi: f64) -> f64 {
    let scaled = delta * pi;
    scaled / (scaled + (1.0 - pi))
}

/// `δπ + 1 − π`, the normalizer shared by the shifted propensity and the weights.
#[inline]
fn omega(delta: f64, pi: f64) -> f64 {
    delta * pi + (1.0 - pi)
}

/// Weights applied to the observed-arm residual: `(δ/ω, 1/ω)`.
pub fn residual_weights(delta: f64, pi: f64) -> (f64, f64) {
    let w = omega(delta, pi);
    (delta / w, 1.0 / w)
}

/// Uncentered efficient influence value of ψ(δ) for one unit.
pub fn influence_value(delta: f64, a: u8, y: f64, pi: f64, mu1: f64, mu0: f64) -> f64 {
    let w = omega(delta, pi);
    let q = delta * pi / w;
    let plug_in = q * mu1 + (1.0 - q) * mu0;
    let residual = if a == 1 {
        (delta / w) * (y - mu1)
    } else {
        (y - mu0) / w
    };
    let tilt = delta * (mu1 - mu0) * (a as f64 - pi) / (w * w);
    plug_in + residual + tilt
}

/// Mean over units of `q·μ̂1 + (1 − q)·μ̂0`.
pub fn plug_in_effect(nuisances: &NuisanceEstimates, delta: f64) -> f64 {
    let n = nuisances.len();
    let total: f64 = (0..n)
        .map(|i| {
            let q = shift_propensity(delta, nuisances.pi_hat()[i]);
            q * nuisances.mu1_hat()[i] + (1.0 - q) * nuisances.mu0_hat()[i]
        })
        .sum();
    total / n as f64
}

/// n × |grid| matrix of influence values.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrix {
    phi: Array2<f64>,
    grid: DeltaGrid,
}

impl InfluenceMatrix {
    pub fn compute(frame: &AnalysisFrame, nuisances: &NuisanceEstimates, grid: &DeltaGrid) -> Result<Self> {
        if nuisances.len() != frame.n() {
            return Err(Error::LengthMismatch {
                expected: frame.n(),
                actual: nuisances.len(),
            });
        }
        let (pi, mu1, mu0) = (nuisances.pi_hat(), nuisances.mu1_hat(), nuisances.mu0_hat());
        let phi = Array2::from_shape_fn((frame.n(), grid.len()), |(i, g)| {
            influence_value(
                grid.values()[g],
                frame.a()[i],
                frame.y()[i] as f64,
                pi[i],
                mu1[i],
                mu0[i],
            )
        });
        Ok(Self {
            phi,
            grid: grid.clone(),
        })
    }

    pub fn from_parts(phi: Array2<f64>, grid: DeltaGrid) -> Result<Self> {
        if phi.ncols() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if phi.nrows() < 2 {
            return Err(Error::InvalidData("influence matrix needs at least two rows".into()));
        }
        Ok(Self { phi, grid })
    }

    pub fn phi(&self) -> &Array2<f64> {
        &self.phi
    }

    pub fn grid(&self) -> &DeltaGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    /// Column mean and sample standard deviation, accumulated in row order. A constant
    /// column reports its value and a standard deviation of exactly zero.
    pub fn column_moments(&self, g: usize) -> (f64, f64) {
        let col = self.phi.column(g);
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            return (first, 0.0);
        }
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        (mean, (ss / (n - 1.0)).sqrt())
    }
}

/// Nuisances, influence values and the (band-less) effect curve of one analysis.
#[derive(Debug, Clone)]
pub struct CurveEstimate {
    pub curve: EffectCurve,
    pub influence: InfluenceMatrix,
    pub nuisances: NuisanceEstimates,
}

/// Effect curve from already available nuisance estimates.
pub fn estimate_curve_with(
    frame: &AnalysisFrame,
    grid: &DeltaGrid,
    nuisances: NuisanceEstimates,
    alpha: f64,
) -> Result<CurveEstimate> {
    if frame.n() < 2 {
        return Err(Error::InvalidData("at least two units are required".into()));
    }
    let influence = InfluenceMatrix::compute(frame, &nuisances, grid)?;
    let curve = EffectCurve::from_influence(&influence, alpha)?;
    Ok(CurveEstimate {
        curve,
        influence,
        nuisances,
    })
}

/// Cross-fits the nuisances and evaluates the effect curve over `grid`.
pub fn estimate_curve(
    frame: &AnalysisFrame,
    grid: &DeltaGrid,
    learners: &LearnerConfig,
    k_folds: usize,
    seed: u64,
    alpha: f64,
) -> Result<CurveEstimate> {
    let nuisances = cross_fit_nuisances(frame, learners, k_folds, seed)?;
    estimate_curve_with(frame, grid, nuisances, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shift_examples() {
        assert_eq!(shift_propensity(1.0, 0.3), 0.3);
        assert!((shift_propensity(10.0, 0.5) - 5.0 / 5.5).abs() < 1e-15);
        assert!((shift_propensity(10.0, 0.5) - 0.909091).abs() < 5e-7);
        assert_eq!(shift_propensity(5.0, 0.0), 0.0);
        assert_eq!(shift_propensity(5.0, 1.0), 1.0);
        assert!((shift_propensity(0.1, 0.2642) - 0.034662).abs() < 5e-7);
    }

    #[test]
    fn influence_examples() {
        for &(a, y) in &[(0u8, 0.0), (0, 1.0), (1, 0.0), (1, 1.0)] {
            let v = influence_value(1.0, a, y, 0.37, 0.81, 0.12);
            assert!((v - y).abs() < 1e-15);
        }
        let v = influence_value(2.0, 1, 1.0, 0.5, 0.5, 0.5);
        assert!((v - (0.5 + (2.0 / 1.5) * 0.5)).abs() < 1e-15);
        assert!((v - 1.166667).abs() < 5e-7);
        let v = influence_value(2.0, 0, 0.0, 0.5, 0.8, 0.2);
        assert!((v - 0.2).abs() < 1e-12, "{v}");
    }

    #[test]
    fn influence_finite_at_extreme_propensity() {
        for delta in [1e-8, 0.1, 1.0, 10.0, 1e8] {
            for pi in [0.0, 1.0] {
                for a in [0, 1] {
                    assert!(influence_value(delta, a, 1.0, pi, 0.9, 0.1).is_finite());
                }
            }
        }
    }

    #[test]
    fn plug_in_examples() {
        let nu = NuisanceEstimates::from_vectors(vec![0.5, 0.5], vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(plug_in_effect(&nu, 1.0), 0.5);
        assert!((plug_in_effect(&nu, 1e8) - 1.0).abs() < 1e-6);
        let flat = NuisanceEstimates::from_vectors(vec![0.2, 0.7], vec![0.4, 0.6], vec![0.4, 0.6]).unwrap();
        let base = plug_in_effect(&flat, 1.0);
        for d in [0.01, 0.5, 3.0, 100.0] {
            assert!((plug_in_effect(&flat, d) - base).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn inversion_restores_propensity(log_delta in -4.6f64..4.6, pi in 0.0f64..=1.0) {
            let d = log_delta.exp();
            let back = shift_propensity(1.0 / d, shift_propensity(d, pi));
            prop_assert!((back - pi).abs() <= 1e-12);
        }

        #[test]
        fn monotone_in_delta_and_pi(d1 in 0.01f64..100.0, d2 in 0.01f64..100.0, p1 in 0.001f64..0.999, p2 in 0.001f64..0.999) {
            let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            if lo < hi {
                prop_assert!(shift_propensity(lo, p1) < shift_propensity(hi, p1));
            }
            let (plo, phi) = if p1 < p2 { (p1, p2) } else { (p2, p1) };
            prop_assert!(shift_propensity(d1, plo) <= shift_propensity(d1, phi));
        }

        #[test]
        fn weights_bounded(log_delta in -6.0f64..6.0, pi in 0.0f64..=1.0) {
            let d = log_delta.exp();
            let (w1, w0) = residual_weights(d, pi);
            prop_assert!(w1 <= d.max(1.0) * (1.0 + 1e-15));
            prop_assert!(w0 <= (1.0 / d).max(1.0) * (1.0 + 1e-15));
        }

        #[test]
        fn plug_in_monotone_when_effect_nonnegative(
            rows in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0), 1..20),
            d1 in 0.01f64..100.0, d2 in 0.01f64..100.0,
        ) {
            let pi: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let mu1: Vec<f64> = rows.iter().map(|r| r.1.max(r.2)).collect();
            let mu0: Vec<f64> = rows.iter().map(|r| r.1.min(r.2)).collect();
            let nu = NuisanceEstimates::from_vectors(pi, mu1, mu0).unwrap();
            let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(plug_in_effect(&nu, lo) <= plug_in_effect(&nu, hi) + 1e-12);
        }
    }
}
