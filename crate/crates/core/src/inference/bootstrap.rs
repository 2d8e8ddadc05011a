use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EffectCurve;
use crate::error::{Error, Result};
use crate::estimator::InfluenceMatrix;
use crate::seeding::rng_for;

pub const MIN_REPLICATES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Multiplier {
    #[default]
    Rademacher,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub multiplier: Multiplier,
    pub alpha: f64,
    pub seed: u64,
}

impl BootstrapConfig {
    /// 5000 Rademacher replicates at α = 0.05.
    pub fn new(seed: u64) -> Self {
        Self {
            replicates: 5000,
            multiplier: Multiplier::Rademacher,
            alpha: 0.05,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < MIN_REPLICATES {
            return Err(Error::InvalidBootstrap(format!(
                "replicates must be >= {MIN_REPLICATES}, got {}",
                self.replicates
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidBootstrap(format!(
                "alpha must be in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Per-replicate sup statistics, optionally with every coordinate's `|value|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateStatistics {
    pub sup: Vec<f64>,
    /// B × |grid|, present when requested.
    pub coordinates: Option<Array2<f64>>,
}

impl ReplicateStatistics {
    /// Lowest order statistic `m` with `m/B ≥ 1 − α`.
    pub fn critical_value(&self, alpha: f64) -> f64 {
        empirical_quantile(&self.sup, 1.0 - alpha)
    }
}

/// Inverted-CDF quantile: the smallest sorted value whose rank fraction reaches `level`.
pub(crate) fn empirical_quantile(values: &[f64], level: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len();
    let mut m = ((level * b as f64).ceil() as usize).clamp(1, b);
    while m > 1 && (m - 1) as f64 / b as f64 >= level {
        m -= 1;
    }
    while m < b && (m as f64 / b as f64) < level {
        m += 1;
    }
    sorted[m - 1]
}

/// Row-major n × G matrix of `(φ − ψ̂)/σ̂`, zero where σ̂ = 0.
fn standardized(influence: &InfluenceMatrix) -> Array2<f64> {
    let (n, g) = influence.phi().dim();
    let moments: Vec<(f64, f64)> = (0..g).map(|j| influence.column_moments(j)).collect();
    Array2::from_shape_fn((n, g), |(i, j)| {
        let (mean, sd) = moments[j];
        if sd == 0.0 {
            0.0
        } else {
            (influence.phi()[[i, j]] - mean) / sd
        }
    })
}

fn replicate(z: &Array2<f64>, config: &BootstrapConfig, b: usize, acc: &mut [f64]) {
    let mut rng = rng_for(config.seed, &[b as u64]);
    acc.iter_mut().for_each(|v| *v = 0.0);
    let n = z.nrows();
    match config.multiplier {
        Multiplier::Rademacher => {
            let mut bits = 0u64;
            for i in 0..n {
                if i % 64 == 0 {
                    bits = rng.random();
                }
                let row = z.row(i);
                let row = row.as_slice().expect("standard layout");
                if bits & 1 == 1 {
                    acc.iter_mut().zip(row).for_each(|(s, v)| *s += v);
                } else {
                    acc.iter_mut().zip(row).for_each(|(s, v)| *s -= v);
                }
                bits >>= 1;
            }
        }
        Multiplier::Gaussian => {
            for i in 0..n {
                let xi: f64 = rng.sample(StandardNormal);
                let row = z.row(i);
                let row = row.as_slice().expect("standard layout");
                acc.iter_mut().zip(row).for_each(|(s, v)| *s += xi * v);
            }
        }
    }
    let scale = 1.0 / (n as f64).sqrt();
    acc.iter_mut().for_each(|v| *v = (*v * scale).abs());
}

/// Draws `B` multiplier replicates of `max_δ |n^{-1/2} Σ ξᵢ ẑᵢ(δ)|`. Replicate `b`
/// uses its own stream keyed by `(seed, b)`.
pub fn replicate_statistics(
    influence: &InfluenceMatrix,
    config: &BootstrapConfig,
    keep_coordinates: bool,
) -> Result<ReplicateStatistics> {
    config.validate()?;
    let z = standardized(influence);
    let g = z.ncols();
    let rows: Vec<(f64, Option<Vec<f64>>)> = (0..config.replicates)
        .into_par_iter()
        .map_init(
            || vec![0.0; g],
            |acc, b| {
                replicate(&z, config, b, acc);
                let sup = acc.iter().copied().fold(0.0, f64::max);
                (sup, keep_coordinates.then(|| acc.clone()))
            },
        )
        .collect();
    let sup = rows.iter().map(|r| r.0).collect();
    let coordinates = keep_coordinates.then(|| {
        Array2::from_shape_fn((rows.len(), g), |(b, j)| rows[b].1.as_ref().expect("kept")[j])
    });
    Ok(ReplicateStatistics { sup, coordinates })
}

/// Adds `ψ̂ ± c·σ̂/√n` bands to `curve`, with `c` the bootstrap (1 − α) quantile of the
/// sup statistic.
pub fn uniform_band(influence: &InfluenceMatrix, curve: &EffectCurve, config: &BootstrapConfig) -> Result<EffectCurve> {
    if curve.deltas() != influence.grid().values() || curve.n() != influence.n() {
        return Err(Error::GridMismatch);
    }
    if config.alpha != curve.alpha() {
        return Err(Error::InvalidBootstrap(format!(
            "bootstrap alpha {} differs from curve alpha {}",
            config.alpha,
            curve.alpha()
        )));
    }
    let stats = replicate_statistics(influence, config, false)?;
    let c = stats.critical_value(config.alpha);
    let mut banded = curve.clone();
    banded.set_band(c);
    if c < curve.pointwise_z() {
        log::info!(
            "bootstrap critical value {c:.4} is below the pointwise z {:.4}; bands do not nest the pointwise intervals",
            curve.pointwise_z()
        );
    }
    Ok(banded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::DeltaGrid;

    #[test]
    fn quantile_is_inverted_cdf() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(empirical_quantile(&v, 0.95), 95.0);
        assert_eq!(empirical_quantile(&v, 0.951), 96.0);
        assert_eq!(empirical_quantile(&v, 1.0), 100.0);
        assert_eq!(empirical_quantile(&[3.0, 1.0, 2.0], 0.5), 2.0);
    }

    #[test]
    fn rejects_small_b_and_bad_alpha() {
        let mut c = BootstrapConfig::new(1);
        c.replicates = 99;
        assert!(c.validate().is_err());
        let mut c = BootstrapConfig::new(1);
        c.alpha = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn constant_column_gets_zero_width_band() {
        let phi = Array2::from_shape_fn((50, 2), |(i, j)| if j == 0 { (i % 2) as f64 } else { 0.7 });
        let grid = DeltaGrid::from_values(vec![1.0, 2.0]).unwrap();
        let m = InfluenceMatrix::from_parts(phi, grid).unwrap();
        let curve = EffectCurve::from_influence(&m, 0.05).unwrap();
        let banded = uniform_band(&m, &curve, &BootstrapConfig::new(3)).unwrap();
        let p = &banded.points()[1];
        assert_eq!((p.band_lo, p.band_hi), (Some(0.7), Some(0.7)));
        assert!(banded.points()[0].band().unwrap().width() > 0.0);
    }

    #[test]
    fn sup_dominates_each_coordinate() {
        let phi = Array2::from_shape_fn((40, 3), |(i, j)| ((i * 7 + j * 3) % 5) as f64);
        let grid = DeltaGrid::from_values(vec![0.5, 1.0, 2.0]).unwrap();
        let m = InfluenceMatrix::from_parts(phi, grid).unwrap();
        let s = replicate_statistics(&m, &BootstrapConfig::new(4), true).unwrap();
        let coords = s.coordinates.unwrap();
        for (b, sup) in s.sup.iter().enumerate() {
            for j in 0..3 {
                assert!(*sup >= coords[[b, j]]);
            }
        }
    }
}
