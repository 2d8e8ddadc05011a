//! Wald intervals, multiplier-bootstrap uniform bands and two-point contrasts.

mod bootstrap;
mod contrast;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimator::InfluenceMatrix;

pub use bootstrap::{replicate_statistics, uniform_band, BootstrapConfig, Multiplier, ReplicateStatistics};
pub use contrast::{contrast_difference, contrast_overlap_test, ContrastResult, Decision, DifferenceEstimate, IntervalKind};

/// Two-sided standard normal quantile `z_{1−α/2}`. Zero at α = 1.
pub fn z_quantile(alpha: f64) -> f64 {
    if alpha >= 1.0 {
        return 0.0;
    }
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    std_normal.inverse_cdf(1.0 - alpha / 2.0)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must be in (0, 1], got {alpha}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// `ψ̂ ± z_{1−α/2}·σ̂/√n`.
pub fn pointwise_ci(psi_hat: f64, sigma_hat: f64, n: usize, alpha: f64) -> Interval {
    let half = z_quantile(alpha) * sigma_hat / (n as f64).sqrt();
    Interval {
        lo: psi_hat - half,
        hi: psi_hat + half,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub delta: f64,
    pub estimate: f64,
    /// Sample standard deviation of the influence values.
    pub sd: f64,
    pub std_error: f64,
    pub pointwise_lo: f64,
    pub pointwise_hi: f64,
    pub band_lo: Option<f64>,
    pub band_hi: Option<f64>,
}

impl CurvePoint {
    pub fn pointwise(&self) -> Interval {
        Interval {
            lo: self.pointwise_lo,
            hi: self.pointwise_hi,
        }
    }

    pub fn band(&self) -> Option<Interval> {
        Some(Interval {
            lo: self.band_lo?,
            hi: self.band_hi?,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CurveMetadata {
    pub seed: Option<u64>,
    pub config_digest: Option<String>,
    pub outcome_label: Option<String>,
    pub stratum_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectCurve {
    points: Vec<CurvePoint>,
    n: usize,
    alpha: f64,
    pointwise_z: f64,
    critical_value: Option<f64>,
    metadata: CurveMetadata,
}

impl EffectCurve {
    /// Column means, standard deviations and Wald intervals of an influence matrix.
    pub fn from_influence(influence: &InfluenceMatrix, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let n = influence.n();
        if n < 2 {
            return Err(Error::InvalidData("at least two units are required".into()));
        }
        let z = z_quantile(alpha);
        let root_n = (n as f64).sqrt();
        let points = influence
            .grid()
            .values()
            .iter()
            .enumerate()
            .map(|(g, &delta)| {
                let (estimate, sd) = influence.column_moments(g);
                let ci = pointwise_ci(estimate, sd, n, alpha);
                CurvePoint {
                    delta,
                    estimate,
                    sd,
                    std_error: sd / root_n,
                    pointwise_lo: ci.lo,
                    pointwise_hi: ci.hi,
                    band_lo: None,
                    band_hi: None,
                }
            })
            .collect();
        Ok(Self {
            points,
            n,
            alpha,
            pointwise_z: z,
            critical_value: None,
            metadata: CurveMetadata::default(),
        })
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.delta).collect()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn pointwise_z(&self) -> f64 {
        self.pointwise_z
    }

    /// Bootstrap critical value, once bands have been computed.
    pub fn critical_value(&self) -> Option<f64> {
        self.critical_value
    }

    pub fn has_bands(&self) -> bool {
        self.critical_value.is_some()
    }

    /// Whether the band nests the pointwise intervals, i.e. `c ≥ z`. `None` before
    /// bands are computed.
    pub fn bands_contain_pointwise(&self) -> Option<bool> {
        self.critical_value.map(|c| c >= self.pointwise_z)
    }

    pub fn metadata(&self) -> &CurveMetadata {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut CurveMetadata {
        &mut self.metadata
    }

    pub fn index_of(&self, delta: f64) -> Result<usize> {
        crate::estimator::DeltaGrid::from_values(self.deltas())?.index_of(delta)
    }

    pub fn point_at(&self, delta: f64) -> Result<&CurvePoint> {
        Ok(&self.points[self.index_of(delta)?])
    }

    pub(crate) fn set_band(&mut self, critical_value: f64) {
        let root_n = (self.n as f64).sqrt();
        for p in &mut self.points {
            let half = critical_value * p.sd / root_n;
            p.band_lo = Some(p.estimate - half);
            p.band_hi = Some(p.estimate + half);
        }
        self.critical_value = Some(critical_value);
    }
}
