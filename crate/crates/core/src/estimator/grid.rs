use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A positive, finite multiplier on the odds of exposure.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct Delta(f64);

impl Delta {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Delta(value))
        } else {
            Err(Error::InvalidGrid(format!("delta must be positive and finite, got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Delta {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Delta::new(value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Log,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub spacing: Spacing,
}

impl Default for GridSpec {
    /// 100 log-spaced points on [0.1, 10].
    fn default() -> Self {
        Self {
            min: 0.1,
            max: 10.0,
            count: 100,
            spacing: Spacing::Log,
        }
    }
}

/// Strictly increasing δ values. Grids built from a [`GridSpec`] spanning 1 always
/// contain δ = 1 exactly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaGrid {
    values: Vec<f64>,
}

const GRID_MATCH_RTOL: f64 = 1e-9;

impl DeltaGrid {
    pub fn from_spec(spec: &GridSpec) -> Result<Self> {
        Delta::new(spec.min)?;
        Delta::new(spec.max)?;
        if spec.count == 0 {
            return Err(Error::InvalidGrid("count must be >= 1".into()));
        }
        if spec.count == 1 {
            if spec.min != spec.max {
                return Err(Error::InvalidGrid("a one-point grid needs min == max".into()));
            }
        } else if spec.min >= spec.max {
            return Err(Error::InvalidGrid(format!(
                "min ({}) must be below max ({})",
                spec.min, spec.max
            )));
        }
        let last = spec.count.saturating_sub(1).max(1) as f64;
        let mut values: Vec<f64> = (0..spec.count)
            .map(|k| {
                let t = k as f64 / last;
                match spec.spacing {
                    Spacing::Log => (spec.min.ln() + t * (spec.max.ln() - spec.min.ln())).exp(),
                    Spacing::Linear => spec.min + t * (spec.max - spec.min),
                }
            })
            .collect();
        values[0] = spec.min;
        if spec.count > 1 {
            values[spec.count - 1] = spec.max;
        }
        if spec.min <= 1.0 && 1.0 <= spec.max {
            match values.iter().position(|v| (v - 1.0).abs() <= 1e-12) {
                Some(i) => values[i] = 1.0,
                None => {
                    let at = values.partition_point(|&v| v < 1.0);
                    values.insert(at, 1.0);
                }
            }
        }
        Self::from_values(values)
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidGrid("grid is empty".into()));
        }
        for v in &values {
            Delta::new(*v)?;
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid("grid values must be strictly increasing".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn nearest(&self, delta: f64) -> f64 {
        *self
            .values
            .iter()
            .min_by(|a, b| (delta.ln() - a.ln()).abs().total_cmp(&(delta.ln() - b.ln()).abs()))
            .expect("grid is non-empty")
    }

    /// Index of `delta` on the grid (relative tolerance 1e-9). Never snaps: an
    /// off-grid value is an error that names the nearest grid point.
    pub fn index_of(&self, delta: f64) -> Result<usize> {
        self.values
            .iter()
            .position(|v| (v - delta).abs() <= GRID_MATCH_RTOL * delta.abs().max(*v))
            .ok_or_else(|| Error::DeltaNotOnGrid {
                requested: delta,
                nearest: self.nearest(delta),
            })
    }
}
