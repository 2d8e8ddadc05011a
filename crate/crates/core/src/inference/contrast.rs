use serde::{Deserialize, Serialize};

use super::{check_alpha, pointwise_ci, EffectCurve, Interval};
use crate::error::{Error, Result};
use crate::estimator::InfluenceMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    Pointwise,
    #[default]
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Reject,
    FailToReject,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DifferenceEstimate {
    /// Mean of `φᵢ(δ_hi) − φᵢ(δ_lo)`.
    pub estimate: f64,
    pub std_error: f64,
    pub interval: Interval,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastResult {
    pub delta_lo: f64,
    pub delta_hi: f64,
    pub interval_lo: Interval,
    pub interval_hi: Interval,
    /// Which intervals were compared; `None` for the difference test.
    pub interval_kind: Option<IntervalKind>,
    /// For the difference test: whether its interval contains zero.
    pub overlap: bool,
    pub decision: Decision,
    pub difference: Option<DifferenceEstimate>,
}

fn decide(overlap: bool) -> Decision {
    if overlap {
        Decision::FailToReject
    } else {
        Decision::Reject
    }
}

/// Rejects equality of ψ(δ_lo) and ψ(δ_hi) when their intervals are disjoint.
pub fn contrast_overlap_test(
    curve: &EffectCurve,
    delta_lo: f64,
    delta_hi: f64,
    kind: IntervalKind,
) -> Result<ContrastResult> {
    let lo = curve.point_at(delta_lo)?;
    let hi = curve.point_at(delta_hi)?;
    let pick = |p: &super::CurvePoint| match kind {
        IntervalKind::Pointwise => Ok(p.pointwise()),
        IntervalKind::Uniform => p
            .band()
            .ok_or_else(|| Error::InvalidBootstrap("uniform bands have not been computed".into())),
    };
    let (interval_lo, interval_hi) = (pick(lo)?, pick(hi)?);
    let overlap = interval_lo.overlaps(&interval_hi);
    Ok(ContrastResult {
        delta_lo: lo.delta,
        delta_hi: hi.delta,
        interval_lo,
        interval_hi,
        interval_kind: Some(kind),
        overlap,
        decision: decide(overlap),
        difference: None,
    })
}

/// Wald test of `ψ(δ_hi) − ψ(δ_lo) = 0` from per-unit influence differences.
pub fn contrast_difference(
    influence: &InfluenceMatrix,
    delta_lo: f64,
    delta_hi: f64,
    alpha: f64,
) -> Result<ContrastResult> {
    check_alpha(alpha)?;
    let (g_lo, g_hi) = (influence.grid().index_of(delta_lo)?, influence.grid().index_of(delta_hi)?);
    let n = influence.n();
    let phi = influence.phi();
    let diffs: Vec<f64> = (0..n).map(|i| phi[[i, g_hi]] - phi[[i, g_lo]]).collect();
    let (estimate, sd) = if diffs.iter().all(|&d| d == diffs[0]) {
        (diffs[0], 0.0)
    } else {
        let mean = diffs.iter().sum::<f64>() / n as f64;
        let ss: f64 = diffs.iter().map(|d| (d - mean) * (d - mean)).sum();
        (mean, (ss / (n as f64 - 1.0)).sqrt())
    };
    let interval = pointwise_ci(estimate, sd, n, alpha);
    let at = |g: usize| {
        let (m, s) = influence.column_moments(g);
        pointwise_ci(m, s, n, alpha)
    };
    let overlap = interval.contains(0.0);
    Ok(ContrastResult {
        delta_lo: influence.grid().values()[g_lo],
        delta_hi: influence.grid().values()[g_hi],
        interval_lo: at(g_lo),
        interval_hi: at(g_hi),
        interval_kind: None,
        overlap,
        decision: decide(overlap),
        difference: Some(DifferenceEstimate {
            estimate,
            std_error: sd / (n as f64).sqrt(),
            interval,
            alpha,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::DeltaGrid;
    use ndarray::Array2;

    fn matrix(shift: f64) -> InfluenceMatrix {
        let phi = Array2::from_shape_fn((30, 2), |(i, j)| ((i * 13) % 7) as f64 / 7.0 + shift * j as f64);
        InfluenceMatrix::from_parts(phi, DeltaGrid::from_values(vec![0.1, 10.0]).unwrap()).unwrap()
    }

    #[test]
    fn identical_deltas_never_reject() {
        let r = contrast_difference(&matrix(0.3), 0.1, 0.1, 0.05).unwrap();
        let d = r.difference.unwrap();
        assert_eq!((d.estimate, d.std_error), (0.0, 0.0));
        assert_eq!(r.decision, Decision::FailToReject);
    }

    #[test]
    fn constant_shift_is_exact() {
        let phi = Array2::from_shape_fn((30, 2), |(i, j)| (i % 2) as f64 * 0.5 + 0.09 * j as f64);
        let m = InfluenceMatrix::from_parts(phi, DeltaGrid::from_values(vec![0.1, 10.0]).unwrap()).unwrap();
        let r = contrast_difference(&m, 0.1, 10.0, 0.05).unwrap();
        let d = r.difference.unwrap();
        assert!((d.estimate - 0.09).abs() < 1e-15);
        assert!(d.std_error < 1e-15);
        assert_eq!(r.decision, Decision::Reject);
        assert!(!r.overlap);
    }

    #[test]
    fn off_grid_delta_is_an_error() {
        assert!(matches!(
            contrast_difference(&matrix(0.0), 0.1, 9.0, 0.05),
            Err(Error::DeltaNotOnGrid { nearest, .. }) if nearest == 10.0
        ));
    }

    #[test]
    fn overlap_logic() {
        let a = Interval { lo: 0.52, hi: 0.58 };
        let b = Interval { lo: 0.60, hi: 0.68 };
        assert!(!a.overlaps(&b));
        let a = Interval { lo: 0.52, hi: 0.61 };
        assert!(a.overlaps(&b));
        assert!(b.overlaps(&a));
    }

    #[test]
    fn uniform_requires_bands() {
        let m = matrix(0.3);
        let curve = EffectCurve::from_influence(&m, 0.05).unwrap();
        assert!(contrast_overlap_test(&curve, 0.1, 10.0, IntervalKind::Uniform).is_err());
        let r = contrast_overlap_test(&curve, 0.1, 10.0, IntervalKind::Pointwise).unwrap();
        assert_eq!(r.decision == Decision::Reject, !r.overlap);
    }
}
