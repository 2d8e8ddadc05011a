//! Discrete-cell data-generating processes with exactly enumerable effect curves,
//! and replication harnesses built on them.

mod harness;
mod suites;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::AnalysisFrame;
use crate::error::{Error, Result};
use crate::estimator::{influence_value, residual_weights, shift_propensity, DeltaGrid, NuisanceEstimates};
use crate::learners::sigmoid;
use crate::seeding::rng_for;

pub use harness::{
    misspecification_experiment, run_replications, EstimationConfig, MisspecMode, NuisanceSource,
    ReportRow, SimulationReport,
};
pub use suites::{run_suite, SuiteCheck, SuiteOutcome, SuiteOverrides, SUITE_NAMES};

pub const MAX_CELLS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mass: f64,
    pub x: Vec<f64>,
    pub pi: f64,
    pub mu1: f64,
    pub mu0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub label: String,
    pub cells: Vec<Cell>,
}

impl DgpSpec {
    pub fn new(label: impl Into<String>, cells: Vec<Cell>) -> Result<Self> {
        let dgp = Self {
            label: label.into(),
            cells,
        };
        dgp.validate()?;
        Ok(dgp)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidDgp(m));
        if self.cells.is_empty() || self.cells.len() > MAX_CELLS {
            return bad(format!("a dgp needs 1..={MAX_CELLS} cells, got {}", self.cells.len()));
        }
        let p = self.cells[0].x.len();
        let mut total = 0.0;
        for (k, c) in self.cells.iter().enumerate() {
            if !(c.mass > 0.0 && c.mass.is_finite()) {
                return bad(format!("cell {k} has non-positive mass {}", c.mass));
            }
            for (name, v) in [("pi", c.pi), ("mu1", c.mu1), ("mu0", c.mu0)] {
                if !(0.0..=1.0).contains(&v) {
                    return bad(format!("cell {k} has {name} = {v} outside [0, 1]"));
                }
            }
            if c.x.len() != p || c.x.iter().any(|v| !v.is_finite()) {
                return bad(format!("cell {k} covariates must be {p} finite values"));
            }
            if self.cells[..k].iter().any(|o| o.x == c.x) {
                return bad(format!("cell {k} repeats an earlier covariate vector"));
            }
            total += c.mass;
        }
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("cell masses sum to {total}, not 1"));
        }
        Ok(())
    }

    pub fn covariate_dim(&self) -> usize {
        self.cells[0].x.len()
    }

    /// `P(A = 1)`.
    pub fn treated_share(&self) -> f64 {
        self.cells.iter().map(|c| c.mass * c.pi).sum()
    }

    pub fn cell_of(&self, row: &[f64]) -> Option<usize> {
        self.cells.iter().position(|c| c.x == row)
    }

    pub fn varies_in_pi(&self) -> bool {
        self.cells.iter().any(|c| c.pi != self.cells[0].pi)
    }

    pub fn varies_in_mu(&self) -> bool {
        self.cells
            .iter()
            .any(|c| c.mu1 != self.cells[0].mu1 || c.mu0 != self.cells[0].mu0 || c.mu1 != c.mu0)
    }
}

/// ψ(δ) for a single cell.
fn cell_effect(c: &Cell, delta: f64) -> f64 {
    let q = shift_propensity(delta, c.pi);
    q * c.mu1 + (1.0 - q) * c.mu0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthPoint {
    pub delta: f64,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthCurve {
    pub label: String,
    pub points: Vec<TruthPoint>,
}

impl TruthCurve {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.psi).collect()
    }
}

/// Exact ψ(δ) at a single δ.
pub fn true_effect_at(dgp: &DgpSpec, delta: f64) -> f64 {
    dgp.cells.iter().map(|c| c.mass * cell_effect(c, delta)).sum()
}

/// Exact ψ(δ) over `grid` by summing over cells.
pub fn true_effect(dgp: &DgpSpec, grid: &DeltaGrid) -> TruthCurve {
    TruthCurve {
        label: dgp.label.clone(),
        points: grid
            .values()
            .iter()
            .map(|&delta| TruthPoint {
                delta,
                psi: true_effect_at(dgp, delta),
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfluenceForm {
    /// Residuals weighted only on the observed arm.
    #[default]
    Indicator,
    /// Both residual terms applied to every unit, with no treatment indicators.
    Literal,
}

/// The influence value with both residual terms on every unit. Biased; kept to show
/// what dropping the treatment indicators does.
pub fn literal_influence_value(delta: f64, a: u8, y: f64, pi: f64, mu1: f64, mu0: f64) -> f64 {
    let q = shift_propensity(delta, pi);
    let (w1, w0) = residual_weights(delta, pi);
    let w = delta * pi + 1.0 - pi;
    q * mu1 + (1.0 - q) * mu0 + w1 * (y - mu1) + w0 * (y - mu0) + delta * (mu1 - mu0) * (a as f64 - pi) / (w * w)
}

pub(crate) fn form_value(form: InfluenceForm, delta: f64, a: u8, y: f64, pi: f64, mu1: f64, mu0: f64) -> f64 {
    match form {
        InfluenceForm::Indicator => influence_value(delta, a, y, pi, mu1, mu0),
        InfluenceForm::Literal => literal_influence_value(delta, a, y, pi, mu1, mu0),
    }
}

/// `E[φ]` under the dgp, by enumeration over cell, A and Y, with the nuisance values
/// plugged in for each cell supplied by `nuisance` as `(π̂, μ̂1, μ̂0)`.
pub fn expected_influence_with(
    dgp: &DgpSpec,
    delta: f64,
    form: InfluenceForm,
    nuisance: impl Fn(&Cell) -> (f64, f64, f64),
) -> f64 {
    let mut total = 0.0;
    for c in &dgp.cells {
        let (pi_hat, mu1_hat, mu0_hat) = nuisance(c);
        for a in [0u8, 1] {
            let (p_a, mu) = if a == 1 { (c.pi, c.mu1) } else { (1.0 - c.pi, c.mu0) };
            for y in [0u8, 1] {
                let p_y = if y == 1 { mu } else { 1.0 - mu };
                let weight = c.mass * p_a * p_y;
                if weight > 0.0 {
                    total += weight * form_value(form, delta, a, y as f64, pi_hat, mu1_hat, mu0_hat);
                }
            }
        }
    }
    total
}

/// `E[φ]` with the true nuisances.
pub fn expected_influence(dgp: &DgpSpec, delta: f64, form: InfluenceForm) -> f64 {
    expected_influence_with(dgp, delta, form, |c| (c.pi, c.mu1, c.mu0))
}

/// n i.i.d. draws: cell by mass, then `A ~ Bern(π)`, then `Y ~ Bern(μ_A)`.
pub fn sample_dgp(dgp: &DgpSpec, n: usize, seed: u64) -> Result<AnalysisFrame> {
    dgp.validate()?;
    if n == 0 {
        return Err(Error::EmptyFrame);
    }
    let mut rng = rng_for(seed, &[0x5A]);
    let p = dgp.covariate_dim();
    let mut x = Array2::zeros((n, p));
    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let u: f64 = rng.random();
        let mut k = 0;
        let mut acc = dgp.cells[0].mass;
        while u >= acc && k + 1 < dgp.cells.len() {
            k += 1;
            acc += dgp.cells[k].mass;
        }
        let c = &dgp.cells[k];
        for (j, v) in c.x.iter().enumerate() {
            x[[i, j]] = *v;
        }
        let ai = (rng.random::<f64>() < c.pi) as u8;
        let mu = if ai == 1 { c.mu1 } else { c.mu0 };
        a.push(ai);
        y.push((rng.random::<f64>() < mu) as u8);
    }
    AnalysisFrame::new(x, a, y)
}

/// True nuisances for every row of a frame drawn from `dgp`.
pub fn oracle_nuisances(dgp: &DgpSpec, frame: &AnalysisFrame) -> Result<NuisanceEstimates> {
    let mut pi = Vec::with_capacity(frame.n());
    let mut mu1 = Vec::with_capacity(frame.n());
    let mut mu0 = Vec::with_capacity(frame.n());
    for (i, row) in frame.x().rows().into_iter().enumerate() {
        let row = row.to_vec();
        let k = dgp
            .cell_of(&row)
            .ok_or_else(|| Error::InvalidDgp(format!("row {i} matches no cell of {}", dgp.label)))?;
        let c = &dgp.cells[k];
        pi.push(c.pi);
        mu1.push(c.mu1);
        mu0.push(c.mu0);
    }
    NuisanceEstimates::from_vectors(pi, mu1, mu0)
}

/// One cell with π = 0.5, μ1 = 0.8, μ0 = 0.2.
pub fn single_cell_dgp() -> DgpSpec {
    DgpSpec::new(
        "single_cell",
        vec![Cell {
            mass: 1.0,
            x: vec![0.0],
            pi: 0.5,
            mu1: 0.8,
            mu0: 0.2,
        }],
    )
    .expect("valid preset")
}

/// Two equally likely cells x ∈ {0, 1} with logit-linear π and μ:
/// `π = σ(−0.75 + 2.25x)`, `μ(a, x) = σ(−0.5 + 2x + 0.5a)`.
pub fn two_cell_dgp() -> DgpSpec {
    let cells = [0.0, 1.0]
        .iter()
        .map(|&x| Cell {
            mass: 0.5,
            x: vec![x],
            pi: sigmoid(-0.75 + 2.25 * x),
            mu1: sigmoid(-0.5 + 2.0 * x + 0.5),
            mu0: sigmoid(-0.5 + 2.0 * x),
        })
        .collect();
    DgpSpec::new("two_cell", cells).expect("valid preset")
}

const PROBATION_X_LOGIT: [f64; 3] = [-1.031, -0.675, 1.025];
const PROBATION_PI: [f64; 4] = [-2.589, 3.216, 0.344, 0.336];
const PROBATION_MU: [f64; 5] = [-0.557, 2.773, -0.053, 0.368, 0.892];

/// Three independent binary covariates, logit-linear π and μ. Constants were fitted
/// once so that P(A = 1) ≈ 0.264, ψ(0.1) ≈ 0.56, ψ(1) ≈ 0.58 and ψ(10) ≈ 0.65.
pub fn probation_like_dgp() -> DgpSpec {
    let mut cells = Vec::with_capacity(8);
    for bits in 0..8u32 {
        let x: Vec<f64> = (0..3).map(|j| ((bits >> j) & 1) as f64).collect();
        let mass: f64 = x
            .iter()
            .zip(PROBATION_X_LOGIT)
            .map(|(&v, l)| {
                let p1 = sigmoid(l);
                if v == 1.0 {
                    p1
                } else {
                    1.0 - p1
                }
            })
            .product();
        let lin = |coef: &[f64]| coef[0] + x.iter().zip(&coef[1..4]).map(|(v, b)| v * b).sum::<f64>();
        let mu_base = lin(&PROBATION_MU);
        cells.push(Cell {
            mass,
            pi: sigmoid(lin(&PROBATION_PI)),
            mu1: sigmoid(mu_base + PROBATION_MU[4]),
            mu0: sigmoid(mu_base),
            x,
        });
    }
    // Absorb rounding so the masses sum to one.
    let drift: f64 = cells.iter().map(|c| c.mass).sum::<f64>() - 1.0;
    cells[0].mass -= drift;
    DgpSpec::new("probation_like", cells).expect("valid preset")
}
