//! Closed-form truth and influence expectations, written independently of the library.

use ips_core::simulate::DgpSpec;

pub fn q(delta: f64, pi: f64) -> f64 {
    delta * pi / (delta * pi + 1.0 - pi)
}

pub fn phi(delta: f64, a: u8, y: u8, pi: f64, mu1: f64, mu0: f64) -> f64 {
    let w = delta * pi + 1.0 - pi;
    let (a, y) = (a as f64, y as f64);
    let qq = q(delta, pi);
    qq * mu1 + (1.0 - qq) * mu0
        + a * delta / w * (y - mu1)
        + (1.0 - a) / w * (y - mu0)
        + delta * (mu1 - mu0) * (a - pi) / (w * w)
}

pub fn true_effect(dgp: &DgpSpec, delta: f64) -> f64 {
    dgp.cells
        .iter()
        .map(|c| {
            let qq = q(delta, c.pi);
            c.mass * (qq * c.mu1 + (1.0 - qq) * c.mu0)
        })
        .sum()
}

/// E[φ] by summing over cells, treatment and outcome.
pub fn expected_phi(dgp: &DgpSpec, delta: f64) -> f64 {
    let mut total = 0.0;
    for c in &dgp.cells {
        for a in 0..2u8 {
            let pa = if a == 1 { c.pi } else { 1.0 - c.pi };
            let mu = if a == 1 { c.mu1 } else { c.mu0 };
            for y in 0..2u8 {
                let py = if y == 1 { mu } else { 1.0 - mu };
                total += c.mass * pa * py * phi(delta, a, y, c.pi, c.mu1, c.mu0);
            }
        }
    }
    total
}

/// Expected excess of the form that applies both residual terms to every unit:
/// the treated-arm term on controls plus the control-arm term on treated units.
pub fn literal_extra_bias(dgp: &DgpSpec, delta: f64) -> f64 {
    dgp.cells
        .iter()
        .map(|c| {
            let w = delta * c.pi + 1.0 - c.pi;
            let on_controls = (1.0 - c.pi) * delta / w * (c.mu0 - c.mu1);
            let on_treated = c.pi / w * (c.mu1 - c.mu0);
            c.mass * (on_controls + on_treated)
        })
        .sum()
}

pub fn treated_share(dgp: &DgpSpec) -> f64 {
    dgp.cells.iter().map(|c| c.mass * c.pi).sum()
}
