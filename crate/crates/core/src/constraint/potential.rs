use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convex confining potential `V >= 0` for the potential-energy cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `|y|²`.
    Quadratic,
    /// `|y − center|²`.
    ShiftedQuadratic { center: Vec<f64> },
    /// `w ln cosh(|y| / w)`, a softplus smoothing of `|y|`
    /// (`ln cosh t = softplus(2t) − t − ln 2`). Gradient bounded by 1.
    SoftplusNorm { width: f64 },
}

const PROX_MAX_ITER: usize = 200;

impl PotentialSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            PotentialSpec::Quadratic => Ok(()),
            PotentialSpec::ShiftedQuadratic { center } => {
                if center.len() != dim || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::config(
                        "potential.center",
                        format!("needs {dim} finite coordinates"),
                    ));
                }
                Ok(())
            }
            PotentialSpec::SoftplusNorm { width } => {
                if !(width.is_finite() && *width > 0.0) {
                    return Err(Error::config("potential.width", "must be > 0"));
                }
                Ok(())
            }
        }
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        match self {
            PotentialSpec::Quadratic => y.iter().map(|v| v * v).sum(),
            PotentialSpec::ShiftedQuadratic { center } => super::squared_diff(y, center),
            PotentialSpec::SoftplusNorm { width } => {
                let t = norm(y) / width;
                width * (t + (-2.0 * t).exp().ln_1p() - std::f64::consts::LN_2)
            }
        }
    }

    pub fn gradient(&self, y: &[f64], out: &mut [f64]) {
        match self {
            PotentialSpec::Quadratic => {
                for (o, v) in out.iter_mut().zip(y) {
                    *o = 2.0 * v;
                }
            }
            PotentialSpec::ShiftedQuadratic { center } => {
                for ((o, v), c) in out.iter_mut().zip(y).zip(center) {
                    *o = 2.0 * (v - c);
                }
            }
            PotentialSpec::SoftplusNorm { width } => {
                let r = norm(y);
                let s = if r == 0.0 { 0.0 } else { (r / width).tanh() / r };
                for (o, v) in out.iter_mut().zip(y) {
                    *o = s * v;
                }
            }
        }
    }

    /// `argmin_y |x − y|² + λ V(y)` written into `out`.
    pub fn prox(&self, x: &[f64], lambda: f64, out: &mut [f64]) -> Result<()> {
        match self {
            PotentialSpec::Quadratic => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = v / (1.0 + lambda);
                }
            }
            PotentialSpec::ShiftedQuadratic { center } => {
                for ((o, v), c) in out.iter_mut().zip(x).zip(center) {
                    *o = (v + lambda * c) / (1.0 + lambda);
                }
            }
            PotentialSpec::SoftplusNorm { width } => {
                let r = norm(x);
                if r == 0.0 {
                    out.iter_mut().for_each(|o| *o = 0.0);
                    return Ok(());
                }
                let rho = radial_prox(r, lambda, *width)?;
                for (o, v) in out.iter_mut().zip(x) {
                    *o = v * (rho / r);
                }
            }
        }
        Ok(())
    }
}

/// Solves `ρ + (λ/2) tanh(ρ/w) = r` on `[0, r]` by safeguarded Newton.
fn radial_prox(r: f64, lambda: f64, width: f64) -> Result<f64> {
    let g = |rho: f64| rho + 0.5 * lambda * (rho / width).tanh() - r;
    let (mut lo, mut hi) = (0.0, r);
    let mut rho = r / (1.0 + 0.5 * lambda / width);
    for _ in 0..PROX_MAX_ITER {
        let val = g(rho);
        if val == 0.0 {
            return Ok(rho);
        }
        if val > 0.0 {
            hi = rho;
        } else {
            lo = rho;
        }
        let sech2 = 1.0 - (rho / width).tanh().powi(2);
        let slope = 1.0 + 0.5 * lambda * sech2 / width;
        let mut next = rho - val / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - rho).abs() <= 4.0 * f64::EPSILON * r || hi - lo <= 4.0 * f64::EPSILON * r {
            return Ok(next);
        }
        rho = next;
    }
    Err(Error::Convergence {
        solver: "potential prox",
        iterations: PROX_MAX_ITER,
        residual: g(rho).abs(),
    })
}

fn norm(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}
