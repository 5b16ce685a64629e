use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::RandomSource;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Drift {
    Zero,
    Constant { value: Vec<f64> },
    /// `−θ x`, radially clipped to norm `bound`.
    Linear { theta: f64, bound: f64 },
    /// `ω (−x₂, x₁)` in the plane, radially clipped to norm `bound`.
    Rotation { omega: f64, bound: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Diffusion {
    /// `s · I`.
    Scalar { s: f64 },
    /// `diag(s₁, …, s_d)`.
    Diagonal { s: Vec<f64> },
}

/// Drift `b(t, x)` and diagonal diffusion `σ(t, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficients {
    pub drift: Drift,
    pub diffusion: Diffusion,
}

fn clip(v: &mut [f64], bound: f64) {
    let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if r > bound {
        let s = bound / r;
        v.iter_mut().for_each(|x| *x *= s);
    }
}

impl Coefficients {
    pub fn new(drift: Drift, diffusion: Diffusion) -> Self {
        Self { drift, diffusion }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        match &self.drift {
            Drift::Zero => {}
            Drift::Constant { value } => {
                if value.len() != dim || value.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config("drift.value", format!("needs {dim} finite entries")));
                }
            }
            Drift::Linear { theta, bound } => {
                if !theta.is_finite() {
                    return Err(Error::config("drift.theta", "must be finite"));
                }
                if !finite_nonneg(*bound) {
                    return Err(Error::config("drift.bound", "must be finite and >= 0"));
                }
            }
            Drift::Rotation { omega, bound } => {
                if dim != 2 {
                    return Err(Error::config("drift.kind", "rotation drift needs d = 2"));
                }
                if !omega.is_finite() {
                    return Err(Error::config("drift.omega", "must be finite"));
                }
                if !finite_nonneg(*bound) {
                    return Err(Error::config("drift.bound", "must be finite and >= 0"));
                }
            }
        }
        match &self.diffusion {
            Diffusion::Scalar { s } => {
                if !finite_nonneg(*s) {
                    return Err(Error::config("diffusion.s", "must be finite and >= 0"));
                }
            }
            Diffusion::Diagonal { s } => {
                if s.len() != dim || !s.iter().all(|v| finite_nonneg(*v)) {
                    return Err(Error::config("diffusion.s", format!("needs {dim} finite entries >= 0")));
                }
            }
        }
        Ok(())
    }

    /// Writes `b(t, x)` into `out`.
    pub fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        match &self.drift {
            Drift::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            Drift::Constant { value } => out.copy_from_slice(value),
            Drift::Linear { theta, bound } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = -theta * v;
                }
                clip(out, *bound);
            }
            Drift::Rotation { omega, bound } => {
                out[0] = -omega * x[1];
                out[1] = omega * x[0];
                clip(out, *bound);
            }
        }
    }

    /// Diagonal entry `k` of `σ(t, x)`.
    pub fn diffusion(&self, _t: f64, _x: &[f64], k: usize) -> f64 {
        match &self.diffusion {
            Diffusion::Scalar { s } => *s,
            Diffusion::Diagonal { s } => s[k],
        }
    }

    /// Declared `sup |b|`.
    pub fn drift_bound(&self) -> f64 {
        match &self.drift {
            Drift::Zero => 0.0,
            Drift::Constant { value } => value.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Drift::Linear { bound, .. } | Drift::Rotation { bound, .. } => *bound,
        }
    }

    /// Declared Lipschitz constant of `b` in `x`.
    pub fn drift_lipschitz(&self) -> f64 {
        match &self.drift {
            Drift::Zero | Drift::Constant { .. } => 0.0,
            Drift::Linear { theta, .. } => theta.abs(),
            Drift::Rotation { omega, .. } => omega.abs(),
        }
    }

    /// Smallest eigenvalue of `a = σσ*`.
    pub fn ellipticity(&self, dim: usize) -> f64 {
        (0..dim)
            .map(|k| self.diffusion(0.0, &[], k).powi(2))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest diagonal entry of `a = σσ*`.
    pub fn max_diffusion_sq(&self, dim: usize) -> f64 {
        (0..dim).map(|k| self.diffusion(0.0, &[], k).powi(2)).fold(0.0, f64::max)
    }

    /// Samples the declared bounds: `|b| <= B` on a grid of radii and random
    /// directions, Lipschitz ratios on random pairs, and ellipticity.
    pub fn check_assumptions(&self, dim: usize, samples: usize, rng: &mut RandomSource) -> Result<AssumptionReport> {
        self.validate(dim)?;
        let mut max_drift = 0.0f64;
        let mut max_ratio = 0.0f64;
        let (mut x, mut y) = (vec![0.0; dim], vec![0.0; dim]);
        let (mut bx, mut by) = (vec![0.0; dim], vec![0.0; dim]);
        for s in 0..samples {
            let radius = 10f64.powf(-2.0 + 5.0 * (s % 11) as f64 / 10.0);
            for k in 0..dim {
                x[k] = radius * rng.standard_normal();
                y[k] = x[k] + radius * 0.1 * rng.standard_normal();
            }
            let t = rng.uniform();
            self.drift(t, &x, &mut bx);
            self.drift(t, &y, &mut by);
            max_drift = max_drift.max(bx.iter().map(|v| v * v).sum::<f64>().sqrt());
            let num = crate::constraint::norm_diff(&bx, &by);
            let den = crate::constraint::norm_diff(&x, &y);
            if den > 0.0 {
                max_ratio = max_ratio.max(num / den);
            }
        }
        let slack = 1e-12 * (1.0 + self.drift_bound());
        let ellipticity = self.ellipticity(dim);
        Ok(AssumptionReport {
            max_drift,
            max_lipschitz_ratio: max_ratio,
            ellipticity,
            drift_bounded: max_drift <= self.drift_bound() + slack,
            lipschitz_ok: max_ratio <= self.drift_lipschitz() * (1.0 + 1e-12) + 1e-12,
            uniformly_elliptic: ellipticity > 0.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub max_drift: f64,
    pub max_lipschitz_ratio: f64,
    pub ellipticity: f64,
    pub drift_bounded: bool,
    pub lipschitz_ok: bool,
    /// False for degenerate (e.g. zero-noise) diffusions, which are accepted
    /// for deterministic test runs.
    pub uniformly_elliptic: bool,
}
