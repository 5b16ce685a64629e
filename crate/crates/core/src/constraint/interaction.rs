use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric convex interaction kernel with `W(0) = 0` and bounded gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InteractionSpec {
    /// `|z|²/2` for `|z| <= δ`, `δ(|z| − δ/2)` beyond.
    Huber { delta: f64 },
    /// `sqrt(|z|² + w²) − w`.
    SmoothedAbs { width: f64 },
}

const GRAD_TOL: f64 = 1e-10;
const DESCENT_MAX_ITER: usize = 200_000;

impl InteractionSpec {
    pub fn validate(&self) -> Result<()> {
        let (key, v) = match self {
            InteractionSpec::Huber { delta } => ("interaction.delta", *delta),
            InteractionSpec::SmoothedAbs { width } => ("interaction.width", *width),
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::config(key, "must be > 0"));
        }
        Ok(())
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        match self {
            InteractionSpec::Huber { delta } => {
                if r <= *delta {
                    0.5 * r * r
                } else {
                    delta * (r - 0.5 * delta)
                }
            }
            InteractionSpec::SmoothedAbs { width } => (r * r + width * width).sqrt() - width,
        }
    }

    /// Adds `scale · ∇W(z)` to `out`.
    pub fn add_gradient(&self, z: &[f64], scale: f64, out: &mut [f64]) {
        let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let s = match self {
            InteractionSpec::Huber { delta } => {
                if r <= *delta {
                    1.0
                } else {
                    delta / r
                }
            }
            InteractionSpec::SmoothedAbs { width } => 1.0 / (r * r + width * width).sqrt(),
        };
        for (o, v) in out.iter_mut().zip(z) {
            *o += scale * s * v;
        }
    }

    /// Lipschitz constant of `∇W`.
    pub fn gradient_lipschitz(&self) -> f64 {
        match self {
            InteractionSpec::Huber { .. } => 1.0,
            InteractionSpec::SmoothedAbs { width } => 1.0 / width,
        }
    }

    /// Inverse of the radial profile: the `r >= 0` with `W(r e) = w`.
    pub fn radial_inverse(&self, w: f64) -> f64 {
        match self {
            InteractionSpec::Huber { delta } => {
                if w <= 0.5 * delta * delta {
                    (2.0 * w).sqrt()
                } else {
                    w / delta + 0.5 * delta
                }
            }
            InteractionSpec::SmoothedAbs { width } => ((w + width).powi(2) - width * width).sqrt(),
        }
    }
}

/// `(1/N²) Σ_i Σ_j W(y_i − y_j)`.
pub fn interaction_energy(spec: &InteractionSpec, positions: &[f64], dim: usize) -> f64 {
    let n = positions.len() / dim;
    let mut z = vec![0.0; dim];
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            for k in 0..dim {
                z[k] = positions[i * dim + k] - positions[j * dim + k];
            }
            total += spec.value(&z);
        }
    }
    2.0 * total / (n * n) as f64
}

/// Minimises `(1/N) Σ |y_i − x_i|² + λ E(Y)` by fixed-step gradient descent,
/// starting from `y`. Returns the number of iterations.
///
/// Descent runs on the rescaled gradient `g_i = (y_i − x_i) + (λ/N) Σ_j ∇W(y_i − y_j)`,
/// which is 1-strongly monotone and `(1 + λ L_W)`-Lipschitz, with step `1/(1 + λ L_W)`.
pub(crate) fn minimise_lagrangian(
    spec: &InteractionSpec,
    x: &[f64],
    dim: usize,
    lambda: f64,
    y: &mut [f64],
) -> Result<usize> {
    let n = x.len() / dim;
    let step = 1.0 / (1.0 + lambda * spec.gradient_lipschitz());
    let mut grad = vec![0.0; x.len()];
    let mut z = vec![0.0; dim];
    let mut grad_norm = f64::INFINITY;
    for iter in 0..DESCENT_MAX_ITER {
        for (g, (yi, xi)) in grad.iter_mut().zip(y.iter().zip(x)) {
            *g = yi - xi;
        }
        let w = lambda / n as f64;
        for i in 0..n {
            for j in (i + 1)..n {
                for k in 0..dim {
                    z[k] = y[i * dim + k] - y[j * dim + k];
                }
                spec.add_gradient(&z, w, &mut grad[i * dim..(i + 1) * dim]);
                spec.add_gradient(&z, -w, &mut grad[j * dim..(j + 1) * dim]);
            }
        }
        grad_norm = (grad.iter().map(|g| g * g).sum::<f64>() / n as f64).sqrt();
        if grad_norm <= GRAD_TOL {
            return Ok(iter);
        }
        for (yi, g) in y.iter_mut().zip(&grad) {
            *yi -= step * g;
        }
    }
    Err(Error::Convergence {
        solver: "interaction descent",
        iterations: DESCENT_MAX_ITER,
        residual: grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_are_symmetric_and_vanish_at_zero() {
        for spec in [InteractionSpec::Huber { delta: 0.5 }, InteractionSpec::SmoothedAbs { width: 0.2 }] {
            assert_eq!(spec.value(&[0.0, 0.0]), 0.0);
            assert_eq!(spec.value(&[0.3, -1.2]), spec.value(&[-0.3, 1.2]));
            for w in [0.01, 0.1, 0.125, 2.0] {
                let r = spec.radial_inverse(w);
                assert!((spec.value(&[r]) - w).abs() < 1e-12, "{spec:?} {w}");
            }
        }
    }

    #[test]
    fn energy_counts_ordered_pairs() {
        let spec = InteractionSpec::Huber { delta: 10.0 };
        // two points at distance 2: W = 2, E = 2·2/4 = 1
        assert_eq!(interaction_energy(&spec, &[0.0, 2.0], 1), 1.0);
    }

    #[test]
    fn descent_reaches_stationarity() {
        let spec = InteractionSpec::SmoothedAbs { width: 0.5 };
        let x = [0.0, 1.0, 3.0, -2.0];
        let mut y = x;
        minimise_lagrangian(&spec, &x, 1, 2.0, &mut y).unwrap();
        // the mean is preserved at the optimum
        let mean_x: f64 = x.iter().sum::<f64>() / 4.0;
        let mean_y: f64 = y.iter().sum::<f64>() / 4.0;
        assert!((mean_x - mean_y).abs() < 1e-10);
        assert!(interaction_energy(&spec, &y, 1) < interaction_energy(&spec, &x, 1));
    }
}
