use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed convex subset of `R^d` used as a support constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConvexRegion {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `{ y : normals[k] · y <= offsets[k] for all k }`.
    Halfspaces { normals: Vec<Vec<f64>>, offsets: Vec<f64> },
}

const DYKSTRA_MAX_CYCLES: usize = 100_000;
const DYKSTRA_TOL: f64 = 1e-13;

impl ConvexRegion {
    pub fn dim(&self) -> usize {
        match self {
            ConvexRegion::Ball { center, .. } => center.len(),
            ConvexRegion::Box { lower, .. } => lower.len(),
            ConvexRegion::Halfspaces { normals, .. } => normals.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            ConvexRegion::Ball { center, radius } => {
                if center.is_empty() || !finite(center) {
                    return Err(Error::config("region.center", "needs finite coordinates"));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::config("region.radius", "must be > 0"));
                }
            }
            ConvexRegion::Box { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() || !finite(lower) || !finite(upper) {
                    return Err(Error::config("region.lower", "lower/upper need equal finite lengths"));
                }
                if lower.iter().zip(upper).any(|(l, u)| l >= u) {
                    return Err(Error::config("region.upper", "must exceed lower componentwise"));
                }
            }
            ConvexRegion::Halfspaces { normals, offsets } => {
                if normals.is_empty() || normals.len() != offsets.len() {
                    return Err(Error::config("region.offsets", "need one offset per normal"));
                }
                let d = normals[0].len();
                if d == 0 {
                    return Err(Error::config("region.normals", "empty normal vector"));
                }
                for n in normals {
                    if n.len() != d || !finite(n) {
                        return Err(Error::config("region.normals", "normals need equal finite lengths"));
                    }
                    if n.iter().all(|v| *v == 0.0) {
                        return Err(Error::config("region.normals", "normal must be nonzero"));
                    }
                }
                if !finite(offsets) {
                    return Err(Error::config("region.offsets", "must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Euclidean distance by which `x` sits outside the region (0 inside).
    /// For half-space intersections this is the largest single-face excess.
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            ConvexRegion::Ball { center, radius } => {
                let r = super::norm_diff(x, center);
                (r - radius).max(0.0)
            }
            ConvexRegion::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
                .fold(0.0, f64::max),
            ConvexRegion::Halfspaces { normals, offsets } => normals
                .iter()
                .zip(offsets)
                .map(|(n, b)| ((dot(n, x) - b) / dot(n, n).sqrt()).max(0.0))
                .fold(0.0, f64::max),
        }
    }

    /// Writes the Euclidean projection of `x` into `out`; returns the number of
    /// Dykstra cycles used (0 for closed-form regions).
    pub fn project_point(&self, x: &[f64], out: &mut [f64]) -> Result<usize> {
        match self {
            ConvexRegion::Ball { center, radius } => {
                let r = super::norm_diff(x, center);
                if r <= *radius {
                    out.copy_from_slice(x);
                } else {
                    let s = radius / r;
                    for ((o, v), c) in out.iter_mut().zip(x).zip(center) {
                        *o = c + s * (v - c);
                    }
                }
                Ok(0)
            }
            ConvexRegion::Box { lower, upper } => {
                for (((o, v), l), u) in out.iter_mut().zip(x).zip(lower).zip(upper) {
                    *o = v.clamp(*l, *u);
                }
                Ok(0)
            }
            ConvexRegion::Halfspaces { normals, offsets } => dykstra(normals, offsets, x, out),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project_halfspace(n: &[f64], b: f64, z: &mut [f64]) {
    let excess = dot(n, z) - b;
    if excess > 0.0 {
        let s = excess / dot(n, n);
        for (zi, ni) in z.iter_mut().zip(n) {
            *zi -= s * ni;
        }
    }
}

fn dykstra(normals: &[Vec<f64>], offsets: &[f64], x: &[f64], out: &mut [f64]) -> Result<usize> {
    let d = x.len();
    if normals.iter().zip(offsets).all(|(n, b)| dot(n, x) <= *b) {
        out.copy_from_slice(x);
        return Ok(0);
    }
    let m = normals.len();
    let mut corrections = vec![0.0; m * d];
    let mut y = x.to_vec();
    let mut z = vec![0.0; d];
    let scale = 1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut change = f64::INFINITY;
    for cycle in 1..=DYKSTRA_MAX_CYCLES {
        change = 0.0;
        for k in 0..m {
            let p = &mut corrections[k * d..(k + 1) * d];
            for i in 0..d {
                z[i] = y[i] + p[i];
            }
            project_halfspace(&normals[k], offsets[k], &mut z);
            for i in 0..d {
                let new_p = y[i] + p[i] - z[i];
                change = change.max((z[i] - y[i]).abs()).max((new_p - p[i]).abs());
                p[i] = new_p;
                y[i] = z[i];
            }
        }
        if change <= DYKSTRA_TOL * scale {
            let worst = normals
                .iter()
                .zip(offsets)
                .map(|(n, b)| (dot(n, &y) - b) / dot(n, n).sqrt())
                .fold(f64::NEG_INFINITY, f64::max);
            if worst <= DYKSTRA_TOL * scale {
                out.copy_from_slice(&y);
                return Ok(cycle);
            }
        }
    }
    Err(Error::Convergence {
        solver: "dykstra",
        iterations: DYKSTRA_MAX_CYCLES,
        residual: change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_clamp() {
        let ball = ConvexRegion::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        let mut out = [0.0; 2];
        ball.project_point(&[2.0, 0.0], &mut out).unwrap();
        assert_eq!(out, [1.0, 0.0]);
        ball.project_point(&[0.3, -0.4], &mut out).unwrap();
        assert_eq!(out, [0.3, -0.4]);
        assert_eq!(ball.violation(&[0.0, 3.0]), 2.0);
    }

    #[test]
    fn box_clamp() {
        let b = ConvexRegion::Box {
            lower: vec![-1.0, 0.0],
            upper: vec![1.0, 2.0],
        };
        let mut out = [0.0; 2];
        b.project_point(&[3.0, -1.0], &mut out).unwrap();
        assert_eq!(out, [1.0, 0.0]);
    }

    #[test]
    fn dykstra_on_a_wedge() {
        // y1 <= 0 and y2 <= 0: projection of (1, 2) is the origin corner
        let wedge = ConvexRegion::Halfspaces {
            normals: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            offsets: vec![0.0, 0.0],
        };
        let mut out = [9.0; 2];
        wedge.project_point(&[1.0, 2.0], &mut out).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-12), "{out:?}");
        // Non-orthogonal faces: y1 + y2 <= 0, y1 - y2 <= 0. (2, 0) -> (0, 0).
        let cone = ConvexRegion::Halfspaces {
            normals: vec![vec![1.0, 1.0], vec![1.0, -1.0]],
            offsets: vec![0.0, 0.0],
        };
        cone.project_point(&[2.0, 0.0], &mut out).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-12), "{out:?}");
    }

    #[test]
    fn empty_intersection_fails_to_converge() {
        let empty = ConvexRegion::Halfspaces {
            normals: vec![vec![1.0], vec![-1.0]],
            offsets: vec![-1.0, -1.0],
        };
        let mut out = [0.0];
        assert!(matches!(
            empty.project_point(&[0.0], &mut out),
            Err(Error::Convergence { solver: "dykstra", .. })
        ));
    }

    #[test]
    fn validation() {
        assert!(ConvexRegion::Ball { center: vec![0.0], radius: 0.0 }.validate().is_err());
        assert!(ConvexRegion::Box { lower: vec![1.0], upper: vec![0.0] }.validate().is_err());
        assert!(ConvexRegion::Halfspaces {
            normals: vec![vec![0.0, 0.0]],
            offsets: vec![1.0]
        }
        .validate()
        .is_err());
    }
}
