//! Constraint sets `K` of probability measures and W₂-projection onto them.
//!
//! Projections are computed at particle level: the projected measure keeps the
//! particle labels of the input, so `P_i` is the image of `x_i` under the
//! optimal map from `μ` to its projection. All three families are closed
//! convex, permutation-invariant subsets of `R^{N×d}`, on which this particle
//! projection is a Euclidean projection.

mod interaction;
mod potential;
mod region;

pub use interaction::{interaction_energy, InteractionSpec};
pub use potential::PotentialSpec;
pub use region::ConvexRegion;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;

/// Default absolute slack on the constraint functional.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

const VALUE_TOL: f64 = 1e-10;
const WIDTH_TOL: f64 = 1e-12;
const MAX_DOUBLINGS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintKind {
    /// Support inside a closed convex region.
    ConvexSupport { region: ConvexRegion },
    /// `∫ V dν <= kappa2`.
    PotentialCap { potential: PotentialSpec, kappa2: f64 },
    /// `∬ W(x − y) ν(dx) ν(dy) <= kappa`.
    InteractionCap { interaction: InteractionSpec, kappa: f64 },
}

/// Serialized flat: the fields of `kind` plus an optional `tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub kind: ConstraintKind,
    /// Membership slack on the constraint functional.
    pub tolerance: f64,
}

impl Serialize for ConstraintSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::Error as _;
        let mut value = serde_json::to_value(&self.kind).map_err(S::Error::custom)?;
        if let Some(map) = value.as_object_mut() {
            map.insert("tolerance".to_string(), serde_json::Value::from(self.tolerance));
        }
        value.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ConstraintSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let mut value = serde_json::Value::deserialize(deserializer)?;
        let map = value
            .as_object_mut()
            .ok_or_else(|| D::Error::custom("constraint must be a table"))?;
        let tolerance = match map.remove("tolerance") {
            Some(t) => t
                .as_f64()
                .ok_or_else(|| D::Error::custom("constraint tolerance must be a number"))?,
            None => DEFAULT_TOLERANCE,
        };
        let kind = serde_json::from_value(value).map_err(D::Error::custom)?;
        Ok(Self { kind, tolerance })
    }
}

impl ConstraintSet {
    pub fn new(kind: ConstraintKind) -> Self {
        Self {
            kind,
            tolerance: DEFAULT_TOLERANCE,
        }
    }

    pub fn support(region: ConvexRegion) -> Self {
        Self::new(ConstraintKind::ConvexSupport { region })
    }

    pub fn potential(potential: PotentialSpec, kappa2: f64) -> Self {
        Self::new(ConstraintKind::PotentialCap { potential, kappa2 })
    }

    pub fn interaction(interaction: InteractionSpec, kappa: f64) -> Self {
        Self::new(ConstraintKind::InteractionCap { interaction, kappa })
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn family(&self) -> &'static str {
        match self.kind {
            ConstraintKind::ConvexSupport { .. } => "convex_support",
            ConstraintKind::PotentialCap { .. } => "potential_cap",
            ConstraintKind::InteractionCap { .. } => "interaction_cap",
        }
    }

    /// Checks parameters against the family's rules for measures in `R^dim`.
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.tolerance.is_finite() && self.tolerance >= 0.0) {
            return Err(Error::config("constraint.tolerance", "must be finite and >= 0"));
        }
        match &self.kind {
            ConstraintKind::ConvexSupport { region } => {
                region.validate()?;
                if region.dim() != dim {
                    return Err(Error::config(
                        "constraint.region",
                        format!("region lives in dimension {}, measure in {dim}", region.dim()),
                    ));
                }
            }
            ConstraintKind::PotentialCap { potential, kappa2 } => {
                potential.validate(dim)?;
                if !(kappa2.is_finite() && *kappa2 > 0.0) {
                    return Err(Error::config("constraint.kappa2", "must be > 0"));
                }
            }
            ConstraintKind::InteractionCap { interaction, kappa } => {
                interaction.validate()?;
                if !(kappa.is_finite() && *kappa >= 0.0) {
                    return Err(Error::config("constraint.kappa", "must be >= 0"));
                }
            }
        }
        Ok(())
    }

    /// Value of the constraint functional; membership is `value <= cap + tolerance`.
    ///
    /// For support constraints the functional is the largest distance of a
    /// particle to the region and the cap is 0.
    pub fn constraint_value(&self, mu: &EmpiricalMeasure) -> f64 {
        let n = mu.n_particles() as f64;
        match &self.kind {
            ConstraintKind::ConvexSupport { region } => {
                mu.particles().map(|x| region.violation(x)).fold(0.0, f64::max)
            }
            ConstraintKind::PotentialCap { potential, .. } => {
                mu.particles().map(|x| potential.value(x)).sum::<f64>() / n
            }
            ConstraintKind::InteractionCap { interaction, .. } => {
                interaction_energy(interaction, mu.positions(), mu.dim())
            }
        }
    }

    pub fn cap(&self) -> f64 {
        match &self.kind {
            ConstraintKind::ConvexSupport { .. } => 0.0,
            ConstraintKind::PotentialCap { kappa2, .. } => *kappa2,
            ConstraintKind::InteractionCap { kappa, .. } => *kappa,
        }
    }

    /// `max(0, value − cap)`.
    pub fn excess(&self, mu: &EmpiricalMeasure) -> f64 {
        (self.constraint_value(mu) - self.cap()).max(0.0)
    }
}

pub fn contains(k: &ConstraintSet, mu: &EmpiricalMeasure) -> bool {
    k.constraint_value(mu) <= k.cap() + k.tolerance
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub projected: EmpiricalMeasure,
    /// `(1/N) Σ |x_i − P_i|²`, the squared W₂ distance to `K`.
    pub distance_sq: f64,
    /// Lagrange multiplier of the cap (0 when `μ ∈ K`). For support
    /// constraints this is the mean normal-cone multiplier `(1/N) Σ |x_i − P_i|`.
    pub multiplier: f64,
    pub iterations: usize,
}

impl ProjectionResult {
    fn identity(mu: &EmpiricalMeasure) -> Self {
        Self {
            projected: mu.clone(),
            distance_sq: 0.0,
            multiplier: 0.0,
            iterations: 0,
        }
    }

    fn from_positions(mu: &EmpiricalMeasure, positions: Vec<f64>, multiplier: f64, iterations: usize) -> Result<Self> {
        let projected = EmpiricalMeasure::new(positions, mu.n_particles(), mu.dim())?;
        let distance_sq = mean_squared_displacement(mu.positions(), projected.positions(), mu.n_particles());
        Ok(Self {
            projected,
            distance_sq,
            multiplier,
            iterations,
        })
    }

    /// `P_i − x_i` for every particle, row-major.
    pub fn displacement(&self, mu: &EmpiricalMeasure) -> Vec<f64> {
        self.projected
            .positions()
            .iter()
            .zip(mu.positions())
            .map(|(p, x)| p - x)
            .collect()
    }
}

/// W₂-projection of `mu` onto `k`.
pub fn project(k: &ConstraintSet, mu: &EmpiricalMeasure) -> Result<ProjectionResult> {
    k.validate(mu.dim())?;
    if contains(k, mu) {
        return Ok(ProjectionResult::identity(mu));
    }
    match &k.kind {
        ConstraintKind::ConvexSupport { region } => project_support(mu, region),
        ConstraintKind::PotentialCap { potential, kappa2 } => project_potential(mu, potential, *kappa2),
        ConstraintKind::InteractionCap { interaction, kappa } => project_interaction(mu, interaction, *kappa),
    }
}

/// `W₂²(μ, K)`.
pub fn distance_to_k(mu: &EmpiricalMeasure, k: &ConstraintSet) -> Result<f64> {
    Ok(project(k, mu)?.distance_sq)
}

/// Pointwise Euclidean projection onto a convex region, which is the exact
/// W₂-projection for support constraints.
pub fn project_support(mu: &EmpiricalMeasure, region: &ConvexRegion) -> Result<ProjectionResult> {
    region.validate()?;
    if region.dim() != mu.dim() {
        return Err(Error::contract("region and measure dimensions differ"));
    }
    let d = mu.dim();
    let mut out = vec![0.0; mu.positions().len()];
    let mut iterations = 0;
    let mut multiplier = 0.0;
    for (i, x) in mu.particles().enumerate() {
        let slot = &mut out[i * d..(i + 1) * d];
        iterations = iterations.max(region.project_point(x, slot)?);
        multiplier += squared_diff(x, slot).sqrt();
    }
    multiplier /= mu.n_particles() as f64;
    ProjectionResult::from_positions(mu, out, multiplier, iterations)
}

/// Minimises `(1/N) Σ |x_i − y_i|²` subject to `(1/N) Σ V(y_i) <= kappa2`.
///
/// The multiplier `λ` is found by bisection; for fixed `λ` the problem splits
/// into per-particle proximal steps `y_i = argmin |x_i − y|² + λ V(y)`.
pub fn project_potential(mu: &EmpiricalMeasure, potential: &PotentialSpec, kappa2: f64) -> Result<ProjectionResult> {
    potential.validate(mu.dim())?;
    if !(kappa2 > 0.0) {
        return Err(Error::contract("kappa2 must be > 0"));
    }
    let d = mu.dim();
    let n = mu.n_particles() as f64;
    let current = mu.particles().map(|x| potential.value(x)).sum::<f64>() / n;
    if current <= kappa2 {
        return Ok(ProjectionResult::identity(mu));
    }
    let mut y = vec![0.0; mu.positions().len()];
    let solve = |lambda: f64, y: &mut Vec<f64>| -> Result<f64> {
        let mut total = 0.0;
        for (i, x) in mu.particles().enumerate() {
            let slot = &mut y[i * d..(i + 1) * d];
            potential.prox(x, lambda, slot)?;
            total += potential.value(slot);
        }
        Ok(total / n)
    };
    let (lambda, iterations) = bisect_multiplier(kappa2, |lambda| solve(lambda, &mut y))?;
    solve(lambda, &mut y)?;
    ProjectionResult::from_positions(mu, y, lambda, iterations)
}

/// Minimises `(1/N) Σ |x_i − y_i|²` subject to `(1/N²) ΣΣ W(y_i − y_j) <= kappa`.
///
/// Outer bisection on the multiplier, inner gradient descent on the smooth
/// strongly convex Lagrangian, warm-started across bisection steps.
pub fn project_interaction(mu: &EmpiricalMeasure, interaction: &InteractionSpec, kappa: f64) -> Result<ProjectionResult> {
    interaction.validate()?;
    if !(kappa >= 0.0) {
        return Err(Error::contract("kappa must be >= 0"));
    }
    let d = mu.dim();
    let x = mu.positions();
    if interaction_energy(interaction, x, d) <= kappa {
        return Ok(ProjectionResult::identity(mu));
    }
    if kappa == 0.0 {
        // Only fully collapsed clouds have zero energy; the closest is the mean.
        let n = mu.n_particles();
        let mut mean = vec![0.0; d];
        for p in mu.particles() {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v / n as f64;
            }
        }
        let y = (0..n).flat_map(|_| mean.iter().copied()).collect();
        return ProjectionResult::from_positions(mu, y, f64::INFINITY, 0);
    }

    let mut warm = x.to_vec();
    let mut solve = |lambda: f64| -> Result<(f64, Vec<f64>)> {
        let mut y = warm.clone();
        interaction::minimise_lagrangian(interaction, x, d, lambda, &mut y)?;
        let e = interaction_energy(interaction, &y, d);
        warm.clone_from(&y);
        Ok((e, y))
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let (lambda, iterations) = bisect_multiplier(kappa, |lambda| {
        let (e, y) = solve(lambda)?;
        best = Some((lambda, y));
        Ok(e)
    })?;
    let y = match best {
        Some((l, y)) if l == lambda => y,
        _ => solve(lambda)?.1,
    };
    ProjectionResult::from_positions(mu, y, lambda, iterations)
}

/// Finds `λ >= 0` with `value(λ) = cap` for a nonincreasing `value`, given
/// `value(0) > cap`. Doubles an upper bracket from 1, then bisects until the
/// value is within `1e-10` of the cap or the bracket is narrower than `1e-12`.
///
/// Returns the multiplier and the number of evaluations. When the loop stops on
/// bracket width, the feasible end of the bracket is returned.
fn bisect_multiplier(cap: f64, mut value: impl FnMut(f64) -> Result<f64>) -> Result<(f64, usize)> {
    let mut evals = 0usize;
    let mut lo = 0.0;
    let mut hi = 1.0;
    loop {
        let v = value(hi)?;
        evals += 1;
        if v <= cap {
            if cap - v <= VALUE_TOL {
                return Ok((hi, evals));
            }
            break;
        }
        lo = hi;
        hi *= 2.0;
        if evals > MAX_DOUBLINGS {
            return Err(Error::contract("multiplier bracket failure: constraint unreachable"));
        }
    }
    while hi - lo >= WIDTH_TOL {
        let mid = 0.5 * (lo + hi);
        let v = value(mid)?;
        evals += 1;
        if (v - cap).abs() <= VALUE_TOL {
            return Ok((mid, evals));
        }
        if v > cap {
            lo = mid;
        } else {
            hi = mid;
        }
        if mid == lo && mid == hi {
            break;
        }
    }
    Ok((hi, evals))
}

fn mean_squared_displacement(a: &[f64], b: &[f64], n: usize) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64
}

pub(crate) fn squared_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    squared_diff(a, b).sqrt()
}
