use serde::{Deserialize, Serialize};

use super::{initial_cloud, simulate, simulate_cloud, Coefficients, ParticleStreams, SchemeConfig, TrajectoryRecord};
use crate::constraint::ConstraintSet;
use crate::error::{Error, Result};
use crate::measure::{check_permutation, InitialLaw};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub sup_w2sq: f64,
    pub integral_w2sq: f64,
    /// `(1/ε) ∫₀ᵀ W₂²(μ_t, K) dt`.
    pub penalization_control: f64,
    pub max_second_moment: f64,
    pub final_l_variation: f64,
    pub max_decay_functional: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `ln ∫W₂²` against `ln ε`; `None` when an integral vanishes.
    pub slope: Option<f64>,
    #[serde(skip)]
    pub records: Vec<TrajectoryRecord>,
}

/// Runs the scheme once per `ε` with the same seed, hence the same initial
/// cloud and the same per-particle noise (common random numbers).
pub fn epsilon_sweep(
    law0: &InitialLaw,
    coeffs: &Coefficients,
    k: &ConstraintSet,
    base: &SchemeConfig,
    eps_list: &[f64],
) -> Result<SweepReport> {
    if eps_list.len() < 3 {
        return Err(Error::config("eps", "sweep needs at least 3 values"));
    }
    if eps_list.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::config("eps", "values must be finite and > 0"));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::config("eps", "values must be strictly decreasing"));
    }
    let mut rows = Vec::with_capacity(eps_list.len());
    let mut records = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let cfg = SchemeConfig { epsilon: eps, ..base.clone() };
        let rec = simulate(law0, coeffs, k, &cfg)?;
        let s = rec.summary;
        rows.push(SweepRow {
            eps,
            sup_w2sq: s.sup_w2sq,
            integral_w2sq: s.integral_w2sq,
            penalization_control: s.integral_w2sq / eps,
            max_second_moment: s.max_second_moment,
            final_l_variation: s.final_l_variation,
            max_decay_functional: s.max_decay_functional,
        });
        records.push(rec);
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.integral_w2sq).collect();
    Ok(SweepReport {
        slope: fit_loglog_slope(&xs, &ys),
        rows,
        records,
    })
}

/// Least-squares slope of `ln y` against `ln x`; `None` unless every value is positive.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() || xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return None;
    }
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceReport {
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub const EQUIVARIANCE_TOLERANCE: f64 = 1e-10;

/// Re-runs the scheme with particles and their noise streams relabelled by
/// `perm` (new particle `k` is old particle `perm[k]`) and compares against
/// the relabelled reference trajectory.
pub fn equivariance_check(
    law0: &InitialLaw,
    coeffs: &Coefficients,
    k: &ConstraintSet,
    cfg: &SchemeConfig,
    perm: &[usize],
) -> Result<EquivarianceReport> {
    cfg.validate()?;
    check_permutation(perm, cfg.n_particles)?;
    let cloud = initial_cloud(law0, cfg)?;
    let d = cloud.dim();
    let identity: Vec<usize> = (0..cfg.n_particles).collect();
    let reference = simulate_cloud(&cloud, coeffs, Some(k), cfg, &mut ParticleStreams::new(cfg.seed, &identity, d))?;
    let relabelled = simulate_cloud(
        &cloud.permuted(perm)?,
        coeffs,
        Some(k),
        cfg,
        &mut ParticleStreams::new(cfg.seed, perm, d),
    )?;
    let mut max_deviation = 0.0f64;
    for (a, b) in reference.states.iter().zip(&relabelled.states) {
        let a = a.permuted(perm)?;
        for (u, v) in a.positions().iter().zip(b.positions()) {
            max_deviation = max_deviation.max((u - v).abs());
        }
    }
    for (a, b) in reference
        .penalization_increments
        .iter()
        .zip(&relabelled.penalization_increments)
    {
        for (kk, &src) in perm.iter().enumerate() {
            for c in 0..d {
                max_deviation = max_deviation.max((a[src * d + c] - b[kk * d + c]).abs());
            }
        }
    }
    Ok(EquivarianceReport {
        max_deviation,
        tolerance: EQUIVARIANCE_TOLERANCE,
        passed: max_deviation <= EQUIVARIANCE_TOLERANCE,
    })
}
