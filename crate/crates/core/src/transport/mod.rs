//! Quadratic-cost optimal transport between equal-size empirical measures.
//!
//! With uniform weights and equal particle counts the Kantorovich problem has
//! an optimal vertex that is a permutation, so the exact solver is an
//! assignment solver. An entropic (Sinkhorn) variant is provided alongside.

mod assignment;
mod sinkhorn;

pub use assignment::{solve_assignment, Assignment};
pub use sinkhorn::{sinkhorn, SinkhornOptions};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;

/// Dense `N × N` matrix of squared distances, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    entries: Vec<f64>,
    n: usize,
}

impl CostMatrix {
    pub fn from_entries(entries: Vec<f64>, n: usize) -> Result<Self> {
        if n == 0 || entries.len() != n * n {
            return Err(Error::contract(format!(
                "cost matrix needs {n}x{n} entries, got {}",
                entries.len()
            )));
        }
        if entries.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::contract("cost entries must be finite and nonnegative"));
        }
        Ok(Self { entries, n })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn transposed(&self) -> Self {
        let n = self.n;
        let entries = (0..n * n).map(|k| self.get(k % n, k / n)).collect();
        Self { entries, n }
    }

    pub fn max_entry(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }
}

pub fn cost_matrix(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<CostMatrix> {
    mu.check_same_shape(nu)?;
    let n = mu.n_particles();
    let mut entries = Vec::with_capacity(n * n);
    for x in mu.particles() {
        for y in nu.particles() {
            entries.push(squared_distance(x, y));
        }
    }
    Ok(CostMatrix { entries, n })
}

#[inline]
pub(crate) fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Exact Wasserstein-2 distance `sqrt(min_σ (1/N) Σ |x_i − y_σ(i)|²)`.
pub fn w2_distance(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    Ok(w2_squared(mu, nu)?.sqrt())
}

pub fn w2_squared(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    let cost = cost_matrix(mu, nu)?;
    let a = solve_assignment(&cost)?;
    Ok(a.total_cost / mu.n_particles() as f64)
}

/// A coupling of two uniform `N`-point measures with its dual potentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    n: usize,
    /// Row-major `N × N`, row and column sums `1/N`.
    pub coupling: Vec<f64>,
    pub dual_phi: Vec<f64>,
    pub dual_psi: Vec<f64>,
    /// Entropic regularisation; `0` marks an exact plan.
    pub regularization: f64,
    /// Set for exact plans: row `i` sends all its mass to `permutation[i]`.
    pub permutation: Option<Vec<usize>>,
}

impl TransportPlan {
    pub fn from_assignment(a: &Assignment) -> Self {
        let n = a.permutation.len();
        let mut coupling = vec![0.0; n * n];
        for (i, &j) in a.permutation.iter().enumerate() {
            coupling[i * n + j] = 1.0 / n as f64;
        }
        Self {
            n,
            coupling,
            dual_phi: a.row_potential.clone(),
            dual_psi: a.col_potential.clone(),
            regularization: 0.0,
            permutation: Some(a.permutation.clone()),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn is_exact(&self) -> bool {
        self.regularization == 0.0
    }

    /// `Σ_ij π_ij c_ij`.
    pub fn transport_cost(&self, cost: &CostMatrix) -> f64 {
        self.coupling.iter().zip(cost.entries()).map(|(p, c)| p * c).sum()
    }

    /// Largest deviation of a row or column sum from `1/N`.
    pub fn marginal_error(&self) -> f64 {
        let n = self.n;
        let target = 1.0 / n as f64;
        let mut err = 0.0f64;
        for i in 0..n {
            let row: f64 = self.coupling[i * n..(i + 1) * n].iter().sum();
            let col: f64 = (0..n).map(|k| self.coupling[k * n + i]).sum();
            err = err.max((row - target).abs()).max((col - target).abs());
        }
        err
    }
}

/// Exact plan between two measures.
pub fn exact_plan(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<(TransportPlan, CostMatrix)> {
    let cost = cost_matrix(mu, nu)?;
    let a = solve_assignment(&cost)?;
    Ok((TransportPlan::from_assignment(&a), cost))
}

/// Values of the transport map at the source particles.
///
/// Exact plans send `x_i` to `y_σ(i)`. Entropic plans use the barycentric
/// projection `N Σ_j π_ij y_j`.
pub fn transport_map(plan: &TransportPlan, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<Vec<f64>> {
    mu.check_same_shape(nu)?;
    let n = mu.n_particles();
    if plan.size() != n {
        return Err(Error::contract(format!(
            "plan is {}x{}, measures have {n} particles",
            plan.size(),
            plan.size()
        )));
    }
    let d = mu.dim();
    let mut targets = Vec::with_capacity(n * d);
    match &plan.permutation {
        Some(perm) => {
            for &j in perm {
                targets.extend_from_slice(nu.particle(j));
            }
        }
        None => {
            for i in 0..n {
                let row = &plan.coupling[i * n..(i + 1) * n];
                for k in 0..d {
                    let v: f64 = row.iter().zip(nu.particles()).map(|(p, y)| p * y[k]).sum();
                    targets.push(n as f64 * v);
                }
            }
        }
    }
    Ok(targets)
}

/// Outcome of [`verify_duality`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    /// `|mean φ + mean ψ − Σ π c|`.
    pub gap: f64,
    /// `φ_i + ψ_j <= c_ij + slack` everywhere.
    pub feasible: bool,
    /// `max_ij (φ_i + ψ_j − c_ij)`.
    pub max_excess: f64,
    pub slack: f64,
}

/// Checks the dual certificate carried by `plan`.
///
/// Slack is `η ln N` for entropic plans and zero for exact ones; both get a
/// floating-point allowance of `64 ε max c`.
pub fn verify_duality(plan: &TransportPlan, cost: &CostMatrix) -> Result<DualityReport> {
    let n = plan.size();
    if cost.size() != n || plan.dual_phi.len() != n || plan.dual_psi.len() != n {
        return Err(Error::contract("plan and cost matrix sizes differ"));
    }
    let primal = plan.transport_cost(cost);
    let dual = (plan.dual_phi.iter().sum::<f64>() + plan.dual_psi.iter().sum::<f64>()) / n as f64;
    let mut max_excess = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            max_excess = max_excess.max(plan.dual_phi[i] + plan.dual_psi[j] - cost.get(i, j));
        }
    }
    let slack = plan.regularization * (n as f64).ln();
    let rounding = 64.0 * f64::EPSILON * cost.max_entry().max(1.0);
    Ok(DualityReport {
        gap: (dual - primal).abs(),
        feasible: max_excess <= slack + rounding,
        max_excess,
        slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::RandomSource;

    fn cloud(rng: &mut RandomSource, n: usize, d: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::new((0..n * d).map(|_| rng.uniform()).collect(), n, d).unwrap()
    }

    #[test]
    fn cost_matrix_examples() {
        let o = EmpiricalMeasure::from_rows(&[[0.0]]).unwrap();
        assert_eq!(cost_matrix(&o, &o).unwrap().entries(), &[0.0]);
        let three = EmpiricalMeasure::from_rows(&[[3.0]]).unwrap();
        assert_eq!(cost_matrix(&o, &three).unwrap().entries(), &[9.0]);
        let mu = EmpiricalMeasure::from_rows(&[[0.0, 0.0], [1.0, 0.0]]).unwrap();
        let nu = EmpiricalMeasure::from_rows(&[[0.0, 1.0], [1.0, 1.0]]).unwrap();
        assert_eq!(cost_matrix(&mu, &nu).unwrap().entries(), &[1.0, 2.0, 2.0, 1.0]);
        let two = EmpiricalMeasure::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(matches!(cost_matrix(&o, &two), Err(Error::Contract(_))));
    }

    #[test]
    fn cost_matrix_transposes_under_swap() {
        let mut rng = RandomSource::new(1);
        let (mu, nu) = (cloud(&mut rng, 5, 3), cloud(&mut rng, 5, 3));
        assert_eq!(cost_matrix(&mu, &nu).unwrap().transposed(), cost_matrix(&nu, &mu).unwrap());
    }

    #[test]
    fn w2_examples() {
        let mut rng = RandomSource::new(2);
        let mu = cloud(&mut rng, 6, 2);
        assert_eq!(w2_distance(&mu, &mu).unwrap(), 0.0);
        let x = EmpiricalMeasure::from_rows(&[[1.0, 2.0]]).unwrap();
        let y = EmpiricalMeasure::from_rows(&[[4.0, 6.0]]).unwrap();
        assert_eq!(w2_distance(&x, &y).unwrap(), 5.0);
    }

    #[test]
    fn exact_map_examples() {
        let mut rng = RandomSource::new(3);
        let mu = cloud(&mut rng, 7, 2);
        let (plan, _) = exact_plan(&mu, &mu).unwrap();
        assert_eq!(plan.permutation.as_deref(), Some(&[0, 1, 2, 3, 4, 5, 6][..]));
        assert_eq!(transport_map(&plan, &mu, &mu).unwrap(), mu.positions());

        let x = EmpiricalMeasure::from_rows(&[[1.0]]).unwrap();
        let y = EmpiricalMeasure::from_rows(&[[-2.0]]).unwrap();
        let (plan, cost) = exact_plan(&x, &y).unwrap();
        assert_eq!(transport_map(&plan, &x, &y).unwrap(), vec![-2.0]);
        let report = verify_duality(&plan, &cost).unwrap();
        assert_eq!(plan.dual_phi[0] + plan.dual_psi[0], 9.0);
        assert_eq!(report.gap, 0.0);
        assert!(report.feasible);
    }

    #[test]
    fn exact_plan_marginals_are_exact() {
        let mut rng = RandomSource::new(4);
        let (mu, nu) = (cloud(&mut rng, 9, 2), cloud(&mut rng, 9, 2));
        let (plan, cost) = exact_plan(&mu, &nu).unwrap();
        assert!(plan.marginal_error() < 1e-15);
        let report = verify_duality(&plan, &cost).unwrap();
        assert!(report.gap <= 1e-9, "{report:?}");
        assert!(report.feasible, "{report:?}");
    }

    #[test]
    fn exact_map_pushes_onto_target_multiset() {
        let mut rng = RandomSource::new(5);
        for _ in 0..20 {
            let (mu, nu) = (cloud(&mut rng, 8, 3), cloud(&mut rng, 8, 3));
            let (plan, _) = exact_plan(&mu, &nu).unwrap();
            let pushed = crate::measure::push_forward(&mu, &transport_map(&plan, &mu, &nu).unwrap()).unwrap();
            let sorted = |m: &EmpiricalMeasure| {
                let mut rows: Vec<Vec<f64>> = m.particles().map(<[f64]>::to_vec).collect();
                rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
                rows
            };
            assert_eq!(sorted(&pushed), sorted(&nu));
        }
    }
}
