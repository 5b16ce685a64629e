use super::{cost_matrix, CostMatrix, TransportPlan};
use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornOptions {
    /// Entropic regularisation `η > 0`.
    pub eta: f64,
    /// Marginal tolerance (absolute, on row/column sums).
    pub tol: f64,
    pub max_iter: usize,
}

impl SinkhornOptions {
    pub fn new(eta: f64) -> Self {
        Self {
            eta,
            tol: 1e-9,
            max_iter: 10_000,
        }
    }
}

/// Log-domain Sinkhorn with η-annealing and a Newton polish.
///
/// The plan is `π_ij = exp((φ_i + ψ_j − c_ij) / η)`; `φ`, `ψ` are returned as
/// the dual potentials. Regularisation starts at the largest cost and is halved
/// until it reaches `opts.eta`, warm-starting the potentials at each stage.
/// Plain Sinkhorn sweeps contract very slowly once `η` is small against the
/// cost gaps, so the final stage switches to damped Newton on the semi-dual
/// `ψ ↦ mean(φ(ψ)) + mean(ψ)` after reaching a coarse marginal error.
/// Sweeps and Newton steps both count against `opts.max_iter`.
pub fn sinkhorn(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, opts: SinkhornOptions) -> Result<TransportPlan> {
    if !(opts.eta > 0.0) || !opts.eta.is_finite() {
        return Err(Error::contract("sinkhorn needs eta > 0"));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::contract("sinkhorn needs tol > 0"));
    }
    let cost = cost_matrix(mu, nu)?;
    let n = cost.size();
    let coarse_tol = opts.tol.max(1e-4 / n as f64);
    let mut state = Dual::new(&cost);

    let mut stage_eta = cost.max_entry().max(opts.eta);
    let mut iterations = 0usize;
    let mut err = f64::INFINITY;
    loop {
        let last_stage = stage_eta <= opts.eta;
        let eta = if last_stage { opts.eta } else { stage_eta };
        let stage_cap = if last_stage { opts.max_iter } else { iterations + STAGE_SWEEPS };
        while iterations < stage_cap.min(opts.max_iter) {
            iterations += 1;
            err = state.sweep(eta);
            if err < coarse_tol {
                break;
            }
        }
        if last_stage {
            break;
        }
        stage_eta *= 0.5;
    }

    let eta = opts.eta;
    while err >= opts.tol && iterations < opts.max_iter {
        iterations += 1;
        err = state.newton_step(eta);
    }
    if err >= opts.tol {
        return Err(Error::Convergence {
            solver: "sinkhorn",
            iterations,
            residual: err,
        });
    }

    state.row_transform(eta);
    let Dual { phi, psi, .. } = state;
    let coupling = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            ((phi[i] + psi[j] - cost.get(i, j)) / eta).exp()
        })
        .collect();
    Ok(TransportPlan {
        n,
        coupling,
        dual_phi: phi,
        dual_psi: psi,
        regularization: eta,
        permutation: None,
    })
}

const STAGE_SWEEPS: usize = 200;
const NEWTON_RIDGE: f64 = 1e-13;

struct Dual<'a> {
    cost: &'a CostMatrix,
    n: usize,
    log_w: f64,
    phi: Vec<f64>,
    psi: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> Dual<'a> {
    fn new(cost: &'a CostMatrix) -> Self {
        let n = cost.size();
        Self {
            cost,
            n,
            log_w: -(n as f64).ln(),
            phi: vec![0.0; n],
            psi: vec![0.0; n],
            scratch: vec![0.0; n],
        }
    }

    /// `φ_i = η (ln(1/N) − LSE_j((ψ_j − c_ij)/η))`: makes every row sum exact.
    fn row_transform(&mut self, eta: f64) {
        for i in 0..self.n {
            for j in 0..self.n {
                self.scratch[j] = (self.psi[j] - self.cost.get(i, j)) / eta;
            }
            self.phi[i] = eta * (self.log_w - log_sum_exp(&self.scratch));
        }
    }

    fn col_transform(&mut self, eta: f64) {
        for j in 0..self.n {
            for i in 0..self.n {
                self.scratch[i] = (self.phi[i] - self.cost.get(i, j)) / eta;
            }
            self.psi[j] = eta * (self.log_w - log_sum_exp(&self.scratch));
        }
    }

    fn entry(&self, i: usize, j: usize, eta: f64) -> f64 {
        ((self.phi[i] + self.psi[j] - self.cost.get(i, j)) / eta).exp()
    }

    /// One Sinkhorn sweep; returns the row-marginal error (columns are exact).
    fn sweep(&mut self, eta: f64) -> f64 {
        self.row_transform(eta);
        self.col_transform(eta);
        let target = 1.0 / self.n as f64;
        (0..self.n)
            .map(|i| ((0..self.n).map(|j| self.entry(i, j, eta)).sum::<f64>() - target).abs())
            .fold(0.0, f64::max)
    }

    /// Column-sum residuals `1/N − Σ_i π_ij` with rows made exact first.
    fn column_residual(&mut self, eta: f64) -> (Vec<f64>, Vec<f64>) {
        self.row_transform(eta);
        let n = self.n;
        let plan: Vec<f64> = (0..n * n).map(|k| self.entry(k / n, k % n, eta)).collect();
        let target = 1.0 / n as f64;
        let residual = (0..n)
            .map(|j| target - (0..n).map(|i| plan[i * n + j]).sum::<f64>())
            .collect();
        (residual, plan)
    }

    fn semi_dual(&mut self, eta: f64) -> f64 {
        self.row_transform(eta);
        (self.phi.iter().sum::<f64>() + self.psi.iter().sum::<f64>()) / self.n as f64
    }

    /// Damped Newton step on `ψ` (with `ψ_0` pinned); returns the new
    /// column-marginal error.
    fn newton_step(&mut self, eta: f64) -> f64 {
        let n = self.n;
        let (residual, plan) = self.column_residual(eta);
        let value = self.semi_dual(eta);
        // Negative Hessian (times η): diag(col sums) − πᵀ diag(N) π.
        let m = n - 1;
        let mut hess = vec![0.0; m * m];
        for a in 0..m {
            let j = a + 1;
            for b in 0..m {
                let k = b + 1;
                let cross: f64 = (0..n).map(|i| plan[i * n + j] * plan[i * n + k]).sum::<f64>() * n as f64;
                hess[a * m + b] = -cross;
            }
            let col: f64 = (0..n).map(|i| plan[i * n + j]).sum();
            hess[a * m + a] += col + NEWTON_RIDGE;
        }
        let rhs: Vec<f64> = residual[1..].iter().map(|r| eta * r).collect();
        let Some(step) = solve_dense(hess, rhs, m) else {
            return residual.iter().map(|r| r.abs()).fold(0.0, f64::max);
        };
        let slope: f64 = step.iter().zip(&residual[1..]).map(|(d, r)| d * r).sum();
        let base = self.psi.clone();
        let mut t = 1.0;
        loop {
            for (a, d) in step.iter().enumerate() {
                self.psi[a + 1] = base[a + 1] + t * d;
            }
            if self.semi_dual(eta) >= value + 0.25 * t * slope || t < 1e-12 {
                break;
            }
            t *= 0.5;
        }
        let (residual, _) = self.column_residual(eta);
        residual.iter().map(|r| r.abs()).fold(0.0, f64::max)
    }
}

/// Gaussian elimination with partial pivoting on a dense `m × m` system.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, m: usize) -> Option<Vec<f64>> {
    for col in 0..m {
        let pivot = (col..m).max_by(|&x, &y| a[x * m + col].abs().total_cmp(&a[y * m + col].abs()))?;
        if a[pivot * m + col] == 0.0 || !a[pivot * m + col].is_finite() {
            return None;
        }
        if pivot != col {
            for k in 0..m {
                a.swap(pivot * m + k, col * m + k);
            }
            b.swap(pivot, col);
        }
        for row in (col + 1)..m {
            let f = a[row * m + col] / a[col * m + col];
            if f != 0.0 {
                for k in col..m {
                    a[row * m + k] -= f * a[col * m + k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let s: f64 = ((row + 1)..m).map(|k| a[row * m + k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row * m + row];
    }
    Some(x)
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::RandomSource;
    use crate::transport::{transport_map, verify_duality, w2_squared};

    fn cloud(rng: &mut RandomSource, n: usize, d: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::new((0..n * d).map(|_| rng.uniform()).collect(), n, d).unwrap()
    }

    #[test]
    fn marginals_within_tolerance() {
        let mut rng = RandomSource::new(10);
        for eta in [1.0, 1e-1, 1e-2] {
            let (mu, nu) = (cloud(&mut rng, 6, 2), cloud(&mut rng, 6, 2));
            let plan = sinkhorn(&mu, &nu, SinkhornOptions::new(eta)).unwrap();
            assert!(plan.marginal_error() <= 1e-9, "eta {eta}: {}", plan.marginal_error());
        }
    }

    #[test]
    fn cost_approaches_exact_as_eta_shrinks() {
        let mut rng = RandomSource::new(11);
        let (mu, nu) = (cloud(&mut rng, 5, 2), cloud(&mut rng, 5, 2));
        let exact = w2_squared(&mu, &nu).unwrap();
        let cost = cost_matrix(&mu, &nu).unwrap();
        let costs: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&eta| sinkhorn(&mu, &nu, SinkhornOptions::new(eta)).unwrap().transport_cost(&cost))
            .collect();
        assert!(costs[0] >= costs[1] && costs[1] >= costs[2], "{costs:?}");
        assert!((costs[2] - exact).abs() <= 0.02 * exact, "{costs:?} vs {exact}");
    }

    #[test]
    fn self_transport_cost_vanishes_monotonically() {
        let mut rng = RandomSource::new(12);
        let mu = cloud(&mut rng, 6, 2);
        let cost = cost_matrix(&mu, &mu).unwrap();
        let costs: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&eta| sinkhorn(&mu, &mu, SinkhornOptions::new(eta)).unwrap().transport_cost(&cost))
            .collect();
        assert!(costs.windows(2).all(|w| w[0] >= w[1]), "{costs:?}");
        assert!(costs[2] < 1e-6, "{costs:?}");
    }

    #[test]
    fn entropic_duality_gap_bound() {
        let mut rng = RandomSource::new(13);
        let eta = 1e-2;
        for _ in 0..10 {
            let (mu, nu) = (cloud(&mut rng, 8, 2), cloud(&mut rng, 8, 2));
            let plan = sinkhorn(&mu, &nu, SinkhornOptions::new(eta)).unwrap();
            let report = verify_duality(&plan, &cost_matrix(&mu, &nu).unwrap()).unwrap();
            assert!(report.gap <= eta * (1.0 + 8f64.ln()), "{report:?}");
            assert!(report.feasible, "{report:?}");
        }
    }

    #[test]
    fn barycentric_map_of_sharp_plan_is_close_to_exact() {
        // Well-separated 1-d clouds: every non-monotone matching costs at least 2 more.
        let mu = EmpiricalMeasure::from_rows(&[[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]]).unwrap();
        let nu = EmpiricalMeasure::from_rows(&[[3.2], [0.1], [5.3], [1.05], [2.4], [4.1]]).unwrap();
        let plan = sinkhorn(&mu, &nu, SinkhornOptions::new(1e-2)).unwrap();
        let bary = transport_map(&plan, &mu, &nu).unwrap();
        let (exact, _) = crate::transport::exact_plan(&mu, &nu).unwrap();
        let exact = transport_map(&exact, &mu, &nu).unwrap();
        assert_eq!(exact, vec![0.1, 1.05, 2.4, 3.2, 4.1, 5.3]);
        for (a, b) in bary.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-6, "{bary:?} vs {exact:?}");
        }
    }

    #[test]
    fn reports_non_convergence() {
        let mut rng = RandomSource::new(15);
        let (mu, nu) = (cloud(&mut rng, 6, 2), cloud(&mut rng, 6, 2));
        let opts = SinkhornOptions {
            eta: 1e-3,
            tol: 1e-14,
            max_iter: 3,
        };
        match sinkhorn(&mu, &nu, opts) {
            Err(Error::Convergence { iterations, residual, .. }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0);
            }
            other => panic!("expected convergence failure, got {other:?}"),
        }
        assert!(sinkhorn(&mu, &nu, SinkhornOptions::new(0.0)).is_err());
    }
}
