//! Empirical probability measures on `R^d` and their initial laws.
//!
//! An [`EmpiricalMeasure`] is a cloud of `N` equally weighted particles stored
//! row-major (`positions[i * dim + k]` is coordinate `k` of particle `i`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `N` particles in `R^d`, each carrying mass `1/N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure")]
pub struct EmpiricalMeasure {
    positions: Vec<f64>,
    n_particles: usize,
    dim: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasure {
    positions: Vec<f64>,
    n_particles: usize,
    dim: usize,
}

impl TryFrom<RawMeasure> for EmpiricalMeasure {
    type Error = Error;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        EmpiricalMeasure::new(raw.positions, raw.n_particles, raw.dim)
    }
}

impl EmpiricalMeasure {
    /// Builds a measure from a row-major `n_particles × dim` buffer.
    pub fn new(positions: Vec<f64>, n_particles: usize, dim: usize) -> Result<Self> {
        if n_particles == 0 || dim == 0 {
            return Err(Error::contract("an empirical measure needs N >= 1 and d >= 1"));
        }
        if positions.len() != n_particles * dim {
            return Err(Error::contract(format!(
                "expected {} coordinates for {n_particles} particles in dimension {dim}, got {}",
                n_particles * dim,
                positions.len()
            )));
        }
        if let Some(bad) = positions.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "non-finite coordinate for particle {}",
                bad / dim
            )));
        }
        Ok(Self {
            positions,
            n_particles,
            dim,
        })
    }

    /// Builds a measure from one row per particle.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|r| r.as_ref().len() != dim) {
            return Err(Error::contract("all particles must share one dimension"));
        }
        let positions = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(positions, rows.len(), dim)
    }

    /// Every particle at `point`.
    pub fn dirac(point: &[f64], n_particles: usize) -> Result<Self> {
        let positions = (0..n_particles).flat_map(|_| point.iter().copied()).collect();
        Self::new(positions, n_particles, point.len())
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn into_positions(self) -> Vec<f64> {
        self.positions
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn particles(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.positions.chunks_exact(self.dim)
    }

    /// Checks that `other` lives on the same number of particles and dimension.
    pub fn check_same_shape(&self, other: &EmpiricalMeasure) -> Result<()> {
        if self.n_particles != other.n_particles || self.dim != other.dim {
            return Err(Error::contract(format!(
                "shape mismatch: {}x{} vs {}x{}",
                self.n_particles, self.dim, other.n_particles, other.dim
            )));
        }
        Ok(())
    }

    /// Relabels particles: particle `k` of the result is particle `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n_particles)?;
        let positions = perm
            .iter()
            .flat_map(|&src| self.particle(src).iter().copied())
            .collect();
        Ok(Self {
            positions,
            n_particles: self.n_particles,
            dim: self.dim,
        })
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::contract(format!(
            "permutation has length {}, expected {n}",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::contract("not a permutation"));
        }
    }
    Ok(())
}

/// Replaces every particle by the given per-particle target values.
pub fn push_forward(mu: &EmpiricalMeasure, map: &[f64]) -> Result<EmpiricalMeasure> {
    if map.len() != mu.positions.len() {
        return Err(Error::contract(format!(
            "map has {} values, expected {} ({}x{})",
            map.len(),
            mu.positions.len(),
            mu.n_particles,
            mu.dim
        )));
    }
    EmpiricalMeasure::new(map.to_vec(), mu.n_particles, mu.dim)
}

/// `(1/N) Σ |x_i|²`.
pub fn second_moment(mu: &EmpiricalMeasure) -> f64 {
    mu.positions.iter().map(|v| v * v).sum::<f64>() / mu.n_particles as f64
}

/// Seeded ChaCha stream. Equal seed and equal call sequence give equal output.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha20Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent sub-stream `stream` of the master `seed`.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn index(&mut self, upper: usize) -> usize {
        self.rng.gen_range(0..upper)
    }

}

/// Law of the initial particle cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialLaw {
    /// Point mass. Not absolutely continuous; meant for oracle tests.
    Dirac { point: Vec<f64> },
    /// Independent coordinates with the given means and variances.
    Gaussian { mean: Vec<f64>, variance: Vec<f64> },
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
}

impl InitialLaw {
    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::Dirac { point } => point.len(),
            InitialLaw::Gaussian { mean, .. } => mean.len(),
            InitialLaw::UniformBox { lower, .. } => lower.len(),
        }
    }

    /// Point masses are accepted but lack a density.
    pub fn is_oracle_only(&self) -> bool {
        matches!(self, InitialLaw::Dirac { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            InitialLaw::Dirac { point } => {
                if point.is_empty() || !all_finite(point) {
                    return Err(Error::config("initial.point", "needs finite coordinates"));
                }
            }
            InitialLaw::Gaussian { mean, variance } => {
                if mean.is_empty() || !all_finite(mean) {
                    return Err(Error::config("initial.mean", "needs finite coordinates"));
                }
                if variance.len() != mean.len() {
                    return Err(Error::config("initial.variance", "length differs from mean"));
                }
                if !variance.iter().all(|v| v.is_finite() && *v > 0.0) {
                    return Err(Error::config("initial.variance", "entries must be > 0"));
                }
            }
            InitialLaw::UniformBox { lower, upper } => {
                if lower.is_empty() || !all_finite(lower) || !all_finite(upper) {
                    return Err(Error::config("initial.lower", "needs finite coordinates"));
                }
                if upper.len() != lower.len() {
                    return Err(Error::config("initial.upper", "length differs from lower"));
                }
                if lower.iter().zip(upper).any(|(l, u)| l >= u) {
                    return Err(Error::config("initial.upper", "must exceed lower componentwise"));
                }
            }
        }
        Ok(())
    }
}

/// Draws `n` i.i.d. particles from `law`.
pub fn sample_initial(law: &InitialLaw, n: usize, rng: &mut RandomSource) -> Result<EmpiricalMeasure> {
    law.validate()?;
    if n == 0 {
        return Err(Error::config("n_particles", "must be >= 1"));
    }
    let dim = law.dim();
    let mut positions = Vec::with_capacity(n * dim);
    for _ in 0..n {
        match law {
            InitialLaw::Dirac { point } => positions.extend_from_slice(point),
            InitialLaw::Gaussian { mean, variance } => {
                for (m, v) in mean.iter().zip(variance) {
                    positions.push(m + v.sqrt() * rng.standard_normal());
                }
            }
            InitialLaw::UniformBox { lower, upper } => {
                for (l, u) in lower.iter().zip(upper) {
                    positions.push(l + (u - l) * rng.uniform());
                }
            }
        }
    }
    EmpiricalMeasure::new(positions, n, dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirac_sampling_puts_everything_at_the_point() {
        let law = InitialLaw::Dirac { point: vec![0.0] };
        let mu = sample_initial(&law, 4, &mut RandomSource::new(1)).unwrap();
        assert_eq!(mu.positions(), &[0.0; 4]);
        assert!(law.is_oracle_only());
    }

    #[test]
    fn uniform_mean_within_clt_band() {
        let law = InitialLaw::UniformBox {
            lower: vec![0.0],
            upper: vec![1.0],
        };
        let mu = sample_initial(&law, 10_000, &mut RandomSource::new(7)).unwrap();
        let mean = mu.positions().iter().sum::<f64>() / 1e4;
        assert!((0.47..=0.53).contains(&mean), "{mean}");
    }

    #[test]
    fn gaussian_second_moment_band() {
        let law = InitialLaw::Gaussian {
            mean: vec![0.0, 0.0],
            variance: vec![1.0, 1.0],
        };
        let mu = sample_initial(&law, 10_000, &mut RandomSource::new(11)).unwrap();
        for k in 0..2 {
            let m2 = mu.particles().map(|p| p[k] * p[k]).sum::<f64>() / 1e4;
            assert!((0.94..=1.06).contains(&m2), "coordinate {k}: {m2}");
        }
    }

    #[test]
    fn invalid_laws_are_config_errors() {
        let bad = [
            InitialLaw::Gaussian {
                mean: vec![0.0],
                variance: vec![0.0],
            },
            InitialLaw::UniformBox {
                lower: vec![1.0],
                upper: vec![1.0],
            },
        ];
        for law in bad {
            let err = sample_initial(&law, 3, &mut RandomSource::new(0)).unwrap_err();
            assert!(matches!(err, Error::Config { .. }), "{err:?}");
        }
    }

    #[test]
    fn push_forward_examples() {
        let mu = EmpiricalMeasure::from_rows(&[[-1.0], [1.0]]).unwrap();
        assert_eq!(push_forward(&mu, mu.positions()).unwrap(), mu);
        let doubled: Vec<f64> = mu.positions().iter().map(|x| 2.0 * x).collect();
        assert_eq!(push_forward(&mu, &doubled).unwrap().positions(), &[-2.0, 2.0]);
        let constant = push_forward(&mu, &[5.0, 5.0]).unwrap();
        assert_eq!(constant, EmpiricalMeasure::dirac(&[5.0], 2).unwrap());
        assert!(push_forward(&mu, &[1.0]).is_err());
    }

    #[test]
    fn second_moment_examples() {
        assert_eq!(second_moment(&EmpiricalMeasure::dirac(&[0.0, 0.0], 3).unwrap()), 0.0);
        assert_eq!(second_moment(&EmpiricalMeasure::from_rows(&[[3.0, 4.0]]).unwrap()), 25.0);
        assert_eq!(second_moment(&EmpiricalMeasure::from_rows(&[[-1.0], [1.0]]).unwrap()), 1.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(EmpiricalMeasure::new(vec![], 0, 1).is_err());
        assert!(EmpiricalMeasure::new(vec![1.0, 2.0, 3.0], 2, 2).is_err());
        assert!(EmpiricalMeasure::new(vec![f64::NAN], 1, 1).is_err());
    }

    #[test]
    fn random_source_tracks_position() {
        let mut rng = RandomSource::new(3);
        assert_eq!(rng.position(), 0);
        rng.uniform();
        assert!(rng.position() > 0);
        let a = RandomSource::with_stream(3, 1).standard_normal();
        let b = RandomSource::with_stream(3, 2).standard_normal();
        assert_ne!(a, b);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn cloud() -> impl Strategy<Value = EmpiricalMeasure> {
            (1usize..12, 1usize..4).prop_flat_map(|(n, d)| {
                proptest::collection::vec(-10.0f64..10.0, n * d)
                    .prop_map(move |v| EmpiricalMeasure::new(v, n, d).unwrap())
            })
        }

        proptest! {
            #[test]
            fn identity_push_forward_is_exact(mu in cloud()) {
                prop_assert_eq!(push_forward(&mu, mu.positions()).unwrap(), mu);
            }

            #[test]
            fn second_moment_scales_quadratically(mu in cloud(), c in -5.0f64..5.0) {
                let scaled: Vec<f64> = mu.positions().iter().map(|x| c * x).collect();
                let lhs = second_moment(&push_forward(&mu, &scaled).unwrap());
                let rhs = c * c * second_moment(&mu);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(f64::MIN_POSITIVE));
            }

            #[test]
            fn equal_seeds_sample_bitwise_equal(seed in any::<u64>(), n in 1usize..50) {
                let law = InitialLaw::Gaussian { mean: vec![0.5, -1.0], variance: vec![2.0, 0.3] };
                let a = sample_initial(&law, n, &mut RandomSource::new(seed)).unwrap();
                let b = sample_initial(&law, n, &mut RandomSource::new(seed)).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
