//! Property checks for the projection, transport and penalized dynamics.
//!
//! Every check draws its instances from a [`RandomSource`], so a report is
//! reproducible from the seed and the constraint alone. Each failing
//! instance can be dumped as JSON and re-evaluated with [`reevaluate`].

use serde::{Deserialize, Serialize};

use crate::constraint::{contains, project, ConstraintKind, ConstraintSet, ConvexRegion, PotentialSpec};
use crate::dynamics::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::measure::{EmpiricalMeasure, RandomSource};
use crate::transport::{exact_plan, transport_map, w2_squared};

/// Tolerance for clamp-based projections (ball, box).
pub const CLAMP_TOLERANCE: f64 = 1e-9;
/// Tolerance where an iterative projection's own accuracy enters.
pub const ITERATIVE_TOLERANCE: f64 = 1e-8;
pub const IDENTITY_TOLERANCE: f64 = 1e-12;
pub const CONVEXITY_TOLERANCE: f64 = 1e-9;
pub const PAIRING_TOLERANCE: f64 = 1e-6;
pub const VARIATION_RATIO_BOUND: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub name: String,
    pub instances_tested: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub worst_case_dump: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl PropertyReport {
    fn from_worst(name: &str, tolerance: f64, instances: usize, worst: Option<(f64, Instance)>) -> Self {
        let (max_violation, dump) = match worst {
            Some((v, inst)) => (v, serde_json::to_string(&inst).ok()),
            None => (0.0, None),
        };
        Self {
            name: name.to_string(),
            instances_tested: instances,
            max_violation,
            tolerance,
            passed: max_violation <= tolerance,
            worst_case_dump: dump,
            note: None,
        }
    }

    fn with_note(mut self, note: &str) -> Self {
        self.note = Some(note.to_string());
        self
    }
}

/// Particle count and dimension of the sampled clouds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudShape {
    pub n_particles: usize,
    pub dim: usize,
}

/// Sign convention of the right-hand side in the distance-functional lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgradientForm {
    /// `c (1/N) Σ (x_i − P_i)·(x_i − y_i)`.
    Statement,
    /// `c (1/N) Σ (x_i − P_i)·(y_i − x_i)`, the first-order term of `F_K` at `μ`.
    Gradient,
}

/// One evaluated instance; serialized as the worst-case dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "property", rename_all = "snake_case")]
pub enum Instance {
    MonotoneField {
        constraint: ConstraintSet,
        x: EmpiricalMeasure,
        y: EmpiricalMeasure,
    },
    VariationalInequality {
        constraint: ConstraintSet,
        x: EmpiricalMeasure,
        y: EmpiricalMeasure,
    },
    Subdifferential {
        constraint: ConstraintSet,
        x: EmpiricalMeasure,
        y: EmpiricalMeasure,
        form: SubgradientForm,
        c: f64,
    },
    HilbertianIdentity {
        x: EmpiricalMeasure,
        y0: EmpiricalMeasure,
        y1: EmpiricalMeasure,
        alpha: f64,
    },
    GeneralizedGeodesic {
        mu: EmpiricalMeasure,
        nu0: EmpiricalMeasure,
        nu1: EmpiricalMeasure,
        alpha: f64,
    },
    MixtureConvexity {
        mu: EmpiricalMeasure,
        nu0: EmpiricalMeasure,
        nu1: EmpiricalMeasure,
        alpha: f64,
    },
}

fn dot_mean(a: &[f64], b: &[f64], n: usize) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>() / n as f64
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(u, v)| u - v).collect()
}

fn mean_sq(a: &[f64], b: &[f64], n: usize) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() / n as f64
}

/// `(F_K(ν) − F_K(μ), (1/N) Σ (x_i − P_i)·(x_i − y_i))`.
fn subdifferential_terms(k: &ConstraintSet, x: &EmpiricalMeasure, y: &EmpiricalMeasure) -> Result<(f64, f64)> {
    x.check_same_shape(y)?;
    let px = project(k, x)?;
    let py = project(k, y)?;
    let n = x.n_particles();
    let r = dot_mean(
        &diff(x.positions(), px.projected.positions()),
        &diff(x.positions(), y.positions()),
        n,
    );
    Ok((py.distance_sq - px.distance_sq, r))
}

fn subdifferential_violation(lhs: f64, r_statement: f64, form: SubgradientForm, c: f64) -> f64 {
    let rhs = match form {
        SubgradientForm::Statement => c * r_statement,
        SubgradientForm::Gradient => -c * r_statement,
    };
    (rhs - lhs).max(0.0)
}

/// Interpolates `mix` from `ν₀`, `ν₁`: with exact maps `T₀`, `T₁` from `μ`,
/// the `(1−α)N` particles with the smallest `|x − T₀x|² − |x − T₁x|²` take
/// their `T₀` image and the rest their `T₁` image.
pub fn mixture_by_subsampling(
    mu: &EmpiricalMeasure,
    nu0: &EmpiricalMeasure,
    nu1: &EmpiricalMeasure,
    alpha: f64,
) -> Result<EmpiricalMeasure> {
    mu.check_same_shape(nu0)?;
    mu.check_same_shape(nu1)?;
    let (n, d) = (mu.n_particles(), mu.dim());
    let from0 = (1.0 - alpha) * n as f64;
    if !(0.0..=1.0).contains(&alpha) || (from0 - from0.round()).abs() > 1e-9 {
        return Err(Error::contract(format!("(1 - alpha) N must be an integer, got alpha={alpha}, N={n}")));
    }
    let from0 = from0.round() as usize;
    let t0 = transport_map(&exact_plan(mu, nu0)?.0, mu, nu0)?;
    let t1 = transport_map(&exact_plan(mu, nu1)?.0, mu, nu1)?;
    let x = mu.positions();
    let mut order: Vec<usize> = (0..n).collect();
    let gain = |i: usize| {
        let r = i * d..(i + 1) * d;
        mean_sq(&x[r.clone()], &t0[r.clone()], 1) - mean_sq(&x[r.clone()], &t1[r], 1)
    };
    order.sort_by(|&a, &b| gain(a).total_cmp(&gain(b)).then(a.cmp(&b)));
    let mut pos = vec![0.0; n * d];
    for (rank, &i) in order.iter().enumerate() {
        let src = if rank < from0 { &t0 } else { &t1 };
        pos[i * d..(i + 1) * d].copy_from_slice(&src[i * d..(i + 1) * d]);
    }
    EmpiricalMeasure::new(pos, n, d)
}

/// Violation of the instance's inequality (or absolute defect of an identity).
pub fn evaluate(instance: &Instance) -> Result<f64> {
    match instance {
        Instance::MonotoneField { constraint, x, y } => {
            x.check_same_shape(y)?;
            let n = x.n_particles();
            let px = project(constraint, x)?;
            let py = project(constraint, y)?;
            let field: Vec<f64> = px
                .displacement(x)
                .iter()
                .zip(py.displacement(y))
                .map(|(p, q)| q - p)
                .collect();
            Ok(dot_mean(&diff(y.positions(), x.positions()), &field, n).max(0.0))
        }
        Instance::VariationalInequality { constraint, x, y } => {
            x.check_same_shape(y)?;
            if !contains(constraint, y) {
                return Err(Error::contract("comparison cloud must lie in K"));
            }
            let px = project(constraint, x)?;
            let v = dot_mean(&diff(y.positions(), x.positions()), &px.displacement(x), x.n_particles());
            Ok((-v).max(0.0))
        }
        Instance::Subdifferential { constraint, x, y, form, c } => {
            let (lhs, r) = subdifferential_terms(constraint, x, y)?;
            Ok(subdifferential_violation(lhs, r, *form, *c))
        }
        Instance::HilbertianIdentity { x, y0, y1, alpha } => {
            x.check_same_shape(y0)?;
            x.check_same_shape(y1)?;
            let n = x.n_particles();
            let a = *alpha;
            let mix: Vec<f64> = y0
                .positions()
                .iter()
                .zip(y1.positions())
                .map(|(u, v)| (1.0 - a) * u + a * v)
                .collect();
            let lhs = mean_sq(&mix, x.positions(), n);
            let rhs = (1.0 - a) * mean_sq(y0.positions(), x.positions(), n)
                + a * mean_sq(y1.positions(), x.positions(), n)
                - a * (1.0 - a) * mean_sq(y0.positions(), y1.positions(), n);
            Ok((lhs - rhs).abs())
        }
        Instance::GeneralizedGeodesic { mu, nu0, nu1, alpha } => {
            let a = *alpha;
            let t0 = transport_map(&exact_plan(mu, nu0)?.0, mu, nu0)?;
            let t1 = transport_map(&exact_plan(mu, nu1)?.0, mu, nu1)?;
            let interp: Vec<f64> = t0.iter().zip(&t1).map(|(u, v)| (1.0 - a) * u + a * v).collect();
            let interp = EmpiricalMeasure::new(interp, mu.n_particles(), mu.dim())?;
            let lhs = w2_squared(&interp, mu)?;
            let rhs = (1.0 - a) * w2_squared(mu, nu0)? + a * w2_squared(mu, nu1)?
                - a * (1.0 - a) * w2_squared(nu0, nu1)?;
            Ok((lhs - rhs).max(0.0))
        }
        Instance::MixtureConvexity { mu, nu0, nu1, alpha } => {
            let a = *alpha;
            let mix = mixture_by_subsampling(mu, nu0, nu1, a)?;
            let lhs = w2_squared(mu, &mix)?;
            let rhs = (1.0 - a) * w2_squared(mu, nu0)? + a * w2_squared(mu, nu1)?;
            Ok((lhs - rhs).max(0.0))
        }
    }
}

/// Re-evaluates a worst-case dump.
pub fn reevaluate(dump: &str) -> Result<f64> {
    let instance: Instance =
        serde_json::from_str(dump).map_err(|e| Error::contract(format!("unreadable instance dump: {e}")))?;
    evaluate(&instance)
}

/// Default tolerance for a constraint family.
pub fn default_tolerance(k: &ConstraintSet) -> f64 {
    match &k.kind {
        ConstraintKind::ConvexSupport {
            region: ConvexRegion::Ball { .. } | ConvexRegion::Box { .. },
        } => CLAMP_TOLERANCE,
        _ => ITERATIVE_TOLERANCE,
    }
}

/// Centre and length scale around which clouds straddle `∂K`.
fn frame(k: &ConstraintSet, dim: usize) -> (Vec<f64>, f64) {
    match &k.kind {
        ConstraintKind::ConvexSupport { region } => match region {
            ConvexRegion::Ball { center, radius } => (center.clone(), radius.max(1e-3)),
            ConvexRegion::Box { lower, upper } => {
                let c = lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect();
                let w = lower.iter().zip(upper).map(|(l, u)| 0.5 * (u - l)).sum::<f64>() / dim as f64;
                (c, w.max(1e-3))
            }
            ConvexRegion::Halfspaces { .. } => (vec![0.0; dim], 1.0),
        },
        ConstraintKind::PotentialCap { potential, kappa2 } => match potential {
            PotentialSpec::Quadratic => (vec![0.0; dim], kappa2.sqrt().max(1e-3)),
            PotentialSpec::ShiftedQuadratic { center } => (center.clone(), kappa2.sqrt().max(1e-3)),
            PotentialSpec::SoftplusNorm { width } => (vec![0.0; dim], (kappa2 + width).max(1e-3)),
        },
        ConstraintKind::InteractionCap { interaction, kappa } => {
            (vec![0.0; dim], interaction.radial_inverse(*kappa).max(0.1))
        }
    }
}

fn gaussian_cloud(center: &[f64], scale: f64, shape: CloudShape, rng: &mut RandomSource) -> Result<EmpiricalMeasure> {
    let pos = (0..shape.n_particles * shape.dim)
        .map(|i| center[i % shape.dim] + scale * rng.standard_normal())
        .collect();
    EmpiricalMeasure::new(pos, shape.n_particles, shape.dim)
}

/// Standard normal cloud around `K`: projected onto `K` when `feasible`,
/// otherwise dilated about the frame centre until it leaves `K`.
pub fn straddling_cloud(
    k: &ConstraintSet,
    shape: CloudShape,
    feasible: bool,
    rng: &mut RandomSource,
) -> Result<EmpiricalMeasure> {
    let (center, scale) = frame(k, shape.dim);
    let cloud = gaussian_cloud(&center, scale, shape, rng)?;
    if feasible {
        return Ok(project(k, &cloud)?.projected);
    }
    let mut factor = 1.0;
    let mut out = cloud.clone();
    for _ in 0..60 {
        if !contains(k, &out) {
            break;
        }
        factor *= 1.5;
        let pos = cloud
            .positions()
            .iter()
            .enumerate()
            .map(|(i, v)| center[i % shape.dim] + factor * (v - center[i % shape.dim]))
            .collect();
        out = EmpiricalMeasure::new(pos, shape.n_particles, shape.dim)?;
    }
    Ok(out)
}

fn record_worst(worst: &mut Option<(f64, Instance)>, v: f64, inst: impl FnOnce() -> Instance) {
    if worst.as_ref().is_none_or(|(w, _)| v > *w) {
        *worst = Some((v, inst()));
    }
}

/// `(1/N) Σ (y_i − x_i)·((Q_i − y_i) − (P_i − x_i)) <= 0` on index-coupled pairs.
pub fn check_monotone_field(
    k: &ConstraintSet,
    shape: CloudShape,
    n_instances: usize,
    rng: &mut RandomSource,
) -> Result<PropertyReport> {
    k.validate(shape.dim)?;
    let mut worst = None;
    for i in 0..n_instances {
        let x = straddling_cloud(k, shape, i % 2 == 0, rng)?;
        let y = straddling_cloud(k, shape, (i / 2) % 2 == 0, rng)?;
        let inst = Instance::MonotoneField { constraint: k.clone(), x, y };
        let v = evaluate(&inst)?;
        record_worst(&mut worst, v, || inst);
    }
    Ok(PropertyReport::from_worst("monotone_field", default_tolerance(k), n_instances, worst)
        .with_note("clouds are index-coupled; other couplings of the same measures are not tested"))
}

/// `(1/N) Σ (y_i − x_i)·(P_i − x_i) >= 0` for feasible `y`.
pub fn check_variational_inequality(
    k: &ConstraintSet,
    shape: CloudShape,
    n_instances: usize,
    rng: &mut RandomSource,
) -> Result<PropertyReport> {
    k.validate(shape.dim)?;
    let mut worst = None;
    for i in 0..n_instances {
        let x = straddling_cloud(k, shape, i % 2 == 0, rng)?;
        let y = straddling_cloud(k, shape, true, rng)?;
        let inst = Instance::VariationalInequality { constraint: k.clone(), x, y };
        let v = evaluate(&inst)?;
        record_worst(&mut worst, v, || inst);
    }
    Ok(PropertyReport::from_worst("variational_inequality", default_tolerance(k), n_instances, worst))
}

/// Verdict for one sign convention of the distance-functional lower bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantVerdict {
    pub form: SubgradientForm,
    pub c1: PropertyReport,
    pub c2: PropertyReport,
    /// Largest `c` satisfied on every instance with a positive right-hand term.
    pub max_admissible_c: f64,
    /// Smallest `c` satisfied on every instance with a negative right-hand term.
    pub min_required_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubdifferentialReport {
    pub instances_tested: usize,
    /// Statement form with `c = 1`.
    pub holds_c1: bool,
    /// Statement form with `c = 2`.
    pub holds_c2: bool,
    pub statement: ConstantVerdict,
    pub gradient: ConstantVerdict,
}

impl SubdifferentialReport {
    /// `(form, c)` combinations that survived every instance.
    pub fn surviving(&self) -> Vec<(SubgradientForm, f64)> {
        let mut out = Vec::new();
        for v in [&self.statement, &self.gradient] {
            if v.c1.passed {
                out.push((v.form, 1.0));
            }
            if v.c2.passed {
                out.push((v.form, 2.0));
            }
        }
        out
    }
}

/// Evaluates `F_K(ν) − F_K(μ) >= c · r` for `c ∈ {1, 2}` under both sign
/// conventions of `r`. A quarter of the instances put `y` on the segment from
/// `x` towards its projection, where the constants separate.
pub fn check_subdifferential_constant(
    k: &ConstraintSet,
    shape: CloudShape,
    n_instances: usize,
    rng: &mut RandomSource,
) -> Result<SubdifferentialReport> {
    k.validate(shape.dim)?;
    let tol = default_tolerance(k);
    let forms = [SubgradientForm::Statement, SubgradientForm::Gradient];
    let mut worst: [[Option<(f64, Instance)>; 2]; 2] = Default::default();
    let mut max_admissible = [f64::INFINITY; 2];
    let mut min_required = [f64::NEG_INFINITY; 2];
    for i in 0..n_instances {
        let x = straddling_cloud(k, shape, i % 2 == 0 && i % 4 != 3, rng)?;
        let y = if i % 4 == 3 {
            let p = project(k, &x)?.projected;
            let t = rng.uniform();
            let pos = x
                .positions()
                .iter()
                .zip(p.positions())
                .map(|(a, b)| a + t * (b - a))
                .collect();
            EmpiricalMeasure::new(pos, shape.n_particles, shape.dim)?
        } else {
            straddling_cloud(k, shape, (i / 2) % 2 == 0, rng)?
        };
        let (lhs, r) = subdifferential_terms(k, &x, &y)?;
        for (fi, &form) in forms.iter().enumerate() {
            let rf = if form == SubgradientForm::Statement { r } else { -r };
            if rf > 0.0 {
                max_admissible[fi] = max_admissible[fi].min(lhs / rf);
            } else if rf < 0.0 {
                min_required[fi] = min_required[fi].max(lhs / rf);
            }
            for (ci, c) in [1.0, 2.0].into_iter().enumerate() {
                let v = subdifferential_violation(lhs, r, form, c);
                record_worst(&mut worst[fi][ci], v, || Instance::Subdifferential {
                    constraint: k.clone(),
                    x: x.clone(),
                    y: y.clone(),
                    form,
                    c,
                });
            }
        }
    }
    let mut verdicts = Vec::new();
    for (fi, (&form, w)) in forms.iter().zip(worst).enumerate() {
        let [w1, w2] = w;
        let tag = if form == SubgradientForm::Statement { "statement" } else { "gradient" };
        verdicts.push(ConstantVerdict {
            form,
            c1: PropertyReport::from_worst(&format!("subdifferential/{tag}/c=1"), tol, n_instances, w1),
            c2: PropertyReport::from_worst(&format!("subdifferential/{tag}/c=2"), tol, n_instances, w2),
            max_admissible_c: max_admissible[fi],
            min_required_c: min_required[fi],
        });
    }
    let gradient = verdicts.pop().expect("two forms");
    let statement = verdicts.pop().expect("two forms");
    Ok(SubdifferentialReport {
        instances_tested: n_instances,
        holds_c1: statement.c1.passed,
        holds_c2: statement.c2.passed,
        statement,
        gradient,
    })
}

fn unit_cloud(shape: CloudShape, rng: &mut RandomSource) -> Result<EmpiricalMeasure> {
    gaussian_cloud(&vec![0.0; shape.dim], 1.0, shape, rng)
}

/// `mean|(1−α)Y₀ + αY₁ − X|²` against its expansion, `α ∈ {0, 1/4, 1/2, 1}`.
pub fn check_hilbertian_identity(shape: CloudShape, n_instances: usize, rng: &mut RandomSource) -> Result<PropertyReport> {
    let alphas = [0.0, 0.25, 0.5, 1.0];
    let mut worst = None;
    for i in 0..n_instances {
        let inst = Instance::HilbertianIdentity {
            x: unit_cloud(shape, rng)?,
            y0: unit_cloud(shape, rng)?,
            y1: unit_cloud(shape, rng)?,
            alpha: alphas[i % alphas.len()],
        };
        let v = evaluate(&inst)?;
        record_worst(&mut worst, v, || inst);
    }
    Ok(PropertyReport::from_worst("hilbertian_identity", IDENTITY_TOLERANCE, n_instances, worst))
}

/// Convexity of `W₂²(·, μ)` along the generalized geodesic `((1−α)T₀ + αT₁)#μ`.
pub fn check_generalized_geodesic(shape: CloudShape, n_instances: usize, rng: &mut RandomSource) -> Result<PropertyReport> {
    let mut worst = None;
    for _ in 0..n_instances {
        let inst = Instance::GeneralizedGeodesic {
            mu: unit_cloud(shape, rng)?,
            nu0: unit_cloud(shape, rng)?,
            nu1: unit_cloud(shape, rng)?,
            alpha: rng.uniform(),
        };
        let v = evaluate(&inst)?;
        record_worst(&mut worst, v, || inst);
    }
    Ok(PropertyReport::from_worst("generalized_geodesic_convexity", CONVEXITY_TOLERANCE, n_instances, worst))
}

/// Mixture surrogate `W₂²(μ, mix) <= (1−α)W₂²(μ, ν₀) + αW₂²(μ, ν₁)`; needs `4 | N`.
pub fn check_mixture_convexity(shape: CloudShape, n_instances: usize, rng: &mut RandomSource) -> Result<PropertyReport> {
    if !shape.n_particles.is_multiple_of(4) {
        return Err(Error::contract("mixture check needs N divisible by 4"));
    }
    let alphas = [0.25, 0.5, 0.75];
    let mut worst = None;
    for i in 0..n_instances {
        let inst = Instance::MixtureConvexity {
            mu: unit_cloud(shape, rng)?,
            nu0: unit_cloud(shape, rng)?,
            nu1: unit_cloud(shape, rng)?,
            alpha: alphas[i % alphas.len()],
        };
        let v = evaluate(&inst)?;
        record_worst(&mut worst, v, || inst);
    }
    Ok(PropertyReport::from_worst("mixture_convexity", CONVEXITY_TOLERANCE, n_instances, worst)
        .with_note("mixture built by subsampling the two transport images"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSignatureReport {
    /// `Σ_steps (1/N) Σ_i (y_i − x_i)·ΔL_i` at the smallest `ε`.
    pub pairing: f64,
    /// `pairing <= tol`.
    pub pairing_report: PropertyReport,
    /// The same sum with `(x_i − y_i)`, i.e. `−pairing <= tol`.
    pub mirrored_report: PropertyReport,
    /// Final `l_variation` at the smallest over the largest `ε`, `<= 3`.
    pub variation_ratio: f64,
    pub variation_report: PropertyReport,
}

impl LimitSignatureReport {
    pub fn passed(&self) -> bool {
        self.pairing_report.passed && self.variation_report.passed
    }
}

/// Pairs the penalization increments of the smallest-`ε` run with a feasible
/// comparison trajectory. `records` are ordered by decreasing `ε` and must be
/// recorded at every step; `comparison` has one cloud per recorded time, or a
/// single cloud held constant.
pub fn check_limit_signature(
    records: &[TrajectoryRecord],
    comparison: &[EmpiricalMeasure],
    k: &ConstraintSet,
) -> Result<LimitSignatureReport> {
    let (first, last) = match (records.first(), records.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::contract("limit signature needs at least one record")),
    };
    if comparison.is_empty() || (comparison.len() != 1 && comparison.len() != last.states.len()) {
        return Err(Error::contract("comparison trajectory must have 1 cloud or one per recorded time"));
    }
    for y in comparison {
        if !contains(k, y) {
            return Err(Error::contract("comparison trajectory leaves K"));
        }
    }
    let mut pairing = 0.0;
    for (idx, (x, dl)) in last.states.iter().zip(&last.penalization_increments).enumerate() {
        let y = if comparison.len() == 1 { &comparison[0] } else { &comparison[idx] };
        x.check_same_shape(y)?;
        pairing += dot_mean(&diff(y.positions(), x.positions()), dl, x.n_particles());
    }
    let v_first = first.summary.final_l_variation;
    let v_last = last.summary.final_l_variation;
    let ratio = if v_first > 0.0 {
        v_last / v_first
    } else if v_last == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    let report = |name: &str, violation: f64, tol: f64| PropertyReport {
        name: name.to_string(),
        instances_tested: records.len(),
        max_violation: violation,
        tolerance: tol,
        passed: violation <= tol,
        worst_case_dump: None,
        note: None,
    };
    Ok(LimitSignatureReport {
        pairing,
        pairing_report: report("limit_pairing", pairing.max(0.0), PAIRING_TOLERANCE),
        mirrored_report: report("limit_pairing_mirrored", (-pairing).max(0.0), PAIRING_TOLERANCE),
        variation_ratio: ratio,
        variation_report: report("l_variation_ratio", ratio, VARIATION_RATIO_BOUND),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::InteractionSpec;

    fn ball() -> ConstraintSet {
        ConstraintSet::support(ConvexRegion::Ball { center: vec![0.0, 0.0], radius: 1.0 })
    }

    const SHAPE: CloudShape = CloudShape { n_particles: 8, dim: 2 };

    #[test]
    fn identical_clouds_give_zero() {
        let mut rng = RandomSource::new(1);
        let x = straddling_cloud(&ball(), SHAPE, false, &mut rng).unwrap();
        let inst = Instance::MonotoneField { constraint: ball(), x: x.clone(), y: x.clone() };
        assert_eq!(evaluate(&inst).unwrap(), 0.0);
        for form in [SubgradientForm::Statement, SubgradientForm::Gradient] {
            let inst = Instance::Subdifferential { constraint: ball(), x: x.clone(), y: x.clone(), form, c: 2.0 };
            assert_eq!(evaluate(&inst).unwrap(), 0.0);
        }
    }

    #[test]
    fn variational_inequality_at_projection_is_distance() {
        let mut rng = RandomSource::new(2);
        let x = straddling_cloud(&ball(), SHAPE, false, &mut rng).unwrap();
        let p = project(&ball(), &x).unwrap();
        let v = dot_mean(
            &diff(p.projected.positions(), x.positions()),
            &p.displacement(&x),
            SHAPE.n_particles,
        );
        assert!((v - p.distance_sq).abs() < 1e-12);
        let inside = straddling_cloud(&ball(), SHAPE, true, &mut rng).unwrap();
        let inst = Instance::VariationalInequality { constraint: ball(), x: inside.clone(), y: inside };
        assert_eq!(evaluate(&inst).unwrap(), 0.0);
    }

    #[test]
    fn straddling_clouds_land_on_the_requested_side() {
        let families = [
            ball(),
            ConstraintSet::potential(PotentialSpec::Quadratic, 0.5),
            ConstraintSet::interaction(InteractionSpec::Huber { delta: 0.5 }, 0.3),
        ];
        let mut rng = RandomSource::new(3);
        for k in &families {
            for feasible in [true, false] {
                let c = straddling_cloud(k, SHAPE, feasible, &mut rng).unwrap();
                assert_eq!(contains(k, &c), feasible, "{k:?}");
            }
        }
    }

    #[test]
    fn monotone_and_variational_on_ball() {
        let mut rng = RandomSource::new(4);
        let m = check_monotone_field(&ball(), SHAPE, 200, &mut rng).unwrap();
        let v = check_variational_inequality(&ball(), SHAPE, 200, &mut rng).unwrap();
        assert!(m.passed && v.passed, "{m:?} {v:?}");
    }

    #[test]
    fn subdifferential_resolution_on_ball() {
        let rep = check_subdifferential_constant(&ball(), SHAPE, 200, &mut RandomSource::new(5)).unwrap();
        assert!(!rep.holds_c1 && !rep.holds_c2);
        assert!(rep.gradient.c2.passed && !rep.gradient.c1.passed);
        assert_eq!(rep.surviving(), vec![(SubgradientForm::Gradient, 2.0)]);
    }

    #[test]
    fn feasible_comparison_reduces_to_minus_f() {
        // ν ∈ K: the left side is −F_K(μ)
        let mut rng = RandomSource::new(6);
        let x = straddling_cloud(&ball(), SHAPE, false, &mut rng).unwrap();
        let y = straddling_cloud(&ball(), SHAPE, true, &mut rng).unwrap();
        let (lhs, _) = subdifferential_terms(&ball(), &x, &y).unwrap();
        assert_eq!(lhs, -project(&ball(), &x).unwrap().distance_sq);
    }

    #[test]
    fn dumps_reevaluate_exactly() {
        let mut rng = RandomSource::new(7);
        let rep = check_generalized_geodesic(CloudShape { n_particles: 6, dim: 2 }, 20, &mut rng).unwrap();
        let dump = rep.worst_case_dump.as_deref().unwrap();
        assert!((reevaluate(dump).unwrap() - rep.max_violation).abs() <= 1e-12);
        let rep = check_subdifferential_constant(&ball(), SHAPE, 40, &mut rng).unwrap();
        let dump = rep.statement.c1.worst_case_dump.as_deref().unwrap();
        assert!((reevaluate(dump).unwrap() - rep.statement.c1.max_violation).abs() <= 1e-12);
    }

    #[test]
    fn identities_and_convexity() {
        let mut rng = RandomSource::new(8);
        let shape = CloudShape { n_particles: 8, dim: 2 };
        assert!(check_hilbertian_identity(shape, 100, &mut rng).unwrap().passed);
        assert!(check_generalized_geodesic(shape, 50, &mut rng).unwrap().passed);
        assert!(check_mixture_convexity(shape, 50, &mut rng).unwrap().passed);
        assert!(check_mixture_convexity(CloudShape { n_particles: 6, dim: 2 }, 1, &mut rng).is_err());
    }

    #[test]
    fn mixture_takes_the_cheaper_images() {
        let mu = EmpiricalMeasure::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let nu0 = EmpiricalMeasure::from_rows(&[[0.0], [1.0], [2.0], [13.0]]).unwrap();
        let nu1 = EmpiricalMeasure::from_rows(&[[-10.0], [-9.0], [-8.0], [3.0]]).unwrap();
        let mix = mixture_by_subsampling(&mu, &nu0, &nu1, 0.25).unwrap();
        assert_eq!(mix.positions(), &[0.0, 1.0, 2.0, 3.0]);
    }
}
