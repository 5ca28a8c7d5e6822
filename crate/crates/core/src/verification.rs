//! Independent brute-force and Monte-Carlo checks of the safety and
//! estimation guarantees.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{check_dim, invalid, Error, Result};
use crate::estimation::{confidence_radius, ConfidenceParams, ConservativeSafeSet, RlsEstimate};
use crate::geometry::{AmbientSet, ShrunkPolytope, TruePolytope};
use crate::linalg::{symmetric_eigenvalues, Matrix};

/// Sample counts of the nesting check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NestingReport {
    pub samples: u64,
    pub in_shrunk: u64,
    pub in_conservative: u64,
    pub in_true: u64,
    pub violations_shrunk_not_conservative: u64,
    pub violations_conservative_not_true: u64,
    /// Whether every true row lay in its confidence ellipsoid, when known.
    pub coverage: Option<bool>,
}

impl NestingReport {
    pub fn is_clean(&self) -> bool {
        self.violations_shrunk_not_conservative == 0 && self.violations_conservative_not_true == 0
    }
}

/// Classifies uniform box samples against the shrunk, conservative and true sets.
pub fn check_nesting<R: Rng + ?Sized>(
    truth: &TruePolytope,
    conservative: &ConservativeSafeSet,
    shrunk: &ShrunkPolytope,
    n_samples: u64,
    rng: &mut R,
) -> Result<NestingReport> {
    let ambient = conservative.ambient();
    check_dim("true polytope", truth.dim(), ambient.dim())?;
    check_dim("shrunk polytope", shrunk.base().dim(), ambient.dim())?;
    let d = ambient.dim();
    let mut x = alloc::vec![0.0; d];
    let mut g = alloc::vec![0.0; conservative.constraints()];
    let mut report = NestingReport {
        samples: n_samples,
        ..Default::default()
    };
    for _ in 0..n_samples {
        for ((xi, l), u) in x.iter_mut().zip(ambient.lower()).zip(ambient.upper()) {
            *xi = l + (u - l) * rng.random::<f64>();
        }
        let in_true = truth.satisfied_unchecked(&x);
        conservative.values_into(&x, &mut g);
        let in_cons = g.iter().all(|v| *v <= 0.0);
        let in_shrunk = shrunk.shrunk_contains(&x)?;
        report.in_true += in_true as u64;
        report.in_conservative += in_cons as u64;
        report.in_shrunk += in_shrunk as u64;
        report.violations_shrunk_not_conservative += (in_shrunk && !in_cons) as u64;
        report.violations_conservative_not_true += (in_cons && !in_true) as u64;
    }
    Ok(report)
}

/// True when `‖â_i − a_i‖_V ≤ β` for every row.
pub fn coverage_event(estimate: &RlsEstimate, truth: &TruePolytope, beta: f64) -> Result<bool> {
    check_dim(
        "constraint count",
        estimate.constraints(),
        truth.num_constraints(),
    )?;
    check_dim("dimension", estimate.dim(), truth.dim())?;
    let factor = estimate.gram_factor();
    let mut diff = alloc::vec![0.0; truth.dim()];
    for i in 0..truth.num_constraints() {
        for ((d, e), a) in diff
            .iter_mut()
            .zip(estimate.a_hat().row(i))
            .zip(truth.matrix().row(i))
        {
            *d = e - a;
        }
        if factor.weighted_norm(&diff) > beta {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Outcome of the minimum-eigenvalue check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigminCheck {
    pub lambda_min: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Compares `λ_min(V)` with `λ + ½ γ² σ² T0`.
pub fn check_eigmin(
    gram: &Matrix,
    lambda: f64,
    gamma: f64,
    sigma_zeta_sq: f64,
    t0: u64,
) -> Result<EigminCheck> {
    if gram.rows() != gram.cols() || !gram.is_symmetric(1e-12) {
        return Err(invalid("gram matrix must be square and symmetric"));
    }
    let lambda_min = symmetric_eigenvalues(gram)[0];
    let bound = lambda + 0.5 * gamma * gamma * sigma_zeta_sq * t0 as f64;
    Ok(EigminCheck {
        lambda_min,
        bound,
        holds: lambda_min >= bound,
    })
}

/// Problem constants entering the exploration-length conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    pub delta: f64,
    pub noise: f64,
    pub norm_bound: f64,
    pub row_norm_bound: f64,
    pub lambda: f64,
    pub horizon: u64,
    pub dim: usize,
    pub constraints: usize,
    pub gamma: f64,
    pub sigma_zeta_sq: f64,
    pub safety_gap: f64,
}

/// Minimum exploration lengths and the horizon condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct T0Conditions {
    /// Length needed for the eigenvalue lower bound, `⌈8L²/(γ²σ²) ln(d/δ)⌉`.
    pub t0_min_chernoff: u64,
    /// Length needed for the shrunk polytope to contain the baseline,
    /// `⌈8β_T²L²/(γ²σ²Δ²)⌉`.
    pub t0_min_theorem: u64,
    /// Confidence radius evaluated at the full horizon.
    pub beta_horizon: f64,
    /// Smallest horizon satisfying `T ≥ (√8 β_T L/(γσΔ))³`.
    pub horizon_min: f64,
}

fn ceil_count(v: f64) -> u64 {
    if v.is_nan() {
        u64::MAX
    } else if v <= 0.0 {
        0
    } else if v >= u64::MAX as f64 {
        u64::MAX
    } else {
        libm::ceil(v) as u64
    }
}

pub fn check_t0_conditions(p: &TheoryParams) -> Result<T0Conditions> {
    if !(p.gamma > 0.0 && p.sigma_zeta_sq > 0.0 && p.safety_gap > 0.0) {
        return Err(invalid(
            "gamma, perturbation variance and safety gap must be positive",
        ));
    }
    let beta_horizon = confidence_radius(&ConfidenceParams {
        delta: p.delta,
        noise: p.noise,
        norm_bound: p.norm_bound,
        row_norm_bound: p.row_norm_bound,
        lambda: p.lambda,
        samples: p.horizon,
        constraints: p.constraints,
        dim: p.dim,
    })?;
    let l2 = p.norm_bound * p.norm_bound;
    let gs2 = p.gamma * p.gamma * p.sigma_zeta_sq;
    let chernoff = 8.0 * l2 / gs2 * libm::log(p.dim as f64 / p.delta);
    let theorem = 8.0 * beta_horizon * beta_horizon * l2 / (gs2 * p.safety_gap * p.safety_gap);
    let root = libm::sqrt(8.0) * beta_horizon * p.norm_bound
        / (p.gamma * libm::sqrt(p.sigma_zeta_sq) * p.safety_gap);
    Ok(T0Conditions {
        t0_min_chernoff: ceil_count(chernoff),
        t0_min_theorem: ceil_count(theorem),
        beta_horizon,
        horizon_min: root * root * root,
    })
}

/// Output of [`grid_project_oracle`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleProjection {
    pub point: Vec<f64>,
    /// Bound on the distance between `point` and the boundary point at the
    /// refined angle, from the final bracket width and the bisection tolerance.
    pub resolution: f64,
}

/// Membership-only estimate of the Euclidean projection of `z` onto a convex
/// planar set contained in the box `[lower, upper]`.
///
/// A plain argmin over a 2D grid only localizes the foot point to about
/// `√(r h)` at distance `r` and spacing `h`, because the distance is flat to
/// second order along a face. Instead the boundary is parametrized by angle
/// around an interior point (the centroid of feasible points on an
/// `interior_n`-per-side grid), each boundary point is located by bisection,
/// the distance to `z` is scanned over `angles` directions, and the best
/// bracket is refined by golden-section search. Near the foot point the
/// distance along the boundary is unimodal, so the refinement converges to the
/// true projection to roughly the square root of machine precision.
pub fn grid_project_oracle(
    member: impl Fn(&[f64]) -> bool,
    z: &[f64],
    lower: [f64; 2],
    upper: [f64; 2],
    interior_n: usize,
    angles: usize,
) -> Result<OracleProjection> {
    check_dim("point", z.len(), 2)?;
    if interior_n == 0 || angles < 3 || !(lower[0] < upper[0] && lower[1] < upper[1]) {
        return Err(invalid("grid needs positive resolution and a nonempty box"));
    }
    if member(z) {
        return Ok(OracleProjection {
            point: z.to_vec(),
            resolution: 0.0,
        });
    }
    let h = [
        (upper[0] - lower[0]) / interior_n as f64,
        (upper[1] - lower[1]) / interior_n as f64,
    ];
    let (mut sx, mut sy, mut k) = (0.0, 0.0, 0.0);
    for i in 0..=interior_n {
        for j in 0..=interior_n {
            let p = [lower[0] + i as f64 * h[0], lower[1] + j as f64 * h[1]];
            if member(&p) {
                sx += p[0];
                sy += p[1];
                k += 1.0;
            }
        }
    }
    if k == 0.0 {
        return Err(Error::Infeasible {
            best_slack: f64::NAN,
        });
    }
    let c = [sx / k, sy / k];
    // Any ray from `c` leaves the box, and hence the set, within this length.
    let reach = 1.0
        + [lower[0], upper[0]]
            .iter()
            .flat_map(|&x| [lower[1], upper[1]].map(|y| libm::hypot(x - c[0], y - c[1])))
            .fold(0.0, f64::max);
    let tol = reach * 4.0 * f64::EPSILON;

    let boundary = |phi: f64| -> [f64; 2] {
        let u = [libm::cos(phi), libm::sin(phi)];
        let (mut lo, mut hi) = (0.0, reach);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if member(&[c[0] + mid * u[0], c[1] + mid * u[1]]) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        [c[0] + lo * u[0], c[1] + lo * u[1]]
    };
    let gap = |phi: f64| {
        let q = boundary(phi);
        libm::hypot(q[0] - z[0], q[1] - z[1])
    };

    let step = core::f64::consts::TAU / angles as f64;
    let best =
        (0..angles)
            .map(|i| (i, gap(i as f64 * step)))
            .fold(
                (0, f64::INFINITY),
                |acc, (i, g)| if g < acc.1 { (i, g) } else { acc },
            );
    let (mut a, mut b) = ((best.0 as f64 - 1.0) * step, (best.0 as f64 + 1.0) * step);
    let ratio = 0.5 * (libm::sqrt(5.0) - 1.0);
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let (mut g1, mut g2) = (gap(x1), gap(x2));
    while b - a > f64::EPSILON * (1.0 + libm::fabs(a)) * 4.0 {
        if g1 <= g2 {
            b = x2;
            x2 = x1;
            g2 = g1;
            x1 = b - ratio * (b - a);
            g1 = gap(x1);
        } else {
            a = x1;
            x1 = x2;
            g1 = g2;
            x2 = a + ratio * (b - a);
            g2 = gap(x2);
        }
    }
    let q = boundary(0.5 * (a + b));
    Ok(OracleProjection {
        point: alloc::vec![q[0], q[1]],
        resolution: (b - a) * reach + tol,
    })
}

/// `{x ∈ X : Âx ≤ b}`, the estimate taken at face value.
pub fn naive_polytope(
    estimate: &RlsEstimate,
    b: &[f64],
    ambient: &AmbientSet,
) -> Result<ConservativeSafeSet> {
    crate::estimation::build_conservative_set(estimate.clone(), 0.0, b, ambient.clone())
        .map_err(|e| Error::InvalidInput(format!("naive polytope: {e}")))
}
