//! Ridge estimation of the constraint matrix, the confidence radius, and the
//! conservative safe set built from the confidence ellipsoids.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::{AmbientSet, TruePolytope};
use crate::linalg::{dot, symmetric_eigenvalues, Cholesky, Matrix};

/// Exploration-phase actions and observations, stored row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExplorationLog {
    dim: usize,
    constraints: usize,
    actions: Vec<f64>,
    observations: Vec<f64>,
}

impl ExplorationLog {
    pub fn new(dim: usize, constraints: usize) -> Self {
        Self::with_capacity(dim, constraints, 0)
    }

    pub fn with_capacity(dim: usize, constraints: usize, samples: usize) -> Self {
        Self {
            dim,
            constraints,
            actions: Vec::with_capacity(dim * samples),
            observations: Vec::with_capacity(constraints * samples),
        }
    }

    pub fn push(&mut self, action: &[f64], observation: &[f64]) -> Result<()> {
        check_dim("action", action.len(), self.dim)?;
        check_dim("observation", observation.len(), self.constraints)?;
        self.actions.extend_from_slice(action);
        self.observations.extend_from_slice(observation);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.actions.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constraints(&self) -> usize {
        self.constraints
    }

    /// Zero-based sample access.
    pub fn action(&self, t: usize) -> &[f64] {
        &self.actions[t * self.dim..(t + 1) * self.dim]
    }

    pub fn observation(&self, t: usize) -> &[f64] {
        &self.observations[t * self.constraints..(t + 1) * self.constraints]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.actions
            .chunks_exact(self.dim.max(1))
            .zip(self.observations.chunks_exact(self.constraints.max(1)))
    }
}

/// Regularized least-squares estimate `Â` with its Gram matrix `V = λI + Σ x xᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsEstimate {
    a_hat: Matrix,
    gram: Matrix,
    lambda: f64,
    factor: Cholesky,
    samples: usize,
    jittered: bool,
}

impl RlsEstimate {
    /// Wraps a given estimate and Gram matrix (ablations and tests).
    pub fn from_parts(a_hat: Matrix, gram: Matrix, lambda: f64) -> Result<Self> {
        check_dim("gram matrix rows", gram.rows(), a_hat.cols())?;
        check_dim("gram matrix cols", gram.cols(), a_hat.cols())?;
        let (factor, jittered) = factor_with_jitter(&gram)?;
        Ok(Self {
            a_hat,
            gram,
            lambda,
            factor,
            samples: 0,
            jittered,
        })
    }

    pub fn a_hat(&self) -> &Matrix {
        &self.a_hat
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    pub fn gram_factor(&self) -> &Cholesky {
        &self.factor
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// True when the factorization needed the diagonal jitter.
    pub fn jittered(&self) -> bool {
        self.jittered
    }

    pub fn dim(&self) -> usize {
        self.a_hat.cols()
    }

    pub fn constraints(&self) -> usize {
        self.a_hat.rows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        symmetric_eigenvalues(&self.gram)[0]
    }
}

fn factor_with_jitter(gram: &Matrix) -> Result<(Cholesky, bool)> {
    if let Some(f) = Cholesky::factor(gram) {
        return Ok((f, false));
    }
    let n = gram.rows();
    let jitter = 1e-12 * gram.trace() / n as f64;
    let mut bumped = gram.clone();
    for i in 0..n {
        bumped[(i, i)] += jitter;
    }
    log::warn!("gram matrix factorization failed; retrying with diagonal jitter {jitter:e}");
    Cholesky::factor(&bumped)
        .map(|f| (f, true))
        .ok_or_else(|| Error::Data("gram matrix is not positive definite".into()))
}

/// Fits `Â = (λI + XᵀX)⁻¹ XᵀY` row by row through one factorization of `V`.
pub fn fit_rls(log: &ExplorationLog, lambda: f64) -> Result<RlsEstimate> {
    if log.is_empty() {
        return Err(invalid("exploration log is empty"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!(
            "ridge weight must be positive, got {lambda}"
        )));
    }
    let d = log.dim();
    let m = log.constraints();
    let mut gram = Matrix::zeros(d, d);
    for i in 0..d {
        gram[(i, i)] = lambda;
    }
    // cross[i] = Σ_t y_t[i] x_t
    let mut cross = Matrix::zeros(m, d);
    for (t, (x, y)) in log.iter().enumerate() {
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite sample at step {}", t + 1)));
        }
        gram.add_outer(1.0, x, x);
        cross.add_outer(1.0, y, x);
    }
    let (factor, jittered) = factor_with_jitter(&gram)?;
    let mut a_hat = Matrix::zeros(m, d);
    for i in 0..m {
        let row = a_hat.row_mut(i);
        row.copy_from_slice(cross.row(i));
        factor.solve_in_place(row);
    }
    Ok(RlsEstimate {
        a_hat,
        gram,
        lambda,
        factor,
        samples: log.len(),
        jittered,
    })
}

/// Inputs of the confidence radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceParams {
    /// Failure probability in (0, 1).
    pub delta: f64,
    /// Sub-Gaussian noise scale.
    pub noise: f64,
    /// Bound on action norms.
    pub norm_bound: f64,
    /// Bound on constraint row norms.
    pub row_norm_bound: f64,
    pub lambda: f64,
    /// Number of exploration samples.
    pub samples: u64,
    pub constraints: usize,
    pub dim: usize,
}

/// Confidence parameters together with the resulting radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceSpec {
    pub params: ConfidenceParams,
    pub beta: f64,
}

impl ConfidenceSpec {
    pub fn new(params: ConfidenceParams) -> Result<Self> {
        let beta = confidence_radius(&params)?;
        Ok(Self { params, beta })
    }
}

/// `β = R √(d ln((1 + T0 L²/λ) / (δ/m))) + √λ L_A`.
pub fn confidence_radius(p: &ConfidenceParams) -> Result<f64> {
    if !(p.delta > 0.0 && p.delta < 1.0) {
        return Err(invalid(format!(
            "delta must lie in (0, 1), got {}",
            p.delta
        )));
    }
    if !(p.noise >= 0.0 && p.row_norm_bound >= 0.0) {
        return Err(invalid(
            "noise scale and row norm bound must be nonnegative",
        ));
    }
    if !(p.norm_bound > 0.0 && p.lambda > 0.0) {
        return Err(invalid("norm bound and ridge weight must be positive"));
    }
    if p.samples == 0 || p.constraints == 0 || p.dim == 0 {
        return Err(invalid(
            "samples, constraint count and dimension must be positive",
        ));
    }
    let growth = 1.0 + p.samples as f64 * p.norm_bound * p.norm_bound / p.lambda;
    let log_term = libm::log(growth / (p.delta / p.constraints as f64));
    Ok(p.noise * libm::sqrt(p.dim as f64 * log_term) + libm::sqrt(p.lambda) * p.row_norm_bound)
}

/// `{x ∈ X : â_iᵀx + β‖x‖_{V⁻¹} ≤ b_i for all i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservativeSafeSet {
    estimate: RlsEstimate,
    beta: f64,
    b: Vec<f64>,
    ambient: AmbientSet,
    inv_gram: Matrix,
}

pub fn build_conservative_set(
    estimate: RlsEstimate,
    beta: f64,
    b: &[f64],
    ambient: AmbientSet,
) -> Result<ConservativeSafeSet> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(invalid(format!(
            "confidence radius must be nonnegative, got {beta}"
        )));
    }
    check_dim("constraint offsets", b.len(), estimate.constraints())?;
    check_dim("ambient set", ambient.dim(), estimate.dim())?;
    let inv_gram = estimate.factor.inverse();
    Ok(ConservativeSafeSet {
        estimate,
        beta,
        b: b.to_vec(),
        ambient,
        inv_gram,
    })
}

impl ConservativeSafeSet {
    /// The true polytope as a conservative set with exact rows and zero radius.
    pub fn from_true_polytope(polytope: &TruePolytope, ambient: AmbientSet) -> Result<Self> {
        let d = polytope.dim();
        let estimate =
            RlsEstimate::from_parts(polytope.matrix().clone(), Matrix::identity(d), 1.0)?;
        build_conservative_set(estimate, 0.0, polytope.offsets(), ambient)
    }

    pub fn estimate(&self) -> &RlsEstimate {
        &self.estimate
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn offsets(&self) -> &[f64] {
        &self.b
    }

    pub fn ambient(&self) -> &AmbientSet {
        &self.ambient
    }

    pub fn dim(&self) -> usize {
        self.estimate.dim()
    }

    pub fn constraints(&self) -> usize {
        self.b.len()
    }

    pub(crate) fn inv_gram(&self) -> &Matrix {
        &self.inv_gram
    }

    /// Strict-feasibility margin `1e-9 · max |b_i|` the projection enforces.
    pub fn feasibility_margin(&self) -> f64 {
        feasibility_margin(&self.b)
    }

    /// `g_i(x) = â_iᵀx + β‖x‖_{V⁻¹} − b_i`.
    pub fn conservative_constraint_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("point", x.len(), self.dim())?;
        let mut out = vec![0.0; self.constraints()];
        self.values_into(x, &mut out);
        Ok(out)
    }

    pub(crate) fn values_into(&self, x: &[f64], out: &mut [f64]) {
        let ell = if self.beta > 0.0 {
            self.beta * self.estimate.factor.inverse_norm(x)
        } else {
            0.0
        };
        let a = &self.estimate.a_hat;
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(a.row(i), x) + ell - self.b[i];
        }
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        let g = self.conservative_constraint_values(x)?;
        Ok(self.ambient.contains_unchecked(x) && g.iter().all(|v| *v <= 0.0))
    }
}

pub(crate) fn feasibility_margin(b: &[f64]) -> f64 {
    1e-9 * b.iter().fold(0.0f64, |s, v| s.max(v.abs()))
}
