//! Safe exploration around the baseline action: mixing weight, perturbation
//! draws and exploration actions.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, invalid, Result};
use crate::geometry::{AmbientSet, TruePolytope};
use crate::linalg::{dist, norm};
use crate::rng::{stream, RunRng, Stream};

/// Largest admissible mixing weight.
pub const GAMMA_CAP: f64 = 1.0 - 1e-9;

/// Known safe action with its constraint image and safety gap.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSpec {
    x_s: Vec<f64>,
    b_s: Vec<f64>,
    delta_s: f64,
}

impl BaselineSpec {
    /// Builds the baseline from its image `b_s` and the offsets `b`.
    pub fn new(x_s: Vec<f64>, b_s: Vec<f64>, b: &[f64]) -> Result<Self> {
        check_dim("baseline image", b_s.len(), b.len())?;
        if b_s.is_empty() {
            return Err(invalid("baseline needs at least one constraint"));
        }
        let delta_s = b
            .iter()
            .zip(&b_s)
            .map(|(bi, si)| bi - si)
            .fold(f64::INFINITY, f64::min);
        if !(delta_s > 0.0) {
            return Err(invalid(format!(
                "baseline action is not strictly safe (gap {delta_s})"
            )));
        }
        Ok(Self { x_s, b_s, delta_s })
    }

    /// Environment-side construction computing `b_s = A x_s`.
    pub fn from_polytope(p: &TruePolytope, x_s: Vec<f64>) -> Result<Self> {
        check_dim("baseline action", x_s.len(), p.dim())?;
        let b_s = p.matrix().mul_vec(&x_s);
        let spec = Self::new(x_s, b_s, p.offsets())?;
        let image = p.matrix().mul_vec(&spec.x_s);
        if dist(&image, &spec.b_s) > 1e-10 {
            return Err(invalid("baseline image does not match A x_s"));
        }
        Ok(spec)
    }

    pub fn action(&self) -> &[f64] {
        &self.x_s
    }

    pub fn image(&self) -> &[f64] {
        &self.b_s
    }

    pub fn safety_gap(&self) -> f64 {
        self.delta_s
    }
}

/// `min(Δ^s / L_A, 1 − 1e-9)`.
pub fn compute_gamma(delta_s: f64, row_norm_bound: f64) -> Result<f64> {
    if !(delta_s > 0.0) || !(row_norm_bound > 0.0) {
        return Err(invalid(format!(
            "gap and row norm bound must be positive, got {delta_s} and {row_norm_bound}"
        )));
    }
    Ok((delta_s / row_norm_bound).min(GAMMA_CAP))
}

/// Mixing weight guaranteeing that every exploration action stays safe and
/// inside the box.
///
/// Besides [`compute_gamma`], each row needs
/// `γ (L_A ζ − b^s_i) ≤ b_i − b^s_i`, which the gap rule only implies when
/// `b^s_i ≥ 0`, and each box face needs the analogous coordinate bound.
pub fn safe_gamma(
    baseline: &BaselineSpec,
    b: &[f64],
    row_norm_bound: f64,
    zeta_scale: f64,
    ambient: &AmbientSet,
) -> Result<f64> {
    check_dim("constraint offsets", b.len(), baseline.b_s.len())?;
    check_dim("ambient set", ambient.dim(), baseline.x_s.len())?;
    let mut gamma = compute_gamma(baseline.delta_s, row_norm_bound)?;
    for (bi, si) in b.iter().zip(&baseline.b_s) {
        let denom = row_norm_bound * zeta_scale - si;
        if denom > 0.0 {
            gamma = gamma.min((bi - si) / denom);
        }
    }
    for ((x, l), u) in baseline
        .x_s
        .iter()
        .zip(ambient.lower())
        .zip(ambient.upper())
    {
        if !(l <= x && x <= u) {
            return Err(invalid("baseline action lies outside the ambient box"));
        }
        if zeta_scale - x > 0.0 {
            gamma = gamma.min((u - x) / (zeta_scale - x));
        }
        if zeta_scale + x > 0.0 {
            gamma = gamma.min((x - l) / (zeta_scale + x));
        }
    }
    Ok(gamma.max(0.0))
}

/// Parameters of the exploration phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplorationConfig {
    pub gamma: f64,
    /// Per-coordinate variance of the perturbation, `zeta_scale² / d`.
    pub sigma_zeta_sq: f64,
    /// Perturbation radius, `min(1, L)`.
    pub zeta_scale: f64,
    pub t0: u64,
    pub rng_seed: u64,
}

impl ExplorationConfig {
    pub fn new(gamma: f64, dim: usize, norm_bound: f64, t0: u64, rng_seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(invalid(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        if dim == 0 || t0 == 0 {
            return Err(invalid("dimension and exploration length must be positive"));
        }
        let zeta_scale = norm_bound.min(1.0);
        Ok(Self {
            gamma,
            sigma_zeta_sq: zeta_scale * zeta_scale / dim as f64,
            zeta_scale,
            t0,
            rng_seed,
        })
    }

    pub fn sigma_zeta(&self) -> f64 {
        libm::sqrt(self.sigma_zeta_sq)
    }
}

/// Uniform draw on the sphere of radius `zeta_scale`.
pub fn sample_zeta<R: Rng + ?Sized>(rng: &mut R, d: usize, zeta_scale: f64) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&g);
        if n > 0.0 {
            return g.into_iter().map(|v| zeta_scale * (v / n)).collect();
        }
    }
}

/// `(1 − γ) x^s + γ ζ`.
pub fn exploration_action(x_s: &[f64], gamma: f64, zeta: &[f64]) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(invalid(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    check_dim("perturbation", zeta.len(), x_s.len())?;
    Ok(x_s
        .iter()
        .zip(zeta)
        .map(|(x, z)| (1.0 - gamma) * x + gamma * z)
        .collect())
}

/// Stateful generator of the exploration actions of one run.
#[derive(Debug, Clone)]
pub struct Explorer {
    config: ExplorationConfig,
    x_s: Vec<f64>,
    rng: RunRng,
}

impl Explorer {
    pub fn new(config: ExplorationConfig, baseline: &BaselineSpec) -> Self {
        Self {
            config,
            x_s: baseline.x_s.clone(),
            rng: stream(config.rng_seed, Stream::Exploration),
        }
    }

    pub fn config(&self) -> &ExplorationConfig {
        &self.config
    }

    pub fn next_action(&mut self) -> Vec<f64> {
        let zeta = sample_zeta(&mut self.rng, self.x_s.len(), self.config.zeta_scale);
        exploration_action(&self.x_s, self.config.gamma, &zeta).expect("validated config")
    }
}
