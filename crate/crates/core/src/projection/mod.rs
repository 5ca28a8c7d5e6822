//! Euclidean projection onto conservative safe sets and polytopes, and the
//! hindsight-optimum solver over the true safe set.

mod ipm;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, invalid, Error, Result};
use crate::estimation::ConservativeSafeSet;
use crate::geometry::{lex_cmp, AmbientSet, TruePolytope};
use crate::linalg::{dist, dot, Matrix};
use ipm::{ConstraintSystem, IpmSettings, NormTerm, SmoothObjective};

pub const DEFAULT_EPS_OPT: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 200;

/// Outcome of one projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub point: Vec<f64>,
    /// Certified bound on the suboptimality of `½‖x − z‖²`.
    pub objective_gap: f64,
    /// Largest constraint value at `point`; nonpositive means feasible.
    pub feasibility_slack: f64,
    pub iterations: usize,
}

struct DistanceObjective<'a> {
    target: &'a [f64],
}

impl SmoothObjective for DistanceObjective<'_> {
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for ((o, xi), zi) in out.iter_mut().zip(x).zip(self.target) {
            *o = xi - zi;
        }
    }

    fn add_hessian(&self, _x: &[f64], out: &mut Matrix) {
        for i in 0..out.rows() {
            out[(i, i)] += 1.0;
        }
    }
}

/// Minimizes the last coordinate.
struct SlackObjective;

impl SmoothObjective for SlackObjective {
    fn gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if let Some(last) = out.last_mut() {
            *last = 1.0;
        }
    }

    fn add_hessian(&self, _x: &[f64], _out: &mut Matrix) {}
}

/// Rows `[Â; I; −I]` with offsets `[b − margin; upper; −lower]`.
fn stacked_system<'a>(
    rows: &Matrix,
    offsets: &[f64],
    margin: f64,
    ambient: &AmbientSet,
    norm_term: Option<NormTerm<'a>>,
) -> ConstraintSystem<'a> {
    let d = rows.cols();
    let m = rows.rows();
    let mut flat = Vec::with_capacity((m + 2 * d) * d);
    flat.extend_from_slice(rows.as_slice());
    let mut rhs: Vec<f64> = offsets.iter().map(|b| b - margin).collect();
    for k in 0..d {
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        flat.extend_from_slice(&e);
        rhs.push(ambient.upper()[k]);
        e[k] = -1.0;
        flat.extend_from_slice(&e);
        rhs.push(-ambient.lower()[k]);
    }
    ConstraintSystem {
        dim: d,
        rows: flat,
        rhs,
        norm_term,
    }
}

fn box_diameter(ambient: &AmbientSet) -> f64 {
    dist(ambient.lower(), ambient.upper())
}

/// Finds the point minimizing the largest constraint value of `sys`.
///
/// Every row gets a `−s` column; a floor row keeps `s` bounded below.
fn deepest_point(sys: &ConstraintSystem, ambient: &AmbientSet, eps: f64) -> Result<Vec<f64>> {
    let d = sys.dim;
    let n = sys.len();
    let ext = d + 1;
    let mut rows = Vec::with_capacity((n + 1) * ext);
    for j in 0..n {
        rows.extend_from_slice(&sys.rows[j * d..(j + 1) * d]);
        rows.push(-1.0);
    }
    let half_width = ambient
        .lower()
        .iter()
        .zip(ambient.upper())
        .fold(f64::INFINITY, |a, (l, u)| a.min(0.5 * (u - l)));
    let mut floor_row = vec![0.0; ext];
    floor_row[d] = -1.0;
    rows.extend_from_slice(&floor_row);
    let mut rhs = sys.rhs.clone();
    rhs.push(half_width + 1.0);
    let ext_sys = ConstraintSystem {
        dim: ext,
        rows,
        rhs,
        norm_term: sys.norm_term.as_ref().map(|nt| NormTerm {
            beta: nt.beta,
            metric: nt.metric,
            rows: nt.rows,
        }),
    };

    let center = ambient.center();
    let mut h = vec![0.0; n];
    let mut mx = vec![0.0; d];
    sys.values(&center, &mut h, &mut mx);
    let worst = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut y0 = center;
    y0.push(worst.max(-half_width) + 1.0);
    let settings = IpmSettings {
        eps_opt: eps,
        max_iters: DEFAULT_MAX_ITERS,
        diameter: box_diameter(ambient) + 1.0,
        initial_complementarity: 1.0,
    };
    let mut h_orig = vec![0.0; n];
    let mut mx_orig = vec![0.0; d];
    let outcome = ipm::solve(&SlackObjective, &ext_sys, y0, &settings, |_, _| false);
    let y = match outcome {
        Ok(o) => o.x,
        Err(Error::Convergence { .. }) => {
            return Err(Error::Infeasible {
                best_slack: f64::NAN,
            })
        }
        Err(e) => return Err(e),
    };
    let x = y[..d].to_vec();
    sys.values(&x, &mut h_orig, &mut mx_orig);
    let slack = h_orig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if slack < 0.0 {
        Ok(x)
    } else {
        Err(Error::Infeasible { best_slack: slack })
    }
}

/// Projection onto one conservative set, with a cached interior anchor.
#[derive(Debug, Clone)]
pub struct Projector<'a> {
    set: &'a ConservativeSafeSet,
    eps_opt: f64,
    margin: f64,
    anchor: Vec<f64>,
    diameter: f64,
}

impl<'a> Projector<'a> {
    /// Prepares projection onto `set`; fails if no strictly feasible point exists.
    pub fn new(set: &'a ConservativeSafeSet, eps_opt: f64) -> Result<Self> {
        if !(eps_opt > 0.0) {
            return Err(invalid(format!("eps_opt must be positive, got {eps_opt}")));
        }
        let ambient = set.ambient();
        if ambient
            .lower()
            .iter()
            .zip(ambient.upper())
            .any(|(l, u)| !(l < u))
        {
            return Err(invalid("projection needs a box with nonempty interior"));
        }
        let margin = set.feasibility_margin();
        let sys = Self::system_for(set, margin);
        let anchor = deepest_point(&sys, ambient, 1e-6)?;
        Ok(Self {
            set,
            eps_opt,
            margin,
            anchor,
            diameter: box_diameter(ambient),
        })
    }

    fn system_for(set: &'a ConservativeSafeSet, margin: f64) -> ConstraintSystem<'a> {
        let norm_term = (set.beta() > 0.0).then(|| NormTerm {
            beta: set.beta(),
            metric: set.inv_gram(),
            rows: set.constraints(),
        });
        stacked_system(
            set.estimate().a_hat(),
            set.offsets(),
            margin,
            set.ambient(),
            norm_term,
        )
    }

    pub fn set(&self) -> &ConservativeSafeSet {
        self.set
    }

    /// A strictly feasible interior point of the margin-shrunk set.
    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn feasibility_margin(&self) -> f64 {
        self.margin
    }

    /// Projects `z`, optionally starting near a previous feasible answer.
    pub fn project(&self, z: &[f64], hint: Option<&[f64]>) -> Result<ProjectionResult> {
        let set = self.set;
        let d = set.dim();
        check_dim("point", z.len(), d)?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(invalid("projection target must be finite"));
        }
        let mut g = vec![0.0; set.constraints()];
        set.values_into(z, &mut g);
        let slack = max_of(&g);
        if slack <= -self.margin && set.ambient().contains_unchecked(z) {
            return Ok(ProjectionResult {
                point: z.to_vec(),
                objective_gap: 0.0,
                feasibility_slack: slack,
                iterations: 0,
            });
        }

        let sys = Self::system_for(set, self.margin);
        let mut h = vec![0.0; sys.len()];
        let mut mx = vec![0.0; d];
        let start = match hint {
            Some(p) if p.len() == d => {
                // Pull slightly inward so the start is not glued to the boundary.
                let x0: Vec<f64> = p
                    .iter()
                    .zip(&self.anchor)
                    .map(|(pi, ai)| pi + 0.01 * (ai - pi))
                    .collect();
                sys.values(&x0, &mut h, &mut mx);
                if h.iter().all(|v| *v < 0.0) {
                    x0
                } else {
                    self.anchor.clone()
                }
            }
            _ => self.anchor.clone(),
        };
        let settings = IpmSettings {
            eps_opt: self.eps_opt,
            max_iters: DEFAULT_MAX_ITERS,
            diameter: self.diameter,
            initial_complementarity: 1.0,
        };
        let outcome = ipm::solve(
            &DistanceObjective { target: z },
            &sys,
            start,
            &settings,
            |_, _| false,
        )?;
        set.values_into(&outcome.x, &mut g);
        let slack = max_of(&g);
        if !(slack <= 0.0) || !set.ambient().contains_unchecked(&outcome.x) {
            return Err(Error::Infeasible { best_slack: slack });
        }
        Ok(ProjectionResult {
            objective_gap: outcome.objective_gap(self.diameter),
            point: outcome.x,
            feasibility_slack: slack,
            iterations: outcome.iterations,
        })
    }
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Projects `z` onto the conservative set.
pub fn project_conservative(
    set: &ConservativeSafeSet,
    z: &[f64],
    eps_opt: f64,
) -> Result<ProjectionResult> {
    check_dim("point", z.len(), set.dim())?;
    let mut g = vec![0.0; set.constraints()];
    set.values_into(z, &mut g);
    if max_of(&g) <= -set.feasibility_margin() && set.ambient().contains_unchecked(z) {
        return Ok(ProjectionResult {
            point: z.to_vec(),
            objective_gap: 0.0,
            feasibility_slack: max_of(&g),
            iterations: 0,
        });
    }
    Projector::new(set, eps_opt)?.project(z, None)
}

/// Projects `z` onto `{x ∈ X : Ax ≤ b}`.
pub fn project_polytope(
    p: &TruePolytope,
    ambient: &AmbientSet,
    z: &[f64],
    eps_opt: f64,
) -> Result<ProjectionResult> {
    check_dim("ambient set", ambient.dim(), p.dim())?;
    let set = ConservativeSafeSet::from_true_polytope(p, ambient.clone())?;
    project_conservative(&set, z, eps_opt)
}

/// Sum of cost terms over a prefix, kept in the closed form
/// `c + ℓᵀx + ½q‖x‖² − w Σ_k 8 ln(1 + 4x_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixObjective {
    terms: u64,
    constant: f64,
    linear: Vec<f64>,
    quadratic: f64,
    log_weight: f64,
}

impl PrefixObjective {
    pub fn new(dim: usize) -> Self {
        Self {
            terms: 0,
            constant: 0.0,
            linear: vec![0.0; dim],
            quadratic: 0.0,
            log_weight: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn terms(&self) -> u64 {
        self.terms
    }

    pub fn is_linear(&self) -> bool {
        self.quadratic == 0.0 && self.log_weight == 0.0
    }

    /// Adds `cᵀx + constant`.
    pub fn push_linear(&mut self, c: &[f64], constant: f64) {
        for (l, ci) in self.linear.iter_mut().zip(c) {
            *l += ci;
        }
        self.constant += constant;
        self.terms += 1;
    }

    /// Adds `½‖x − target‖²`.
    pub fn push_tracking(&mut self, target: &[f64]) {
        for (l, ti) in self.linear.iter_mut().zip(target) {
            *l -= ti;
        }
        self.constant += 0.5 * dot(target, target);
        self.quadratic += 1.0;
        self.terms += 1;
    }

    /// Adds `pᵀx + w(100 − Σ_k 8 ln(1 + 4x_k))`.
    pub fn push_service(&mut self, prices: &[f64], weight: f64) {
        for (l, pi) in self.linear.iter_mut().zip(prices) {
            *l += pi;
        }
        self.constant += 100.0 * weight;
        self.log_weight += weight;
        self.terms += 1;
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut v = self.constant + dot(&self.linear, x) + 0.5 * self.quadratic * dot(x, x);
        if self.log_weight != 0.0 {
            let s: f64 = x.iter().map(|xk| 8.0 * libm::log1p(4.0 * xk)).sum();
            v -= self.log_weight * s;
        }
        v
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient_scaled(x, 1.0, &mut g);
        g
    }

    fn gradient_scaled(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        for ((o, l), xk) in out.iter_mut().zip(&self.linear).zip(x) {
            let mut g = l + self.quadratic * xk;
            if self.log_weight != 0.0 {
                g -= self.log_weight * 32.0 / (1.0 + 4.0 * xk);
            }
            *o = scale * g;
        }
    }
}

/// The prefix objective divided by its term count, so tolerances are per step.
struct AveragedObjective<'a> {
    inner: &'a PrefixObjective,
    scale: f64,
}

impl SmoothObjective for AveragedObjective<'_> {
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.inner.gradient_scaled(x, self.scale, out);
    }

    fn add_hessian(&self, x: &[f64], out: &mut Matrix) {
        let o = self.inner;
        for (k, xk) in x.iter().enumerate() {
            let mut h = o.quadratic;
            if o.log_weight != 0.0 {
                let u = 1.0 + 4.0 * xk;
                h += o.log_weight * 128.0 / (u * u);
            }
            out[(k, k)] += self.scale * h;
        }
    }
}

/// Minimizer of a prefix objective over the true safe set.
///
/// Linear objectives in at most three dimensions are solved exactly over the
/// vertex list, breaking ties toward the lexicographically smallest vertex.
pub fn hindsight_optimum(
    prefix: &PrefixObjective,
    p: &TruePolytope,
    ambient: &AmbientSet,
    eps_opt: f64,
) -> Result<Vec<f64>> {
    check_dim("objective", prefix.dim(), p.dim())?;
    check_dim("ambient set", ambient.dim(), p.dim())?;
    if prefix.terms == 0 {
        return Err(invalid("hindsight optimum needs at least one cost term"));
    }
    if !(eps_opt > 0.0) {
        return Err(invalid(format!("eps_opt must be positive, got {eps_opt}")));
    }
    if prefix.is_linear() && p.dim() <= 3 {
        let vertices = p.vertices(ambient)?;
        let mut best: Option<(f64, &Vec<f64>)> = None;
        for v in &vertices {
            let val = dot(&prefix.linear, v);
            let tol = 1e-12 * (1.0 + val.abs());
            best = match best {
                None => Some((val, v)),
                Some((bv, _)) if val < bv - tol => Some((val, v)),
                Some((bv, bx)) if (val - bv).abs() <= tol && lex_cmp(v, bx).is_lt() => {
                    Some((bv.min(val), v))
                }
                keep => keep,
            };
        }
        return best.map(|(_, v)| v.clone()).ok_or(Error::Infeasible {
            best_slack: f64::NAN,
        });
    }
    if prefix.log_weight != 0.0 && ambient.lower().iter().any(|l| *l <= -0.25) {
        return Err(invalid("service objective needs the box inside x > -1/4"));
    }
    let sys = stacked_system(p.matrix(), p.offsets(), 0.0, ambient, None);
    let start = deepest_point(&sys, ambient, 1e-6)?;
    let settings = IpmSettings {
        eps_opt,
        max_iters: DEFAULT_MAX_ITERS,
        diameter: box_diameter(ambient),
        initial_complementarity: 1.0,
    };
    let objective = AveragedObjective {
        inner: prefix,
        scale: 1.0 / prefix.terms as f64,
    };
    Ok(ipm::solve(&objective, &sys, start, &settings, |_, _| false)?.x)
}

#[cfg(test)]
mod tests;
