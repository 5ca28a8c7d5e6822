//! Dense primal-dual interior-point solver for small smooth convex programs
//! with affine rows, optionally augmented by a shared weighted-norm term.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Cholesky, Matrix};

/// Smoothing added under the square root of the weighted norm.
pub(crate) const NORM_SMOOTHING: f64 = 1e-16;

const CENTERING: f64 = 10.0;
const STEP_FRACTION: f64 = 0.99;
const BACKTRACK: f64 = 0.5;
const SUFFICIENT_DECREASE: f64 = 0.01;
const MAX_BACKTRACKS: usize = 80;

pub(crate) trait SmoothObjective {
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// Adds the Hessian at `x` into `out`.
    fn add_hessian(&self, x: &[f64], out: &mut Matrix);
}

/// `β √(x[..k]ᵀ M x[..k] + μ)` added to the leading `rows` constraints.
pub(crate) struct NormTerm<'a> {
    pub beta: f64,
    pub metric: &'a Matrix,
    pub rows: usize,
}

/// Constraints `h_j(x) = r_jᵀx − c_j (+ norm term) ≤ 0`.
pub(crate) struct ConstraintSystem<'a> {
    pub dim: usize,
    pub rows: Vec<f64>,
    pub rhs: Vec<f64>,
    pub norm_term: Option<NormTerm<'a>>,
}

impl ConstraintSystem<'_> {
    pub fn len(&self) -> usize {
        self.rhs.len()
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.rows[j * self.dim..(j + 1) * self.dim]
    }

    /// Fills `h` and returns the smoothed norm (1 when absent), leaving `M x` in `mx`.
    pub fn values(&self, x: &[f64], h: &mut [f64], mx: &mut [f64]) -> f64 {
        let s = match &self.norm_term {
            Some(nt) => {
                let k = nt.metric.rows();
                for (i, v) in mx.iter_mut().enumerate().take(k) {
                    *v = dot(nt.metric.row(i), &x[..k]);
                }
                libm::sqrt(dot(&mx[..k], &x[..k]).max(0.0) + NORM_SMOOTHING)
            }
            None => 1.0,
        };
        for (j, hj) in h.iter_mut().enumerate() {
            *hj = dot(self.row(j), x) - self.rhs[j];
        }
        if let Some(nt) = &self.norm_term {
            for hj in h.iter_mut().take(nt.rows) {
                *hj += nt.beta * s;
            }
        }
        s
    }

    fn gradients(&self, mx: &[f64], s: f64, grads: &mut [f64]) {
        grads.copy_from_slice(&self.rows);
        if let Some(nt) = &self.norm_term {
            let k = nt.metric.rows();
            for j in 0..nt.rows {
                let g = &mut grads[j * self.dim..j * self.dim + k];
                for (gi, mi) in g.iter_mut().zip(mx) {
                    *gi += nt.beta * mi / s;
                }
            }
        }
    }
}

pub(crate) struct IpmSettings {
    pub eps_opt: f64,
    pub max_iters: usize,
    /// Scale converting the dual residual into an objective-gap bound.
    pub diameter: f64,
    /// Initial duality measure per constraint.
    pub initial_complementarity: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct IpmOutcome {
    pub x: Vec<f64>,
    pub duality_gap: f64,
    pub dual_residual: f64,
    pub iterations: usize,
}

impl IpmOutcome {
    pub fn objective_gap(&self, diameter: f64) -> f64 {
        self.duality_gap + self.dual_residual * diameter
    }
}

struct Workspace {
    h: Vec<f64>,
    mx: Vec<f64>,
    s: f64,
    grads: Vec<f64>,
    g0: Vec<f64>,
    r_dual: Vec<f64>,
}

impl Workspace {
    fn new(n: usize, dim: usize) -> Self {
        Self {
            h: vec![0.0; n],
            mx: vec![0.0; dim],
            s: 1.0,
            grads: vec![0.0; n * dim],
            g0: vec![0.0; dim],
            r_dual: vec![0.0; dim],
        }
    }

    /// Evaluates everything at `(x, λ)`; returns `‖r_t‖²` for the given `t`.
    fn evaluate<O: SmoothObjective>(
        &mut self,
        obj: &O,
        sys: &ConstraintSystem,
        x: &[f64],
        lambda: &[f64],
        t: f64,
    ) -> f64 {
        let dim = sys.dim;
        self.s = sys.values(x, &mut self.h, &mut self.mx);
        sys.gradients(&self.mx, self.s, &mut self.grads);
        obj.gradient(x, &mut self.g0);
        self.r_dual.copy_from_slice(&self.g0);
        for (j, lj) in lambda.iter().enumerate() {
            let g = &self.grads[j * dim..(j + 1) * dim];
            for (r, gi) in self.r_dual.iter_mut().zip(g) {
                *r += lj * gi;
            }
        }
        let mut cent = 0.0;
        for (lj, hj) in lambda.iter().zip(&self.h) {
            let r = -lj * hj - 1.0 / t;
            cent += r * r;
        }
        dot(&self.r_dual, &self.r_dual) + cent
    }
}

/// Runs the primal-dual iteration from a strictly feasible `x0`.
///
/// `stop` is consulted after each evaluation with the current point and its
/// constraint values; returning true ends the solve successfully.
pub(crate) fn solve<O: SmoothObjective>(
    obj: &O,
    sys: &ConstraintSystem,
    x0: Vec<f64>,
    settings: &IpmSettings,
    mut stop: impl FnMut(&[f64], &[f64]) -> bool,
) -> Result<IpmOutcome> {
    let n = sys.len();
    let dim = sys.dim;
    let mut x = x0;
    let mut ws = Workspace::new(n, dim);
    let mut trial = Workspace::new(n, dim);
    sys.values(&x, &mut ws.h, &mut ws.mx);
    if ws.h.iter().any(|v| !(*v < 0.0)) {
        return Err(Error::Infeasible {
            best_slack: ws.h.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    let mut lambda: Vec<f64> =
        ws.h.iter()
            .map(|hj| settings.initial_complementarity / -hj)
            .collect();
    let mut x_new = vec![0.0; dim];
    let mut lambda_new = vec![0.0; n];
    let mut dx = vec![0.0; dim];
    let mut dl = vec![0.0; n];
    let mut hess = Matrix::zeros(dim, dim);

    let mut gap = f64::INFINITY;
    let mut resid = f64::INFINITY;
    for iter in 0..settings.max_iters {
        let eta = -dot(&ws.h, &lambda);
        let t = CENTERING * n as f64 / eta;
        let r_norm_sq = ws.evaluate(obj, sys, &x, &lambda, t);
        gap = eta;
        resid = norm(&ws.r_dual);
        if stop(&x, &ws.h) {
            return Ok(IpmOutcome {
                x,
                duality_gap: gap,
                dual_residual: resid,
                iterations: iter,
            });
        }
        if gap <= settings.eps_opt && resid * settings.diameter <= settings.eps_opt {
            return Ok(IpmOutcome {
                x,
                duality_gap: gap,
                dual_residual: resid,
                iterations: iter,
            });
        }

        // Reduced Newton system.
        hess.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        obj.add_hessian(&x, &mut hess);
        if let Some(nt) = &sys.norm_term {
            let weight: f64 = lambda[..nt.rows].iter().sum::<f64>() * nt.beta;
            if weight > 0.0 {
                let k = nt.metric.rows();
                let s = ws.s;
                for a in 0..k {
                    for b in 0..k {
                        hess[(a, b)] +=
                            weight * (nt.metric[(a, b)] / s - ws.mx[a] * ws.mx[b] / (s * s * s));
                    }
                }
            }
        }
        for v in dx.iter_mut() {
            *v = 0.0;
        }
        for j in 0..n {
            let g = &ws.grads[j * dim..(j + 1) * dim];
            let w = lambda[j] / -ws.h[j];
            hess.add_outer(w, g, g);
            let c = 1.0 / (t * -ws.h[j]);
            for (d, gi) in dx.iter_mut().zip(g) {
                *d -= c * gi;
            }
        }
        for (d, g0) in dx.iter_mut().zip(&ws.g0) {
            *d -= g0;
        }
        let factor = factor_robust(&mut hess).ok_or(Error::Convergence {
            iterations: iter,
            gap,
            residual: resid,
        })?;
        factor.solve_in_place(&mut dx);
        for j in 0..n {
            let g = &ws.grads[j * dim..(j + 1) * dim];
            let r_cent = -lambda[j] * ws.h[j] - 1.0 / t;
            dl[j] = (r_cent - lambda[j] * dot(g, &dx)) / ws.h[j];
        }

        // Step length: dual positivity, primal strict feasibility, residual decrease.
        let mut step = 1.0f64;
        for (lj, dlj) in lambda.iter().zip(&dl) {
            if *dlj < 0.0 {
                step = step.min(-lj / dlj);
            }
        }
        step *= STEP_FRACTION;
        let r_norm = libm::sqrt(r_norm_sq);
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            for ((xn, xi), di) in x_new.iter_mut().zip(&x).zip(&dx) {
                *xn = xi + step * di;
            }
            sys.values(&x_new, &mut trial.h, &mut trial.mx);
            if trial.h.iter().all(|v| *v < 0.0) {
                for ((ln, lj), dlj) in lambda_new.iter_mut().zip(&lambda).zip(&dl) {
                    *ln = lj + step * dlj;
                }
                let r_new = libm::sqrt(trial.evaluate(obj, sys, &x_new, &lambda_new, t));
                if r_new <= (1.0 - SUFFICIENT_DECREASE * step) * r_norm {
                    accepted = true;
                    break;
                }
            }
            step *= BACKTRACK;
        }
        if !accepted {
            // Rounding floor reached: the current point is as good as it gets.
            if gap <= settings.eps_opt * 1e3 && resid * settings.diameter <= settings.eps_opt * 1e3
            {
                return Ok(IpmOutcome {
                    x,
                    duality_gap: gap,
                    dual_residual: resid,
                    iterations: iter,
                });
            }
            return Err(Error::Convergence {
                iterations: iter,
                gap,
                residual: resid,
            });
        }
        core::mem::swap(&mut x, &mut x_new);
        core::mem::swap(&mut lambda, &mut lambda_new);
        core::mem::swap(&mut ws, &mut trial);
    }
    Err(Error::Convergence {
        iterations: settings.max_iters,
        gap,
        residual: resid,
    })
}

fn factor_robust(hess: &mut Matrix) -> Option<Cholesky> {
    if let Some(f) = Cholesky::factor(hess) {
        return Some(f);
    }
    let n = hess.rows();
    let mut jitter = 1e-14 * (hess.trace().abs() / n as f64).max(1e-300);
    for _ in 0..20 {
        for i in 0..n {
            hess[(i, i)] += jitter;
        }
        if let Some(f) = Cholesky::factor(hess) {
            return Some(f);
        }
        jitter *= 100.0;
    }
    None
}
