//! Polytopes, the ambient action box and the analysis-only shrunk polytope.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{check_dim, invalid, Result};
use crate::linalg::{dot, norm, solve_square, Matrix};

/// The environment's constraint set `{x : A x ≤ b}`.
///
/// Only environment and verification code should read [`TruePolytope::matrix`];
/// the algorithm side sees `b` and the bound `L_A`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruePolytope {
    a: Matrix,
    b: Vec<f64>,
    row_norm_bound: f64,
}

impl TruePolytope {
    pub fn new(a: Matrix, b: Vec<f64>) -> Result<Self> {
        if a.rows() == 0 || a.cols() == 0 {
            return Err(invalid(
                "constraint matrix must have at least one row and column",
            ));
        }
        check_dim("constraint offsets", b.len(), a.rows())?;
        if a.as_slice().iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(invalid("constraint data must be finite"));
        }
        let row_norm_bound = (0..a.rows()).map(|i| norm(a.row(i))).fold(0.0, f64::max);
        Ok(Self {
            a,
            b,
            row_norm_bound,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], b: &[f64]) -> Result<Self> {
        let a = Matrix::from_rows(rows).ok_or_else(|| invalid("ragged constraint matrix"))?;
        Self::new(a, b.to_vec())
    }

    /// Box `[-half_width, half_width]^d` written as `2d` inequalities.
    pub fn centered_box(d: usize, half_width: f64) -> Result<Self> {
        let mut a = Matrix::zeros(2 * d, d);
        for k in 0..d {
            a[(2 * k, k)] = 1.0;
            a[(2 * k + 1, k)] = -1.0;
        }
        Self::new(a, alloc::vec![half_width; 2 * d])
    }

    pub fn num_constraints(&self) -> usize {
        self.a.rows()
    }

    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn offsets(&self) -> &[f64] {
        &self.b
    }

    /// Largest row norm, `L_A`.
    pub fn row_norm_bound(&self) -> f64 {
        self.row_norm_bound
    }

    /// Exact membership in `{Ax ≤ b}` intersected with the ambient box.
    pub fn contains(&self, ambient: &AmbientSet, x: &[f64]) -> Result<bool> {
        check_dim("point", x.len(), self.dim())?;
        check_dim("ambient set", ambient.dim(), self.dim())?;
        Ok(ambient.contains_unchecked(x) && self.satisfied_unchecked(x))
    }

    pub(crate) fn satisfied_unchecked(&self, x: &[f64]) -> bool {
        (0..self.a.rows()).all(|i| dot(self.a.row(i), x) <= self.b[i])
    }

    /// `b - A x`; a negative entry flags a violated row.
    pub fn safety_margin(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("point", x.len(), self.dim())?;
        Ok((0..self.a.rows())
            .map(|i| self.b[i] - dot(self.a.row(i), x))
            .collect())
    }

    /// Vertices of `{Ax ≤ b} ∩ box` for `d ≤ 3`, sorted lexicographically.
    pub fn vertices(&self, ambient: &AmbientSet) -> Result<Vec<Vec<f64>>> {
        let d = self.dim();
        if d > 3 {
            return Err(invalid(format!(
                "vertex enumeration supports d ≤ 3, got {d}"
            )));
        }
        let (rows, offsets) = stacked_rows(self, ambient);
        let scale = offsets.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        let tol = 1e-9 * scale;
        let mut out: Vec<Vec<f64>> = Vec::new();
        let mut idx: Vec<usize> = (0..d).collect();
        let n = rows.len();
        if n < d {
            return Ok(out);
        }
        loop {
            let sub: Vec<&[f64]> = idx.iter().map(|&i| rows[i].as_slice()).collect();
            let m = Matrix::from_rows(&sub).expect("uniform rows");
            let rhs: Vec<f64> = idx.iter().map(|&i| offsets[i]).collect();
            if let Some(v) = solve_square(&m, &rhs) {
                let feasible = rows
                    .iter()
                    .zip(&offsets)
                    .all(|(r, &o)| dot(r, &v) <= o + tol);
                if feasible && !out.iter().any(|w| crate::linalg::dist(w, &v) <= tol) {
                    out.push(v);
                }
            }
            // next combination
            let mut k = d;
            loop {
                if k == 0 {
                    out.sort_by(|a, b| lex_cmp(a, b));
                    return Ok(out);
                }
                k -= 1;
                if idx[k] < n - d + k {
                    idx[k] += 1;
                    for j in k + 1..d {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> core::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            core::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    core::cmp::Ordering::Equal
}

/// Rows of `A` followed by the `2d` box rows.
pub(crate) fn stacked_rows(p: &TruePolytope, ambient: &AmbientSet) -> (Vec<Vec<f64>>, Vec<f64>) {
    let d = p.dim();
    let mut rows: Vec<Vec<f64>> = (0..p.num_constraints())
        .map(|i| p.a.row(i).to_vec())
        .collect();
    let mut offsets = p.b.clone();
    for k in 0..d {
        let mut e = alloc::vec![0.0; d];
        e[k] = 1.0;
        rows.push(e.clone());
        offsets.push(ambient.upper[k]);
        e[k] = -1.0;
        rows.push(e);
        offsets.push(-ambient.lower[k]);
    }
    (rows, offsets)
}

/// The known action box `X` and its norm bound `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
    norm_bound: f64,
}

impl AmbientSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim("box upper", upper.len(), lower.len())?;
        if lower.is_empty() {
            return Err(invalid("box must have positive dimension"));
        }
        if lower.iter().chain(&upper).any(|v| !v.is_finite()) {
            return Err(invalid("box bounds must be finite"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(invalid("box lower bound exceeds upper bound"));
        }
        let norm_bound = libm::sqrt(
            lower
                .iter()
                .zip(&upper)
                .map(|(l, u)| (l * l).max(u * u))
                .sum(),
        );
        if !(norm_bound > 0.0) {
            return Err(invalid("box must not collapse to the origin"));
        }
        Ok(Self {
            lower,
            upper,
            norm_bound,
        })
    }

    pub fn symmetric(d: usize, half_width: f64) -> Result<Self> {
        Self::new(alloc::vec![-half_width; d], alloc::vec![half_width; d])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// `L`, the largest Euclidean norm over the box corners.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        check_dim("point", x.len(), self.dim())?;
        Ok(self.contains_unchecked(x))
    }

    pub(crate) fn contains_unchecked(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| v.max(*l).min(*u))
            .collect()
    }
}

/// `{x : a_iᵀx + τ_in ≤ b_i ∀i}`; needs the true `A`, so verification only.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrunkPolytope {
    base: TruePolytope,
    tau_in: f64,
}

impl ShrunkPolytope {
    pub fn new(base: TruePolytope, tau_in: f64) -> Result<Self> {
        if !(tau_in > 0.0) || !tau_in.is_finite() {
            return Err(invalid(format!(
                "shrink margin must be positive, got {tau_in}"
            )));
        }
        Ok(Self { base, tau_in })
    }

    pub fn base(&self) -> &TruePolytope {
        &self.base
    }

    pub fn tau_in(&self) -> f64 {
        self.tau_in
    }

    pub fn shrunk_contains(&self, x: &[f64]) -> Result<bool> {
        check_dim("point", x.len(), self.base.dim())?;
        let a = &self.base.a;
        Ok((0..a.rows()).all(|i| dot(a.row(i), x) + self.tau_in <= self.base.b[i]))
    }
}
