use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::prices::{PriceTable, ZONES};
use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::AmbientSet;
use crate::linalg::{dot, norm};
use crate::projection::PrefixObjective;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// `c_t Σ x_i + 1`.
    Linear,
    /// `½‖x − c_t x̄‖²`.
    Tracking,
    /// `c_tᵀ x` with drifting, noisy and sign-flipping parts.
    Resource,
    /// Electricity cost minus job service.
    DataCenter,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Linear => "f1",
            Self::Tracking => "f2",
            Self::Resource => "f3",
            Self::DataCenter => "datacenter",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f1" | "f1_linear" | "linear" => Some(Self::Linear),
            "f2" | "f2_quadratic" | "quadratic" | "tracking" => Some(Self::Tracking),
            "f3" | "f3_resource" | "resource" => Some(Self::Resource),
            "datacenter" | "data_center" => Some(Self::DataCenter),
            _ => None,
        }
    }
}

/// A fully pre-drawn cost sequence `f_1, …, f_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    kind: ScenarioKind,
    dim: usize,
    horizon: usize,
    /// Per-step scalars `c_t` for the linear and tracking kinds.
    scalars: Vec<f64>,
    /// Per-step vectors: resource coefficients or zone prices.
    vectors: Vec<f64>,
    x_bar: Vec<f64>,
    service_weight: f64,
    gradient_bound: f64,
    synthetic_prices: bool,
}

fn check_range(c_lower: f64, c_upper: f64) -> Result<()> {
    if !(c_lower.is_finite() && c_upper.is_finite() && c_lower <= c_upper) {
        return Err(invalid(format!(
            "coefficient range [{c_lower}, {c_upper}] is invalid"
        )));
    }
    Ok(())
}

fn check_shape(d: usize, horizon: usize) -> Result<()> {
    if d == 0 || horizon == 0 {
        return Err(invalid("dimension and horizon must be positive"));
    }
    Ok(())
}

/// `f_t(x) = c_t Σ x_i + 1` with `c_t ~ U[c_lower, c_upper]`.
pub fn make_f1<R: Rng + ?Sized>(
    rng: &mut R,
    c_lower: f64,
    c_upper: f64,
    d: usize,
    horizon: usize,
) -> Result<Scenario> {
    check_range(c_lower, c_upper)?;
    check_shape(d, horizon)?;
    let scalars = (0..horizon)
        .map(|_| rng.random_range(c_lower..=c_upper))
        .collect();
    Ok(Scenario {
        kind: ScenarioKind::Linear,
        dim: d,
        horizon,
        scalars,
        vectors: Vec::new(),
        x_bar: Vec::new(),
        service_weight: 0.0,
        gradient_bound: c_lower.abs().max(c_upper.abs()) * libm::sqrt(d as f64),
        synthetic_prices: false,
    })
}

/// Corners of the box, visited by bitmask.
fn max_over_corners(ambient: &AmbientSet, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let d = ambient.dim();
    let mut corner = vec![0.0; d];
    let mut best = f64::NEG_INFINITY;
    for mask in 0u64..(1u64 << d) {
        for (k, c) in corner.iter_mut().enumerate() {
            *c = if mask >> k & 1 == 1 {
                ambient.upper()[k]
            } else {
                ambient.lower()[k]
            };
        }
        best = best.max(f(&corner));
    }
    best
}

/// `f_t(x) = ½‖x − c_t x̄‖²` with `x̄` a random direction of length 2.5.
pub fn make_f2<R: Rng + ?Sized>(
    rng: &mut R,
    c_lower: f64,
    c_upper: f64,
    d: usize,
    horizon: usize,
    ambient: &AmbientSet,
) -> Result<Scenario> {
    check_range(c_lower, c_upper)?;
    check_shape(d, horizon)?;
    check_dim("ambient set", ambient.dim(), d)?;
    let x_bar = loop {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&g);
        if n > 0.0 {
            break g.into_iter().map(|v| 2.5 * v / n).collect::<Vec<f64>>();
        }
    };
    let scalars = (0..horizon)
        .map(|_| rng.random_range(c_lower..=c_upper))
        .collect();
    // ‖x − c x̄‖ is convex in (x, c), so its maximum sits at a corner and an end of the range.
    let gradient_bound = max_over_corners(ambient, |x| {
        [c_lower, c_upper]
            .iter()
            .map(|c| {
                libm::sqrt(
                    x.iter()
                        .zip(&x_bar)
                        .map(|(xi, bi)| (xi - c * bi) * (xi - c * bi))
                        .sum(),
                )
            })
            .fold(0.0, f64::max)
    });
    Ok(Scenario {
        kind: ScenarioKind::Tracking,
        dim: d,
        horizon,
        scalars,
        vectors: Vec::new(),
        x_bar,
        service_weight: 0.0,
        gradient_bound,
        synthetic_prices: false,
    })
}

/// `f_t(x) = c_tᵀx` with `c_t = c₁ + c₂ + c₃` as in the resource-allocation benchmark.
pub fn make_f3<R: Rng + ?Sized>(rng: &mut R, d: usize, horizon: usize) -> Result<Scenario> {
    check_shape(d, horizon)?;
    let mut perm: Vec<u64> = (1..=horizon as u64).collect();
    perm.shuffle(rng);
    let mut vectors = Vec::with_capacity(horizon * d);
    for (t, p) in (1..=horizon).zip(&perm) {
        let spread = libm::pow(t as f64, 0.1);
        let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
        for _ in 0..d {
            let c1 = rng.random_range(-spread..=spread);
            let c2 = rng.random_range(-1.0..=0.0);
            vectors.push(c1 + c2 + sign);
        }
    }
    Ok(Scenario {
        kind: ScenarioKind::Resource,
        dim: d,
        horizon,
        scalars: Vec::new(),
        vectors,
        x_bar: Vec::new(),
        service_weight: 0.0,
        gradient_bound: (libm::pow(horizon as f64, 0.1) + 2.0) * libm::sqrt(d as f64),
        synthetic_prices: false,
    })
}

/// `f_t(x) = c_tᵀx + λ(100 − Σ_k 8 ln(1 + 4x_k))` over nonnegative allocations.
pub fn make_datacenter(
    prices: &PriceTable,
    lambda_dc: f64,
    horizon: usize,
    ambient: &AmbientSet,
) -> Result<Scenario> {
    let d = ZONES.len();
    check_shape(d, horizon)?;
    check_dim("ambient set", ambient.dim(), d)?;
    if !(lambda_dc > 0.0 && lambda_dc.is_finite()) {
        return Err(invalid(format!(
            "service weight must be positive, got {lambda_dc}"
        )));
    }
    if ambient.lower().iter().any(|l| *l < 0.0) {
        return Err(invalid("data-center allocations must be nonnegative"));
    }
    if prices.hours() < horizon {
        return Err(Error::Data(format!(
            "price table covers {} hours but the horizon is {horizon}",
            prices.hours()
        )));
    }
    let vectors = prices.as_slice()[..horizon * d].to_vec();
    // Each gradient coordinate is monotone in x_k, so the box ends bound it.
    let mut worst = vec![0.0f64; d];
    for row in vectors.chunks_exact(d) {
        for k in 0..d {
            for edge in [ambient.lower()[k], ambient.upper()[k]] {
                let g = row[k] - 32.0 * lambda_dc / (1.0 + 4.0 * edge);
                worst[k] = worst[k].max(g.abs());
            }
        }
    }
    Ok(Scenario {
        kind: ScenarioKind::DataCenter,
        dim: d,
        horizon,
        scalars: Vec::new(),
        vectors,
        x_bar: Vec::new(),
        service_weight: lambda_dc,
        gradient_bound: norm(&worst),
        synthetic_prices: prices.is_synthetic(),
    })
}

impl Scenario {
    pub fn kind(&self) -> ScenarioKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Declared bound on gradient norms over the ambient box.
    pub fn gradient_bound(&self) -> f64 {
        self.gradient_bound
    }

    /// Tracking direction `x̄` (empty for other kinds).
    pub fn x_bar(&self) -> &[f64] {
        &self.x_bar
    }

    pub fn service_weight(&self) -> f64 {
        self.service_weight
    }

    pub fn uses_synthetic_prices(&self) -> bool {
        self.synthetic_prices
    }

    /// Scalar coefficient `c_t` of the linear and tracking kinds.
    pub fn coefficient(&self, t: usize) -> Option<f64> {
        self.scalars.get(t.checked_sub(1)?).copied()
    }

    /// Coefficient vector `c_t` of the resource and data-center kinds.
    pub fn cost_vector(&self, t: usize) -> Option<&[f64]> {
        let i = t.checked_sub(1)?;
        self.vectors.get(i * self.dim..(i + 1) * self.dim)
    }

    fn check(&self, t: usize, x: &[f64]) -> Result<()> {
        check_dim("action", x.len(), self.dim)?;
        if t == 0 || t > self.horizon {
            return Err(invalid(format!("step {t} outside 1..={}", self.horizon)));
        }
        if self.kind == ScenarioKind::DataCenter && x.iter().any(|v| *v < 0.0) {
            return Err(invalid("data-center allocations must be nonnegative"));
        }
        Ok(())
    }

    pub fn value(&self, t: usize, x: &[f64]) -> Result<f64> {
        self.check(t, x)?;
        let i = t - 1;
        Ok(match self.kind {
            ScenarioKind::Linear => self.scalars[i] * x.iter().sum::<f64>() + 1.0,
            ScenarioKind::Tracking => {
                let c = self.scalars[i];
                0.5 * x
                    .iter()
                    .zip(&self.x_bar)
                    .map(|(xi, bi)| (xi - c * bi) * (xi - c * bi))
                    .sum::<f64>()
            }
            ScenarioKind::Resource => dot(&self.vectors[i * self.dim..(i + 1) * self.dim], x),
            ScenarioKind::DataCenter => {
                let c = &self.vectors[i * self.dim..(i + 1) * self.dim];
                let service: f64 = x.iter().map(|v| 8.0 * libm::log1p(4.0 * v)).sum();
                dot(c, x) + self.service_weight * (100.0 - service)
            }
        })
    }

    pub fn gradient(&self, t: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check(t, x)?;
        let mut g = vec![0.0; self.dim];
        self.gradient_into(t, x, &mut g);
        Ok(g)
    }

    pub(crate) fn gradient_into(&self, t: usize, x: &[f64], out: &mut [f64]) {
        let i = t - 1;
        match self.kind {
            ScenarioKind::Linear => out.iter_mut().for_each(|g| *g = self.scalars[i]),
            ScenarioKind::Tracking => {
                let c = self.scalars[i];
                for ((g, xi), bi) in out.iter_mut().zip(x).zip(&self.x_bar) {
                    *g = xi - c * bi;
                }
            }
            ScenarioKind::Resource => {
                out.copy_from_slice(&self.vectors[i * self.dim..(i + 1) * self.dim])
            }
            ScenarioKind::DataCenter => {
                let c = &self.vectors[i * self.dim..(i + 1) * self.dim];
                for ((g, ck), xk) in out.iter_mut().zip(c).zip(x) {
                    *g = ck - 32.0 * self.service_weight / (1.0 + 4.0 * xk);
                }
            }
        }
    }

    /// Adds `f_t` to a running prefix sum.
    pub fn accumulate(&self, t: usize, prefix: &mut PrefixObjective) {
        let i = t - 1;
        match self.kind {
            ScenarioKind::Linear => {
                let c = vec![self.scalars[i]; self.dim];
                prefix.push_linear(&c, 1.0);
            }
            ScenarioKind::Tracking => {
                let target: Vec<f64> = self.x_bar.iter().map(|b| self.scalars[i] * b).collect();
                prefix.push_tracking(&target);
            }
            ScenarioKind::Resource => {
                prefix.push_linear(&self.vectors[i * self.dim..(i + 1) * self.dim], 0.0)
            }
            ScenarioKind::DataCenter => prefix.push_service(
                &self.vectors[i * self.dim..(i + 1) * self.dim],
                self.service_weight,
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn rng(seed: u64) -> crate::rng::RunRng {
        stream(seed, Stream::Scenario)
    }

    fn box_amb() -> AmbientSet {
        AmbientSet::symmetric(2, 4.0).unwrap()
    }

    fn dc_amb() -> AmbientSet {
        AmbientSet::new(vec![0.0; 5], vec![30.0; 5]).unwrap()
    }

    fn all_scenarios() -> Vec<(Scenario, AmbientSet)> {
        let prices = PriceTable::synthetic(&mut rng(5), 300);
        vec![
            (make_f1(&mut rng(1), 0.5, 2.0, 2, 300).unwrap(), box_amb()),
            (
                make_f2(&mut rng(2), 0.5, 2.0, 2, 300, &box_amb()).unwrap(),
                box_amb(),
            ),
            (make_f3(&mut rng(3), 2, 300).unwrap(), box_amb()),
            (
                make_datacenter(&prices, 5.772, 300, &dc_amb()).unwrap(),
                dc_amb(),
            ),
        ]
    }

    fn uniform_in(amb: &AmbientSet, r: &mut crate::rng::RunRng, inset: f64) -> Vec<f64> {
        amb.lower()
            .iter()
            .zip(amb.upper())
            .map(|(l, u)| r.random_range(l + inset..=u - inset))
            .collect()
    }

    #[test]
    fn f1_examples() {
        let mut s = make_f1(&mut rng(1), 1.0, 1.0, 2, 5).unwrap();
        assert_eq!(s.value(1, &[1.0, 1.0]).unwrap(), 3.0);
        assert_eq!(s.gradient(1, &[1.0, 1.0]).unwrap(), vec![1.0, 1.0]);
        s = make_f1(&mut rng(1), 0.5, 2.0, 2, 5).unwrap();
        assert_eq!(s.value(3, &[0.0, 0.0]).unwrap(), 1.0);
        assert!((s.gradient_bound() - 2.0 * libm::sqrt(2.0)).abs() < 1e-15);
        assert!(s.value(0, &[0.0, 0.0]).is_err());
        assert!(s.value(6, &[0.0, 0.0]).is_err());
        assert!(make_f1(&mut rng(1), 2.0, 1.0, 2, 5).is_err());
    }

    #[test]
    fn f2_examples() {
        let s = make_f2(&mut rng(2), 0.5, 2.0, 2, 10, &box_amb()).unwrap();
        assert!((norm(s.x_bar()) - 2.5).abs() < 1e-12);
        for t in 1..=10 {
            let c = s.coefficient(t).unwrap();
            let x: Vec<f64> = s.x_bar().iter().map(|b| c * b).collect();
            assert_eq!(s.value(t, &x).unwrap(), 0.0);
            assert!(norm(&s.gradient(t, &x).unwrap()) == 0.0);
        }
    }

    #[test]
    fn f3_structure() {
        let horizon = 1001;
        let s = make_f3(&mut rng(3), 2, horizon).unwrap();
        // t = 1: c₁ ∈ [−1, 1], c₂ ∈ [−1, 0], c₃ = ±1.
        for v in s.cost_vector(1).unwrap() {
            assert!((-3.0..=2.0).contains(v));
        }
        let g = s.gradient(7, &[0.3, 0.1]).unwrap();
        assert_eq!(g, s.cost_vector(7).unwrap());
        assert!(
            (s.gradient_bound() - (libm::pow(1001.0, 0.1) + 2.0) * libm::sqrt(2.0)).abs() < 1e-12
        );
    }

    #[test]
    fn f3_sign_counts_follow_permutation_parity() {
        // Re-derive c₃ by replaying the same draws.
        let horizon = 999;
        let mut r = rng(8);
        let mut perm: Vec<u64> = (1..=horizon as u64).collect();
        perm.shuffle(&mut r);
        let plus = perm.iter().filter(|p| *p % 2 == 0).count();
        assert!(plus == horizon / 2 || plus == horizon.div_ceil(2));
        let s = make_f3(&mut rng(8), 1, horizon).unwrap();
        for (t, p) in (1..=horizon).zip(&perm) {
            let c = s.cost_vector(t).unwrap()[0];
            let spread = libm::pow(t as f64, 0.1);
            let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
            assert!(c - sign >= -spread - 1.0 - 1e-12 && c - sign <= spread + 1e-12);
        }
    }

    #[test]
    fn datacenter_examples() {
        let prices = PriceTable::new((0..50).map(|v| 10.0 + v as f64).collect()).unwrap();
        let s = make_datacenter(&prices, 5.772, 10, &dc_amb()).unwrap();
        let zero = [0.0; 5];
        assert!((s.value(1, &zero).unwrap() - 577.2).abs() < 1e-12);
        let g = s.gradient(2, &zero).unwrap();
        for k in 0..5 {
            assert!((g[k] - (prices.row(2)[k] - 32.0 * 5.772)).abs() < 1e-12);
        }
        assert!(s.value(1, &[-0.1, 0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(matches!(
            make_datacenter(&prices, 5.772, 11, &dc_amb()),
            Err(Error::Data(_))
        ));
        assert!(!s.uses_synthetic_prices());
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut r = rng(77);
        for (s, amb) in all_scenarios() {
            for _ in 0..100 {
                let t = r.random_range(1..=s.horizon());
                let x = uniform_in(&amb, &mut r, 1e-3);
                let g = s.gradient(t, &x).unwrap();
                for k in 0..s.dim() {
                    let h = 1e-6;
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[k] += h;
                    xm[k] -= h;
                    let fd = (s.value(t, &xp).unwrap() - s.value(t, &xm).unwrap()) / (2.0 * h);
                    let rel = (fd - g[k]).abs() / g[k].abs().max(1.0);
                    assert!(rel < 1e-5, "{:?} t={t} k={k}: {fd} vs {}", s.kind(), g[k]);
                }
            }
        }
    }

    #[test]
    fn declared_gradient_bounds_hold() {
        let mut r = rng(78);
        for (s, amb) in all_scenarios() {
            for _ in 0..10_000 {
                let t = r.random_range(1..=s.horizon());
                let x = uniform_in(&amb, &mut r, 0.0);
                assert!(norm(&s.gradient(t, &x).unwrap()) <= s.gradient_bound() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn costs_are_convex_along_segments() {
        let mut r = rng(79);
        for (s, amb) in all_scenarios() {
            for _ in 0..1000 {
                let t = r.random_range(1..=s.horizon());
                let x = uniform_in(&amb, &mut r, 0.0);
                let y = uniform_in(&amb, &mut r, 0.0);
                let w: f64 = r.random();
                let mid: Vec<f64> = x
                    .iter()
                    .zip(&y)
                    .map(|(a, b)| w * a + (1.0 - w) * b)
                    .collect();
                let lhs = s.value(t, &mid).unwrap();
                let rhs = w * s.value(t, &x).unwrap() + (1.0 - w) * s.value(t, &y).unwrap();
                assert!(lhs <= rhs + 1e-12 * (1.0 + rhs.abs()), "{:?}", s.kind());
            }
        }
    }

    #[test]
    fn prefix_sums_agree_with_direct_sums() {
        let mut r = rng(80);
        for (s, amb) in all_scenarios() {
            let mut prefix = PrefixObjective::new(s.dim());
            for t in 1..=50 {
                s.accumulate(t, &mut prefix);
            }
            for _ in 0..20 {
                let x = uniform_in(&amb, &mut r, 0.0);
                let direct: f64 = (1..=50).map(|t| s.value(t, &x).unwrap()).sum();
                assert!((prefix.value(&x) - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
            }
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for k in [
            ScenarioKind::Linear,
            ScenarioKind::Tracking,
            ScenarioKind::Resource,
            ScenarioKind::DataCenter,
        ] {
            assert_eq!(ScenarioKind::parse(k.name()), Some(k));
        }
        assert_eq!(ScenarioKind::parse("F1_LINEAR"), Some(ScenarioKind::Linear));
        assert_eq!(ScenarioKind::parse("nope"), None);
    }
}
