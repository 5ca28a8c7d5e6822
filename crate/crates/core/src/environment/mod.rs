//! The simulated world: true constraints, noisy constraint observations and
//! the cost scenarios.

mod prices;
mod scenario;

pub use prices::{PriceTable, ZONES};
pub use scenario::{make_datacenter, make_f1, make_f2, make_f3, Scenario, ScenarioKind};

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, invalid, Error, Result};
use crate::exploration::BaselineSpec;
use crate::geometry::{AmbientSet, TruePolytope};
use crate::rng::{stream, RunRng, Stream};

/// Unknown constraints plus the noisy observation channel.
#[derive(Debug, Clone)]
pub struct Environment {
    polytope: TruePolytope,
    ambient: AmbientSet,
    baseline: BaselineSpec,
    noise_std: f64,
    rng: RunRng,
}

impl Environment {
    pub fn new(
        polytope: TruePolytope,
        ambient: AmbientSet,
        baseline_action: Vec<f64>,
        noise_std: f64,
        rng_seed: u64,
    ) -> Result<Self> {
        check_dim("ambient set", ambient.dim(), polytope.dim())?;
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(invalid(format!(
                "noise std must be nonnegative, got {noise_std}"
            )));
        }
        if !ambient.contains(&baseline_action)? {
            return Err(invalid("baseline action lies outside the ambient box"));
        }
        let baseline = BaselineSpec::from_polytope(&polytope, baseline_action)?;
        Ok(Self {
            polytope,
            ambient,
            baseline,
            noise_std,
            rng: stream(rng_seed, Stream::Noise),
        })
    }

    pub fn polytope(&self) -> &TruePolytope {
        &self.polytope
    }

    pub fn ambient(&self) -> &AmbientSet {
        &self.ambient
    }

    pub fn baseline(&self) -> &BaselineSpec {
        &self.baseline
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// `A x + w` with independent Gaussian noise per row.
    pub fn observe(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("action", x.len(), self.polytope.dim())?;
        let mut y = self.polytope.matrix().mul_vec(x);
        for yi in y.iter_mut() {
            let w: f64 = StandardNormal.sample(&mut self.rng);
            *yi += self.noise_std * w;
        }
        Ok(y)
    }

    /// True when `x` breaks at least one true constraint.
    pub fn violates(&self, x: &[f64]) -> bool {
        !self.polytope.satisfied_unchecked(x)
    }
}

/// Draws a baseline uniformly from the box among points whose safety gap is
/// at least `min_gap`.
pub fn sample_baseline<R: Rng + ?Sized>(
    p: &TruePolytope,
    ambient: &AmbientSet,
    min_gap: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_dim("ambient set", ambient.dim(), p.dim())?;
    const ATTEMPTS: usize = 1_000_000;
    for _ in 0..ATTEMPTS {
        let x: Vec<f64> = ambient
            .lower()
            .iter()
            .zip(ambient.upper())
            .map(|(l, u)| l + (u - l) * rng.random::<f64>())
            .collect();
        let gap = p
            .safety_margin(&x)?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if gap >= min_gap && gap > 0.0 {
            return Ok(x);
        }
    }
    Err(Error::Config(format!(
        "no baseline with safety gap {min_gap} found in the box"
    )))
}

/// Seeded baseline draw on the dedicated stream.
pub fn seeded_baseline(
    p: &TruePolytope,
    ambient: &AmbientSet,
    min_gap: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    sample_baseline(p, ambient, min_gap, &mut stream(seed, Stream::Baseline))
}
