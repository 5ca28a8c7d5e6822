//! The safe projected-gradient driver: explore around the baseline, fit the
//! constraint estimate once, then run projected online gradient descent on
//! the conservative set.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::environment::{Environment, Scenario};
use crate::error::{check_dim, invalid, Error, Result};
use crate::estimation::{
    build_conservative_set, confidence_radius, fit_rls, ConfidenceParams, ConservativeSafeSet,
    ExplorationLog, RlsEstimate,
};
use crate::exploration::{safe_gamma, ExplorationConfig, Explorer};
use crate::linalg::Matrix;
use crate::projection::{hindsight_optimum, PrefixObjective, Projector, DEFAULT_EPS_OPT};
use crate::verification::{check_t0_conditions, T0Conditions, TheoryParams};

/// Which safe set the optimize phase projects onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SafeSetMode {
    /// The conservative set built from the exploration data.
    #[default]
    Estimated,
    /// Ablation: the true polytope with no confidence inflation.
    Known,
}

/// Inputs of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub horizon: u64,
    pub t0_override: Option<u64>,
    pub eta_override: Option<f64>,
    pub delta: f64,
    pub lambda: f64,
    /// Bound on action norms.
    pub norm_bound: f64,
    /// Bound on gradient norms.
    pub gradient_bound: f64,
    /// Known bound on constraint row norms.
    pub row_norm_bound: f64,
    /// Observation noise scale.
    pub noise: f64,
    pub rng_seed: u64,
    /// Increasing steps in `1..=T`; empty selects [`default_checkpoints`].
    pub checkpoints: Vec<u64>,
    pub eps_opt: f64,
    /// Raise `T0` to the length the safety analysis asks for when the rule falls short.
    pub force_theory_t0: bool,
    pub safe_set: SafeSetMode,
    /// Keep the exploration data in the trace.
    pub keep_exploration: bool,
}

impl RunConfig {
    /// Defaults of the box experiments, with bounds to be filled in per scenario.
    pub fn new(horizon: u64, norm_bound: f64, gradient_bound: f64, rng_seed: u64) -> Self {
        Self {
            horizon,
            t0_override: None,
            eta_override: None,
            delta: 1e-3,
            lambda: 0.5,
            norm_bound,
            gradient_bound,
            row_norm_bound: 1.0,
            noise: libm::sqrt(1e-3),
            rng_seed,
            checkpoints: Vec::new(),
            eps_opt: DEFAULT_EPS_OPT,
            force_theory_t0: false,
            safe_set: SafeSetMode::Estimated,
            keep_exploration: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("norm bound", self.norm_bound),
            ("gradient bound", self.gradient_bound),
            ("row norm bound", self.row_norm_bound),
            ("eps_opt", self.eps_opt),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!(
                "noise must be nonnegative, got {}",
                self.noise
            )));
        }
        if self.t0_override == Some(0) {
            return Err(Error::Config("T0 override must be positive".into()));
        }
        if let Some(eta) = self.eta_override {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::Config(format!(
                    "step size must be positive, got {eta}"
                )));
            }
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1])
            || self
                .checkpoints
                .iter()
                .any(|t| *t == 0 || *t > self.horizon)
        {
            return Err(Error::Config(
                "checkpoints must be strictly increasing steps in 1..=T".into(),
            ));
        }
        Ok(())
    }
}

/// Smallest integer `k` with `k³ ≥ T²`, i.e. `⌈T^{2/3}⌉` without rounding error.
pub fn default_t0(horizon: u64) -> u64 {
    let t2 = (horizon as u128) * (horizon as u128);
    let mut k = libm::ceil(libm::cbrt(t2 as f64)) as u128;
    while k > 0 && (k - 1).pow(3) >= t2 {
        k -= 1;
    }
    while k.pow(3) < t2 {
        k += 1;
    }
    k as u64
}

/// `2L / (G √T)`.
pub fn default_eta(norm_bound: f64, gradient_bound: f64, horizon: u64) -> f64 {
    2.0 * norm_bound / (gradient_bound * libm::sqrt(horizon as f64))
}

/// Problem quantities the tuning conditions depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemShape {
    pub dim: usize,
    pub constraints: usize,
    pub gamma: f64,
    pub sigma_zeta_sq: f64,
    pub safety_gap: f64,
}

/// Resolved exploration length, step size and theory flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tuning {
    pub t0: u64,
    pub eta: f64,
    /// `T ≥ (√8 β_T L/(γσΔ))³`.
    pub horizon_ok: bool,
    /// `T0 ≥ 8β_T²L²/(γ²σ²Δ²)`.
    pub shrunk_contains_baseline: bool,
    /// `T0 ≥ 8L²/(γ²σ²) ln(d/δ)`.
    pub eigenvalue_bound_applies: bool,
    /// Whether `T0` was raised to the shrunk-set requirement.
    pub t0_forced: bool,
    pub conditions: T0Conditions,
}

pub fn resolve_tuning(cfg: &RunConfig, shape: &ProblemShape) -> Result<Tuning> {
    cfg.validate()?;
    let conditions = check_t0_conditions(&TheoryParams {
        delta: cfg.delta,
        noise: cfg.noise,
        norm_bound: cfg.norm_bound,
        row_norm_bound: cfg.row_norm_bound,
        lambda: cfg.lambda,
        horizon: cfg.horizon,
        dim: shape.dim,
        constraints: shape.constraints,
        gamma: shape.gamma,
        sigma_zeta_sq: shape.sigma_zeta_sq,
        safety_gap: shape.safety_gap,
    })?;
    let mut t0 = cfg.t0_override.unwrap_or_else(|| default_t0(cfg.horizon));
    let mut t0_forced = false;
    if cfg.force_theory_t0 && t0 < conditions.t0_min_theorem {
        t0 = conditions.t0_min_theorem;
        t0_forced = true;
    }
    if t0 >= cfg.horizon {
        return Err(Error::Config(format!(
            "exploration length {t0} must be shorter than the horizon {}",
            cfg.horizon
        )));
    }
    Ok(Tuning {
        t0,
        eta: cfg
            .eta_override
            .unwrap_or_else(|| default_eta(cfg.norm_bound, cfg.gradient_bound, cfg.horizon)),
        horizon_ok: cfg.horizon as f64 >= conditions.horizon_min,
        shrunk_contains_baseline: t0 >= conditions.t0_min_theorem,
        eigenvalue_bound_applies: t0 >= conditions.t0_min_chernoff,
        t0_forced,
        conditions,
    })
}

/// About 180 log-spaced steps merged with 20 evenly spaced ones, always ending at `T`.
pub fn default_checkpoints(horizon: u64) -> Vec<u64> {
    let mut pts = Vec::new();
    if horizon == 0 {
        return pts;
    }
    let n_log = 180;
    let top = libm::log(horizon as f64);
    for k in 0..n_log {
        let t = libm::round(libm::exp(top * k as f64 / (n_log - 1) as f64)) as u64;
        pts.push(t.clamp(1, horizon));
    }
    for k in 1..=20u64 {
        pts.push((horizon * k / 20).max(1));
    }
    pts.push(horizon);
    pts.sort_unstable();
    pts.dedup();
    pts
}

/// `Π(x − η g)`, warm-started at `x`.
pub fn ogd_step(x: &[f64], grad: &[f64], eta: f64, projector: &Projector) -> Result<Vec<f64>> {
    check_dim("gradient", grad.len(), x.len())?;
    if !(eta > 0.0) {
        return Err(invalid(format!("step size must be positive, got {eta}")));
    }
    let z: Vec<f64> = x.iter().zip(grad).map(|(xi, gi)| xi - eta * gi).collect();
    Ok(projector.project(&z, Some(x))?.point)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Explore,
    Optimize,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Explore => "explore",
            Phase::Optimize => "optimize",
        }
    }
}

/// State of the run after step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub t: u64,
    pub phase: Phase,
    pub cum_cost: f64,
    /// Against the minimizer of the first `t` costs over the true safe set.
    pub regret_prefix: f64,
    /// Against the minimizer of all `T` costs.
    pub regret_fixed: f64,
    pub violations: u64,
}

impl Checkpoint {
    pub fn regret_over_t(&self) -> f64 {
        self.regret_prefix / self.t as f64
    }

    pub fn regret_over_t23(&self) -> f64 {
        self.regret_prefix / libm::pow(self.t as f64, 2.0 / 3.0)
    }
}

/// What the run learned about the constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSummary {
    pub a_hat: Matrix,
    pub gram: Matrix,
    pub beta: f64,
    pub min_eigenvalue: f64,
    /// `2β_{T0} L / √λ_min(V)`.
    pub tau_in: f64,
}

/// Totals and flags of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub final_regret: f64,
    pub final_regret_fixed: f64,
    pub violations: u64,
    /// Filled in by the caller that timed the run.
    pub wallclock_secs: Option<f64>,
    pub theory_condition_unmet: bool,
    pub tuning: Tuning,
    pub gamma: f64,
    pub sigma_zeta_sq: f64,
    pub safety_gap: f64,
    pub first_violation: Option<u64>,
    /// Optimize-phase cost minus the best fixed safe action for those steps.
    pub optimize_regret: f64,
    /// `2 L G √T`.
    pub ogd_bound: f64,
    pub max_projection_gap: f64,
    pub projection_iterations: u64,
    pub synthetic_prices: bool,
    /// Set when the run stopped early; the checkpoints up to then are kept.
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub checkpoints: Vec<Checkpoint>,
    pub summary: RunSummary,
    pub estimate: Option<EstimateSummary>,
    pub hindsight_action: Vec<f64>,
    pub exploration: Option<ExplorationLog>,
}

/// Runs the exploration phase alone and returns its data.
pub fn run_exploration(env: &mut Environment, cfg: &ExplorationConfig) -> Result<ExplorationLog> {
    let p = env.polytope();
    let mut log = ExplorationLog::with_capacity(p.dim(), p.num_constraints(), cfg.t0 as usize);
    let mut explorer = Explorer::new(*cfg, env.baseline());
    for _ in 0..cfg.t0 {
        let x = explorer.next_action();
        let y = env.observe(&x)?;
        log.push(&x, &y)?;
    }
    Ok(log)
}

/// Exploration settings derived from the environment and run bounds.
pub fn exploration_setup(cfg: &RunConfig, env: &Environment, t0: u64) -> Result<ExplorationConfig> {
    let dim = env.polytope().dim();
    let zeta_scale = cfg.norm_bound.min(1.0);
    let gamma = safe_gamma(
        env.baseline(),
        env.polytope().offsets(),
        cfg.row_norm_bound,
        zeta_scale,
        env.ambient(),
    )?;
    if !(gamma > 0.0) {
        return Err(Error::Config("baseline leaves no room to explore".into()));
    }
    ExplorationConfig::new(gamma, dim, cfg.norm_bound, t0, cfg.rng_seed)
}

struct Accounting {
    prefix: PrefixObjective,
    snapshots: Vec<PrefixObjective>,
    checkpoints: Vec<Checkpoint>,
    schedule: Vec<u64>,
    next: usize,
    cum_cost: f64,
    violations: u64,
    first_violation: Option<u64>,
}

impl Accounting {
    fn record(&mut self, t: u64, phase: Phase, env: &Environment, eps_opt: f64) -> Result<()> {
        if self.schedule.get(self.next) != Some(&t) {
            return Ok(());
        }
        self.next += 1;
        let best = hindsight_optimum(&self.prefix, env.polytope(), env.ambient(), eps_opt)?;
        let regret_prefix = self.cum_cost - self.prefix.value(&best);
        self.snapshots.push(self.prefix.clone());
        self.checkpoints.push(Checkpoint {
            t,
            phase,
            cum_cost: self.cum_cost,
            regret_prefix,
            regret_fixed: f64::NAN,
            violations: self.violations,
        });
        Ok(())
    }

    fn incur(&mut self, t: u64, x: &[f64], env: &Environment, scenario: &Scenario) -> Result<()> {
        self.cum_cost += scenario.value(t as usize, x)?;
        scenario.accumulate(t as usize, &mut self.prefix);
        if env.violates(x) {
            self.violations += 1;
            self.first_violation.get_or_insert(t);
        }
        Ok(())
    }
}

/// Executes one full run.
///
/// Configuration problems are returned as errors. Failures after the first
/// action end the run early and are reported in [`RunSummary::aborted`].
pub fn run(cfg: &RunConfig, env: &mut Environment, scenario: &Scenario) -> Result<RegretTrace> {
    cfg.validate()?;
    let dim = env.polytope().dim();
    check_dim("scenario", scenario.dim(), dim)?;
    if (scenario.horizon() as u64) < cfg.horizon {
        return Err(Error::Config(format!(
            "scenario covers {} steps, run needs {}",
            scenario.horizon(),
            cfg.horizon
        )));
    }
    let probe = exploration_setup(cfg, env, 1)?;
    let shape = ProblemShape {
        dim,
        constraints: env.polytope().num_constraints(),
        gamma: probe.gamma,
        sigma_zeta_sq: probe.sigma_zeta_sq,
        safety_gap: env.baseline().safety_gap(),
    };
    let tuning = resolve_tuning(cfg, &shape)?;
    let t0 = tuning.t0;
    let explore_cfg = ExplorationConfig { t0, ..probe };

    let mut schedule = if cfg.checkpoints.is_empty() {
        default_checkpoints(cfg.horizon)
    } else {
        cfg.checkpoints.clone()
    };
    schedule.extend(
        [t0, 2 * t0, cfg.horizon]
            .into_iter()
            .filter(|t| *t <= cfg.horizon),
    );
    schedule.sort_unstable();
    schedule.dedup();

    let mut acc = Accounting {
        prefix: PrefixObjective::new(dim),
        snapshots: Vec::with_capacity(schedule.len()),
        checkpoints: Vec::with_capacity(schedule.len()),
        schedule,
        next: 0,
        cum_cost: 0.0,
        violations: 0,
        first_violation: None,
    };
    let mut summary = RunSummary {
        final_regret: f64::NAN,
        final_regret_fixed: f64::NAN,
        violations: 0,
        wallclock_secs: None,
        theory_condition_unmet: !tuning.horizon_ok,
        tuning,
        gamma: shape.gamma,
        sigma_zeta_sq: shape.sigma_zeta_sq,
        safety_gap: shape.safety_gap,
        first_violation: None,
        optimize_regret: f64::NAN,
        ogd_bound: 2.0 * cfg.norm_bound * cfg.gradient_bound * libm::sqrt(cfg.horizon as f64),
        max_projection_gap: 0.0,
        projection_iterations: 0,
        synthetic_prices: scenario.uses_synthetic_prices(),
        aborted: None,
    };
    let mut estimate_summary = None;
    let mut log = ExplorationLog::with_capacity(dim, shape.constraints, t0 as usize);
    let mut optimize_prefix = PrefixObjective::new(dim);
    let mut optimize_cost = 0.0;

    let outcome = (|| -> Result<()> {
        let mut explorer = Explorer::new(explore_cfg, env.baseline());
        let mut x = Vec::new();
        for t in 1..=t0 {
            x = explorer.next_action();
            acc.incur(t, &x, env, scenario)?;
            let y = env.observe(&x)?;
            log.push(&x, &y)?;
            acc.record(t, Phase::Explore, env, cfg.eps_opt)?;
        }

        let set = match cfg.safe_set {
            SafeSetMode::Estimated => {
                let est = fit_rls(&log, cfg.lambda)?;
                let beta = confidence_radius(&ConfidenceParams {
                    delta: cfg.delta,
                    noise: cfg.noise,
                    norm_bound: cfg.norm_bound,
                    row_norm_bound: cfg.row_norm_bound,
                    lambda: cfg.lambda,
                    samples: t0,
                    constraints: shape.constraints,
                    dim,
                })?;
                estimate_summary = Some(summarize(&est, beta, cfg.norm_bound));
                build_conservative_set(est, beta, env.polytope().offsets(), env.ambient().clone())?
            }
            SafeSetMode::Known => {
                ConservativeSafeSet::from_true_polytope(env.polytope(), env.ambient().clone())?
            }
        };
        let projector = Projector::new(&set, cfg.eps_opt)?;
        let mut note = |r: &crate::projection::ProjectionResult| {
            summary.max_projection_gap = summary.max_projection_gap.max(r.objective_gap);
            summary.projection_iterations += r.iterations as u64;
        };
        let first = projector.project(&x, None)?;
        note(&first);
        x = first.point;

        let mut grad = vec![0.0; dim];
        let mut z = vec![0.0; dim];
        for t in t0 + 1..=cfg.horizon {
            let cost = scenario.value(t as usize, &x)?;
            optimize_cost += cost;
            scenario.accumulate(t as usize, &mut optimize_prefix);
            acc.incur(t, &x, env, scenario)?;
            acc.record(t, Phase::Optimize, env, cfg.eps_opt)?;
            if t == cfg.horizon {
                break;
            }
            grad.copy_from_slice(&scenario.gradient(t as usize, &x)?);
            for ((zi, xi), gi) in z.iter_mut().zip(&x).zip(&grad) {
                *zi = xi - tuning.eta * gi;
            }
            let step = projector.project(&z, Some(&x))?;
            note(&step);
            x = step.point;
        }
        Ok(())
    })();

    if let Err(e) = outcome {
        log::warn!("run with seed {} stopped early: {e}", cfg.rng_seed);
        summary.aborted = Some(format!("{e}"));
    }

    // Fixed-comparator regret uses the minimizer over every step actually played.
    let played = acc.prefix.terms();
    let mut hindsight_action = Vec::new();
    if played > 0 {
        match hindsight_optimum(&acc.prefix, env.polytope(), env.ambient(), cfg.eps_opt) {
            Ok(best) => {
                for (cp, snap) in acc.checkpoints.iter_mut().zip(&acc.snapshots) {
                    cp.regret_fixed = cp.cum_cost - snap.value(&best);
                }
                hindsight_action = best;
            }
            Err(e) => {
                summary
                    .aborted
                    .get_or_insert(format!("hindsight optimum failed: {e}"));
            }
        }
    }
    if optimize_prefix.terms() > 0 && summary.aborted.is_none() {
        let best = hindsight_optimum(&optimize_prefix, env.polytope(), env.ambient(), cfg.eps_opt)?;
        summary.optimize_regret = optimize_cost - optimize_prefix.value(&best);
    }
    if let Some(last) = acc.checkpoints.last() {
        summary.final_regret = last.regret_prefix;
        summary.final_regret_fixed = last.regret_fixed;
    }
    summary.violations = acc.violations;
    summary.first_violation = acc.first_violation;
    Ok(RegretTrace {
        checkpoints: acc.checkpoints,
        summary,
        estimate: estimate_summary,
        hindsight_action,
        exploration: cfg.keep_exploration.then_some(log),
    })
}

fn summarize(est: &RlsEstimate, beta: f64, norm_bound: f64) -> EstimateSummary {
    let min_eigenvalue = est.min_eigenvalue();
    EstimateSummary {
        a_hat: est.a_hat().clone(),
        gram: est.gram().clone(),
        beta,
        min_eigenvalue,
        tau_in: 2.0 * beta * norm_bound / libm::sqrt(min_eigenvalue),
    }
}
