//! Exploration-phase studies: safety of the exploration actions, confidence
//! coverage, the eigenvalue bound and set nesting, one seed at a time.

use rayon::prelude::*;
use safe_oco_core::algorithm::{
    exploration_setup, resolve_tuning, run_exploration, ProblemShape, RunConfig, Tuning,
};
use safe_oco_core::environment::Environment;
use safe_oco_core::estimation::{
    build_conservative_set, confidence_radius, fit_rls, ConfidenceParams, ExplorationLog,
    RlsEstimate,
};
use safe_oco_core::exploration::ExplorationConfig;
use safe_oco_core::geometry::ShrunkPolytope;
use safe_oco_core::rng::{stream, Stream};
use safe_oco_core::verification::{
    check_eigmin, check_nesting, coverage_event, naive_polytope, EigminCheck, NestingReport,
};

use crate::experiment::ExperimentSpec;
use crate::output::CheckRecord;
use crate::HarnessError;

pub const DEFAULT_NESTING_SAMPLES: u64 = 100_000;

/// One seed's exploration phase and the estimate built from it.
#[derive(Debug, Clone)]
pub struct ExplorationStudy {
    pub seed: u64,
    pub env: Environment,
    pub tuning: Tuning,
    pub explore: ExplorationConfig,
    pub log: ExplorationLog,
    pub estimate: RlsEstimate,
    pub beta: f64,
    pub delta: f64,
    pub horizon: u64,
    pub norm_bound: f64,
    /// Exploration actions outside the true safe set.
    pub exploration_violations: u64,
    /// `max_i ‖â_i − a_i‖_V`.
    pub coverage_stat: f64,
    pub coverage: bool,
    pub eigmin: EigminCheck,
}

impl ExplorationStudy {
    /// `2β L / √λ_min(V)`.
    pub fn tau_in(&self) -> f64 {
        2.0 * self.beta * self.norm_bound / self.eigmin.lambda_min.sqrt()
    }
}

/// Exploration settings of one seed, resolved without running anything.
#[derive(Debug, Clone)]
pub struct ExplorationPlan {
    pub env: Environment,
    pub config: RunConfig,
    pub tuning: Tuning,
    pub explore: ExplorationConfig,
}

pub fn plan_exploration(spec: &ExperimentSpec, seed: u64) -> Result<ExplorationPlan, HarnessError> {
    let env = spec.environment_for(seed)?;
    // The step size is not used here, so any positive gradient bound will do.
    let config = spec.run_config_for(seed, 1.0);
    let probe = exploration_setup(&config, &env, 1)?;
    let p = env.polytope();
    let tuning = resolve_tuning(
        &config,
        &ProblemShape {
            dim: p.dim(),
            constraints: p.num_constraints(),
            gamma: probe.gamma,
            sigma_zeta_sq: probe.sigma_zeta_sq,
            safety_gap: env.baseline().safety_gap(),
        },
    )?;
    let explore = ExplorationConfig {
        t0: tuning.t0,
        ..probe
    };
    Ok(ExplorationPlan {
        env,
        config,
        tuning,
        explore,
    })
}

pub fn study_exploration(
    spec: &ExperimentSpec,
    seed: u64,
) -> Result<ExplorationStudy, HarnessError> {
    let ExplorationPlan {
        mut env,
        config: cfg,
        tuning,
        explore,
    } = plan_exploration(spec, seed)?;
    let p = env.polytope().clone();
    let log = run_exploration(&mut env, &explore)?;
    let exploration_violations = log.iter().filter(|(x, _)| env.violates(x)).count() as u64;
    let estimate = fit_rls(&log, cfg.lambda)?;
    let beta = confidence_radius(&ConfidenceParams {
        delta: cfg.delta,
        noise: cfg.noise,
        norm_bound: cfg.norm_bound,
        row_norm_bound: cfg.row_norm_bound,
        lambda: cfg.lambda,
        samples: tuning.t0,
        constraints: p.num_constraints(),
        dim: p.dim(),
    })?;
    let factor = estimate.gram_factor();
    let coverage_stat = (0..p.num_constraints())
        .map(|i| {
            let diff: Vec<f64> = estimate
                .a_hat()
                .row(i)
                .iter()
                .zip(p.matrix().row(i))
                .map(|(e, a)| e - a)
                .collect();
            factor.weighted_norm(&diff)
        })
        .fold(0.0, f64::max);
    let coverage = coverage_event(&estimate, &p, beta)?;
    let eigmin = check_eigmin(
        estimate.gram(),
        cfg.lambda,
        explore.gamma,
        explore.sigma_zeta_sq,
        tuning.t0,
    )?;
    Ok(ExplorationStudy {
        seed,
        env,
        tuning,
        explore,
        log,
        estimate,
        beta,
        delta: cfg.delta,
        horizon: cfg.horizon,
        norm_bound: cfg.norm_bound,
        exploration_violations,
        coverage_stat,
        coverage,
        eigmin,
    })
}

/// Sampled nesting of the shrunk, conservative and naive sets for one study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NestingStudy {
    pub conservative: NestingReport,
    /// Samples inside `{Âx ≤ b} ∩ X` but outside the true safe set.
    pub naive_escapes: u64,
}

pub fn study_nesting(study: &ExplorationStudy, samples: u64) -> Result<NestingStudy, HarnessError> {
    let p = study.env.polytope();
    let amb = study.env.ambient();
    let set = build_conservative_set(study.estimate.clone(), study.beta, p.offsets(), amb.clone())?;
    let shrunk = ShrunkPolytope::new(p.clone(), study.tau_in())?;
    let mut rng = stream(study.seed, Stream::Verification);
    let mut conservative = check_nesting(p, &set, &shrunk, samples, &mut rng)?;
    conservative.coverage = Some(study.coverage);
    let naive = naive_polytope(&study.estimate, p.offsets(), amb)?;
    let naive_escapes =
        check_nesting(p, &naive, &shrunk, samples, &mut rng)?.violations_conservative_not_true;
    Ok(NestingStudy {
        conservative,
        naive_escapes,
    })
}

/// Studies every seed of the experiment in parallel, in seed order.
pub fn study_all(
    spec: &ExperimentSpec,
    threads: usize,
) -> Result<Vec<ExplorationStudy>, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Aggregate(format!("thread pool: {e}")))?;
    let seeds: Vec<u64> = spec.seeds().collect();
    pool.install(|| {
        seeds
            .par_iter()
            .map(|&s| study_exploration(spec, s))
            .collect()
    })
}

fn rec(name: &str, seed: u64, value: f64, bound: f64, holds: bool) -> CheckRecord {
    CheckRecord {
        check_name: name.to_string(),
        seed,
        value,
        bound,
        holds,
    }
}

/// All lemma checks of one seed as CSV records.
pub fn check_records(study: &ExplorationStudy, nesting: Option<&NestingStudy>) -> Vec<CheckRecord> {
    let s = study.seed;
    let c = &study.tuning.conditions;
    let t0 = study.tuning.t0 as f64;
    let mut out = vec![
        rec(
            "exploration_safety",
            s,
            study.exploration_violations as f64,
            0.0,
            study.exploration_violations == 0,
        ),
        rec(
            "coverage",
            s,
            study.coverage_stat,
            study.beta,
            study.coverage,
        ),
        rec(
            "eigmin",
            s,
            study.eigmin.lambda_min,
            study.eigmin.bound,
            study.eigmin.holds,
        ),
        rec(
            "t0_eigenvalue_condition",
            s,
            t0,
            c.t0_min_chernoff as f64,
            study.tuning.eigenvalue_bound_applies,
        ),
        rec(
            "t0_shrunk_set_condition",
            s,
            t0,
            c.t0_min_theorem as f64,
            study.tuning.shrunk_contains_baseline,
        ),
        rec(
            "horizon_condition",
            s,
            study.horizon as f64,
            c.horizon_min,
            study.tuning.horizon_ok,
        ),
    ];
    if let Some(n) = nesting {
        let r = &n.conservative;
        out.push(rec(
            "nesting_shrunk_in_conservative",
            s,
            r.violations_shrunk_not_conservative as f64,
            0.0,
            r.violations_shrunk_not_conservative == 0,
        ));
        out.push(rec(
            "nesting_conservative_in_true",
            s,
            r.violations_conservative_not_true as f64,
            0.0,
            r.violations_conservative_not_true == 0,
        ));
        out.push(rec(
            "naive_polytope_escapes",
            s,
            n.naive_escapes as f64,
            0.0,
            n.naive_escapes == 0,
        ));
    }
    out
}
